// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests.
#pragma once

#include "core/linalg.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace splitplot::test {

inline Matrix random_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

inline Matrix random_spd(RngStream& rng, Eigen::Index d) {
  const Matrix a = random_matrix(rng, d, d);
  return a * a.transpose() / static_cast<double>(d) + 0.5 * Matrix::Identity(d, d);
}

inline GroupedSample random_sample(const StudyDesign& design, std::uint64_t seed) {
  RngStream rng(seed, 0, 0);
  std::vector<Matrix> groups;
  for (std::size_t i = 0; i < design.groups(); ++i) {
    groups.push_back(random_matrix(rng, static_cast<Eigen::Index>(design.size(i)),
                                   static_cast<Eigen::Index>(design.dim(i))));
  }
  return GroupedSample(design, std::move(groups));
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace splitplot::test
