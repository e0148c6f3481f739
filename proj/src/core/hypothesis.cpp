// SPDX-License-Identifier: Apache-2.0
#include "core/hypothesis.hpp"

#include "core/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace splitplot {

BlockMatrix::BlockMatrix(std::vector<std::size_t> block_dims, Matrix data)
    : dims_(std::move(block_dims)), data_(std::move(data)) {
  std::size_t total = 0;
  for (std::size_t d : dims_) {
    offsets_.push_back(total);
    total += d;
  }
  if (dims_.empty() || static_cast<std::size_t>(data_.rows()) != total ||
      static_cast<std::size_t>(data_.cols()) != total) {
    fail(ErrorKind::structural, "block matrix is " + std::to_string(data_.rows()) + "x" +
                                    std::to_string(data_.cols()) + ", block dimensions sum to " +
                                    std::to_string(total));
  }
}

Eigen::Block<const Matrix> BlockMatrix::block(std::size_t i, std::size_t j) const {
  return data_.block(static_cast<Eigen::Index>(offsets_.at(i)), static_cast<Eigen::Index>(offsets_.at(j)),
                     static_cast<Eigen::Index>(dims_.at(i)), static_cast<Eigen::Index>(dims_.at(j)));
}

BlockMatrix projection_from_h(const Matrix& h, const StudyDesign& design) {
  if (static_cast<std::size_t>(h.cols()) != design.total_dim()) {
    fail(ErrorKind::structural, "hypothesis matrix has " + std::to_string(h.cols()) + " columns, design has D = " +
                                    std::to_string(design.total_dim()));
  }
  require_finite(h, "hypothesis matrix");
  Matrix t = h.transpose() * pseudo_inverse(h * h.transpose()) * h;
  t = 0.5 * (t + t.transpose());
  return BlockMatrix(design.dims(), std::move(t));
}

namespace {

void require_two_groups(const StudyDesign& design, const char* what) {
  if (design.groups() != 2) {
    fail(ErrorKind::unsupported, std::string(what) + " is defined for two groups, design has " +
                                     std::to_string(design.groups()));
  }
}

}  // namespace

BlockMatrix scenario_b_matrix(const StudyDesign& design) {
  require_two_groups(design, "scenario B");
  const auto d1 = static_cast<Eigen::Index>(design.dim(0));
  const auto d2 = static_cast<Eigen::Index>(design.dim(1));
  Vector v(d1 + d2);
  v.head(d1).setConstant(1.0 / static_cast<double>(d1));
  v.tail(d2).setConstant(-1.0 / static_cast<double>(d2));
  Matrix t = v * v.transpose() / v.squaredNorm();
  return BlockMatrix(design.dims(), std::move(t));
}

BlockMatrix scenario_a_matrix(const StudyDesign& design) {
  require_two_groups(design, "scenario A");
  const auto d = static_cast<Eigen::Index>(design.total_dim());
  Matrix t = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto di = static_cast<Eigen::Index>(design.dim(i));
    if (di < 2) {
      fail(ErrorKind::invalid_dimension, "scenario A needs d_i >= 2 (group " + std::to_string(i + 1) + " has d = " +
                                             std::to_string(di) + ")");
    }
    const auto off = static_cast<Eigen::Index>(design.dim_offset(i));
    auto blk = t.block(off, off, di, di);
    blk.setConstant(-1.0 / static_cast<double>(di));
    blk.diagonal().array() += 1.0;
  }
  return BlockMatrix(design.dims(), std::move(t));
}

HypothesisValidation validate_hypothesis(const BlockMatrix& t) {
  const Matrix& m = t.data();
  HypothesisValidation out;
  out.asymmetry = asymmetry(m);
  out.idempotence_defect = max_abs(m * m - m);
  for (std::size_t i = 0; i < t.blocks(); ++i) {
    for (std::size_t j = i + 1; j < t.blocks(); ++j) {
      out.block_transpose_defect =
          std::max(out.block_transpose_defect, max_abs(t.block(i, j) - t.block(j, i).transpose()));
    }
  }
  if (m.allFinite()) {
    const Matrix sym = 0.5 * (m + m.transpose());
    const auto eig = sym_eigen(sym, 1.0);
    out.rank = static_cast<std::size_t>((eig.values.array() >= 0.5).count());
  }
  out.passed = m.allFinite() && out.asymmetry <= kSymmetryTolerance &&
               out.idempotence_defect <= kIdempotenceTolerance && out.block_transpose_defect <= kSymmetryTolerance;
  return out;
}

ScenarioSpec make_scenario(char label, const StudyDesign& design) {
  require_two_groups(design, "canned scenario");
  ScenarioSpec spec{label, design, {}};
  if (label == 'A') {
    for (std::size_t i = 0; i < 2; ++i) spec.covariances.push_back(CovarianceModel::compound_symmetry(design.dim(i)));
  } else if (label == 'B') {
    spec.covariances.push_back(CovarianceModel::ar(design.dim(0), 0.6));
    spec.covariances.push_back(CovarianceModel::scaled_ar(design.dim(1), 0.6));
  } else {
    fail(ErrorKind::unsupported, std::string("unknown scenario label '") + label + "'");
  }
  return spec;
}

BlockMatrix scenario_hypothesis(char label, const StudyDesign& design) {
  if (label == 'A') return scenario_a_matrix(design);
  if (label == 'B') return scenario_b_matrix(design);
  fail(ErrorKind::unsupported, std::string("unknown scenario label '") + label + "'");
}

}  // namespace splitplot
