// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/linalg.hpp"
#include "core/model.hpp"

#include <cstddef>
#include <vector>

namespace splitplot {

/// D x D matrix with the block boundaries d_1..d_a recorded.
class BlockMatrix {
 public:
  BlockMatrix(std::vector<std::size_t> block_dims, Matrix data);

  const Matrix& data() const noexcept { return data_; }
  const std::vector<std::size_t>& block_dims() const noexcept { return dims_; }
  std::size_t blocks() const noexcept { return dims_.size(); }
  std::size_t block_offset(std::size_t i) const { return offsets_.at(i); }

  /// Sub-block T_ij of size d_i x d_j.
  Eigen::Block<const Matrix> block(std::size_t i, std::size_t j) const;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(data_.rows()); }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  Matrix data_;
};

/// T = H^T (H H^T)^+ H with the design's block structure.
BlockMatrix projection_from_h(const Matrix& h, const StudyDesign& design);

/// Rank-one projection onto v = (1_{d1}/d1 ; -1_{d2}/d2): equal average
/// profile level in both groups. Two groups only.
BlockMatrix scenario_b_matrix(const StudyDesign& design);

/// diag(P_{d1}, P_{d2}) with P_d = I_d - J_d/d: flat profile within each
/// group. Two groups with d_i >= 2.
BlockMatrix scenario_a_matrix(const StudyDesign& design);

struct HypothesisValidation {
  double asymmetry = 0.0;
  double idempotence_defect = 0.0;
  double block_transpose_defect = 0.0;
  std::size_t rank = 0;
  bool passed = false;
};

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kIdempotenceTolerance = 1e-8;

HypothesisValidation validate_hypothesis(const BlockMatrix& t);

struct ScenarioSpec {
  char label = 'B';
  StudyDesign design;
  std::vector<CovarianceModel> covariances;
};

/// Canned simulation settings: A pairs the centering hypothesis with
/// compound-symmetry covariances I + J/d; B pairs the mean-contrast
/// hypothesis with AR(0.6) and dimension-scaled AR(0.6) covariances.
ScenarioSpec make_scenario(char label, const StudyDesign& design);
BlockMatrix scenario_hypothesis(char label, const StudyDesign& design);

}  // namespace splitplot
