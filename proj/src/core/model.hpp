// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace splitplot {

/// Group count, per-group dimensions d_i and sample sizes n_i.
class StudyDesign {
 public:
  StudyDesign(std::vector<std::size_t> dims, std::vector<std::size_t> sizes);

  std::size_t groups() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size(std::size_t i) const { return sizes_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

  /// N = sum n_i
  std::size_t total_size() const noexcept { return total_size_; }
  /// D = sum d_i
  std::size_t total_dim() const noexcept { return total_dim_; }
  std::size_t min_size() const noexcept { return min_size_; }

  /// First coordinate of group i inside the pooled D-vector.
  std::size_t dim_offset(std::size_t i) const { return dim_offsets_.at(i); }
  /// First row of group i when all N observations are stacked.
  std::size_t row_offset(std::size_t i) const { return row_offsets_.at(i); }

  /// N / n_i
  double size_ratio(std::size_t i) const {
    return static_cast<double>(total_size_) / static_cast<double>(sizes_.at(i));
  }

  bool operator==(const StudyDesign& other) const noexcept {
    return dims_ == other.dims_ && sizes_ == other.sizes_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> dim_offsets_;
  std::vector<std::size_t> row_offsets_;
  std::size_t total_size_ = 0;
  std::size_t total_dim_ = 0;
  std::size_t min_size_ = 0;
};

struct CovarianceModel {
  enum class Kind { compound_symmetry, ar, scaled_ar, explicit_matrix };

  Kind kind = Kind::compound_symmetry;
  std::size_t dimension = 1;
  double base = 1.0;     // compound symmetry: base * I + jfactor * J / d
  double jfactor = 1.0;
  double rho = 0.0;      // autoregressive correlation
  Matrix matrix;         // explicit_matrix only

  static CovarianceModel compound_symmetry(std::size_t d, double base = 1.0, double jfactor = 1.0);
  static CovarianceModel ar(std::size_t d, double rho);
  static CovarianceModel scaled_ar(std::size_t d, double rho);
  static CovarianceModel explicit_matrix(Matrix m);
};

/// Dense d x d covariance for the model. scaled_ar requires d >= 2.
Matrix materialize_covariance(const CovarianceModel& model);

class GroupedSample {
 public:
  /// groups[i] is an n_i x d_i matrix, one subject per row.
  GroupedSample(StudyDesign design, std::vector<Matrix> groups);

  const StudyDesign& design() const noexcept { return design_; }
  const Matrix& group(std::size_t i) const { return groups_.at(i); }
  const std::vector<Matrix>& groups() const noexcept { return groups_; }
  Vector group_mean(std::size_t i) const;

 private:
  StudyDesign design_;
  std::vector<Matrix> groups_;
};

/// Concatenated per-group means (length D).
Vector pooled_mean(const GroupedSample& sample);

/// Gaussian generator with Cholesky factors cached; rows of group i are
/// mu_i + L_i xi with xi standard normal drawn from the stream
/// (seed, group i, replication).
class GaussianModel {
 public:
  GaussianModel(StudyDesign design, std::vector<Vector> means, const std::vector<CovarianceModel>& covs);

  const StudyDesign& design() const noexcept { return design_; }
  const std::vector<Vector>& means() const noexcept { return means_; }
  const Matrix& factor(std::size_t i) const { return factors_.at(i); }

  GroupedSample draw(std::uint64_t seed, std::uint64_t replication) const;

 private:
  StudyDesign design_;
  std::vector<Vector> means_;
  std::vector<Matrix> factors_;
};

GroupedSample sample(const StudyDesign& design, const std::vector<Vector>& means,
                     const std::vector<CovarianceModel>& covs, std::uint64_t seed, std::uint64_t replication);

}  // namespace splitplot
