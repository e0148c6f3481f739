// SPDX-License-Identifier: Apache-2.0
#include "core/model.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace splitplot {

StudyDesign::StudyDesign(std::vector<std::size_t> dims, std::vector<std::size_t> sizes)
    : dims_(std::move(dims)), sizes_(std::move(sizes)) {
  if (dims_.empty()) fail(ErrorKind::structural, "design needs at least one group");
  if (dims_.size() != sizes_.size()) {
    fail(ErrorKind::structural, "design: " + std::to_string(dims_.size()) + " dimensions but " +
                                    std::to_string(sizes_.size()) + " sample sizes");
  }
  min_size_ = sizes_.front();
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] < 1) fail(ErrorKind::invalid_design, "design: group " + std::to_string(i + 1) + " has dimension 0");
    if (sizes_[i] < 2) {
      fail(ErrorKind::invalid_design,
           "design: group " + std::to_string(i + 1) + " needs at least 2 observations, has " + std::to_string(sizes_[i]));
    }
    dim_offsets_.push_back(total_dim_);
    row_offsets_.push_back(total_size_);
    total_dim_ += dims_[i];
    total_size_ += sizes_[i];
    min_size_ = std::min(min_size_, sizes_[i]);
  }
}

CovarianceModel CovarianceModel::compound_symmetry(std::size_t d, double base, double jfactor) {
  CovarianceModel m;
  m.kind = Kind::compound_symmetry;
  m.dimension = d;
  m.base = base;
  m.jfactor = jfactor;
  return m;
}

CovarianceModel CovarianceModel::ar(std::size_t d, double rho) {
  CovarianceModel m;
  m.kind = Kind::ar;
  m.dimension = d;
  m.rho = rho;
  return m;
}

CovarianceModel CovarianceModel::scaled_ar(std::size_t d, double rho) {
  CovarianceModel m;
  m.kind = Kind::scaled_ar;
  m.dimension = d;
  m.rho = rho;
  return m;
}

CovarianceModel CovarianceModel::explicit_matrix(Matrix mat) {
  CovarianceModel m;
  m.kind = Kind::explicit_matrix;
  m.dimension = static_cast<std::size_t>(mat.rows());
  m.matrix = std::move(mat);
  return m;
}

Matrix materialize_covariance(const CovarianceModel& model) {
  const auto d = static_cast<Eigen::Index>(model.dimension);
  if (d < 1) fail(ErrorKind::invalid_dimension, "covariance dimension must be positive");
  switch (model.kind) {
    case CovarianceModel::Kind::compound_symmetry: {
      if (!(model.base > 0.0) || model.jfactor < 0.0) {
        fail(ErrorKind::invalid_dimension, "compound symmetry needs base > 0 and jfactor >= 0");
      }
      Matrix m = Matrix::Constant(d, d, model.jfactor / static_cast<double>(d));
      m.diagonal().array() += model.base;
      return m;
    }
    case CovarianceModel::Kind::ar:
    case CovarianceModel::Kind::scaled_ar: {
      if (!(std::abs(model.rho) < 1.0)) fail(ErrorKind::invalid_dimension, "autoregressive rho must satisfy |rho| < 1");
      double scale = 1.0;
      if (model.kind == CovarianceModel::Kind::scaled_ar) {
        if (d < 2) fail(ErrorKind::invalid_dimension, "scaled_ar covariance needs dimension >= 2");
        scale = 1.0 / static_cast<double>(d - 1);
      }
      Matrix m(d, d);
      for (Eigen::Index s = 0; s < d; ++s) {
        for (Eigen::Index t = 0; t < d; ++t) {
          const auto lag = static_cast<double>(s > t ? s - t : t - s);
          m(s, t) = lag == 0.0 ? 1.0 : std::pow(model.rho, lag * scale);
        }
      }
      return m;
    }
    case CovarianceModel::Kind::explicit_matrix:
      if (model.matrix.rows() != d || model.matrix.cols() != d) {
        fail(ErrorKind::structural, "explicit covariance is not square of the declared dimension");
      }
      require_finite(model.matrix, "explicit covariance");
      return model.matrix;
  }
  fail(ErrorKind::structural, "unknown covariance kind");
}

GroupedSample::GroupedSample(StudyDesign design, std::vector<Matrix> groups)
    : design_(std::move(design)), groups_(std::move(groups)) {
  if (groups_.size() != design_.groups()) {
    fail(ErrorKind::structural, "sample has " + std::to_string(groups_.size()) + " groups, design has " +
                                    std::to_string(design_.groups()));
  }
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (static_cast<std::size_t>(groups_[i].rows()) != design_.size(i) ||
        static_cast<std::size_t>(groups_[i].cols()) != design_.dim(i)) {
      fail(ErrorKind::structural, "group " + std::to_string(i + 1) + " is " + std::to_string(groups_[i].rows()) + "x" +
                                      std::to_string(groups_[i].cols()) + ", design expects " +
                                      std::to_string(design_.size(i)) + "x" + std::to_string(design_.dim(i)));
    }
    require_finite(groups_[i], "sample group");
  }
}

Vector GroupedSample::group_mean(std::size_t i) const { return groups_.at(i).colwise().mean().transpose(); }

Vector pooled_mean(const GroupedSample& sample) {
  const StudyDesign& design = sample.design();
  Vector out(static_cast<Eigen::Index>(design.total_dim()));
  for (std::size_t i = 0; i < design.groups(); ++i) {
    out.segment(static_cast<Eigen::Index>(design.dim_offset(i)), static_cast<Eigen::Index>(design.dim(i))) =
        sample.group_mean(i);
  }
  return out;
}

GaussianModel::GaussianModel(StudyDesign design, std::vector<Vector> means, const std::vector<CovarianceModel>& covs)
    : design_(std::move(design)), means_(std::move(means)) {
  if (means_.size() != design_.groups() || covs.size() != design_.groups()) {
    fail(ErrorKind::structural, "gaussian model: means/covariances do not match the number of groups");
  }
  factors_.reserve(covs.size());
  for (std::size_t i = 0; i < covs.size(); ++i) {
    if (static_cast<std::size_t>(means_[i].size()) != design_.dim(i) || covs[i].dimension != design_.dim(i)) {
      fail(ErrorKind::structural, "gaussian model: group " + std::to_string(i + 1) + " mean/covariance dimension " +
                                      "does not match d_i = " + std::to_string(design_.dim(i)));
    }
    factors_.push_back(cholesky(materialize_covariance(covs[i])));
  }
}

GroupedSample GaussianModel::draw(std::uint64_t seed, std::uint64_t replication) const {
  std::vector<Matrix> groups;
  groups.reserve(design_.groups());
  for (std::size_t i = 0; i < design_.groups(); ++i) {
    const auto n = static_cast<Eigen::Index>(design_.size(i));
    const auto d = static_cast<Eigen::Index>(design_.dim(i));
    RngStream stream(derive_seed(seed, replication >> 32), static_cast<std::uint32_t>(i),
                     static_cast<std::uint32_t>(replication));
    Matrix xi(n, d);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index s = 0; s < d; ++s) xi(j, s) = stream.normal();
    }
    Matrix x = xi * factors_[i].transpose().triangularView<Eigen::Upper>();
    x.rowwise() += means_[i].transpose();
    groups.push_back(std::move(x));
  }
  return GroupedSample(design_, std::move(groups));
}

GroupedSample sample(const StudyDesign& design, const std::vector<Vector>& means,
                     const std::vector<CovarianceModel>& covs, std::uint64_t seed, std::uint64_t replication) {
  return GaussianModel(design, means, covs).draw(seed, replication);
}

}  // namespace splitplot
