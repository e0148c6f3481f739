// SPDX-License-Identifier: Apache-2.0
#include "core/moments.hpp"

#include "core/error.hpp"

#include <cmath>
#include <string>

namespace splitplot {

BlockMatrix build_vn(const StudyDesign& design, const std::vector<CovarianceModel>& covs) {
  if (covs.size() != design.groups()) {
    fail(ErrorKind::structural, "build_vn: " + std::to_string(covs.size()) + " covariances for " +
                                    std::to_string(design.groups()) + " groups");
  }
  const auto d = static_cast<Eigen::Index>(design.total_dim());
  Matrix vn = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < design.groups(); ++i) {
    const Matrix sigma = materialize_covariance(covs[i]);
    if (static_cast<std::size_t>(sigma.rows()) != design.dim(i)) {
      fail(ErrorKind::structural, "build_vn: covariance of group " + std::to_string(i + 1) + " has dimension " +
                                      std::to_string(sigma.rows()) + ", expected " + std::to_string(design.dim(i)));
    }
    const auto off = static_cast<Eigen::Index>(design.dim_offset(i));
    vn.block(off, off, sigma.rows(), sigma.cols()) = design.size_ratio(i) * sigma;
  }
  return BlockMatrix(design.dims(), std::move(vn));
}

double q_statistic(const GroupedSample& sample, const BlockMatrix& t) {
  const StudyDesign& design = sample.design();
  if (t.dim() != design.total_dim()) {
    fail(ErrorKind::structural, "q_statistic: hypothesis is " + std::to_string(t.dim()) + "-dimensional, data has D = " +
                                    std::to_string(design.total_dim()));
  }
  const Vector xbar = pooled_mean(sample);
  return static_cast<double>(design.total_size()) * xbar.dot(t.data() * xbar);
}

namespace {

void require_compatible(const BlockMatrix& t, const BlockMatrix& vn) {
  if (t.block_dims() != vn.block_dims()) fail(ErrorKind::structural, "hypothesis and V_N have different block layouts");
}

}  // namespace

NullMoments exact_moments(const BlockMatrix& t, const BlockMatrix& vn) {
  require_compatible(t, vn);
  NullMoments out;
  const std::size_t a = t.blocks();
  // vn.block(i, i) already carries the N/n_i factor.
  for (std::size_t i = 0; i < a; ++i) {
    out.mean += (t.block(i, i) * vn.block(i, i)).trace();
    for (std::size_t r = 0; r < a; ++r) {
      out.variance += (t.block(i, r) * vn.block(r, r) * t.block(r, i) * vn.block(i, i)).trace();
    }
  }
  out.variance *= 2.0;

  const Matrix tv = t.data() * vn.data();
  out.mean_trace_route = tv.trace();
  out.variance_trace_route = 2.0 * (tv * tv).trace();
  return out;
}

SpectralSummary spectral_summary(const BlockMatrix& t, const BlockMatrix& vn) {
  require_compatible(t, vn);
  SpectralSummary out;
  const Matrix tv = t.data() * vn.data();
  const Matrix tv2 = tv * tv;
  out.t1 = tv.trace();
  out.t2 = tv2.trace();
  out.t3 = (tv2 * tv).trace();

  Matrix tvt = tv * t.data();
  tvt = 0.5 * (tvt + tvt.transpose());
  out.eigenvalues = sym_eigen(tvt, 1.0).values;
  const double lambda_max = out.eigenvalues.size() > 0 ? out.eigenvalues[0] : 0.0;
  const double clamp = 1e-8 * std::abs(lambda_max);
  for (Eigen::Index s = 0; s < out.eigenvalues.size(); ++s) {
    double& lambda = out.eigenvalues[s];
    if (lambda >= 0.0) continue;
    if (lambda < -clamp) {
      out.warnings.push_back("eigenvalue " + std::to_string(s) + " of T V_N T is negative (" + std::to_string(lambda) +
                             ") beyond rounding level");
    } else {
      lambda = 0.0;
    }
  }
  out.eigen_t1 = out.eigenvalues.sum();
  out.eigen_t2 = out.eigenvalues.array().square().sum();
  out.eigen_t3 = out.eigenvalues.array().cube().sum();

  if (!(lambda_max > 0.0) || out.eigen_t2 <= 0.0) {
    out.degenerate = true;
    out.warnings.push_back("all-zero spectrum: weights and f_P undefined");
    return out;
  }
  out.weights = out.eigenvalues / std::sqrt(out.eigen_t2);
  out.pearson_df = out.t2 * out.t2 * out.t2 / (out.t3 * out.t3);
  return out;
}

double standardized_statistic(double q, double mean, double variance) {
  if (!(variance > 0.0)) fail(ErrorKind::degenerate, "standardized statistic needs a positive variance");
  return (q - mean) / std::sqrt(variance);
}

}  // namespace splitplot
