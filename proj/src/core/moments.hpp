// SPDX-License-Identifier: Apache-2.0
//
// Exact null moments and spectrum of the quadratic form when the group
// covariances are known. Everything here is the ground truth the estimators
// and Monte Carlo studies are checked against.
#pragma once

#include "core/hypothesis.hpp"
#include "core/model.hpp"

#include <string>
#include <vector>

namespace splitplot {

/// V_N = blockdiag((N/n_i) Sigma_i).
BlockMatrix build_vn(const StudyDesign& design, const std::vector<CovarianceModel>& covs);

/// Q_N = N * Xbar^T T Xbar.
double q_statistic(const GroupedSample& sample, const BlockMatrix& t);

struct NullMoments {
  double mean = 0.0;                // sum_i (N/n_i) tr(T_ii Sigma_i)
  double variance = 0.0;            // 2 sum_{i,r} (N^2/(n_i n_r)) tr(T_ir Sigma_r T_ri Sigma_i)
  double mean_trace_route = 0.0;    // tr(T V_N)
  double variance_trace_route = 0.0;  // 2 tr((T V_N)^2)
};

/// Mean and variance of Q_N under the null, by the blockwise sums and by
/// whole-matrix traces.
NullMoments exact_moments(const BlockMatrix& t, const BlockMatrix& vn);

struct SpectralSummary {
  Vector eigenvalues;  // of T V_N T, descending, clamped at 0
  Vector weights;      // beta_s = lambda_s / sqrt(sum lambda^2); empty when degenerate
  double t1 = 0.0;     // tr(T V_N)
  double t2 = 0.0;     // tr((T V_N)^2)
  double t3 = 0.0;     // tr((T V_N)^3)
  double eigen_t1 = 0.0;  // sum lambda_s^k, for cross-checking
  double eigen_t2 = 0.0;
  double eigen_t3 = 0.0;
  double pearson_df = 0.0;  // f_P = t2^3 / t3^2
  bool degenerate = false;
  std::vector<std::string> warnings;
};

SpectralSummary spectral_summary(const BlockMatrix& t, const BlockMatrix& vn);

/// (q - mean) / sqrt(variance)
double standardized_statistic(double q, double mean, double variance);

}  // namespace splitplot
