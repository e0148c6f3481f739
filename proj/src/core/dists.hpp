// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace splitplot {

double normal_cdf(double x);
/// Phi^{-1}(level); Wichura's AS241 followed by one Newton polish.
double normal_quantile(double level);

/// Regularized lower incomplete gamma P(a, x) and its complement.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chisq_cdf(double x, double df);
/// Inverse of chisq_cdf for real df > 0.
double chisq_quantile(double level, double df);

/// Quantile of K_f = (chi^2_f - f) / sqrt(2 f).
double kf_quantile(double level, double df);

/// Draws of sum_s w_s (C_s - 1)/sqrt(2) + sqrt(max(0, 1 - sum w_s^2)) Z with
/// C_s iid chi^2_1 and Z standard normal. Requires sum w_s^2 <= 1 + 1e-8.
std::vector<double> weighted_chisq_sample(std::span<const double> weights, std::size_t count, RngStream& rng);

}  // namespace splitplot
