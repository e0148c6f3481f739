// SPDX-License-Identifier: Apache-2.0
//
// Standardized statistic W_N and the three decision rules:
//   z:    W > z_{1-alpha}
//   chi1: W > (chi^2_{1;1-alpha} - 1) / sqrt(2)
//   kf:   W > K_{f_hat;1-alpha}
#pragma once

#include "core/estimators.hpp"
#include "core/hypothesis.hpp"
#include "core/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace splitplot {

enum class Flavor { A, AStar, B, BStar, Oracle };
enum class Rule { z, chi1, kf };
enum class FpRegime { near_chi1, intermediate, near_normal };

inline constexpr std::array<Rule, 3> kAllRules{Rule::z, Rule::chi1, Rule::kf};

const char* to_string(Flavor flavor) noexcept;
const char* to_string(Rule rule) noexcept;
const char* to_string(FpRegime regime) noexcept;
/// Accepts A, Astar, A*, B, Bstar, B*, oracle (case-insensitive).
std::optional<Flavor> parse_flavor(std::string_view text);

struct EstimatorConfig {
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  /// A*: Upsilon = factor * N for t1, t2, t3.
  std::array<std::uint64_t, 3> a_star_factors{50, 100, 1000};
  /// Full B: permutations per trace.
  std::size_t b_permutations = 10;
  /// B*: Upsilon_1 = factor * N for t1, t2, t3 and Upsilon_2 tuples each.
  std::array<std::uint64_t, 3> b_star_factors{5, 10, 100};
  std::uint64_t b_star_upsilon2 = 10;
  /// V_N for the oracle flavor (known covariances).
  std::optional<BlockMatrix> oracle_vn;
  /// Exact traces computed once from oracle_vn; used in its place when set.
  std::optional<TraceEstimates> oracle_traces;
};

/// Exact traces tr((T V_N)^k) for the oracle flavor.
TraceEstimates exact_traces(const BlockMatrix& t, const BlockMatrix& vn, std::vector<std::string>* warnings = nullptr);

struct RuleDecision {
  Rule rule = Rule::z;
  double threshold = 0.0;
  bool reject = false;
};

struct TestReport {
  Flavor flavor = Flavor::Oracle;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double q = 0.0;
  double statistic = 0.0;  // NaN when degenerate
  TraceEstimates traces;
  std::optional<double> fhat;
  std::optional<FpRegime> regime;
  std::vector<RuleDecision> decisions;  // empty when degenerate
  bool degenerate = false;
  std::vector<std::string> diagnostics;

  const RuleDecision* decision(Rule rule) const noexcept;
  bool rejects(Rule rule) const noexcept;
};

/// (q - t1) / sqrt(2 t2). Throws ErrorKind::degenerate when t2 <= 0.
double w_statistic(double q, const TraceEstimates& traces);

/// Rejection threshold on the W scale; `fhat` is used by the kf rule only
/// and floored at 1.
double rule_threshold(Rule rule, double alpha, double fhat = 1.0);

/// Traces for the requested flavor; deterministic given seed.
TraceEstimates estimate_traces(const KernelEngine& engine, Flavor flavor, const EstimatorConfig& config,
                               std::uint64_t seed, std::vector<std::string>* diagnostics = nullptr);

TestReport run_test(const GroupedSample& sample, const BlockMatrix& t, double alpha, Flavor flavor,
                    const EstimatorConfig& config, std::uint64_t seed);

/// Reporting aid only: near_chi1 for f <= 1.2, near_normal for f >= 50.
FpRegime fp_regime_diagnostic(double fhat);

}  // namespace splitplot
