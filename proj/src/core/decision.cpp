// SPDX-License-Identifier: Apache-2.0
#include "core/decision.hpp"

#include "core/dists.hpp"
#include "core/error.hpp"
#include "core/moments.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace splitplot {

const char* to_string(Flavor flavor) noexcept {
  switch (flavor) {
    case Flavor::A: return "A";
    case Flavor::AStar: return "Astar";
    case Flavor::B: return "B";
    case Flavor::BStar: return "Bstar";
    case Flavor::Oracle: return "oracle";
  }
  return "?";
}

const char* to_string(Rule rule) noexcept {
  switch (rule) {
    case Rule::z: return "z";
    case Rule::chi1: return "chi1";
    case Rule::kf: return "kf";
  }
  return "?";
}

const char* to_string(FpRegime regime) noexcept {
  switch (regime) {
    case FpRegime::near_chi1: return "near_chi1";
    case FpRegime::intermediate: return "intermediate";
    case FpRegime::near_normal: return "near_normal";
  }
  return "?";
}

std::optional<Flavor> parse_flavor(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "a") return Flavor::A;
  if (s == "astar" || s == "a*") return Flavor::AStar;
  if (s == "b") return Flavor::B;
  if (s == "bstar" || s == "b*") return Flavor::BStar;
  if (s == "oracle") return Flavor::Oracle;
  return std::nullopt;
}

const RuleDecision* TestReport::decision(Rule rule) const noexcept {
  for (const auto& d : decisions) {
    if (d.rule == rule) return &d;
  }
  return nullptr;
}

bool TestReport::rejects(Rule rule) const noexcept {
  const RuleDecision* d = decision(rule);
  return d != nullptr && d->reject;
}

double w_statistic(double q, const TraceEstimates& traces) {
  if (!(traces.t2 > 0.0)) {
    fail(ErrorKind::degenerate, "variance estimate t2 = " + std::to_string(traces.t2) + " is not positive");
  }
  return (q - traces.t1) / std::sqrt(2.0 * traces.t2);
}

double rule_threshold(Rule rule, double alpha, double fhat) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::domain, "alpha must lie in (0, 1)");
  switch (rule) {
    case Rule::z: return normal_quantile(1.0 - alpha);
    case Rule::chi1: return (chisq_quantile(1.0 - alpha, 1.0) - 1.0) / std::sqrt(2.0);
    case Rule::kf: return kf_quantile(1.0 - alpha, std::max(fhat, 1.0));
  }
  return 0.0;
}

FpRegime fp_regime_diagnostic(double fhat) {
  if (fhat <= 1.2) return FpRegime::near_chi1;
  if (fhat >= 50.0) return FpRegime::near_normal;
  return FpRegime::intermediate;
}

namespace {

constexpr std::uint64_t kTagAStar = 1;
constexpr std::uint64_t kTagPermutations = 2;
constexpr std::uint64_t kTagBStar = 3;

// Order-3 estimators need more observations than orders 1 and 2; when the
// data cannot support them the kf rule is dropped instead of failing.
template <class F>
std::optional<double> third_order(F&& compute, std::vector<std::string>* diagnostics) {
  try {
    return compute();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::invalid_design) throw;
    if (diagnostics) diagnostics->push_back(std::string("t3 unavailable: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

TraceEstimates estimate_traces(const KernelEngine& engine, Flavor flavor, const EstimatorConfig& config,
                               std::uint64_t seed, std::vector<std::string>* diagnostics) {
  const StudyDesign& design = engine.design();
  const auto n_total = static_cast<std::uint64_t>(design.total_size());
  TraceEstimates out;
  switch (flavor) {
    case Flavor::A: {
      out.family = Family::A;
      out.t1 = a_full(engine, 1, config.enumeration_cap);
      out.t2 = a_full(engine, 2, config.enumeration_cap);
      out.t3 = third_order([&] { return a_full(engine, 3, config.enumeration_cap); }, diagnostics);
      for (int k = 0; k < 3; ++k) out.upsilon[k] = a_combinations(design, k + 1);
      return out;
    }
    case Flavor::AStar: {
      out.family = Family::AStar;
      const IndexSource source = IndexSource::uniform(derive_seed(seed, kTagAStar));
      std::array<double, 3> values{};
      for (int k = 0; k < 2; ++k) {
        out.upsilon[k] = config.a_star_factors[k] * n_total;
        values[k] = a_star(engine, k + 1, out.upsilon[k], source, config.enumeration_cap).value;
      }
      out.t1 = values[0];
      out.t2 = values[1];
      out.upsilon[2] = config.a_star_factors[2] * n_total;
      out.t3 = third_order([&] { return a_star(engine, 3, out.upsilon[2], source, config.enumeration_cap).value; },
                           diagnostics);
      return out;
    }
    case Flavor::B: {
      out.family = Family::B;
      const std::size_t reps = config.b_permutations;
      const PermutationSet perms = PermutationSet::random(design, reps, derive_seed(seed, kTagPermutations));
      out.t1 = b_value(engine, 1, perms, reps, config.enumeration_cap);
      out.t2 = b_value(engine, 2, perms, reps, config.enumeration_cap);
      out.t3 = third_order([&] { return b_value(engine, 3, perms, reps, config.enumeration_cap); }, diagnostics);
      out.upsilon = {reps, reps, reps};
      return out;
    }
    case Flavor::BStar: {
      out.family = Family::BStar;
      BStarPolicy policy;
      for (int k = 0; k < 3; ++k) policy.upsilon1[k] = config.b_star_factors[k] * n_total;
      policy.upsilon2 = config.b_star_upsilon2;
      const std::size_t reps = *std::max_element(policy.upsilon1.begin(), policy.upsilon1.end());
      const PermutationSet perms = PermutationSet::random(design, reps, derive_seed(seed, kTagPermutations));
      const IndexSource source = IndexSource::uniform(derive_seed(seed, kTagBStar));
      out.t1 = b_star_value(engine, 1, perms, policy.upsilon1[0], policy.upsilon2, source, config.enumeration_cap);
      out.t2 = b_star_value(engine, 2, perms, policy.upsilon1[1], policy.upsilon2, source, config.enumeration_cap);
      out.t3 = third_order(
          [&] {
            return b_star_value(engine, 3, perms, policy.upsilon1[2], policy.upsilon2, source, config.enumeration_cap);
          },
          diagnostics);
      out.upsilon = policy.upsilon1;
      out.upsilon2 = policy.upsilon2;
      return out;
    }
    case Flavor::Oracle:
      fail(ErrorKind::usage, "oracle traces come from known covariances, not from data");
  }
  return out;
}

TraceEstimates exact_traces(const BlockMatrix& t, const BlockMatrix& vn, std::vector<std::string>* warnings) {
  const SpectralSummary spec = spectral_summary(t, vn);
  if (warnings) warnings->insert(warnings->end(), spec.warnings.begin(), spec.warnings.end());
  TraceEstimates out;
  out.family = Family::Exact;
  out.t1 = spec.t1;
  out.t2 = spec.t2;
  out.t3 = spec.t3;
  return out;
}

TestReport run_test(const GroupedSample& sample, const BlockMatrix& t, double alpha, Flavor flavor,
                    const EstimatorConfig& config, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::domain, "alpha must lie in (0, 1)");
  TestReport report;
  report.flavor = flavor;
  report.alpha = alpha;
  report.seed = seed;
  report.q = q_statistic(sample, t);

  if (flavor == Flavor::Oracle) {
    if (config.oracle_traces) {
      report.traces = *config.oracle_traces;
    } else {
      if (!config.oracle_vn) fail(ErrorKind::usage, "oracle flavor needs the true covariances");
      report.traces = exact_traces(t, *config.oracle_vn, &report.diagnostics);
    }
  } else {
    const KernelEngine engine(sample, t);
    report.traces = estimate_traces(engine, flavor, config, seed, &report.diagnostics);
  }

  if (!(report.traces.t2 > 0.0)) {
    report.degenerate = true;
    report.statistic = std::numeric_limits<double>::quiet_NaN();
    report.diagnostics.push_back("variance estimate t2 = " + std::to_string(report.traces.t2) +
                                 " is not positive; no decision made");
    return report;
  }
  report.statistic = w_statistic(report.q, report.traces);

  if (report.traces.t3 && *report.traces.t3 != 0.0) {
    report.fhat = fhat_pearson(report.traces, &report.diagnostics);
    report.regime = fp_regime_diagnostic(*report.fhat);
  }
  for (Rule rule : kAllRules) {
    if (rule == Rule::kf && !report.fhat) continue;
    const double threshold = rule_threshold(rule, alpha, report.fhat.value_or(1.0));
    report.decisions.push_back({rule, threshold, report.statistic > threshold});
  }
  return report;
}

}  // namespace splitplot
