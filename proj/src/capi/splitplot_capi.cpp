// SPDX-License-Identifier: Apache-2.0
#include "splitplot/splitplot.h"

#include "core/decision.hpp"
#include "core/error.hpp"
#include "core/harness.hpp"
#include "core/io.hpp"

#include <exception>
#include <new>
#include <optional>
#include <string>

struct sp_sample {
  splitplot::GroupedSample data;
  std::string source;
};

struct sp_hypothesis {
  splitplot::BlockMatrix t;
  std::string source;
};

struct sp_report {
  splitplot::TestReport report;
  std::string json;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

sp_status status_for(splitplot::ErrorKind kind) {
  using splitplot::ErrorKind;
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::domain:
    case ErrorKind::unsupported:
    case ErrorKind::enumeration_cap:
    case ErrorKind::invalid_tuple:
      return SP_ERROR_USAGE;
    case ErrorKind::data:
    case ErrorKind::io:
    case ErrorKind::structural:
    case ErrorKind::invalid_design:
    case ErrorKind::invalid_dimension:
      return SP_ERROR_DATA;
    case ErrorKind::degenerate:
    case ErrorKind::factorization:
      return SP_ERROR_DEGENERATE;
  }
  return SP_ERROR_INTERNAL;
}

template <class F>
sp_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SP_OK;
  } catch (const splitplot::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SP_ERROR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SP_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SP_ERROR_INTERNAL;
  }
}

sp_status null_argument(const char* name) {
  g_last_error = std::string("null argument: ") + name;
  return SP_ERROR_USAGE;
}

std::optional<splitplot::Flavor> to_flavor(sp_flavor flavor) {
  switch (flavor) {
    case SP_FLAVOR_A: return splitplot::Flavor::A;
    case SP_FLAVOR_ASTAR: return splitplot::Flavor::AStar;
    case SP_FLAVOR_B: return splitplot::Flavor::B;
    case SP_FLAVOR_BSTAR: return splitplot::Flavor::BStar;
  }
  return std::nullopt;
}

std::optional<splitplot::Rule> to_rule(sp_rule rule) {
  switch (rule) {
    case SP_RULE_Z: return splitplot::Rule::z;
    case SP_RULE_CHI1: return splitplot::Rule::chi1;
    case SP_RULE_KF: return splitplot::Rule::kf;
  }
  return std::nullopt;
}

}  // namespace

extern "C" {

const char* sp_version(void) { return "0.1.0"; }

const char* sp_last_error(void) { return g_last_error.c_str(); }

sp_status sp_sample_load(const char* manifest, int skip_header, sp_sample** out) {
  if (!manifest) return null_argument("manifest");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new sp_sample{splitplot::ingest_data(manifest, skip_header != 0), manifest};
  });
}

void sp_sample_free(sp_sample* sample) { delete sample; }

size_t sp_sample_groups(const sp_sample* sample) { return sample ? sample->data.design().groups() : 0; }

size_t sp_sample_dim(const sp_sample* sample, size_t group) {
  if (!sample || group >= sample->data.design().groups()) return 0;
  return sample->data.design().dim(group);
}

size_t sp_sample_size(const sp_sample* sample, size_t group) {
  if (!sample || group >= sample->data.design().groups()) return 0;
  return sample->data.design().size(group);
}

sp_status sp_hypothesis_for_sample(const char* source, const sp_sample* sample, sp_hypothesis** out) {
  if (!source) return null_argument("source");
  if (!sample) return null_argument("sample");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new sp_hypothesis{splitplot::load_hypothesis(source, sample->data.design()), source};
  });
}

void sp_hypothesis_free(sp_hypothesis* hypothesis) { delete hypothesis; }

sp_status sp_validate_hypothesis_file(const char* path, sp_validation* out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] {
    const splitplot::HypothesisValidation v = splitplot::validate_hypothesis_file(path);
    out->asymmetry = v.asymmetry;
    out->idempotence_defect = v.idempotence_defect;
    out->block_transpose_defect = v.block_transpose_defect;
    out->rank = v.rank;
    out->passed = v.passed ? 1 : 0;
  });
}

sp_status sp_run_test(const sp_sample* sample, const sp_hypothesis* hypothesis, double alpha, sp_flavor flavor,
                      uint64_t seed, sp_report** out) {
  if (!sample) return null_argument("sample");
  if (!hypothesis) return null_argument("hypothesis");
  if (!out) return null_argument("out");
  *out = nullptr;
  const auto f = to_flavor(flavor);
  if (!f) {
    g_last_error = "unknown flavor";
    return SP_ERROR_USAGE;
  }
  return guarded([&] {
    auto* r = new sp_report{};
    try {
      r->report = splitplot::run_test(sample->data, hypothesis->t, alpha, *f, {}, seed);
      r->json = splitplot::report_json(r->report, sample->data.design(), sample->source, hypothesis->source);
      r->text = splitplot::report_text(r->report);
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

void sp_report_free(sp_report* report) { delete report; }

double sp_report_statistic(const sp_report* report) { return report ? report->report.statistic : 0.0; }

int sp_report_degenerate(const sp_report* report) { return report && report->report.degenerate ? 1 : 0; }

int sp_report_fhat(const sp_report* report, double* fhat) {
  if (!report || !report->report.fhat) return 0;
  if (fhat) *fhat = *report->report.fhat;
  return 1;
}

int sp_report_decision(const sp_report* report, sp_rule rule, int* reject, double* threshold) {
  if (!report) return 0;
  const auto r = to_rule(rule);
  if (!r) return 0;
  const splitplot::RuleDecision* d = report->report.decision(*r);
  if (!d) return 0;
  if (reject) *reject = d->reject ? 1 : 0;
  if (threshold) *threshold = d->threshold;
  return 1;
}

const char* sp_report_json(const sp_report* report) { return report ? report->json.c_str() : ""; }

const char* sp_report_text(const sp_report* report) { return report ? report->text.c_str() : ""; }

sp_status sp_simulate(const char* config_path, const char* output, size_t* rows_written) {
  if (!config_path) return null_argument("config_path");
  return guarded([&] {
    splitplot::ExperimentConfig config = splitplot::parse_config(config_path);
    if (output) config.output = output;
    if (config.output.empty()) splitplot::fail(splitplot::ErrorKind::usage, "no output path configured");
    const auto result = splitplot::run_experiment(config);
    if (rows_written) *rows_written = result.rows.size();
  });
}

}  // extern "C"
