// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo type-I error experiments, data analysis entry point and result
// persistence.
#pragma once

#include "core/decision.hpp"
#include "core/hypothesis.hpp"
#include "core/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace splitplot {

struct DimSplit {
  enum class Kind { semi, proportional };
  Kind kind = Kind::semi;
  std::size_t fixed = 5;   // semi: d1
  double fraction = 0.2;   // proportional: d1 = fraction * D
};

/// (d1, d2) for total dimension D.
std::pair<std::size_t, std::size_t> split_dimension(const DimSplit& split, std::size_t total);

struct ExperimentConfig {
  std::string scenario = "B";  // A, B or custom
  std::vector<std::size_t> d_grid{100, 300};
  DimSplit split;
  std::vector<std::pair<std::size_t, std::size_t>> sizes{{20, 30}};
  double alpha = 0.05;
  std::size_t replications = 5000;
  std::vector<Flavor> flavors{Flavor::BStar};
  EstimatorConfig estimators;
  std::uint64_t seed = 20240101;
  std::filesystem::path output;
  std::filesystem::path replication_log;
  double mean_shift = 0.0;  // added to every coordinate of the group-1 mean
  bool record_wall_time = false;
  std::size_t threads = 0;  // 0: hardware concurrency
  // custom scenario
  std::filesystem::path hypothesis_file;
  std::vector<std::filesystem::path> covariance_files;
};

/// key = value lines; '#' starts a comment. Throws ErrorKind::usage on
/// unknown keys or malformed values. Relative paths resolve against `base`.
ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

struct ResultRow {
  std::string scenario;
  std::size_t total_dim = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  Flavor flavor = Flavor::BStar;
  Rule rule = Rule::z;
  double rejection_rate = 0.0;
  std::size_t rejections = 0;
  std::size_t replications = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

inline constexpr const char* kResultHeader =
    "scenario,D,d1,d2,n1,n2,flavor,rule,rejection_rate,replications,binomial_ci_low,binomial_ci_high,seed,wall_time";

/// 99% normal-approximation binomial band around the nominal level.
std::pair<double, double> binomial_band(double alpha, std::size_t replications);

/// One simulated setting: design, hypothesis, covariances and seeds.
struct GridPoint {
  std::size_t index = 0;
  StudyDesign design;
  BlockMatrix t;
  std::vector<CovarianceModel> covariances;
  std::vector<Vector> means;
  std::uint64_t seed = 0;  // data seed; replication r uses stream (seed, group, r)
};

std::vector<GridPoint> build_grid(const ExperimentConfig& config);

/// Seed handed to run_test for replication r of flavor f at a grid point.
std::uint64_t test_seed(std::uint64_t grid_seed, std::uint64_t replication, Flavor flavor);

struct ReplicationRecord {
  std::size_t grid_index = 0;
  Flavor flavor = Flavor::BStar;
  std::uint64_t replication = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t test_seed = 0;
  double statistic = 0.0;
  std::array<bool, 3> reject{};
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<ReplicationRecord> records;  // filled when keep_records
};

/// Runs the grid; writes the CSV (and the replication log) when the config
/// names them. Output is independent of the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, bool keep_records = false);

std::string format_rows(const std::vector<ResultRow>& rows);
void write_rows(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// Recomputes one replication from its logged seeds.
TestReport replay_replication(const ExperimentConfig& config, const GridPoint& point, Flavor flavor,
                              std::uint64_t replication, std::uint64_t data_seed, std::uint64_t seed);

/// "A", "B" or a D x D CSV file; loaded matrices must pass
/// validate_hypothesis (ErrorKind::data otherwise, naming the defects).
BlockMatrix load_hypothesis(const std::string& source, const StudyDesign& design);
/// Validation of a CSV matrix treated as one block.
HypothesisValidation validate_hypothesis_file(const std::filesystem::path& path);

struct Analysis {
  TestReport report;
  std::string json;
  std::string text;
};

Analysis analyze(const std::filesystem::path& manifest, const std::string& hypothesis, double alpha, Flavor flavor,
                 std::uint64_t seed, bool skip_header = false, const EstimatorConfig& config = {});

std::string report_json(const TestReport& report, const StudyDesign& design, const std::string& data_source,
                        const std::string& hypothesis_source);
std::string report_text(const TestReport& report);

/// SPLITPLOT_THREADS when set, else `configured`, else hardware concurrency.
std::size_t resolve_threads(std::size_t configured);

}  // namespace splitplot
