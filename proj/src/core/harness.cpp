// SPDX-License-Identifier: Apache-2.0
#include "core/harness.hpp"

#include "core/dists.hpp"
#include "core/error.hpp"
#include "core/io.hpp"
#include "core/moments.hpp"
#include "core/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace splitplot {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

std::pair<std::size_t, std::size_t> split_dimension(const DimSplit& split, std::size_t total) {
  std::size_t d1 = 0;
  if (split.kind == DimSplit::Kind::semi) {
    if (total <= split.fixed) {
      fail(ErrorKind::usage, "semi split needs D > d1 = " + std::to_string(split.fixed) + "; got D = " +
                                 std::to_string(total));
    }
    d1 = split.fixed;
  } else {
    d1 = static_cast<std::size_t>(std::llround(split.fraction * static_cast<double>(total)));
    if (d1 == 0 || d1 >= total) {
      fail(ErrorKind::usage, "proportional split leaves an empty group at D = " + std::to_string(total));
    }
  }
  return {d1, total - d1};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::size_t line) {
  fail(ErrorKind::usage, "config line " + std::to_string(line) + ": invalid value '" + value + "' for " + key);
}

std::uint64_t to_u64(const std::string& key, const std::string& value, std::size_t line) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value.front() == '-') bad_value(key, value, line);
    const unsigned long long v = std::stoull(value, &pos, 0);
    if (pos != value.size()) bad_value(key, value, line);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, line);
  }
}

double to_double(const std::string& key, const std::string& value, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) bad_value(key, value, line);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, line);
  }
}

bool to_bool(const std::string& key, const std::string& value, std::size_t line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, line);
}

std::array<std::uint64_t, 3> to_triple(const std::string& key, const std::string& value, std::size_t line) {
  const auto items = split_list(value);
  if (items.size() != 3) bad_value(key, value, line);
  return {to_u64(key, items[0], line), to_u64(key, items[1], line), to_u64(key, items[2], line)};
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

void check_config(const ExperimentConfig& c) {
  if (c.scenario != "A" && c.scenario != "B" && c.scenario != "custom") {
    fail(ErrorKind::usage, "scenario must be A, B or custom");
  }
  if (c.scenario != "custom" && c.d_grid.empty()) fail(ErrorKind::usage, "d_grid must not be empty");
  if (c.sizes.empty()) fail(ErrorKind::usage, "sizes must not be empty");
  if (c.flavors.empty()) fail(ErrorKind::usage, "flavors must not be empty");
  if (c.replications == 0) fail(ErrorKind::usage, "replications must be at least 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail(ErrorKind::usage, "alpha must lie in (0, 1)");
  if (c.split.kind == DimSplit::Kind::proportional && !(c.split.fraction > 0.0 && c.split.fraction < 1.0)) {
    fail(ErrorKind::usage, "proportional split fraction must lie in (0, 1)");
  }
  if (c.scenario != "custom") {
    for (std::size_t d : c.d_grid) split_dimension(c.split, d);
  } else if (c.hypothesis_file.empty() || c.covariance_files.empty()) {
    fail(ErrorKind::usage, "custom scenario needs hypothesis and covariances files");
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const fs::path& base) {
  ExperimentConfig c;
  std::stringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string content = trim(raw.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::usage, "config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    std::string value = trim(content.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);

    if (key == "scenario") {
      c.scenario = value;
    } else if (key == "d_grid") {
      c.d_grid.clear();
      for (const auto& item : split_list(value)) c.d_grid.push_back(to_u64(key, item, line));
    } else if (key == "split") {
      const auto colon = value.find(':');
      const std::string kind = value.substr(0, colon);
      const std::string arg = colon == std::string::npos ? "" : value.substr(colon + 1);
      if (kind == "semi") {
        c.split.kind = DimSplit::Kind::semi;
        if (!arg.empty()) c.split.fixed = to_u64(key, arg, line);
      } else if (kind == "proportional") {
        c.split.kind = DimSplit::Kind::proportional;
        if (!arg.empty()) c.split.fraction = to_double(key, arg, line);
      } else {
        bad_value(key, value, line);
      }
    } else if (key == "sizes") {
      c.sizes.clear();
      for (const auto& item : split_list(value)) {
        const auto x = item.find('x');
        if (x == std::string::npos) bad_value(key, item, line);
        c.sizes.emplace_back(to_u64(key, item.substr(0, x), line), to_u64(key, item.substr(x + 1), line));
      }
    } else if (key == "alpha") {
      c.alpha = to_double(key, value, line);
    } else if (key == "replications") {
      c.replications = to_u64(key, value, line);
    } else if (key == "flavors") {
      c.flavors.clear();
      for (const auto& item : split_list(value)) {
        const auto f = parse_flavor(item);
        if (!f) bad_value(key, item, line);
        c.flavors.push_back(*f);
      }
    } else if (key == "seed") {
      c.seed = to_u64(key, value, line);
    } else if (key == "output") {
      c.output = resolve(base, value);
    } else if (key == "replication_log") {
      c.replication_log = resolve(base, value);
    } else if (key == "mean_shift") {
      c.mean_shift = to_double(key, value, line);
    } else if (key == "record_wall_time") {
      c.record_wall_time = to_bool(key, value, line);
    } else if (key == "threads") {
      c.threads = to_u64(key, value, line);
    } else if (key == "enumeration_cap") {
      c.estimators.enumeration_cap = to_u64(key, value, line);
    } else if (key == "astar_factors") {
      c.estimators.a_star_factors = to_triple(key, value, line);
    } else if (key == "b_permutations") {
      c.estimators.b_permutations = to_u64(key, value, line);
    } else if (key == "bstar_upsilon1_factors") {
      c.estimators.b_star_factors = to_triple(key, value, line);
    } else if (key == "bstar_upsilon2") {
      c.estimators.b_star_upsilon2 = to_u64(key, value, line);
    } else if (key == "hypothesis") {
      c.hypothesis_file = resolve(base, value);
    } else if (key == "covariances") {
      c.covariance_files.clear();
      for (const auto& item : split_list(value)) c.covariance_files.push_back(resolve(base, item));
    } else {
      fail(ErrorKind::usage, "config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  check_config(c);
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Grid

std::pair<double, double> binomial_band(double alpha, std::size_t replications) {
  const double half = normal_quantile(0.995) * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(replications));
  return {std::max(0.0, alpha - half), std::min(1.0, alpha + half)};
}

std::vector<GridPoint> build_grid(const ExperimentConfig& config) {
  check_config(config);
  std::vector<GridPoint> grid;
  auto add = [&](StudyDesign design, BlockMatrix t, std::vector<CovarianceModel> covs) {
    const std::size_t index = grid.size();
    std::vector<Vector> means;
    for (std::size_t i = 0; i < design.groups(); ++i) {
      means.push_back(Vector::Constant(static_cast<Eigen::Index>(design.dim(i)), i == 0 ? config.mean_shift : 0.0));
    }
    grid.push_back(GridPoint{index, std::move(design), std::move(t), std::move(covs), std::move(means),
                             derive_seed(config.seed, index)});
  };

  if (config.scenario == "custom") {
    std::vector<CovarianceModel> covs;
    std::vector<std::size_t> dims;
    for (const auto& file : config.covariance_files) {
      covs.push_back(CovarianceModel::explicit_matrix(read_matrix_csv(file)));
      dims.push_back(covs.back().dimension);
    }
    const Matrix tm = read_matrix_csv(config.hypothesis_file);
    for (const auto& [n1, n2] : config.sizes) {
      if (dims.size() != 2) fail(ErrorKind::usage, "custom scenario supports two groups");
      StudyDesign design(dims, {n1, n2});
      BlockMatrix t(dims, tm);
      const HypothesisValidation v = validate_hypothesis(t);
      if (!v.passed) fail(ErrorKind::data, "custom hypothesis is not a projection matrix");
      add(std::move(design), std::move(t), covs);
    }
    return grid;
  }

  const char label = config.scenario.front();
  for (const auto& [n1, n2] : config.sizes) {
    for (std::size_t total : config.d_grid) {
      const auto [d1, d2] = split_dimension(config.split, total);
      StudyDesign design({d1, d2}, {n1, n2});
      ScenarioSpec spec = make_scenario(label, design);
      add(design, scenario_hypothesis(label, design), std::move(spec.covariances));
    }
  }
  return grid;
}

std::uint64_t test_seed(std::uint64_t grid_seed, std::uint64_t replication, Flavor flavor) {
  return derive_seed(grid_seed, replication, static_cast<std::uint64_t>(flavor) + 1);
}

std::size_t resolve_threads(std::size_t configured) {
  if (const char* env = std::getenv("SPLITPLOT_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

EstimatorConfig config_for(const ExperimentConfig& config, const GridPoint& point) {
  EstimatorConfig est = config.estimators;
  if (std::find(config.flavors.begin(), config.flavors.end(), Flavor::Oracle) != config.flavors.end()) {
    est.oracle_vn = build_vn(point.design, point.covariances);
    est.oracle_traces = exact_traces(point.t, *est.oracle_vn);
  }
  return est;
}

template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t k = next.fetch_add(1);
        if (k >= count) return;
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

TestReport replay_replication(const ExperimentConfig& config, const GridPoint& point, Flavor flavor,
                              std::uint64_t replication, std::uint64_t data_seed, std::uint64_t seed) {
  const GroupedSample data = sample(point.design, point.means, point.covariances, data_seed, replication);
  return run_test(data, point.t, config.alpha, flavor, config_for(config, point), seed);
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool keep_records) {
  const std::vector<GridPoint> grid = build_grid(config);
  const std::size_t threads = resolve_threads(config.threads);
  const std::size_t flavors = config.flavors.size();
  const std::size_t reps = config.replications;
  const bool want_records = keep_records || !config.replication_log.empty();
  const auto band = binomial_band(config.alpha, reps);

  ExperimentResult result;
  for (const GridPoint& point : grid) {
    const EstimatorConfig est = config_for(config, point);
    const GaussianModel model(point.design, point.means, point.covariances);
    std::vector<std::uint8_t> bits(reps * flavors, 0);
    std::vector<double> statistics(want_records ? reps * flavors : 0);
    std::vector<double> seconds(reps * flavors, 0.0);

    parallel_for(reps, threads, [&](std::size_t r) {
      const GroupedSample data = model.draw(point.seed, r);
      for (std::size_t f = 0; f < flavors; ++f) {
        const auto start = std::chrono::steady_clock::now();
        const TestReport report =
            run_test(data, point.t, config.alpha, config.flavors[f], est, test_seed(point.seed, r, config.flavors[f]));
        seconds[r * flavors + f] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::uint8_t mask = 0;
        for (std::size_t k = 0; k < kAllRules.size(); ++k) {
          if (report.rejects(kAllRules[k])) mask |= static_cast<std::uint8_t>(1u << k);
        }
        bits[r * flavors + f] = mask;
        if (want_records) statistics[r * flavors + f] = report.statistic;
      }
    });

    for (std::size_t f = 0; f < flavors; ++f) {
      double wall = 0.0;
      for (std::size_t r = 0; r < reps; ++r) wall += seconds[r * flavors + f];
      for (std::size_t k = 0; k < kAllRules.size(); ++k) {
        std::size_t count = 0;
        for (std::size_t r = 0; r < reps; ++r) count += (bits[r * flavors + f] >> k) & 1u;
        ResultRow row;
        row.scenario = config.scenario;
        row.total_dim = point.design.total_dim();
        row.d1 = point.design.dim(0);
        row.d2 = point.design.total_dim() - row.d1;
        row.n1 = point.design.size(0);
        row.n2 = point.design.total_size() - row.n1;
        row.flavor = config.flavors[f];
        row.rule = kAllRules[k];
        row.rejections = count;
        row.replications = reps;
        row.rejection_rate = static_cast<double>(count) / static_cast<double>(reps);
        row.ci_low = band.first;
        row.ci_high = band.second;
        row.seed = config.seed;
        row.wall_time = config.record_wall_time ? wall : 0.0;
        result.rows.push_back(std::move(row));
      }
      if (want_records) {
        for (std::size_t r = 0; r < reps; ++r) {
          ReplicationRecord rec;
          rec.grid_index = point.index;
          rec.flavor = config.flavors[f];
          rec.replication = r;
          rec.data_seed = point.seed;
          rec.test_seed = test_seed(point.seed, r, config.flavors[f]);
          rec.statistic = statistics[r * flavors + f];
          for (std::size_t k = 0; k < 3; ++k) rec.reject[k] = (bits[r * flavors + f] >> k) & 1u;
          result.records.push_back(rec);
        }
      }
    }
  }

  if (!config.output.empty()) write_rows(config.output, result.rows);
  if (!config.replication_log.empty()) {
    std::ofstream log(config.replication_log, std::ios::binary);
    if (!log) fail(ErrorKind::io, "cannot write " + config.replication_log.string());
    log << "grid,flavor,replication,data_seed,test_seed,statistic,reject_z,reject_chi1,reject_kf\n";
    for (const auto& rec : result.records) {
      log << rec.grid_index << ',' << to_string(rec.flavor) << ',' << rec.replication << ',' << rec.data_seed << ','
          << rec.test_seed << ',' << format_double(rec.statistic) << ',' << rec.reject[0] << ',' << rec.reject[1]
          << ',' << rec.reject[2] << '\n';
    }
    if (!log) fail(ErrorKind::io, "write failed for " + config.replication_log.string());
    if (!keep_records) result.records.clear();
  }
  return result;
}

std::string format_rows(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultHeader) + "\n";
  for (const auto& r : rows) {
    out += r.scenario + ',' + std::to_string(r.total_dim) + ',' + std::to_string(r.d1) + ',' + std::to_string(r.d2) +
           ',' + std::to_string(r.n1) + ',' + std::to_string(r.n2) + ',' + to_string(r.flavor) + ',' +
           to_string(r.rule) + ',' + format_double(r.rejection_rate) + ',' + std::to_string(r.replications) + ',' +
           format_double(r.ci_low) + ',' + format_double(r.ci_high) + ',' + std::to_string(r.seed) + ',' +
           format_double(r.wall_time) + '\n';
  }
  return out;
}

void write_rows(const fs::path& path, const std::vector<ResultRow>& rows) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << format_rows(rows);
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Analysis of user data

namespace {

std::string describe(const HypothesisValidation& v) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "asymmetry %.3g, idempotence defect %.3g, block transpose defect %.3g", v.asymmetry,
                v.idempotence_defect, v.block_transpose_defect);
  return buf;
}

}  // namespace

BlockMatrix load_hypothesis(const std::string& source, const StudyDesign& design) {
  if (source == "A" || source == "B") return scenario_hypothesis(source.front(), design);
  Matrix m = read_matrix_csv(source);
  if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != design.total_dim()) {
    fail(ErrorKind::data, source + ": hypothesis matrix is " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", data need " + std::to_string(design.total_dim()) + "x" +
                              std::to_string(design.total_dim()));
  }
  BlockMatrix t(design.dims(), std::move(m));
  const HypothesisValidation v = validate_hypothesis(t);
  if (!v.passed) fail(ErrorKind::data, source + ": not a projection matrix (" + describe(v) + ")");
  return t;
}

HypothesisValidation validate_hypothesis_file(const fs::path& path) {
  Matrix m = read_matrix_csv(path);
  if (m.rows() != m.cols()) {
    fail(ErrorKind::data, path.string() + ": hypothesis matrix must be square, got " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()));
  }
  const auto d = static_cast<std::size_t>(m.rows());
  return validate_hypothesis(BlockMatrix({d}, std::move(m)));
}

std::string report_json(const TestReport& report, const StudyDesign& design, const std::string& data_source,
                        const std::string& hypothesis_source) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["flavor"] = to_string(report.flavor);
  j["alpha"] = report.alpha;
  j["seed"] = report.seed;
  j["q"] = report.q;
  j["statistic"] = std::isfinite(report.statistic) ? ordered_json(report.statistic) : ordered_json(nullptr);
  ordered_json traces;
  traces["family"] = to_string(report.traces.family);
  traces["t1"] = report.traces.t1;
  traces["t2"] = report.traces.t2;
  traces["t3"] = report.traces.t3 ? ordered_json(*report.traces.t3) : ordered_json(nullptr);
  traces["upsilon"] = report.traces.upsilon;
  traces["upsilon2"] = report.traces.upsilon2;
  j["traces"] = traces;
  j["fhat"] = report.fhat ? ordered_json(*report.fhat) : ordered_json(nullptr);
  j["fp_regime"] = report.regime ? ordered_json(to_string(*report.regime)) : ordered_json(nullptr);
  ordered_json decisions = ordered_json::object();
  for (const auto& d : report.decisions) {
    decisions[to_string(d.rule)] = {{"threshold", d.threshold}, {"reject", d.reject}};
  }
  j["decisions"] = decisions;
  j["degenerate"] = report.degenerate;
  j["diagnostics"] = report.diagnostics;
  j["config"] = {{"data", data_source},
                 {"hypothesis", hypothesis_source},
                 {"dims", design.dims()},
                 {"sizes", design.sizes()},
                 {"flavor", to_string(report.flavor)},
                 {"alpha", report.alpha},
                 {"seed", report.seed}};
  return j.dump(2) + "\n";
}

std::string report_text(const TestReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "flavor      %s\nalpha       %g\nseed        %llu\nQ_N         %.10g\n",
                to_string(report.flavor), report.alpha, static_cast<unsigned long long>(report.seed), report.q);
  out << buf;
  std::snprintf(buf, sizeof buf, "t1          %.10g\nt2          %.10g\n", report.traces.t1, report.traces.t2);
  out << buf;
  if (report.traces.t3) {
    std::snprintf(buf, sizeof buf, "t3          %.10g\n", *report.traces.t3);
    out << buf;
  }
  if (report.degenerate) {
    out << "W_N         undefined\n";
  } else {
    std::snprintf(buf, sizeof buf, "W_N         %.10g\n", report.statistic);
    out << buf;
  }
  if (report.fhat) {
    std::snprintf(buf, sizeof buf, "f_hat       %.6g (%s)\n", *report.fhat, to_string(*report.regime));
    out << buf;
  }
  for (const auto& d : report.decisions) {
    std::snprintf(buf, sizeof buf, "rule %-6s threshold %.6f  %s\n", to_string(d.rule), d.threshold,
                  d.reject ? "reject" : "retain");
    out << buf;
  }
  for (const auto& note : report.diagnostics) out << "note: " << note << '\n';
  return out.str();
}

Analysis analyze(const fs::path& manifest, const std::string& hypothesis, double alpha, Flavor flavor,
                 std::uint64_t seed, bool skip_header, const EstimatorConfig& config) {
  if (flavor == Flavor::Oracle) fail(ErrorKind::usage, "the oracle flavor needs known covariances");
  const GroupedSample data = ingest_data(manifest, skip_header);
  const BlockMatrix t = load_hypothesis(hypothesis, data.design());
  Analysis a;
  a.report = run_test(data, t, alpha, flavor, config, seed);
  a.json = report_json(a.report, data.design(), manifest.string(), hypothesis);
  a.text = report_text(a.report);
  return a;
}

}  // namespace splitplot
