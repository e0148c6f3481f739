// SPDX-License-Identifier: Apache-2.0
//
// splitplot-cli: simulate | test | validate. Uses only the C interface.
#include "splitplot/splitplot.h"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

int fail_with(sp_status status) {
  std::cerr << "error: " << sp_last_error() << '\n';
  return static_cast<int>(status);
}

int run_simulate(const std::string& config, const std::string& output) {
  size_t rows = 0;
  const sp_status s = sp_simulate(config.c_str(), output.empty() ? nullptr : output.c_str(), &rows);
  if (s != SP_OK) return fail_with(s);
  std::cout << "wrote " << rows << " rows\n";
  return 0;
}

int run_test(const std::string& data, const std::string& hypothesis, double alpha, sp_flavor flavor,
             std::uint64_t seed, bool skip_header, const std::string& json_path) {
  sp_sample* sample = nullptr;
  sp_status s = sp_sample_load(data.c_str(), skip_header ? 1 : 0, &sample);
  if (s != SP_OK) return fail_with(s);
  sp_hypothesis* h = nullptr;
  s = sp_hypothesis_for_sample(hypothesis.c_str(), sample, &h);
  if (s != SP_OK) {
    sp_sample_free(sample);
    return fail_with(s);
  }
  sp_report* report = nullptr;
  s = sp_run_test(sample, h, alpha, flavor, seed, &report);
  sp_hypothesis_free(h);
  sp_sample_free(sample);
  if (s != SP_OK) return fail_with(s);

  std::cout << sp_report_text(report);
  int code = 0;
  if (json_path.empty()) {
    std::cout << sp_report_json(report);
  } else {
    std::ofstream out(json_path, std::ios::binary);
    out << sp_report_json(report);
    if (!out) {
      std::cerr << "error: cannot write " << json_path << '\n';
      code = SP_ERROR_DATA;
    }
  }
  if (code == 0 && sp_report_degenerate(report)) code = SP_ERROR_DEGENERATE;
  sp_report_free(report);
  return code;
}

int run_validate(const std::string& path) {
  sp_validation v{};
  const sp_status s = sp_validate_hypothesis_file(path.c_str(), &v);
  if (s != SP_OK) return fail_with(s);
  std::printf("asymmetry              %.3g\n", v.asymmetry);
  std::printf("idempotence defect     %.3g\n", v.idempotence_defect);
  std::printf("block transpose defect %.3g\n", v.block_transpose_defect);
  std::printf("rank                   %zu\n", v.rank);
  std::printf("%s\n", v.passed ? "valid projection" : "not a projection");
  return v.passed ? 0 : SP_ERROR_DATA;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-plot mean tests with unequal group dimensions"};
  app.require_subcommand(1);

  std::string config, output;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo type-I error experiment");
  simulate->add_option("--config", config, "key=value experiment file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--output", output, "CSV path, overrides the config");

  std::string data, hypothesis, flavor_name = "Bstar", json_path;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  bool skip_header = false;
  auto* test = app.add_subcommand("test", "Test one dataset");
  test->add_option("--data", data, "manifest listing one CSV per group")->required();
  test->add_option("--hypothesis", hypothesis, "A, B or a CSV matrix")->required();
  test->add_option("--alpha", alpha, "level")->check(CLI::Range(0.0, 1.0));
  test->add_option("--flavor", flavor_name, "A, Astar, B or Bstar")
      ->check(CLI::IsMember({"A", "Astar", "B", "Bstar"}));
  test->add_option("--seed", seed, "seed for subsampling and permutations");
  test->add_flag("--skip-header", skip_header, "skip the first line of each group file");
  test->add_option("--json", json_path, "write the JSON record here instead of stdout");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check that a CSV matrix is a projection");
  validate->add_option("--hypothesis", validate_path, "CSV matrix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : SP_ERROR_USAGE;
  }

  if (*simulate) return run_simulate(config, output);
  if (*test) {
    const sp_flavor flavor = flavor_name == "A"       ? SP_FLAVOR_A
                             : flavor_name == "Astar" ? SP_FLAVOR_ASTAR
                             : flavor_name == "B"     ? SP_FLAVOR_B
                                                      : SP_FLAVOR_BSTAR;
    return run_test(data, hypothesis, alpha, flavor, seed, skip_header, json_path);
  }
  return run_validate(validate_path);
}
