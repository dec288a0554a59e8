// Command-line front end: verify, sweep, scatter, ablate.
//
// Exit codes: 0 success, 1 a check or run failed, 2 bad configuration or usage.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "omreg/config.hpp"
#include "omreg/csv.hpp"
#include "omreg/errors.hpp"
#include "omreg/experiment.hpp"
#include "omreg/suites.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

std::string resolve_out(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("OMREG_OUT"); env && *env) return env;
  return from_config.empty() ? "omreg_out" : from_config;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw omreg::ConfigError("--seeds expects a comma-separated list of integers, got '" + text + "'");
    }
  }
  return seeds;
}

omreg::ExperimentConfig load_with_overrides(const std::string& path, const std::string& seeds) {
  omreg::ExperimentConfig cfg = omreg::load_config(path);
  if (!seeds.empty()) {
    cfg.seeds = parse_seeds(seeds);
    omreg::validate_config(cfg);
  }
  return cfg;
}

void print_table(const std::vector<omreg::AggregateRow>& agg) {
  std::printf("%-16s %-20s %10s %8s %14s %12s\n", "method", "variant", "lambda_coef", "runs", "median_true", "std_true");
  for (const auto& a : agg)
    std::printf("%-16s %-20s %10.4g %8d %14.6g %12.4g\n", a.method.c_str(), a.variant.c_str(), a.grid_value, a.n_runs,
                a.median_true_return, a.std_true_return);
}

int count_failed(const omreg::ResultsTable& t) {
  int n = 0;
  for (const auto& r : t.rows) n += r.ok ? 0 : 1;
  if (n) std::cerr << n << " run(s) failed; see the error column of results.csv\n";
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupancy-regularized policy optimization experiments"};
  app.require_subcommand(1);

  std::string out, config_path, seeds, suite = "all", source = "base", policy_file;
  int jobs = 1;
  bool inject_bug = false, quiet = false;

  auto* verify = app.add_subcommand("verify", "Run the exact property suites");
  verify->add_option("--suite", suite, "Suite to run")
      ->check(CLI::IsMember(omreg::suite_names()));
  verify->add_flag("--inject-bug", inject_bug, "Negative control: flip the sign of the chi-squared term");
  verify->add_option("--out", out, "Directory for verify_report.jsonl");

  auto* sweep = app.add_subcommand("sweep", "Train every grid cell and baseline");
  auto* ablate = app.add_subcommand("ablate", "Rerun the best cell with ablation variants");
  auto* scatter = app.add_subcommand("scatter", "Emit (proxy, true) reward samples for a policy");
  for (auto* cmd : {sweep, ablate, scatter}) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--out", out, "Output directory (default: $OMREG_OUT, then the config's output_dir)");
    cmd->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");
  }
  for (auto* cmd : {sweep, ablate}) {
    cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--quiet", quiet, "No per-run progress lines");
  }
  scatter->add_option("--policy", source, "Policy source")->check(CLI::IsMember({"base", "trained", "file"}));
  scatter->add_option("--policy-file", policy_file, "policy.csv for --policy file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*verify) {
      omreg::SuiteOptions opts;
      opts.inject_bug = inject_bug;
      const omreg::SuiteReport rep = omreg::run_suite(suite, opts);
      const std::string dir = resolve_out(out, "");
      omreg::write_file_atomic(dir + "/verify_report.jsonl", rep.json_lines());
      for (const auto& c : rep.checks)
        if (!c.passed) std::cout << "FAIL " << c.suite << "/" << c.name << " " << c.detail << "\n";
      std::cout << suite << ": " << rep.checks.size() - rep.failures() << "/" << rep.checks.size()
                << " checks passed\n";
      return rep.all_passed() ? kExitOk : kExitFailed;
    }

    const omreg::ExperimentConfig cfg = load_with_overrides(config_path, seeds);
    const std::string dir = resolve_out(out, cfg.output_dir);
    omreg::RunOptions opts;
    opts.jobs = jobs;
    opts.verbose = !quiet;

    if (*sweep) {
      const auto t = omreg::cmd_sweep(cfg, dir, opts);
      print_table(t.best_per_method());
      std::cout << "wrote " << dir << "/{results,aggregate,table}.csv\n";
      return count_failed(t) ? kExitFailed : kExitOk;
    }
    if (*ablate) {
      const auto t = omreg::cmd_ablate(cfg, dir, opts);
      print_table(t.aggregate());
      std::cout << "wrote " << dir << "/ablation.csv\n";
      return count_failed(t) ? kExitFailed : kExitOk;
    }
    if (*scatter) {
      const auto src = source == "base"      ? omreg::ScatterSource::base
                       : source == "trained" ? omreg::ScatterSource::trained
                                             : omreg::ScatterSource::file;
      std::cout << "wrote " << omreg::cmd_scatter(cfg, src, dir, policy_file) << "\n";
      return kExitOk;
    }
  } catch (const omreg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitOk;
}
