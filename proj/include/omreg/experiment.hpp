#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omreg/config.hpp"
#include "omreg/csv.hpp"

namespace omreg {

/// One training run to perform.
struct CellSpec {
  /// Regularizer name, or one of the baselines "none", "true_reward", "base".
  std::string method;
  std::string variant = "default";
  double grid_value = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  RegConfig reg;
  bool train_on_truth = false;
  /// Report the base policy itself instead of training.
  bool evaluate_base = false;
};

struct ResultRow {
  std::string method;
  std::string variant;
  double grid_value = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_true_return = 0.0;
  double final_proxy_return = 0.0;
  double exact_om_chi2 = 0.0;
  double exact_om_kl = 0.0;
  double exact_ad_kl = 0.0;
};

struct AggregateRow {
  std::string method;
  std::string variant;
  double grid_value = 0.0;
  double lambda = 0.0;
  int n_runs = 0;
  int n_failed = 0;
  double median_true_return = 0.0;
  double std_true_return = 0.0;
  double min_true_return = 0.0;
  double max_true_return = 0.0;
  double median_proxy_return = 0.0;
  double std_proxy_return = 0.0;
  double median_om_chi2 = 0.0;
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  /// Groups by (method, variant, grid_value) in first-appearance order.
  std::vector<AggregateRow> aggregate() const;
  /// Highest-median row per method.
  std::vector<AggregateRow> best_per_method() const;
  /// Aggregate row for a method/variant/grid value, if present.
  const AggregateRow* find(const std::vector<AggregateRow>& agg, const std::string& method,
                           const std::string& variant = "default") const;

  CsvTable results_csv() const;
  static CsvTable aggregate_csv(const std::vector<AggregateRow>& agg);
  static ResultsTable from_csv(const CsvData& data);
};

double median(std::vector<double> v);
/// Sample standard deviation; 0 for fewer than two values.
double stddev(const std::vector<double>& v);

struct RunOptions {
  int jobs = 1;
  /// When non-empty, each run's per-iteration record is written here.
  std::string runs_dir;
  /// Progress lines go to stderr when set.
  bool verbose = false;
};

/// Runs cells on a worker pool. Row order matches cell order for any job count.
ResultsTable run_cells(const ExperimentConfig& cfg, const ExperimentSetup& setup, const std::vector<CellSpec>& cells,
                       const RunOptions& opts);

std::vector<CellSpec> sweep_cells(const ExperimentConfig& cfg, const ExperimentSetup& setup);

/// Trains every grid cell and baseline, writing results.csv, aggregate.csv,
/// table.csv and runs/*.csv under out_dir.
ResultsTable cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opts);

/// Reruns the best cell of the ablation kind with the discriminator trained
/// after the policy and with the clip scaled by 0.1 and 10.
ResultsTable cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opts);

enum class ScatterSource { base, trained, file };

/// Samples state-action pairs from the policy's exact occupancy and writes
/// (proxy, true) reward pairs to scatter_<source>.csv. A trained policy uses
/// the first grid cell and first seed, and is also saved to policy.csv.
/// Returns the path written.
std::string cmd_scatter(const ExperimentConfig& cfg, ScatterSource source, const std::string& out_dir,
                        const std::string& policy_file = "");

CsvTable policy_csv(const TabularPolicy& pi);
TabularPolicy read_policy_csv(const std::string& path, int n_states, int n_actions);

}  // namespace omreg
