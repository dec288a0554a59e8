#include "omreg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "omreg/discriminator.hpp"
#include "omreg/errors.hpp"

namespace omreg {

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<AggregateRow> ResultsTable::aggregate() const {
  std::vector<AggregateRow> out;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    std::size_t g = 0;
    for (; g < out.size(); ++g)
      if (out[g].method == r.method && out[g].variant == r.variant && out[g].grid_value == r.grid_value) break;
    if (g == out.size()) {
      AggregateRow a;
      a.method = r.method;
      a.variant = r.variant;
      a.grid_value = r.grid_value;
      a.lambda = r.lambda;
      out.push_back(a);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    std::vector<double> t, p, c;
    for (const ResultRow* r : groups[g]) {
      ++out[g].n_runs;
      if (!r->ok) {
        ++out[g].n_failed;
        continue;
      }
      t.push_back(r->final_true_return);
      p.push_back(r->final_proxy_return);
      c.push_back(r->exact_om_chi2);
    }
    auto& a = out[g];
    a.median_true_return = median(t);
    a.std_true_return = stddev(t);
    a.min_true_return = t.empty() ? std::nan("") : *std::min_element(t.begin(), t.end());
    a.max_true_return = t.empty() ? std::nan("") : *std::max_element(t.begin(), t.end());
    a.median_proxy_return = median(p);
    a.std_proxy_return = stddev(p);
    a.median_om_chi2 = median(c);
  }
  return out;
}

std::vector<AggregateRow> ResultsTable::best_per_method() const {
  std::vector<AggregateRow> best;
  for (const auto& a : aggregate()) {
    if (a.variant != "default") continue;
    auto it = std::find_if(best.begin(), best.end(), [&](const AggregateRow& b) { return b.method == a.method; });
    if (it == best.end()) best.push_back(a);
    else if (std::isnan(it->median_true_return) || a.median_true_return > it->median_true_return) *it = a;
  }
  return best;
}

const AggregateRow* ResultsTable::find(const std::vector<AggregateRow>& agg, const std::string& method,
                                       const std::string& variant) const {
  for (const auto& a : agg)
    if (a.method == method && a.variant == variant) return &a;
  return nullptr;
}

CsvTable ResultsTable::results_csv() const {
  CsvTable t({"method", "variant", "lambda_coef", "lambda", "seed", "ok", "final_true_return", "final_proxy_return",
              "exact_om_chi2", "exact_om_kl", "exact_ad_kl", "error"});
  for (const auto& r : rows)
    t.add_row({csv_cell(r.method), csv_cell(r.variant), csv_cell(r.grid_value), csv_cell(r.lambda),
               std::to_string(r.seed), r.ok ? "1" : "0", csv_cell(r.final_true_return), csv_cell(r.final_proxy_return),
               csv_cell(r.exact_om_chi2), csv_cell(r.exact_om_kl), csv_cell(r.exact_ad_kl), csv_cell(r.error)});
  return t;
}

CsvTable ResultsTable::aggregate_csv(const std::vector<AggregateRow>& agg) {
  CsvTable t({"method", "variant", "lambda_coef", "lambda", "n_runs", "n_failed", "median_true_return",
              "std_true_return", "min_true_return", "max_true_return", "median_proxy_return", "std_proxy_return",
              "median_om_chi2"});
  for (const auto& a : agg)
    t.add_row({csv_cell(a.method), csv_cell(a.variant), csv_cell(a.grid_value), csv_cell(a.lambda),
               csv_cell(static_cast<long long>(a.n_runs)), csv_cell(static_cast<long long>(a.n_failed)),
               csv_cell(a.median_true_return), csv_cell(a.std_true_return), csv_cell(a.min_true_return),
               csv_cell(a.max_true_return), csv_cell(a.median_proxy_return), csv_cell(a.std_proxy_return),
               csv_cell(a.median_om_chi2)});
  return t;
}

ResultsTable ResultsTable::from_csv(const CsvData& data) {
  ResultsTable t;
  const int method = data.column("method"), variant = data.column("variant"), coef = data.column("lambda_coef"),
            lambda = data.column("lambda"), seed = data.column("seed"), ok = data.column("ok"),
            tr = data.column("final_true_return"), pr = data.column("final_proxy_return"),
            chi2 = data.column("exact_om_chi2"), kl = data.column("exact_om_kl"), ad = data.column("exact_ad_kl"),
            err = data.column("error");
  for (const auto& c : data.rows) {
    ResultRow r;
    r.method = c[method];
    r.variant = c[variant];
    r.grid_value = std::stod(c[coef]);
    r.lambda = std::stod(c[lambda]);
    r.seed = std::stoull(c[seed]);
    r.ok = c[ok] == "1";
    r.final_true_return = std::stod(c[tr]);
    r.final_proxy_return = std::stod(c[pr]);
    r.exact_om_chi2 = std::stod(c[chi2]);
    r.exact_om_kl = std::stod(c[kl]);
    r.exact_ad_kl = std::stod(c[ad]);
    r.error = c[err];
    t.rows.push_back(r);
  }
  return t;
}

namespace {

std::string run_file_name(const CellSpec& c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", c.grid_value);
  return c.method + "_" + c.variant + "_" + buf + "_seed" + std::to_string(c.seed) + ".csv";
}

CsvTable run_record_csv(const RunRecord& rec) {
  CsvTable t({"iteration", "proxy_return", "true_return", "chi2_hat", "exact_om_chi2", "exact_om_kl", "exact_ad_kl",
              "discriminator_loss", "entropy"});
  for (const auto& r : rec.rows)
    t.add_row({csv_cell(static_cast<long long>(r.iteration)), csv_cell(r.proxy_return), csv_cell(r.true_return),
               csv_cell(r.chi2_hat), csv_cell(r.exact_om_chi2), csv_cell(r.exact_om_kl), csv_cell(r.exact_ad_kl),
               csv_cell(r.discriminator_loss), csv_cell(r.entropy)});
  return t;
}

ResultRow run_one(const ExperimentConfig& cfg, const ExperimentSetup& setup, const CellSpec& cell,
                  const RunOptions& opts) {
  ResultRow row{cell.method, cell.variant, cell.grid_value, cell.lambda, cell.seed};
  try {
    TabularPolicy final_policy = setup.pi_base;
    if (!cell.evaluate_base) {
      const TrainRewards rewards =
          cell.train_on_truth ? TrainRewards{setup.rewards.truth, setup.rewards.truth} : setup.rewards;
      RunRecord rec = orpo_train(setup.mdp, rewards, setup.pi_base, cell.reg, cfg.hyper, cell.seed);
      final_policy = rec.final_policy;
      if (!opts.runs_dir.empty())
        write_file_atomic(opts.runs_dir + "/" + run_file_name(cell), run_record_csv(rec).str());
    }
    row.final_true_return = policy_return(setup.mdp, final_policy, setup.rewards.truth);
    row.final_proxy_return = policy_return(setup.mdp, final_policy, setup.rewards.proxy);
    const auto mu = exact_occupancy(setup.mdp, final_policy);
    const auto nu = exact_occupancy(setup.mdp, setup.pi_base);
    row.exact_om_chi2 = om_divergence(mu, nu, DivergenceKind::chi2());
    row.exact_om_kl = om_divergence(mu, nu, DivergenceKind::kl());
    row.exact_ad_kl = ad_divergence(setup.mdp, final_policy, setup.pi_base, DivergenceKind::kl());
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

CellSpec make_cell(const ExperimentConfig& cfg, const ExperimentSetup& setup, RegKind kind, double grid_value,
                   std::uint64_t seed) {
  CellSpec c;
  c.method = to_string(kind);
  c.grid_value = grid_value;
  c.lambda = resolve_lambda(cfg, setup, grid_value);
  c.seed = seed;
  c.reg = cfg.regularization;
  c.reg.kind = kind;
  c.reg.lambda = c.lambda;
  return c;
}

std::vector<CellSpec> baseline_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  for (auto seed : cfg.seeds) {
    CellSpec base;
    base.method = "base";
    base.seed = seed;
    base.evaluate_base = true;
    cells.push_back(base);
    CellSpec none;
    none.method = "none";
    none.seed = seed;
    none.reg = cfg.regularization;
    none.reg.kind = RegKind::none;
    none.reg.lambda = 0.0;
    cells.push_back(none);
    CellSpec truth = none;
    truth.method = "true_reward";
    truth.train_on_truth = true;
    cells.push_back(truth);
  }
  return cells;
}

void write_outputs(const ResultsTable& t, const std::string& out_dir, const std::string& aggregate_name) {
  write_file_atomic(out_dir + "/results.csv", t.results_csv().str());
  write_file_atomic(out_dir + "/" + aggregate_name, ResultsTable::aggregate_csv(t.aggregate()).str());
}

}  // namespace

ResultsTable run_cells(const ExperimentConfig& cfg, const ExperimentSetup& setup, const std::vector<CellSpec>& cells,
                       const RunOptions& opts) {
  ResultsTable table;
  table.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      table.rows[i] = run_one(cfg, setup, cells[i], opts);
      if (opts.verbose) {
        std::lock_guard<std::mutex> lock(log_mutex);
        const auto& r = table.rows[i];
        std::cerr << "[" << (i + 1) << "/" << cells.size() << "] " << r.method << " " << r.variant
                  << " c=" << r.grid_value << " seed=" << r.seed << " true=" << r.final_true_return
                  << (r.ok ? "" : " FAILED: " + r.error) << "\n";
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return table;
}

std::vector<CellSpec> sweep_cells(const ExperimentConfig& cfg, const ExperimentSetup& setup) {
  std::vector<CellSpec> cells = cfg.baselines ? baseline_cells(cfg) : std::vector<CellSpec>{};
  for (RegKind kind : cfg.kinds)
    for (double v : cfg.lambdas)
      for (auto seed : cfg.seeds) cells.push_back(make_cell(cfg, setup, kind, v, seed));
  return cells;
}

ResultsTable cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opts) {
  const ExperimentSetup setup = build_setup(cfg);
  RunOptions o = opts;
  if (o.runs_dir.empty()) o.runs_dir = out_dir + "/runs";
  ResultsTable t = run_cells(cfg, setup, sweep_cells(cfg, setup), o);
  write_outputs(t, out_dir, "aggregate.csv");
  write_file_atomic(out_dir + "/table.csv", ResultsTable::aggregate_csv(t.best_per_method()).str());
  write_file_atomic(out_dir + "/config.json", serialize_config(cfg));
  return t;
}

ResultsTable cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opts) {
  validate_ablation(cfg);
  const ExperimentSetup setup = build_setup(cfg);
  RunOptions o = opts;
  if (o.runs_dir.empty()) o.runs_dir = out_dir + "/runs";
  const RegKind kind = cfg.ablation.kind;

  ResultsTable t;
  double best = 0.0;
  if (cfg.ablation.lambda) {
    best = *cfg.ablation.lambda;
  } else {
    // Pick the grid value with the highest median true return first.
    std::vector<CellSpec> search;
    for (double v : cfg.lambdas)
      for (auto seed : cfg.seeds) search.push_back(make_cell(cfg, setup, kind, v, seed));
    t = run_cells(cfg, setup, search, o);
    const auto agg = t.aggregate();
    double best_median = -INFINITY;
    for (const auto& a : agg)
      if (a.median_true_return > best_median) {
        best_median = a.median_true_return;
        best = a.grid_value;
      }
    // Keep only the chosen cell as the default row.
    std::erase_if(t.rows, [&](const ResultRow& r) { return r.grid_value != best; });
  }

  std::vector<CellSpec> cells;
  for (auto seed : cfg.seeds) {
    if (cfg.ablation.lambda) cells.push_back(make_cell(cfg, setup, kind, best, seed));
    CellSpec after = make_cell(cfg, setup, kind, best, seed);
    after.variant = "discriminator_after";
    after.reg.discriminator_first = false;
    cells.push_back(after);
    CellSpec small = make_cell(cfg, setup, kind, best, seed);
    small.variant = "clip_x0.1";
    small.reg.clip_delta *= 0.1;
    cells.push_back(small);
    CellSpec large = make_cell(cfg, setup, kind, best, seed);
    large.variant = "clip_x10";
    large.reg.clip_delta *= 10.0;
    cells.push_back(large);
  }
  ResultsTable more = run_cells(cfg, setup, cells, o);
  t.rows.insert(t.rows.end(), more.rows.begin(), more.rows.end());
  // Default rows first, then the variants in a fixed order.
  const std::map<std::string, int> order = {
      {"default", 0}, {"discriminator_after", 1}, {"clip_x0.1", 2}, {"clip_x10", 3}};
  std::stable_sort(t.rows.begin(), t.rows.end(),
                   [&](const ResultRow& a, const ResultRow& b) { return order.at(a.variant) < order.at(b.variant); });
  write_outputs(t, out_dir, "ablation.csv");
  return t;
}

CsvTable policy_csv(const TabularPolicy& pi) {
  CsvTable t({"state", "action", "prob"});
  for (int s = 0; s < pi.n_states(); ++s)
    for (int a = 0; a < pi.n_actions(); ++a)
      t.add_row({csv_cell(static_cast<long long>(s)), csv_cell(static_cast<long long>(a)), csv_cell(pi(s, a))});
  return t;
}

TabularPolicy read_policy_csv(const std::string& path, int n_states, int n_actions) {
  const CsvData d = read_csv(path);
  const int cs = d.column("state"), ca = d.column("action"), cp = d.column("prob");
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (const auto& r : d.rows) {
    const int s = std::stoi(r[cs]), a = std::stoi(r[ca]);
    if (s < 0 || s >= n_states || a < 0 || a >= n_actions)
      throw InvalidArgument("policy file '" + path + "' does not match the environment shape");
    probs(s, a) = std::stod(r[cp]);
  }
  return TabularPolicy(probs);
}

std::string cmd_scatter(const ExperimentConfig& cfg, ScatterSource source, const std::string& out_dir,
                        const std::string& policy_file) {
  const ExperimentSetup setup = build_setup(cfg);
  TabularPolicy pi = setup.pi_base;
  std::string name = "base";
  if (source == ScatterSource::trained) {
    const CellSpec cell = make_cell(cfg, setup, cfg.kinds.front(), cfg.lambdas.front(), cfg.seeds.front());
    pi = orpo_train(setup.mdp, setup.rewards, setup.pi_base, cell.reg, cfg.hyper, cell.seed).final_policy;
    name = "trained";
    write_file_atomic(out_dir + "/policy.csv", policy_csv(pi).str());
  } else if (source == ScatterSource::file) {
    if (policy_file.empty()) throw InvalidArgument("scatter from file needs a policy path");
    pi = read_policy_csv(policy_file, setup.mdp.n_states(), setup.mdp.n_actions());
    name = "file";
  }
  const SampleSet samples =
      sample_from_occupancy(exact_occupancy(setup.mdp, pi), cfg.scatter_samples, cfg.seeds.front());
  CsvTable t({"state", "action", "proxy_reward", "true_reward"});
  for (const auto& smp : samples)
    t.add_row({csv_cell(static_cast<long long>(smp.state)), csv_cell(static_cast<long long>(smp.action)),
               csv_cell(setup.rewards.proxy(smp.state, smp.action)), csv_cell(setup.rewards.truth(smp.state, smp.action))});
  const std::string path = out_dir + "/scatter_" + name + ".csv";
  write_file_atomic(path, t.str());
  return path;
}

}  // namespace omreg
