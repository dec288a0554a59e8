#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "omreg/config.hpp"
#include "omreg/csv.hpp"
#include "omreg/errors.hpp"
#include "omreg/experiment.hpp"
#include "omreg/proxy_analysis.hpp"

using namespace omreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("omreg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.environment.type = EnvironmentType::random_mdp;
  cfg.environment.n_states = 5;
  cfg.environment.n_actions = 2;
  cfg.environment.seed = 3;
  cfg.base_policy.type = BasePolicyType::random;
  cfg.kinds = {RegKind::om_chi2, RegKind::ad_kl};
  cfg.lambdas = {0.3, 0.03};
  cfg.seeds = {0, 1};
  cfg.hyper.iterations = 4;
  cfg.hyper.warm_start = true;
  cfg.scatter_samples = 300;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Stats, MedianAndStd) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_NEAR(stddev({1.0, 2.0, 3.0, 4.0}), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(stddev({7.0}), 0.0);
}

TEST(Config, RoundTripsThroughJson) {
  auto cfg = tiny_config();
  cfg.regularization.clip_delta = 12.5;
  cfg.regularization.discriminator.hidden = {5, 7};
  cfg.ablation.lambda = 0.2;
  const auto again = parse_config(serialize_config(cfg));
  EXPECT_TRUE(again == cfg);
  EXPECT_EQ(again.regularization.discriminator.hidden, (std::vector<int>{5, 7}));
  EXPECT_EQ(serialize_config(again), serialize_config(cfg));
}

TEST(Config, ShippedTomatoConfigLoads) {
  const auto cfg = load_config(std::string(OMREG_SOURCE_DIR) + "/configs/tomato.json");
  EXPECT_EQ(cfg.environment.type, EnvironmentType::tomato);
  EXPECT_EQ(cfg.seeds.size(), 5u);
  const auto setup = build_setup(cfg);
  EXPECT_TRUE(is_hackable(setup.mdp, setup.pi_base, setup.rewards.truth, setup.rewards.proxy).hackable);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config(R"({"unknown_key": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seeds": [1, 1]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"regularization": {"kinds": ["om_tv"]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"regularization": {"lambdas": [-1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"regularization": {"trim_fraction": 0.3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"hyperparameters": {"iterations": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"environment": {"type": "random_mdp", "states": 4},
                                "regularization": {"kinds": ["state_om_kl"]}})"),
               ConfigError);
  EXPECT_THROW(load_config("/nonexistent/omreg.json"), ConfigError);
  EXPECT_THROW(load_config(std::string(OMREG_SOURCE_DIR) + "/tests/data/bad_config.json"), ConfigError);
}

TEST(Config, AblationNeedsOccupancyKind) {
  auto cfg = tiny_config();
  cfg.ablation.kind = RegKind::ad_kl;
  EXPECT_THROW(validate_ablation(cfg), ConfigError);
  cfg.ablation.kind = RegKind::om_kl;
  EXPECT_NO_THROW(validate_ablation(cfg));
}

TEST(Config, LambdaScaling) {
  auto cfg = tiny_config();
  const auto setup = build_setup(cfg);
  EXPECT_NEAR(resolve_lambda(cfg, setup, 0.5), 0.5 * setup.sigma_proxy, 1e-15);
  cfg.lambda_scale = LambdaScale::absolute;
  EXPECT_EQ(resolve_lambda(cfg, setup, 0.5), 0.5);
  EXPECT_NEAR(setup.correlation, cfg.environment.correlation, 1e-9);
}

TEST(Csv, FormatAndRoundTrip) {
  const auto dir = scratch_dir("csv");
  CsvTable t({"a", "b"});
  t.add_row({csv_cell(0.1), csv_cell(std::string("x,y"))});
  t.add_row({csv_cell(1e-300), csv_cell(7LL)});
  EXPECT_THROW(t.add_row({"1"}), InvalidArgument);
  const auto path = (dir / "t.csv").string();
  write_file_atomic(path, t.str());
  EXPECT_FALSE(fs::exists(path + ".tmp"));
  EXPECT_EQ(slurp(path).rfind(kCsvVersionLine, 0), 0u);
  const auto d = read_csv(path);
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(std::stod(d.rows[0][d.column("a")]), 0.1);
  EXPECT_EQ(d.rows[0][d.column("b")], "x,y");
  EXPECT_EQ(std::stod(d.rows[1][0]), 1e-300);
  EXPECT_THROW(d.column("zzz"), InvalidArgument);
}

TEST(Results, AggregateGroupsAndRoundTrips) {
  ResultsTable t;
  for (int s = 0; s < 3; ++s) {
    ResultRow r;
    r.method = "om_chi2";
    r.variant = "default";
    r.grid_value = 0.1;
    r.lambda = 0.05;
    r.seed = s;
    r.ok = true;
    r.final_true_return = 1.0 + s;
    r.final_proxy_return = 2.0 * s;
    t.rows.push_back(r);
  }
  ResultRow failed = t.rows.front();
  failed.seed = 9;
  failed.ok = false;
  failed.error = "non-finite gradient";
  t.rows.push_back(failed);
  const auto agg = t.aggregate();
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].n_runs, 4);
  EXPECT_EQ(agg[0].n_failed, 1);
  EXPECT_EQ(agg[0].median_true_return, 2.0);
  EXPECT_EQ(agg[0].min_true_return, 1.0);
  EXPECT_EQ(agg[0].max_true_return, 3.0);
  EXPECT_NEAR(agg[0].std_true_return, 1.0, 1e-15);

  const auto dir = scratch_dir("results");
  write_file_atomic((dir / "r.csv").string(), t.results_csv().str());
  const auto back = ResultsTable::from_csv(read_csv((dir / "r.csv").string()));
  ASSERT_EQ(back.rows.size(), 4u);
  EXPECT_EQ(back.rows[3].error, "non-finite gradient");
  EXPECT_FALSE(back.rows[3].ok);
  EXPECT_EQ(back.rows[1].final_true_return, 2.0);
}

TEST(Sweep, CellsCoverGridAndBaselines) {
  const auto cfg = tiny_config();
  const auto setup = build_setup(cfg);
  const auto cells = sweep_cells(cfg, setup);
  // 3 baselines + 2 kinds x 2 lambdas, each for 2 seeds.
  EXPECT_EQ(cells.size(), (3u + 4u) * 2u);
  int base = 0;
  for (const auto& c : cells) base += c.evaluate_base;
  EXPECT_EQ(base, 2);
}

TEST(Sweep, ResultsIndependentOfJobCount) {
  const auto cfg = tiny_config();
  const auto setup = build_setup(cfg);
  const auto cells = sweep_cells(cfg, setup);
  const auto one = run_cells(cfg, setup, cells, {1, "", false});
  const auto three = run_cells(cfg, setup, cells, {3, "", false});
  ASSERT_EQ(one.rows.size(), three.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    EXPECT_EQ(one.rows[i].method, three.rows[i].method);
    EXPECT_EQ(one.rows[i].final_true_return, three.rows[i].final_true_return);
  }
}

TEST(Sweep, WritesOutputs) {
  const auto cfg = tiny_config();
  const auto dir = scratch_dir("sweep");
  const auto table = cmd_sweep(cfg, dir.string(), {1, "", false});
  for (const char* f : {"results.csv", "aggregate.csv", "table.csv", "config.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(ResultsTable::from_csv(read_csv((dir / "results.csv").string())).rows.size(), table.rows.size());
  EXPECT_TRUE(load_config((dir / "config.json").string()) == cfg);
  const auto base = table.find(table.aggregate(), "base");
  ASSERT_NE(base, nullptr);
  EXPECT_EQ(base->std_true_return, 0.0);
}

TEST(Scatter, IdenticalRewardsLieOnTheDiagonal) {
  auto cfg = tiny_config();
  cfg.environment.correlation = 1.0;
  const auto dir = scratch_dir("scatter");
  const auto path = cmd_scatter(cfg, ScatterSource::base, dir.string());
  const auto d = read_csv(path);
  ASSERT_EQ(d.rows.size(), 300u);
  const auto setup = build_setup(cfg);
  // r = 1 makes the proxy an increasing affine map of the true reward.
  const int cp = d.column("proxy_reward"), ct = d.column("true_reward");
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : d.rows) pts.emplace_back(std::stod(row[ct]), std::stod(row[cp]));
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GE(pts[i].second, pts[i - 1].second - 1e-12);
  EXPECT_NEAR(setup.correlation, 1.0, 1e-12);
}

TEST(Policy, CsvRoundTrip) {
  const auto pi = random_policy(4, 3, 5);
  const auto dir = scratch_dir("policy");
  const auto path = (dir / "p.csv").string();
  write_file_atomic(path, policy_csv(pi).str());
  EXPECT_EQ(read_policy_csv(path, 4, 3).probs(), pi.probs());
  EXPECT_THROW(read_policy_csv(path, 5, 3), Error);
}
