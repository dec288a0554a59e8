#include "omreg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "omreg/errors.hpp"
#include "omreg/proxy_analysis.hpp"

namespace omreg {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

RegKind parse_kind(const std::string& s, const std::string& where) {
  try {
    return reg_kind_from_string(s);
  } catch (const Error&) {
    throw ConfigError(where + ": unknown regularization kind '" + s + "'");
  }
}

void read_grid(Section& sec, GridworldSpec& g) {
  sec.read("layout", g.layout);
  sec.read("dry_steps", g.dry_steps);
  sec.read("slip", g.slip);
  sec.read("discount", g.discount);
  sec.read("reset_prob", g.reset_prob);
  sec.read("sprinkler_trap", g.sprinkler_trap);
  sec.read("max_states", g.max_states);
}

void read_environment(Section sec, EnvironmentConfig& e) {
  std::string type = "tomato";
  sec.read("type", type);
  if (type == "tomato") {
    e.type = EnvironmentType::tomato;
    read_grid(sec, e.grid);
  } else if (type == "random_mdp") {
    e.type = EnvironmentType::random_mdp;
    sec.read("states", e.n_states);
    sec.read("actions", e.n_actions);
    sec.read("discount", e.discount);
    sec.read("sparsity", e.sparsity);
    sec.read("correlation", e.correlation);
    sec.read("seed", e.seed);
  } else {
    throw ConfigError(sec.path() + ".type: expected 'tomato' or 'random_mdp', got '" + type + "'");
  }
  sec.finish();
}

void read_base(Section sec, BasePolicyConfig& b) {
  std::string type = "epsilon_optimal";
  sec.read("type", type);
  if (type == "epsilon_optimal") b.type = BasePolicyType::epsilon_optimal;
  else if (type == "random") b.type = BasePolicyType::random;
  else throw ConfigError(sec.path() + ".type: expected 'epsilon_optimal' or 'random'");
  sec.read("epsilon", b.epsilon);
  sec.read("seed", b.seed);
  sec.finish();
}

void read_discriminator(Section sec, DiscriminatorConfig& d) {
  std::string mode = d.mode == DiscriminatorMode::tabular ? "tabular" : "feedforward";
  sec.read("mode", mode);
  if (mode == "tabular") d.mode = DiscriminatorMode::tabular;
  else if (mode == "feedforward") d.mode = DiscriminatorMode::feedforward;
  else throw ConfigError(sec.path() + ".mode: expected 'tabular' or 'feedforward'");
  sec.read("logit_bound", d.logit_bound);
  sec.read("max_iters", d.max_iters);
  sec.read("tol", d.tol);
  sec.read("l2", d.l2);
  sec.read("hidden", d.hidden);
  sec.read("lr", d.lr);
  sec.read("epochs", d.epochs);
  sec.read("minibatch", d.minibatch);
  sec.finish();
}

void read_regularization(Section sec, ExperimentConfig& cfg) {
  std::vector<std::string> kinds;
  sec.read("kinds", kinds);
  if (sec.has("kinds")) {
    cfg.kinds.clear();
    for (const auto& k : kinds) cfg.kinds.push_back(parse_kind(k, sec.path() + ".kinds"));
  }
  sec.read("lambdas", cfg.lambdas);
  std::string scale = cfg.lambda_scale == LambdaScale::absolute ? "absolute" : "sigma_proxy";
  sec.read("lambda_scale", scale);
  if (scale == "absolute") cfg.lambda_scale = LambdaScale::absolute;
  else if (scale == "sigma_proxy") cfg.lambda_scale = LambdaScale::sigma_proxy;
  else throw ConfigError(sec.path() + ".lambda_scale: expected 'absolute' or 'sigma_proxy'");
  RegConfig& r = cfg.regularization;
  sec.read("clip_delta", r.clip_delta);
  sec.read("trim_fraction", r.trim_fraction);
  sec.read("discriminator_first", r.discriminator_first);
  sec.read("uncentered_penalty", r.uncentered_penalty);
  sec.read("base_pool", r.base_pool);
  if (sec.has("discriminator")) read_discriminator(sec.child("discriminator"), r.discriminator);
  sec.finish();
}

void read_hyper(Section sec, PpoHyper& h) {
  sec.read("iterations", h.iterations);
  sec.read("trajectories_per_iter", h.trajectories_per_iter);
  sec.read("base_trajectories_per_iter", h.base_trajectories_per_iter);
  sec.read("horizon", h.horizon);
  sec.read("minibatch", h.minibatch);
  sec.read("epochs", h.epochs);
  sec.read("lr", h.lr);
  sec.read("grad_clip", h.grad_clip);
  sec.read("gae_lambda", h.gae_lambda);
  sec.read("entropy_coef", h.entropy_coef);
  sec.read("clip_param", h.clip_param);
  sec.read("use_kl_penalty", h.use_kl_penalty);
  sec.read("kl_target", h.kl_target);
  sec.read("kl_coeff_init", h.kl_coeff_init);
  sec.read("value_lr", h.value_lr);
  sec.read("vf_clip", h.vf_clip);
  sec.read("warm_start", h.warm_start);
  sec.finish();
}

void read_ablation(Section sec, AblationCell& a) {
  std::string kind = to_string(a.kind);
  sec.read("kind", kind);
  a.kind = parse_kind(kind, sec.path() + ".kind");
  if (sec.has("lambda")) {
    double v = 0.0;
    sec.read("lambda", v);
    a.lambda = v;
  }
  sec.finish();
}

json discriminator_json(const DiscriminatorConfig& d) {
  return {{"mode", d.mode == DiscriminatorMode::tabular ? "tabular" : "feedforward"},
          {"logit_bound", d.logit_bound},
          {"max_iters", d.max_iters},
          {"tol", d.tol},
          {"l2", d.l2},
          {"hidden", d.hidden},
          {"lr", d.lr},
          {"epochs", d.epochs},
          {"minibatch", d.minibatch}};
}

json to_json(const ExperimentConfig& cfg) {
  json env;
  const auto& e = cfg.environment;
  if (e.type == EnvironmentType::tomato) {
    env = {{"type", "tomato"},           {"layout", e.grid.layout},         {"dry_steps", e.grid.dry_steps},
           {"slip", e.grid.slip},         {"discount", e.grid.discount},     {"reset_prob", e.grid.reset_prob},
           {"sprinkler_trap", e.grid.sprinkler_trap}, {"max_states", e.grid.max_states}};
  } else {
    env = {{"type", "random_mdp"},   {"states", e.n_states},     {"actions", e.n_actions},
           {"discount", e.discount}, {"sparsity", e.sparsity},   {"correlation", e.correlation},
           {"seed", e.seed}};
  }
  json kinds = json::array();
  for (RegKind k : cfg.kinds) kinds.push_back(to_string(k));
  const auto& r = cfg.regularization;
  const auto& h = cfg.hyper;
  json ablation = {{"kind", to_string(cfg.ablation.kind)}};
  if (cfg.ablation.lambda) ablation["lambda"] = *cfg.ablation.lambda;
  return {
      {"name", cfg.name},
      {"environment", env},
      {"base_policy",
       {{"type", cfg.base_policy.type == BasePolicyType::epsilon_optimal ? "epsilon_optimal" : "random"},
        {"epsilon", cfg.base_policy.epsilon},
        {"seed", cfg.base_policy.seed}}},
      {"regularization",
       {{"kinds", kinds},
        {"lambdas", cfg.lambdas},
        {"lambda_scale", cfg.lambda_scale == LambdaScale::absolute ? "absolute" : "sigma_proxy"},
        {"clip_delta", r.clip_delta},
        {"trim_fraction", r.trim_fraction},
        {"discriminator_first", r.discriminator_first},
        {"uncentered_penalty", r.uncentered_penalty},
        {"base_pool", r.base_pool},
        {"discriminator", discriminator_json(r.discriminator)}}},
      {"seeds", cfg.seeds},
      {"hyperparameters",
       {{"iterations", h.iterations},
        {"trajectories_per_iter", h.trajectories_per_iter},
        {"base_trajectories_per_iter", h.base_trajectories_per_iter},
        {"horizon", h.horizon},
        {"minibatch", h.minibatch},
        {"epochs", h.epochs},
        {"lr", h.lr},
        {"grad_clip", h.grad_clip},
        {"gae_lambda", h.gae_lambda},
        {"entropy_coef", h.entropy_coef},
        {"clip_param", h.clip_param},
        {"use_kl_penalty", h.use_kl_penalty},
        {"kl_target", h.kl_target},
        {"kl_coeff_init", h.kl_coeff_init},
        {"value_lr", h.value_lr},
        {"vf_clip", h.vf_clip},
        {"warm_start", h.warm_start}}},
      {"baselines", cfg.baselines},
      {"ablation", ablation},
      {"scatter_samples", cfg.scatter_samples},
      {"output_dir", cfg.output_dir},
  };
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section root(j, "config");
  root.read("name", cfg.name);
  if (root.has("environment")) read_environment(root.child("environment"), cfg.environment);
  if (root.has("base_policy")) read_base(root.child("base_policy"), cfg.base_policy);
  if (root.has("regularization")) read_regularization(root.child("regularization"), cfg);
  root.read("seeds", cfg.seeds);
  if (root.has("hyperparameters")) read_hyper(root.child("hyperparameters"), cfg.hyper);
  root.read("baselines", cfg.baselines);
  if (root.has("ablation")) read_ablation(root.child("ablation"), cfg.ablation);
  root.read("scatter_samples", cfg.scatter_samples);
  root.read("output_dir", cfg.output_dir);
  root.finish();
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

void validate_config(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.kinds.empty()) fail("regularization.kinds must not be empty");
  if (cfg.lambdas.empty()) fail("regularization.lambdas must not be empty");
  for (double l : cfg.lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) fail("regularization.lambdas must be finite and >= 0");
  if (cfg.seeds.empty()) fail("seeds must not be empty");
  {
    auto sorted = cfg.seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("seeds must be distinct");
  }
  const auto& r = cfg.regularization;
  if (!(r.clip_delta > 0.0)) fail("regularization.clip_delta must be > 0");
  if (r.base_pool < 0) fail("regularization.base_pool must be >= 0");
  if (!(r.trim_fraction >= 0.0 && r.trim_fraction <= 0.1)) fail("regularization.trim_fraction must be in [0, 0.1]");
  const auto& h = cfg.hyper;
  if (h.iterations <= 0 || h.trajectories_per_iter <= 0 || h.base_trajectories_per_iter <= 0 || h.minibatch <= 0 ||
      h.epochs <= 0 || h.horizon < 0)
    fail("hyperparameters: counts must be positive");
  if (!(h.lr > 0.0) || !(h.clip_param > 0.0) || !(h.grad_clip > 0.0)) fail("hyperparameters: rates must be > 0");
  if (!(h.gae_lambda >= 0.0 && h.gae_lambda <= 1.0)) fail("hyperparameters.gae_lambda must be in [0, 1]");
  if (cfg.scatter_samples <= 0) fail("scatter_samples must be positive");
  const auto& b = cfg.base_policy;
  if (!(b.epsilon >= 0.0 && b.epsilon <= 1.0)) fail("base_policy.epsilon must be in [0, 1]");

  const auto& e = cfg.environment;
  bool state_only_rewards = false;
  if (e.type == EnvironmentType::tomato) {
    try {
      validate_gridworld(e.grid);
    } catch (const Error& err) {
      fail(std::string("environment: ") + err.what());
    }
    state_only_rewards = true;
  } else {
    if (e.n_states < 1 || e.n_actions < 1) fail("environment: states and actions must be positive");
    if (!(e.discount >= 0.0 && e.discount < 1.0)) fail("environment.discount must be in [0, 1)");
    if (!(e.sparsity >= 0.0 && e.sparsity < 1.0)) fail("environment.sparsity must be in [0, 1)");
    if (!(e.correlation > 0.0 && e.correlation <= 1.0)) fail("environment.correlation must be in (0, 1]");
  }
  for (RegKind k : cfg.kinds) {
    if (is_state_kind(k) && !state_only_rewards)
      fail("regularization kind '" + to_string(k) + "' needs state-only rewards, which this environment lacks");
    if (is_ad_kind(k) && b.type == BasePolicyType::epsilon_optimal && b.epsilon <= 0.0)
      fail("action-distribution kinds need a base policy with full support (epsilon > 0)");
  }
}

void validate_ablation(const ExperimentConfig& cfg) {
  const RegKind k = cfg.ablation.kind;
  if (k == RegKind::none) throw ConfigError("ablation.kind must name a regularizer, not 'none'");
  if (!is_occupancy_kind(k)) throw ConfigError("ablation.kind must be an occupancy-measure kind");
  if (is_state_kind(k) && cfg.environment.type != EnvironmentType::tomato)
    throw ConfigError("ablation.kind needs state-only rewards");
  if (cfg.ablation.lambda && !(*cfg.ablation.lambda >= 0.0)) throw ConfigError("ablation.lambda must be >= 0");
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  const auto& e = cfg.environment;
  const bool tomato = e.type == EnvironmentType::tomato;
  std::optional<TomatoWorld> world;
  if (tomato) world = tomato_gridworld(e.grid);
  TabularMdp mdp = tomato ? world->mdp : random_mdp(e.n_states, e.n_actions, e.discount, e.sparsity, e.seed);
  const int S = mdp.n_states(), A = mdp.n_actions();

  const bool random_base = cfg.base_policy.type == BasePolicyType::random;
  TabularPolicy pi_base = random_base ? random_policy(S, A, cfg.base_policy.seed) : TabularPolicy::uniform(S, A);
  TrainRewards rewards = [&]() -> TrainRewards {
    if (tomato) return {world->r_proxy, world->r_true};
    // With an epsilon-optimal base the pair is calibrated against the uniform
    // policy, since the base itself depends on the true reward.
    auto [t, p] = random_reward_pair(mdp, pi_base, e.correlation, splitmix64(e.seed + 1));
    return {p, t};
  }();
  if (!random_base) pi_base = base_policy_for(mdp, rewards.truth, cfg.base_policy.epsilon);

  const ProxyReport rep = proxy_correlation(mdp, pi_base, rewards.truth, rewards.proxy);
  return ExperimentSetup{std::move(mdp), std::move(rewards), std::move(pi_base), rep.sigma_proxy, rep.sigma_true,
                         rep.r};
}

double resolve_lambda(const ExperimentConfig& cfg, const ExperimentSetup& setup, double grid_value) {
  return cfg.lambda_scale == LambdaScale::sigma_proxy ? grid_value * setup.sigma_proxy : grid_value;
}

}  // namespace omreg
