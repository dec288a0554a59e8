#include "omreg/orpo.hpp"

#include <cmath>
#include <deque>

#include "omreg/errors.hpp"

namespace omreg {

std::string to_string(RegKind kind) {
  switch (kind) {
    case RegKind::none: return "none";
    case RegKind::om_chi2: return "om_chi2";
    case RegKind::om_kl: return "om_kl";
    case RegKind::state_om_chi2: return "state_om_chi2";
    case RegKind::state_om_kl: return "state_om_kl";
    case RegKind::ad_chi2: return "ad_chi2";
    case RegKind::ad_kl: return "ad_kl";
  }
  return "none";
}

RegKind reg_kind_from_string(const std::string& name) {
  for (RegKind k : {RegKind::none, RegKind::om_chi2, RegKind::om_kl, RegKind::state_om_chi2, RegKind::state_om_kl,
                    RegKind::ad_chi2, RegKind::ad_kl})
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown regularization kind '" + name + "'");
}

bool is_occupancy_kind(RegKind k) {
  return k == RegKind::om_chi2 || k == RegKind::om_kl || k == RegKind::state_om_chi2 || k == RegKind::state_om_kl;
}
bool is_state_kind(RegKind k) { return k == RegKind::state_om_chi2 || k == RegKind::state_om_kl; }
bool is_ad_kind(RegKind k) { return k == RegKind::ad_chi2 || k == RegKind::ad_kl; }
bool is_chi2_kind(RegKind k) { return k == RegKind::om_chi2 || k == RegKind::state_om_chi2 || k == RegKind::ad_chi2; }

Batch augment_rewards(const Batch& batch, const Discriminator& d_hat, double chi2_hat, const RegConfig& cfg) {
  Batch out = batch;
  if (!is_occupancy_kind(cfg.kind) || cfg.lambda == 0.0) return out;
  const double delta = cfg.clip_delta;
  if (is_chi2_kind(cfg.kind)) {
    if (!(chi2_hat >= kChi2Floor)) throw InvalidArgument("augment_rewards: chi2 estimate below the floor");
    const double coef = cfg.lambda / std::sqrt(chi2_hat);
    for (auto& traj : out.trajectories)
      for (auto& st : traj.steps) {
        const double d = d_hat(st.state, st.action);
        const double term = cfg.uncentered_penalty ? std::exp(d) : std::expm1(d);
        st.reward -= coef * std::clamp(term, -delta, delta);
      }
  } else {
    for (auto& traj : out.trajectories)
      for (auto& st : traj.steps) st.reward -= cfg.lambda * std::clamp(d_hat(st.state, st.action), -delta, delta);
  }
  return out;
}

namespace {

void validate_run(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                  const RegConfig& cfg, const PpoHyper& hyper) {
  validate_compatible(mdp, rewards.proxy);
  validate_compatible(mdp, rewards.truth);
  validate_compatible(mdp, pi_base);
  if (!(cfg.lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (!(cfg.clip_delta > 0.0)) throw InvalidArgument("clip_delta must be > 0");
  if (cfg.base_pool < 0) throw InvalidArgument("base_pool must be >= 0");
  if (!(cfg.trim_fraction >= 0.0 && cfg.trim_fraction <= 0.1)) throw InvalidArgument("trim_fraction must be in [0, 0.1]");
  if (is_state_kind(cfg.kind) && !(rewards.proxy.state_only() && rewards.truth.state_only()))
    throw InvalidArgument("state occupancy regularization requires state-only rewards");
  if (hyper.iterations < 1 || hyper.trajectories_per_iter < 1 || hyper.base_trajectories_per_iter < 1)
    throw InvalidArgument("hyperparameters: iteration and batch counts must be positive");
}

IterationRecord exact_metrics(int iteration, const TabularMdp& mdp, const TrainRewards& rewards,
                              const TabularPolicy& pi, const OccupancyMeasure& base_om, const TabularPolicy& pi_base) {
  IterationRecord rec;
  rec.iteration = iteration;
  const auto d = exact_state_occupancy(mdp, pi);
  Eigen::VectorXd mu(static_cast<Eigen::Index>(mdp.n_states()) * mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) mu(static_cast<Eigen::Index>(s) * mdp.n_actions() + a) = d.at(s) * pi(s, a);
  const OccupancyMeasure om(OccupancyKind::state_action, mdp.n_states(), mdp.n_actions(), mu);
  rec.proxy_return = occupancy_expectation(om, rewards.proxy);
  rec.true_return = occupancy_expectation(om, rewards.truth);
  rec.exact_om_chi2 = om_divergence(om, base_om, DivergenceKind::chi2());
  rec.exact_om_kl = om_divergence(om, base_om, DivergenceKind::kl());
  rec.exact_ad_kl = ad_divergence(d, pi, pi_base, DivergenceKind::kl());
  return rec;
}

RunRecord train_loop(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                     const RegConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                     const IterationCallback& on_iteration) {
  validate_run(mdp, rewards, pi_base, cfg, hyper);
  const int horizon = hyper.horizon > 0 ? hyper.horizon : default_horizon(mdp.discount());
  const Rng root(seed);
  PpoState state = make_ppo_state(hyper.warm_start ? PolicyParams::from_policy(pi_base)
                                                   : PolicyParams::uniform(mdp.n_states(), mdp.n_actions()),
                                  hyper);
  const OccupancyMeasure base_om = exact_occupancy(mdp, pi_base);
  const bool uses_disc = is_occupancy_kind(cfg.kind) && cfg.lambda > 0.0;
  Discriminator disc(mdp.n_states(), mdp.n_actions(),
                     is_state_kind(cfg.kind) ? DiscriminatorInput::state : DiscriminatorInput::state_action,
                     cfg.discriminator, root.split(0xd15c).next_u64());
  AdPenalty ad_pen;
  if (is_ad_kind(cfg.kind)) {
    ad_pen.base = &pi_base;
    ad_pen.family = cfg.kind == RegKind::ad_chi2 ? DivergenceFamily::chi2 : DivergenceFamily::kl;
    ad_pen.lambda = cfg.lambda;
  }

  std::deque<SampleSet> base_batches;
  RunRecord run;
  run.rows.reserve(hyper.iterations);
  for (int it = 0; it < hyper.iterations; ++it) {
    const Rng iter_rng = root.split(static_cast<std::uint64_t>(it) + 1);
    const TabularPolicy pi = state.params.policy();
    const Batch batch_pi = sample_trajectories(mdp, pi, rewards.proxy, hyper.trajectories_per_iter, horizon,
                                               iter_rng.split(1).next_u64());
    double chi2_hat = 0.0, disc_loss = 0.0;
    Batch batch_prime = batch_pi;
    if (uses_disc) {
      const Batch batch_base = sample_trajectories(mdp, pi_base, rewards.proxy, hyper.base_trajectories_per_iter,
                                                   horizon, iter_rng.split(2).next_u64());
      const SampleSet s_pi = to_samples(batch_pi);
      base_batches.push_back(to_samples(batch_base));
      if (cfg.base_pool > 0 && static_cast<int>(base_batches.size()) > cfg.base_pool) base_batches.pop_front();
      SampleSet s_base;
      for (const auto& b : base_batches) s_base.insert(s_base.end(), b.begin(), b.end());
      if (cfg.discriminator_first || it == 0) disc_loss = disc.fit(s_pi, s_base);
      chi2_hat = std::max(estimate_chi2(disc, s_pi, cfg.trim_fraction), kChi2Floor);
      batch_prime = augment_rewards(batch_pi, disc, chi2_hat, cfg);
      if (!cfg.discriminator_first && it > 0) disc_loss = disc.fit(s_pi, s_base);
    }
    Rng update_rng = iter_rng.split(3);
    const PpoStats stats =
        policy_update(state, batch_prime, hyper, update_rng, is_ad_kind(cfg.kind) ? &ad_pen : nullptr);

    IterationRecord rec = exact_metrics(it, mdp, rewards, state.params.policy(), base_om, pi_base);
    rec.chi2_hat = chi2_hat;
    rec.discriminator_loss = disc_loss;
    rec.entropy = stats.entropy;
    run.rows.push_back(rec);
    if (on_iteration) on_iteration(rec);
  }
  run.final_policy = state.params.policy();
  run.final_true_return = run.rows.back().true_return;
  run.final_proxy_return = run.rows.back().proxy_return;
  return run;
}

}  // namespace

RunRecord orpo_train(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                     const RegConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                     const IterationCallback& on_iteration) {
  if (is_ad_kind(cfg.kind)) return ad_regularized_train(mdp, rewards, pi_base, cfg, hyper, seed, on_iteration);
  return train_loop(mdp, rewards, pi_base, cfg, hyper, seed, on_iteration);
}

RunRecord ad_regularized_train(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                               const RegConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                               const IterationCallback& on_iteration) {
  if (!is_ad_kind(cfg.kind) && cfg.kind != RegKind::none)
    throw InvalidArgument("ad_regularized_train: kind must be ad_chi2, ad_kl or none");
  if (is_ad_kind(cfg.kind) && (pi_base.probs().array() <= 0.0).any())
    throw InvalidArgument("ad_regularized_train: base policy needs full support for the per-sample estimator");
  return train_loop(mdp, rewards, pi_base, cfg, hyper, seed, on_iteration);
}

}  // namespace omreg
