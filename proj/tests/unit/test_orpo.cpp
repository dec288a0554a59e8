#include <gtest/gtest.h>

#include <cmath>

#include "omreg/divergence.hpp"
#include "omreg/envs.hpp"
#include "omreg/errors.hpp"
#include "omreg/orpo.hpp"

using namespace omreg;

namespace {

Batch one_step_batch() {
  Batch b;
  b.discount = 0.9;
  b.trajectories.push_back({{{0, 0, 1.0, 1, 0.0, false}, {1, 1, 0.5, 0, 0.0, false}}});
  return b;
}

Discriminator table_disc(double d00, double d11) {
  Discriminator d(2, 2, DiscriminatorInput::state_action);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(2, 2);
  l(0, 0) = d00;
  l(1, 1) = d11;
  d.set_logits(l);
  return d;
}

struct Problem {
  TabularMdp mdp;
  TabularPolicy base;
  TrainRewards rewards;
};

Problem small_problem(std::uint64_t seed) {
  auto mdp = random_mdp(4, 2, 0.8, 0.0, seed);
  auto base = random_policy(4, 2, seed + 1);
  auto [t, p] = random_reward_pair(mdp, base, 0.5, seed + 2);
  return {mdp, base, {p, t}};
}

PpoHyper quick_hyper(int iterations) {
  PpoHyper h;
  h.iterations = iterations;
  h.lr = 0.02;
  h.warm_start = true;
  return h;
}

}  // namespace

TEST(RegKind, StringRoundTrip) {
  for (auto k : {RegKind::none, RegKind::om_chi2, RegKind::om_kl, RegKind::state_om_chi2, RegKind::state_om_kl,
                 RegKind::ad_chi2, RegKind::ad_kl})
    EXPECT_EQ(reg_kind_from_string(to_string(k)), k);
  EXPECT_THROW(reg_kind_from_string("om_tv"), InvalidArgument);
  EXPECT_TRUE(is_state_kind(RegKind::state_om_kl));
  EXPECT_FALSE(is_occupancy_kind(RegKind::ad_chi2));
}

TEST(Augment, ZeroLambdaAndNonOccupancyKindsLeaveRewards) {
  const auto b = one_step_batch();
  const auto d = table_disc(2.0, -1.0);
  RegConfig cfg;
  cfg.kind = RegKind::om_chi2;
  cfg.lambda = 0.0;
  auto out = augment_rewards(b, d, 1.0, cfg);
  EXPECT_EQ(out.trajectories[0].steps[0].reward, 1.0);
  cfg.kind = RegKind::ad_chi2;
  cfg.lambda = 3.0;
  out = augment_rewards(b, d, 1.0, cfg);
  EXPECT_EQ(out.trajectories[0].steps[1].reward, 0.5);
}

TEST(Augment, ChiSquaredArithmeticWithClip) {
  const auto b = one_step_batch();
  const auto d = table_disc(2.0, -1.0);
  RegConfig cfg;
  cfg.kind = RegKind::om_chi2;
  cfg.lambda = 0.5;
  cfg.clip_delta = 1000.0;
  auto out = augment_rewards(b, d, 4.0, cfg);
  EXPECT_NEAR(out.trajectories[0].steps[0].reward, 1.0 - 0.25 * std::expm1(2.0), 1e-14);
  EXPECT_NEAR(out.trajectories[0].steps[1].reward, 0.5 - 0.25 * std::expm1(-1.0), 1e-14);
  cfg.clip_delta = 1.0;
  out = augment_rewards(b, d, 4.0, cfg);
  EXPECT_NEAR(out.trajectories[0].steps[0].reward, 1.0 - 0.25, 1e-14);
  cfg.uncentered_penalty = true;
  cfg.clip_delta = 1000.0;
  out = augment_rewards(b, d, 4.0, cfg);
  EXPECT_NEAR(out.trajectories[0].steps[1].reward, 0.5 - 0.25 * std::exp(-1.0), 1e-14);
  EXPECT_THROW(augment_rewards(b, d, 0.5 * kChi2Floor, cfg), InvalidArgument);
}

TEST(Augment, KlArithmeticWithClip) {
  const auto b = one_step_batch();
  const auto d = table_disc(2.0, -1.0);
  RegConfig cfg;
  cfg.kind = RegKind::om_kl;
  cfg.lambda = 0.3;
  cfg.clip_delta = 1.5;
  const auto out = augment_rewards(b, d, 0.0, cfg);
  EXPECT_NEAR(out.trajectories[0].steps[0].reward, 1.0 - 0.3 * 1.5, 1e-14);
  EXPECT_NEAR(out.trajectories[0].steps[1].reward, 0.5 + 0.3 * 1.0, 1e-14);
}

TEST(ExactObjective, ZeroLambdaIsProxyReturn) {
  const auto p = small_problem(3);
  const auto params = PolicyParams::from_policy(random_policy(4, 2, 99));
  for (auto k : {RegKind::none, RegKind::om_chi2, RegKind::om_kl, RegKind::ad_chi2, RegKind::ad_kl})
    EXPECT_NEAR(exact_regularized_objective(p.mdp, params, p.rewards.proxy, p.base, k, 0.0),
                policy_return(p.mdp, params.policy(), p.rewards.proxy), 1e-12);
}

TEST(ExactObjective, NoPenaltyAtTheBase) {
  const auto p = small_problem(4);
  const auto params = PolicyParams::from_policy(p.base, 1e-300);
  const double j = policy_return(p.mdp, p.base, p.rewards.proxy);
  for (auto k : {RegKind::om_chi2, RegKind::om_kl, RegKind::state_om_chi2, RegKind::state_om_kl, RegKind::ad_chi2,
                 RegKind::ad_kl})
    EXPECT_NEAR(exact_regularized_objective(p.mdp, params, p.rewards.proxy, p.base, k, 5.0), j, 1e-9)
        << to_string(k);
}

TEST(ExactObjective, OccupancyAndActionKlCoincideForBandits) {
  const auto c = random_mdp(5, 3, 0.0, 0.0, 61);
  const auto base = random_policy(5, 3, 62);
  const auto params = PolicyParams::from_policy(random_policy(5, 3, 63));
  const auto [t, proxy] = random_reward_pair(c, base, 0.7, 64);
  EXPECT_NEAR(exact_regularized_objective(c, params, proxy, base, RegKind::om_kl, 0.8),
              exact_regularized_objective(c, params, proxy, base, RegKind::ad_kl, 0.8), 1e-12);
  const auto g_om = exact_regularized_gradient(c, params, proxy, base, RegKind::om_kl, 0.8);
  const auto g_ad = exact_regularized_gradient(c, params, proxy, base, RegKind::ad_kl, 0.8);
  EXPECT_LT((g_om - g_ad).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExactObjective, AugmentedRewardRequiresSupport) {
  const auto p = small_problem(5);
  Eigen::MatrixXd b = p.base.probs();
  b.col(0).setConstant(1.0);
  b.col(1).setZero();
  const auto params = PolicyParams::uniform(4, 2);
  EXPECT_THROW(exact_augmented_reward(p.mdp, params, p.rewards.proxy, TabularPolicy(b), RegKind::om_chi2, 1.0),
               AbsoluteContinuityViolated);
}

TEST(ExactObjective, AscentImprovesObjective) {
  const auto p = small_problem(6);
  const auto init = PolicyParams::from_policy(p.base);
  const double before = exact_regularized_objective(p.mdp, init, p.rewards.proxy, p.base, RegKind::om_chi2, 0.1);
  const auto res = exact_objective_ascent(p.mdp, init, p.rewards.proxy, p.base, RegKind::om_chi2, 0.1, 300);
  EXPECT_GT(res.objective, before);
  EXPECT_NEAR(res.objective,
              exact_regularized_objective(p.mdp, res.params, p.rewards.proxy, p.base, RegKind::om_chi2, 0.1), 1e-12);
}

TEST(Orpo, DeterministicGivenSeed) {
  const auto p = small_problem(7);
  RegConfig cfg;
  cfg.kind = RegKind::om_chi2;
  cfg.lambda = 0.1;
  const auto a = orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(8), 42);
  const auto b = orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(8), 42);
  ASSERT_EQ(a.rows.size(), 8u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].true_return, b.rows[i].true_return);
    EXPECT_EQ(a.rows[i].chi2_hat, b.rows[i].chi2_hat);
  }
  EXPECT_EQ(a.final_policy.probs(), b.final_policy.probs());
}

TEST(Orpo, FinalReturnsDescribeFinalPolicy) {
  const auto p = small_problem(8);
  RegConfig cfg;
  cfg.kind = RegKind::om_kl;
  cfg.lambda = 0.05;
  int calls = 0;
  const auto run = orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(5), 1,
                              [&](const IterationRecord&) { ++calls; });
  EXPECT_EQ(calls, 5);
  EXPECT_NEAR(run.final_true_return, policy_return(p.mdp, run.final_policy, p.rewards.truth), 1e-12);
  EXPECT_NEAR(run.final_proxy_return, policy_return(p.mdp, run.final_policy, p.rewards.proxy), 1e-12);
}

TEST(Orpo, HugePenaltyStaysNearTheBase) {
  const auto p = small_problem(9);
  const double j_base = policy_return(p.mdp, p.base, p.rewards.truth);
  for (auto kind : {RegKind::om_chi2, RegKind::ad_kl}) {
    RegConfig cfg;
    cfg.kind = kind;
    cfg.lambda = 100.0;
    const auto run = orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(30), 3);
    const auto mu = exact_occupancy(p.mdp, run.final_policy), nu = exact_occupancy(p.mdp, p.base);
    EXPECT_LT(om_divergence(mu, nu, DivergenceKind::chi2()), 0.05) << to_string(kind);
    EXPECT_NEAR(run.final_true_return, j_base, 0.1 * std::abs(j_base) + 0.05);
  }
}

TEST(Orpo, UnregularizedImprovesProxy) {
  const auto p = small_problem(10);
  RegConfig cfg;
  const auto run = orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(60), 4);
  EXPECT_GT(run.final_proxy_return, policy_return(p.mdp, p.base, p.rewards.proxy));
}

TEST(Orpo, RejectsInvalidConfig) {
  const auto p = small_problem(11);
  RegConfig cfg;
  cfg.kind = RegKind::om_chi2;
  cfg.lambda = -1.0;
  EXPECT_THROW(orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(1), 0), InvalidArgument);
  cfg.lambda = 1.0;
  cfg.clip_delta = 0.0;
  EXPECT_THROW(orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(1), 0), InvalidArgument);
  cfg.clip_delta = 10.0;
  cfg.trim_fraction = 0.2;
  EXPECT_THROW(orpo_train(p.mdp, p.rewards, p.base, cfg, quick_hyper(1), 0), InvalidArgument);
}
