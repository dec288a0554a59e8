#include <gtest/gtest.h>

#include <cmath>

#include "omreg/divergence.hpp"
#include "omreg/envs.hpp"
#include "omreg/errors.hpp"
#include "omreg/orpo.hpp"
#include "omreg/ppo.hpp"

using namespace omreg;

namespace {

double log_softmax(const Eigen::MatrixXd& logits, int s, int a) { return std::log(softmax_row(logits, s)(a)); }

// The clipped surrogate written directly, for finite differences.
double surrogate_value(const Eigen::MatrixXd& logits, const std::vector<SurrogateSample>& xs, double clip) {
  double v = 0.0;
  for (const auto& x : xs) {
    const double rho = std::exp(log_softmax(logits, x.state, x.action) - x.old_log_prob);
    v += x.weight * std::min(rho * x.advantage, std::clamp(rho, 1 - clip, 1 + clip) * x.advantage);
  }
  return v;
}

Eigen::MatrixXd fd(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd at, double h = 1e-6) {
  Eigen::MatrixXd g(at.rows(), at.cols());
  for (Eigen::Index i = 0; i < at.rows(); ++i)
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      const double x = at(i, j);
      at(i, j) = x + h;
      const double up = f(at);
      at(i, j) = x - h;
      const double down = f(at);
      at(i, j) = x;
      g(i, j) = (up - down) / (2 * h);
    }
  return g;
}

}  // namespace

TEST(PolicyParams, UniformAndRoundTrip) {
  const auto u = PolicyParams::uniform(3, 4).policy();
  EXPECT_NEAR(u(1, 2), 0.25, 1e-15);
  const auto pi = random_policy(4, 3, 8);
  EXPECT_LT((PolicyParams::from_policy(pi).policy().probs() - pi.probs()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Surrogate, ZeroAdvantageGivesZeroGradient) {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Random(3, 2);
  std::vector<SurrogateSample> xs = {{0, 1, 0.0, -0.3, 1.0}, {2, 0, 0.0, -1.1, 0.5}};
  EXPECT_EQ(surrogate_gradient(logits, xs, 0.2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Surrogate, MatchesFiniteDifferencesInsideAndOutsideClip) {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Random(4, 3);
  std::vector<SurrogateSample> xs;
  // At the old policy, slightly off it, and far enough off that clipping binds.
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) {
      const double shift = (s == 0) ? 0.0 : (s == 1 ? 0.05 : (a == 0 ? 0.7 : -0.7));
      xs.push_back({s, a, (a == 1 ? -1.0 : 1.0) * (0.3 + s), log_softmax(logits, s, a) + shift, 0.1 * (a + 1)});
    }
  const auto g = surrogate_gradient(logits, xs, 0.2);
  const auto num = fd([&](const Eigen::MatrixXd& l) { return surrogate_value(l, xs, 0.2); }, logits);
  EXPECT_LT((g - num).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Surrogate, OccupancyWeightedSamplesGiveExactPolicyGradient) {
  const auto mdp = random_mdp(5, 3, 0.85, 0.2, 21);
  const auto params = PolicyParams::from_policy(random_policy(5, 3, 22));
  const auto [truth, proxy] = random_reward_pair(mdp, params.policy(), 0.5, 23);
  const auto pi = params.policy();
  const auto vf = evaluate_policy(mdp, pi, proxy);
  const auto om = exact_occupancy(mdp, pi);
  std::vector<SurrogateSample> xs;
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a)
      xs.push_back({s, a, vf.q(s, a) - vf.v(s), std::log(pi(s, a)), om.at(s, a)});
  const auto g = surrogate_gradient(params.logits(), xs, 0.2);
  const auto exact = exact_regularized_gradient(mdp, params, proxy, pi, RegKind::none, 0.0);
  EXPECT_LT((g - exact).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Surrogate, AdPenaltyGradientMatchesDivergenceGradient) {
  const auto base = random_policy(3, 4, 31);
  const Eigen::MatrixXd logits = PolicyParams::from_policy(random_policy(3, 4, 32)).logits();
  for (auto family : {DivergenceFamily::chi2, DivergenceFamily::kl}) {
    const auto kind = family == DivergenceFamily::chi2 ? DivergenceKind::chi2() : DivergenceKind::kl();
    AdPenalty ad{&base, family, 0.7};
    std::vector<SurrogateSample> xs;
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 4; ++a) {
        const double p = softmax_row(logits, s)(a);
        xs.push_back({s, a, 0.0, std::log(p), p});
      }
    const auto g = surrogate_gradient(logits, xs, 0.2, &ad);
    const auto num = fd(
        [&](const Eigen::MatrixXd& l) {
          const auto d = per_state_divergence(PolicyParams(l).policy(), base, kind);
          return -0.7 * d.sum();
        },
        logits);
    EXPECT_LT((g - num).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Gae, HandExample) {
  Batch b;
  b.discount = 0.5;
  b.trajectories.push_back({{{0, 0, 1.0, 1, 0.0, false}, {1, 0, 2.0, 0, 0.0, false}}});
  Eigen::VectorXd v(2);
  v << 0.5, 1.0;
  // deltas: 1 + 0.5*1 - 0.5 = 1, 2 + 0.5*0.5 - 1 = 1.25
  const auto a1 = compute_gae(b, v, 1.0);
  EXPECT_DOUBLE_EQ(a1[1], 1.25);
  EXPECT_DOUBLE_EQ(a1[0], 1.0 + 0.5 * 1.25);
  const auto a0 = compute_gae(b, v, 0.0);
  EXPECT_DOUBLE_EQ(a0[0], 1.0);
  EXPECT_DOUBLE_EQ(a0[1], 1.25);
}

TEST(Gae, ZeroValueAndLambdaOneGivesReturnToGo) {
  const auto mdp = random_mdp(3, 2, 0.9, 0.0, 41);
  const RewardTable r(Eigen::MatrixXd::Random(3, 2));
  const auto batch = sample_trajectories(mdp, TabularPolicy::uniform(3, 2), r, 2, 6, 1);
  const auto adv = compute_gae(batch, Eigen::VectorXd::Zero(3), 1.0);
  std::size_t k = 0;
  for (const auto& t : batch.trajectories)
    for (std::size_t i = 0; i < t.steps.size(); ++i, ++k) {
      double ret = 0.0, disc = 1.0;
      for (std::size_t j = i; j < t.steps.size(); ++j, disc *= 0.9) ret += disc * t.steps[j].reward;
      EXPECT_NEAR(adv[k], ret, 1e-12);
    }
}

TEST(PolicyUpdate, BanditMovesTowardRewardedAction) {
  // One state, discount 0: action 2 pays 1, the others nothing.
  const auto mdp = TabularMdp::from_dense(1, 3, {1.0, 1.0, 1.0}, Eigen::VectorXd::Ones(1), 0.0);
  Eigen::MatrixXd rv = Eigen::MatrixXd::Zero(1, 3);
  rv(0, 2) = 1.0;
  const RewardTable r(rv);
  PpoHyper hyper;
  hyper.lr = 0.05;
  auto state = make_ppo_state(PolicyParams::uniform(1, 3), hyper);
  Rng rng(5);
  double prev = state.params.policy()(0, 2);
  for (int it = 0; it < 30; ++it) {
    const auto batch = sample_trajectories(mdp, state.params.policy(), r, 8, 4, 100 + it);
    policy_update(state, batch, hyper, rng);
  }
  EXPECT_GT(state.params.policy()(0, 2), prev + 0.3);
  EXPECT_NEAR(state.value(0), state.params.policy()(0, 2), 0.35);
}

TEST(PolicyUpdate, RejectsEmptyBatchAndMissingBase) {
  PpoHyper hyper;
  auto state = make_ppo_state(PolicyParams::uniform(2, 2), hyper);
  Rng rng(1);
  Batch empty;
  EXPECT_THROW(policy_update(state, empty, hyper, rng), InvalidArgument);
  const auto mdp = random_mdp(2, 2, 0.5, 0.0, 1);
  const auto batch = sample_trajectories(mdp, TabularPolicy::uniform(2, 2), RewardTable(Eigen::MatrixXd::Zero(2, 2)),
                                         1, 3, 1);
  AdPenalty ad{nullptr, DivergenceFamily::kl, 1.0};
  EXPECT_THROW(policy_update(state, batch, hyper, rng, &ad), InvalidArgument);
}

TEST(ExactGradient, MatchesFiniteDifferencesForEveryKind) {
  const auto mdp = random_mdp(4, 3, 0.8, 0.0, 51);
  const auto base = random_policy(4, 3, 52);
  const auto params = PolicyParams::from_policy(random_policy(4, 3, 53));
  const auto [truth, proxy] = random_reward_pair(mdp, base, 0.6, 54);
  for (auto kind : {RegKind::none, RegKind::om_chi2, RegKind::om_kl, RegKind::state_om_chi2, RegKind::state_om_kl,
                    RegKind::ad_chi2, RegKind::ad_kl}) {
    const auto g = exact_regularized_gradient(mdp, params, proxy, base, kind, 0.4);
    const auto num = finite_difference_gradient(
        [&](const PolicyParams& p) { return exact_regularized_objective(mdp, p, proxy, base, kind, 0.4); }, params);
    EXPECT_LT((g - num).cwiseAbs().maxCoeff(), 1e-6) << to_string(kind);
  }
}
