#include <gtest/gtest.h>

#include <cmath>

#include "omreg/discriminator.hpp"
#include "omreg/divergence.hpp"
#include "omreg/envs.hpp"
#include "omreg/errors.hpp"

using namespace omreg;

namespace {

struct Pair {
  TabularMdp mdp;
  OccupancyMeasure mu, nu;
};

Pair make_pair(std::uint64_t seed, int S = 5, int A = 3) {
  auto mdp = random_mdp(S, A, 0.8, 0.0, seed);
  auto mu = exact_occupancy(mdp, random_policy(S, A, seed + 1));
  auto nu = exact_occupancy(mdp, random_policy(S, A, seed + 2));
  return {mdp, mu, nu};
}

double exact_log_ratio(const Pair& p, int s, int a) { return std::log(p.mu.at(s, a) / p.nu.at(s, a)); }

Discriminator fitted_exact(const Pair& p) {
  Discriminator d(p.mdp.n_states(), p.mdp.n_actions(), DiscriminatorInput::state_action);
  d.fit(occupancy_as_samples(p.mu), occupancy_as_samples(p.nu));
  return d;
}

}  // namespace

TEST(Discriminator, ZeroLogitsGiveTwoLogTwo) {
  const auto p = make_pair(1);
  Discriminator d(5, 3, DiscriminatorInput::state_action);
  EXPECT_NEAR(discriminator_loss(d, occupancy_as_samples(p.mu), occupancy_as_samples(p.nu)), 2 * std::log(2.0),
              1e-12);
}

TEST(Discriminator, TabularFitRecoversLogRatio) {
  const auto p = make_pair(2);
  const auto d = fitted_exact(p);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(d(s, a), exact_log_ratio(p, s, a), 1e-6);
}

TEST(Discriminator, OptimalLossIsJensenShannonForm) {
  // At the optimum the loss is 2 ln 2 - 2 JS(mu, nu).
  const auto p = make_pair(3);
  const auto d = fitted_exact(p);
  double js = 0.0;
  for (Eigen::Index i = 0; i < p.mu.weights().size(); ++i) {
    const double m = p.mu.weights()(i), n = p.nu.weights()(i), avg = 0.5 * (m + n);
    js += 0.5 * m * std::log(m / avg) + 0.5 * n * std::log(n / avg);
  }
  EXPECT_NEAR(discriminator_loss(d, occupancy_as_samples(p.mu), occupancy_as_samples(p.nu)),
              2 * std::log(2.0) - 2 * js, 1e-9);
}

TEST(Discriminator, IdenticalSamplesGiveZeroLogits) {
  const auto p = make_pair(4);
  const auto s = sample_from_occupancy(p.mu, 5000, 9);
  Discriminator d(5, 3, DiscriminatorInput::state_action);
  d.fit(s, s);
  EXPECT_LT(d.logit_table().cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Discriminator, LogitBoundIsRespected) {
  SampleSet pi = {{0, 0, 1.0}}, base = {{1, 0, 1.0}};
  DiscriminatorConfig cfg;
  cfg.logit_bound = 3.0;
  Discriminator d(2, 1, DiscriminatorInput::state_action, cfg);
  d.fit(pi, base);
  EXPECT_DOUBLE_EQ(d(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(d(1, 0), -3.0);
}

TEST(Discriminator, StateInputIgnoresAction) {
  const auto p = make_pair(5);
  Discriminator d(5, 3, DiscriminatorInput::state);
  d.fit(occupancy_as_samples(p.mu), occupancy_as_samples(p.nu));
  const auto mu_s = p.mu.state_marginal(), nu_s = p.nu.state_marginal();
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(d(s, a), std::log(mu_s.at(s) / nu_s.at(s)), 1e-6);
  EXPECT_EQ(d.logit_table().cols(), 1);
}

TEST(Discriminator, SetLogitsShapeChecks) {
  Discriminator d(3, 2, DiscriminatorInput::state_action);
  EXPECT_THROW(d.set_logits(Eigen::MatrixXd::Zero(3, 3)), InvalidArgument);
  DiscriminatorConfig ff;
  ff.mode = DiscriminatorMode::feedforward;
  ff.hidden = {8};
  Discriminator net(3, 2, DiscriminatorInput::state_action, ff);
  EXPECT_THROW(net.set_logits(Eigen::MatrixXd::Zero(3, 2)), InvalidArgument);
  EXPECT_THROW(d.fit({}, {{0, 0, 1.0}}), InvalidArgument);
}

TEST(Discriminator, FeedforwardLearnsDirectionOfRatio) {
  const auto p = make_pair(6, 4, 2);
  DiscriminatorConfig ff;
  ff.mode = DiscriminatorMode::feedforward;
  ff.hidden = {16};
  ff.lr = 0.02;
  ff.epochs = 300;
  Discriminator d(4, 2, DiscriminatorInput::state_action, ff, 7);
  const double loss = d.fit(occupancy_as_samples(p.mu), occupancy_as_samples(p.nu));
  const double optimum =
      discriminator_loss(fitted_exact(p), occupancy_as_samples(p.mu), occupancy_as_samples(p.nu));
  EXPECT_LT(loss, optimum + 1e-3);
}

TEST(Samples, DiscountWeights) {
  Batch b;
  b.discount = 0.5;
  b.trajectories.push_back({{{0, 1, 0.0, 1, 0.0, false}, {1, 0, 0.0, 0, 0.0, false}, {0, 0, 0.0, 0, 0.0, true}}});
  const auto w = to_samples(b);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].weight, 1.0);
  EXPECT_EQ(w[1].weight, 0.5);
  EXPECT_EQ(w[2].weight, 0.25);
  EXPECT_EQ(w[1].state, 1);
  for (const auto& x : to_samples(b, false)) EXPECT_EQ(x.weight, 1.0);
}

TEST(Samples, OccupancyDrawsMatchFrequencies) {
  const auto p = make_pair(7);
  const int n = 40000;
  const auto s = sample_from_occupancy(p.mu, n, 3);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(p.mu.weights().size());
  for (const auto& x : s) counts(x.state * 3 + x.action) += 1.0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    const double q = p.mu.weights()(i), se = std::sqrt(q * (1 - q) / n);
    EXPECT_NEAR(counts(i) / n, q, 4 * se + 1e-12);
  }
}

TEST(Chi2Estimate, ExactLogitsGiveExactChi2) {
  const auto p = make_pair(8);
  const auto d = fitted_exact(p);
  EXPECT_NEAR(estimate_chi2(d, occupancy_as_samples(p.mu), 0.0), om_divergence(p.mu, p.nu, DivergenceKind::chi2()),
              1e-6);
}

TEST(Chi2Estimate, MonteCarloWithinThreeStandardErrors) {
  const auto p = make_pair(9);
  const auto d = fitted_exact(p);
  const double chi2 = om_divergence(p.mu, p.nu, DivergenceKind::chi2());
  // Variance of (mu/nu - 1) under mu.
  double second = 0.0;
  for (Eigen::Index i = 0; i < p.mu.weights().size(); ++i) {
    const double ratio = p.mu.weights()(i) / p.nu.weights()(i);
    second += p.mu.weights()(i) * (ratio - 1) * (ratio - 1);
  }
  const int n = 10000;
  const double se = std::sqrt((second - chi2 * chi2) / n);
  EXPECT_NEAR(estimate_chi2(d, sample_from_occupancy(p.mu, n, 4), 0.0), chi2, 3 * se);
}

TEST(Chi2Estimate, TrimmingDropsOutlier) {
  Discriminator d(2, 1, DiscriminatorInput::state_action);
  Eigen::MatrixXd logits(2, 1);
  logits << 0.0, 10.0;
  d.set_logits(logits);
  SampleSet s(99, {0, 0, 1.0});
  s.push_back({1, 0, 1.0});
  EXPECT_NEAR(estimate_chi2(d, s, 0.0), std::expm1(10.0) / 100.0, 1e-9);
  EXPECT_NEAR(estimate_chi2(d, s, 0.01), 0.0, 1e-12);
  EXPECT_THROW(estimate_chi2(d, s, 0.5), InvalidArgument);
}

TEST(Chi2Estimate, ErrorShrinksWithSampleSize) {
  const auto p = make_pair(10);
  const double chi2 = om_divergence(p.mu, p.nu, DivergenceKind::chi2());
  auto rms_error = [&](int n) {
    double acc = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      Discriminator d(5, 3, DiscriminatorInput::state_action);
      const auto a = sample_from_occupancy(p.mu, n, 100 + rep), b = sample_from_occupancy(p.nu, n, 200 + rep);
      d.fit(a, b);
      acc += std::pow(estimate_chi2(d, a, 0.0) - chi2, 2);
    }
    return std::sqrt(acc / 20);
  };
  // Sixteen times the data should cut the error roughly fourfold.
  const double small = rms_error(1000), large = rms_error(16000);
  EXPECT_LT(large, small / 2.0);
}
