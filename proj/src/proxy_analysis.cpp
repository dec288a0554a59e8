#include "omreg/proxy_analysis.hpp"

#include <cmath>

#include "omreg/divergence.hpp"
#include "omreg/errors.hpp"

namespace omreg {

namespace {
constexpr double kSigmaFloor = 1e-12;

void require_positive_r(const ProxyReport& report) {
  if (!(report.r > 0.0))
    throw InvalidArgument("bound is only defined for a positively correlated proxy (r > 0)");
}
}  // namespace

ProxyReport proxy_correlation(const OccupancyMeasure& base_om, const RewardTable& r_true,
                              const RewardTable& r_proxy) {
  const bool per_state = base_om.kind() == OccupancyKind::state;
  if (per_state && !(r_true.state_only() && r_proxy.state_only()))
    throw InvalidArgument("proxy_correlation: state occupancy requires state-only rewards");
  const int S = base_om.n_states();
  const int A = per_state ? 1 : base_om.n_actions();

  auto weight = [&](int s, int a) { return per_state ? base_om.at(s) : base_om.at(s, a); };
  double jt = 0.0, jp = 0.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      jt += weight(s, a) * r_true(s, a);
      jp += weight(s, a) * r_proxy(s, a);
    }
  double vt = 0.0, vp = 0.0, cov = 0.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double w = weight(s, a);
      const double dt = r_true(s, a) - jt, dp = r_proxy(s, a) - jp;
      vt += w * dt * dt;
      vp += w * dp * dp;
      cov += w * dt * dp;
    }
  ProxyReport rep;
  rep.sigma_true = std::sqrt(vt);
  rep.sigma_proxy = std::sqrt(vp);
  rep.j_base_true = jt;
  rep.j_base_proxy = jp;
  if (rep.sigma_true < kSigmaFloor || rep.sigma_proxy < kSigmaFloor)
    throw DegenerateReward("proxy_correlation: reward has zero variance under the base occupancy");
  rep.r = cov / (rep.sigma_true * rep.sigma_proxy);
  rep.is_correlated_proxy = rep.r > 0.0;
  return rep;
}

ProxyReport proxy_correlation(const TabularMdp& mdp, const TabularPolicy& pi_base, const RewardTable& r_true,
                              const RewardTable& r_proxy) {
  validate_compatible(mdp, r_true);
  validate_compatible(mdp, r_proxy);
  return proxy_correlation(exact_occupancy(mdp, pi_base), r_true, r_proxy);
}

bool hacking_verdict(const TabularMdp& mdp, const TabularPolicy& pi_base, const TabularPolicy& pi,
                     const RewardTable& r_true) {
  return policy_return(mdp, pi, r_true) < policy_return(mdp, pi_base, r_true);
}

HackabilityResult is_hackable(const TabularMdp& mdp, const TabularPolicy& pi_base, const RewardTable& r_true,
                              const RewardTable& r_proxy) {
  const auto opt = policy_iteration(mdp, r_proxy);
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double tol = 1e-9 * (1.0 + opt.values.q.cwiseAbs().maxCoeff());
  std::vector<bool> allowed(static_cast<std::size_t>(S) * A);
  for (int s = 0; s < S; ++s) {
    const double best = opt.values.q.row(s).maxCoeff();
    for (int a = 0; a < A; ++a) allowed[static_cast<std::size_t>(s) * A + a] = opt.values.q(s, a) >= best - tol;
  }
  // Minimizing the true return over proxy-optimal actions is itself an MDP.
  const RewardTable negated(-r_true.values(), r_true.state_only());
  const auto worst = policy_iteration(mdp, negated, allowed);
  HackabilityResult out;
  out.worst_optimal_policy = worst.policy;
  out.worst_optimal_true_return = policy_return(mdp, worst.policy, r_true);
  out.base_true_return = policy_return(mdp, pi_base, r_true);
  out.hackable = out.worst_optimal_true_return < out.base_true_return;
  return out;
}

BoundReport true_reward_lower_bound(const OccupancyMeasure& om_pi, const OccupancyMeasure& om_base,
                                    const RewardTable& r_proxy, const ProxyReport& report) {
  require_positive_r(report);
  const double chi2 = om_divergence(om_pi, om_base, DivergenceKind::chi2());
  const double r = report.r;
  const double s = std::sqrt(std::max(0.0, 1.0 - r * r));
  BoundReport b;
  b.chi2_term = chi2;
  b.proxy_gain_normalized = (occupancy_expectation(om_pi, r_proxy) - report.j_base_proxy) / report.sigma_proxy;
  b.lower_bound_L = (b.proxy_gain_normalized - std::sqrt(s * s * chi2)) / r;
  b.cap = (1.0 - s) / r * std::sqrt(chi2);
  return b;
}

BoundReport true_reward_lower_bound(const TabularMdp& mdp, const TabularPolicy& pi_base, const TabularPolicy& pi,
                                    const RewardTable& r_proxy, const ProxyReport& report) {
  require_positive_r(report);
  validate_compatible(mdp, r_proxy);
  return true_reward_lower_bound(exact_occupancy(mdp, pi), exact_occupancy(mdp, pi_base), r_proxy, report);
}

double base_suboptimality(double max_true_return, const ProxyReport& report) {
  return (max_true_return - report.j_base_true) / report.sigma_true;
}

double suboptimality_bound(double max_true_return, const ProxyReport& report, const BoundReport& bound,
                           double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("suboptimality_bound: epsilon must be >= 0");
  if (epsilon < base_suboptimality(max_true_return, report) - 1e-12)
    throw InvalidArgument("suboptimality_bound: base policy is not epsilon-optimal for this epsilon");
  return epsilon - bound.lower_bound_L;
}

double learned_reward_correlation_floor(double mse, double sigma_true) {
  if (!(sigma_true > 0.0)) throw InvalidArgument("learned_reward_correlation_floor: sigma_true must be > 0");
  if (mse < 0.0) throw InvalidArgument("learned_reward_correlation_floor: mse must be >= 0");
  return 1.0 - mse / (sigma_true * sigma_true);
}

double recommended_lambda(double sigma_proxy, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw InvalidArgument("recommended_lambda: r must be in (0, 1]");
  return sigma_proxy * std::sqrt(1.0 - r * r);
}

}  // namespace omreg
