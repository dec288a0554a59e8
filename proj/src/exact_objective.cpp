#include <cmath>

#include "omreg/errors.hpp"
#include "omreg/orpo.hpp"

namespace omreg {

namespace {

constexpr double kSqrtFloor = 1e-12;

DivergenceKind divergence_of(RegKind kind) {
  return (kind == RegKind::om_chi2 || kind == RegKind::state_om_chi2 || kind == RegKind::ad_chi2)
             ? DivergenceKind::chi2()
             : DivergenceKind::kl();
}

/// dJ/dlogits(s, b) = d(s) pi(b|s) (Q(s,b) - V(s)) for the given fixed reward.
Eigen::MatrixXd softmax_policy_gradient(const TabularMdp& mdp, const TabularPolicy& pi, const RewardTable& reward) {
  const auto d = exact_state_occupancy(mdp, pi);
  const auto vf = evaluate_policy(mdp, pi, reward);
  Eigen::MatrixXd g(mdp.n_states(), mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int b = 0; b < mdp.n_actions(); ++b) g(s, b) = d.at(s) * pi(s, b) * (vf.q(s, b) - vf.v(s));
  return g;
}

}  // namespace

double exact_regularized_objective(const TabularMdp& mdp, const PolicyParams& params, const RewardTable& proxy,
                                   const TabularPolicy& pi_base, RegKind kind, double lambda) {
  const TabularPolicy pi = params.policy();
  const double j = policy_return(mdp, pi, proxy);
  if (kind == RegKind::none || lambda == 0.0) return j;
  const DivergenceKind div = divergence_of(kind);
  if (is_ad_kind(kind)) return j - lambda * ad_divergence(mdp, pi, pi_base, div);
  OccupancyMeasure mu = exact_occupancy(mdp, pi), nu = exact_occupancy(mdp, pi_base);
  if (is_state_kind(kind)) {
    mu = mu.state_marginal();
    nu = nu.state_marginal();
  }
  const double value = om_divergence(mu, nu, div);
  return j - lambda * (is_chi2_kind(kind) ? std::sqrt(value) : value);
}

RewardTable exact_augmented_reward(const TabularMdp& mdp, const PolicyParams& params, const RewardTable& proxy,
                                   const TabularPolicy& pi_base, RegKind kind, double lambda) {
  const TabularPolicy pi = params.policy();
  const int S = mdp.n_states(), A = mdp.n_actions();
  Eigen::MatrixXd r = proxy.values();
  if (kind == RegKind::none || lambda == 0.0) return RewardTable(r, proxy.state_only());
  if (is_ad_kind(kind)) {
    const Eigen::VectorXd per_state = per_state_divergence(pi, pi_base, divergence_of(kind));
    for (int s = 0; s < S; ++s) r.row(s).array() -= lambda * per_state(s);
    return RewardTable(r, proxy.state_only());
  }
  const bool chi2 = is_chi2_kind(kind);
  OccupancyMeasure mu = exact_occupancy(mdp, pi), nu = exact_occupancy(mdp, pi_base);
  if (is_state_kind(kind)) {
    mu = mu.state_marginal();
    nu = nu.state_marginal();
  }
  const double coef = chi2 ? lambda / std::sqrt(std::max(om_divergence(mu, nu, DivergenceKind::chi2()), kSqrtFloor))
                           : lambda;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double m = is_state_kind(kind) ? mu.at(s) : mu.at(s, a);
      const double n = is_state_kind(kind) ? nu.at(s) : nu.at(s, a);
      if (n == 0.0) {
        if (m > 0.0) throw AbsoluteContinuityViolated("exact_augmented_reward: policy leaves the base support");
        continue;
      }
      r(s, a) -= coef * (chi2 ? m / n : (m > 0.0 ? std::log(m / n) : 0.0));
    }
  return RewardTable(r, proxy.state_only() && is_state_kind(kind));
}

Eigen::MatrixXd exact_regularized_gradient(const TabularMdp& mdp, const PolicyParams& params,
                                           const RewardTable& proxy, const TabularPolicy& pi_base, RegKind kind,
                                           double lambda) {
  const TabularPolicy pi = params.policy();
  const RewardTable r = exact_augmented_reward(mdp, params, proxy, pi_base, kind, lambda);
  Eigen::MatrixXd g = softmax_policy_gradient(mdp, pi, r);
  if (is_ad_kind(kind) && lambda != 0.0) {
    // Direct dependence of each per-state divergence on that state's logits.
    const auto d = exact_state_occupancy(mdp, pi);
    const bool chi2 = kind == RegKind::ad_chi2;
    for (int s = 0; s < mdp.n_states(); ++s) {
      double div = 0.0;
      for (int a = 0; a < mdp.n_actions(); ++a)
        div += chi2 ? pi(s, a) * pi(s, a) / pi_base(s, a) : (pi(s, a) > 0.0 ? pi(s, a) * std::log(pi(s, a) / pi_base(s, a)) : 0.0);
      for (int j = 0; j < mdp.n_actions(); ++j) {
        const double p = pi(s, j);
        const double dd = chi2 ? 2.0 * p * (p / pi_base(s, j) - div)
                               : (p > 0.0 ? p * (std::log(p / pi_base(s, j)) - div) : 0.0);
        g(s, j) -= lambda * d.at(s) * dd;
      }
    }
  }
  return g;
}

Eigen::MatrixXd finite_difference_gradient(const std::function<double(const PolicyParams&)>& f,
                                           const PolicyParams& at, double h) {
  Eigen::MatrixXd g(at.n_states(), at.n_actions());
  for (int s = 0; s < at.n_states(); ++s)
    for (int a = 0; a < at.n_actions(); ++a) {
      PolicyParams plus = at, minus = at;
      plus.logits()(s, a) += h;
      minus.logits()(s, a) -= h;
      g(s, a) = (f(plus) - f(minus)) / (2.0 * h);
    }
  return g;
}

AscentResult exact_objective_ascent(const TabularMdp& mdp, const PolicyParams& init, const RewardTable& proxy,
                                    const TabularPolicy& pi_base, RegKind kind, double lambda, int steps, double lr) {
  AscentResult res{init, 0.0, 0};
  auto& logits = res.params.logits();
  Adam adam(logits.size(), lr);
  Eigen::Map<Eigen::VectorXd> flat(logits.data(), logits.size());
  for (int k = 0; k < steps; ++k) {
    Eigen::MatrixXd g = exact_regularized_gradient(mdp, res.params, proxy, pi_base, kind, lambda);
    Eigen::VectorXd neg = -Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
    if (!neg.allFinite()) throw NonFiniteGradient("exact_objective_ascent: gradient is not finite");
    adam.step(flat, neg);
    res.steps = k + 1;
  }
  res.objective = exact_regularized_objective(mdp, res.params, proxy, pi_base, kind, lambda);
  return res;
}

}  // namespace omreg
