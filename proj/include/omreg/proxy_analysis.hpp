#pragma once

#include "omreg/mdp.hpp"

namespace omreg {

struct ProxyReport {
  double r = 0.0;
  double sigma_true = 0.0;
  double sigma_proxy = 0.0;
  double j_base_true = 0.0;
  double j_base_proxy = 0.0;
  bool is_correlated_proxy = false;
};

struct BoundReport {
  double lower_bound_L = 0.0;
  /// (J(pi, proxy) - J(base, proxy)) / sigma_proxy
  double proxy_gain_normalized = 0.0;
  /// chi2(mu_pi || mu_base)
  double chi2_term = 0.0;
  double cap = 0.0;
};

/// Pearson correlation of the two rewards under the base occupancy measure.
ProxyReport proxy_correlation(const TabularMdp& mdp, const TabularPolicy& pi_base, const RewardTable& r_true,
                              const RewardTable& r_proxy);
/// Same, given the base occupancy measure directly (state or state-action).
ProxyReport proxy_correlation(const OccupancyMeasure& base_om, const RewardTable& r_true,
                              const RewardTable& r_proxy);

/// True iff J(pi, R) < J(base, R).
bool hacking_verdict(const TabularMdp& mdp, const TabularPolicy& pi_base, const TabularPolicy& pi,
                     const RewardTable& r_true);

/// Exhaustive version over the proxy's optimal set: is there some proxy-optimal
/// policy whose true return falls below the base policy's?
struct HackabilityResult {
  bool hackable = false;
  double worst_optimal_true_return = 0.0;
  double base_true_return = 0.0;
  TabularPolicy worst_optimal_policy;
};
HackabilityResult is_hackable(const TabularMdp& mdp, const TabularPolicy& pi_base, const RewardTable& r_true,
                              const RewardTable& r_proxy);

/// Lower bound on (J(pi,R) - J(base,R)) / sigma_R. Refuses r <= 0.
BoundReport true_reward_lower_bound(const TabularMdp& mdp, const TabularPolicy& pi_base, const TabularPolicy& pi,
                                    const RewardTable& r_proxy, const ProxyReport& report);
/// Same bound computed from precomputed occupancy measures (state or state-action).
BoundReport true_reward_lower_bound(const OccupancyMeasure& om_pi, const OccupancyMeasure& om_base,
                                    const RewardTable& r_proxy, const ProxyReport& report);

/// (J* - J(base,R)) / sigma_R, the smallest epsilon the base policy satisfies.
double base_suboptimality(double max_true_return, const ProxyReport& report);

/// epsilon - L. Throws if epsilon is smaller than the base policy's actual
/// normalized suboptimality, since the cap would not apply.
double suboptimality_bound(double max_true_return, const ProxyReport& report, const BoundReport& bound,
                           double epsilon);

double learned_reward_correlation_floor(double mse, double sigma_true);

double recommended_lambda(double sigma_proxy, double r);

}  // namespace omreg
