#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "omreg/discriminator.hpp"
#include "omreg/ppo.hpp"

namespace omreg {

enum class RegKind { none, om_chi2, om_kl, state_om_chi2, state_om_kl, ad_chi2, ad_kl };

std::string to_string(RegKind kind);
RegKind reg_kind_from_string(const std::string& name);
bool is_occupancy_kind(RegKind kind);
bool is_state_kind(RegKind kind);
bool is_ad_kind(RegKind kind);
bool is_chi2_kind(RegKind kind);

struct RegConfig {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  double clip_delta = 1000.0;
  double trim_fraction = 0.01;
  bool discriminator_first = true;
  /// Use e^d instead of e^d - 1 as the chi-squared discriminator term.
  bool uncentered_penalty = false;
  /// Number of most recent base batches the discriminator sees; 0 keeps all
  /// of them. The base policy never changes, so older batches are still
  /// valid samples.
  int base_pool = 0;
  DiscriminatorConfig discriminator;
};

/// Lower bound applied to the chi-squared estimate before taking its root.
inline constexpr double kChi2Floor = 1e-6;

struct TrainRewards {
  RewardTable proxy;
  RewardTable truth;
};

struct IterationRecord {
  int iteration = 0;
  double proxy_return = 0.0;
  double true_return = 0.0;
  double chi2_hat = 0.0;
  double exact_om_chi2 = 0.0;
  double exact_om_kl = 0.0;
  double exact_ad_kl = 0.0;
  double discriminator_loss = 0.0;
  double entropy = 0.0;
};

struct RunRecord {
  std::vector<IterationRecord> rows;
  TabularPolicy final_policy;
  double final_true_return = 0.0;
  double final_proxy_return = 0.0;
};

/// Replaces per-step rewards with R - penalty(d). For chi2 kinds the penalty
/// is lambda / sqrt(chi2_hat) * clip(e^d - 1, -delta, delta); for kl kinds it
/// is lambda * clip(d, -delta, delta). Kinds without a discriminator leave the
/// batch unchanged.
Batch augment_rewards(const Batch& batch, const Discriminator& d_hat, double chi2_hat, const RegConfig& cfg);

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Occupancy-regularized PPO. AD kinds are forwarded to ad_regularized_train.
RunRecord orpo_train(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                     const RegConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                     const IterationCallback& on_iteration = {});

/// PPO with the per-sample action-distribution penalty in the loss.
RunRecord ad_regularized_train(const TabularMdp& mdp, const TrainRewards& rewards, const TabularPolicy& pi_base,
                               const RegConfig& cfg, const PpoHyper& hyper, std::uint64_t seed,
                               const IterationCallback& on_iteration = {});

/// J(pi_theta, proxy) minus the exact regularizer:
/// lambda * sqrt(chi2) for chi2 occupancy kinds, lambda * KL for kl occupancy
/// kinds, lambda * AD divergence for AD kinds.
double exact_regularized_objective(const TabularMdp& mdp, const PolicyParams& params, const RewardTable& proxy,
                                   const TabularPolicy& pi_base, RegKind kind, double lambda);

/// Analytic gradient of exact_regularized_objective with respect to the logits.
Eigen::MatrixXd exact_regularized_gradient(const TabularMdp& mdp, const PolicyParams& params,
                                           const RewardTable& proxy, const TabularPolicy& pi_base, RegKind kind,
                                           double lambda);

/// The reward whose policy gradient equals the regularized gradient for the
/// occupancy kinds (held fixed at the current policy).
RewardTable exact_augmented_reward(const TabularMdp& mdp, const PolicyParams& params, const RewardTable& proxy,
                                   const TabularPolicy& pi_base, RegKind kind, double lambda);

/// Central finite differences of f around the logits.
Eigen::MatrixXd finite_difference_gradient(const std::function<double(const PolicyParams&)>& f,
                                           const PolicyParams& at, double h = 1e-6);

struct AscentResult {
  PolicyParams params;
  double objective = 0.0;
  int steps = 0;
};

/// Adam ascent on the exact objective.
AscentResult exact_objective_ascent(const TabularMdp& mdp, const PolicyParams& init, const RewardTable& proxy,
                                    const TabularPolicy& pi_base, RegKind kind, double lambda, int steps,
                                    double lr = 0.05);

}  // namespace omreg
