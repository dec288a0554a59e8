#pragma once

#include <span>

#include "omreg/divergence.hpp"
#include "omreg/mdp.hpp"
#include "omreg/mlp.hpp"
#include "omreg/rng.hpp"

namespace omreg {

/// Tabular softmax policy parameters.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(Eigen::MatrixXd logits);

  static PolicyParams uniform(int n_states, int n_actions);
  /// Logits log(max(pi, floor)); reproduces `pi` up to the floor.
  static PolicyParams from_policy(const TabularPolicy& pi, double floor = 1e-8);

  const Eigen::MatrixXd& logits() const { return logits_; }
  Eigen::MatrixXd& logits() { return logits_; }
  int n_states() const { return static_cast<int>(logits_.rows()); }
  int n_actions() const { return static_cast<int>(logits_.cols()); }

  TabularPolicy policy() const;

 private:
  Eigen::MatrixXd logits_;
};

Eigen::VectorXd softmax_row(const Eigen::MatrixXd& logits, int s);

struct PpoHyper {
  int iterations = 100;
  int trajectories_per_iter = 8;
  int base_trajectories_per_iter = 8;
  /// 0 selects default_horizon(discount).
  int horizon = 0;
  int minibatch = 128;
  int epochs = 8;
  double lr = 1e-3;
  double grad_clip = 0.1;
  double gae_lambda = 0.98;
  double entropy_coef = 0.01;
  double clip_param = 0.3;
  bool use_kl_penalty = true;
  double kl_target = 1e-3;
  double kl_coeff_init = 0.2;
  /// Tabular value baseline: per-iteration relaxation toward the mean
  /// observed return, with the correction clipped at vf_clip.
  double value_lr = 0.5;
  double vf_clip = 10.0;
  bool warm_start = false;
};

/// Per-sample action-distribution penalty lambda * (q / q_old) * est(q / base)
/// added to the PPO loss.
struct AdPenalty {
  const TabularPolicy* base = nullptr;
  DivergenceFamily family = DivergenceFamily::kl;
  double lambda = 0.0;
};

struct SurrogateSample {
  int state;
  int action;
  double advantage;
  double old_log_prob;
  double weight;
};

/// Gradient (for ascent) of sum_i w_i * min(rho_i A_i, clip(rho_i) A_i) with
/// respect to the logits, minus the AD penalty gradient when `ad` is set.
Eigen::MatrixXd surrogate_gradient(const Eigen::MatrixXd& logits, std::span<const SurrogateSample> samples,
                                   double clip_param, const AdPenalty* ad = nullptr);

struct PpoState {
  PolicyParams params;
  Eigen::VectorXd value;
  Adam adam;
  double kl_coeff = 0.2;
};

PpoState make_ppo_state(PolicyParams params, const PpoHyper& hyper);

struct PpoStats {
  double mean_kl = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double penalty = 0.0;
};

/// Generalized advantage estimates per step, in batch order.
std::vector<double> compute_gae(const Batch& batch, const Eigen::VectorXd& value, double gae_lambda);

/// One PPO iteration on a batch whose rewards are already final.
PpoStats policy_update(PpoState& state, const Batch& batch, const PpoHyper& hyper, Rng& rng,
                       const AdPenalty* ad = nullptr);

}  // namespace omreg
