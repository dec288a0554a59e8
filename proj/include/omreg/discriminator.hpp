#pragma once

#include <cstdint>
#include <vector>

#include "omreg/mdp.hpp"
#include "omreg/mlp.hpp"

namespace omreg {

struct WeightedSample {
  int state;
  int action;
  double weight;
};
using SampleSet = std::vector<WeightedSample>;

/// Step t of each trajectory gets weight discount^t (or 1 when
/// discount_weighted is false).
SampleSet to_samples(const Batch& batch, bool discount_weighted = true);
/// One entry per (s, a) with positive occupancy, weighted by it.
SampleSet occupancy_as_samples(const OccupancyMeasure& om);
/// n i.i.d. draws from a state-action occupancy measure, unit weights.
SampleSet sample_from_occupancy(const OccupancyMeasure& om, int n, std::uint64_t seed);

enum class DiscriminatorMode { tabular, feedforward };
enum class DiscriminatorInput { state_action, state };

struct DiscriminatorConfig {
  DiscriminatorMode mode = DiscriminatorMode::tabular;
  /// Tabular logits are kept inside [-logit_bound, logit_bound].
  double logit_bound = 20.0;
  int max_iters = 200;
  double tol = 1e-10;
  /// Quadratic pull of tabular logits toward zero.
  double l2 = 0.0;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  int epochs = 4;
  int minibatch = 256;
};

/// Log-ratio estimator d(s, a) trained with the logistic loss
/// E_pi[log(1 + e^-d)] + E_base[log(1 + e^d)].
class Discriminator {
 public:
  Discriminator(int n_states, int n_actions, DiscriminatorInput input, DiscriminatorConfig cfg = {},
                std::uint64_t seed = 0);

  double operator()(int s, int a) const;
  DiscriminatorInput input() const { return input_; }
  const DiscriminatorConfig& config() const { return cfg_; }

  /// Fits to the two sample sets and returns the final loss.
  double fit(const SampleSet& pi_samples, const SampleSet& base_samples);

  /// Tabular mode only: overwrite the logit table (rows = states; a single
  /// column for state input).
  void set_logits(const Eigen::MatrixXd& logits);
  Eigen::MatrixXd logit_table() const;

 private:
  int index(int s, int a) const { return input_ == DiscriminatorInput::state ? s : s * n_actions_ + a; }
  Eigen::VectorXd features(int s, int a) const;
  double fit_tabular(const SampleSet& pi_samples, const SampleSet& base_samples);
  double fit_feedforward(const SampleSet& pi_samples, const SampleSet& base_samples);

  int n_states_, n_actions_;
  DiscriminatorInput input_;
  DiscriminatorConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t fits_ = 0;
  Eigen::VectorXd logits_;
  Mlp net_;
  Adam adam_;
};

double discriminator_loss(const Discriminator& d, const SampleSet& pi_samples, const SampleSet& base_samples);
double discriminator_loss(const Discriminator& d, const Batch& batch_pi, const Batch& batch_base);

/// Weighted trimmed mean of e^d - 1 over the policy samples; trim_fraction of
/// the total weight is dropped from each tail.
double estimate_chi2(const Discriminator& d, const SampleSet& pi_samples, double trim_fraction);
double estimate_chi2(const Discriminator& d, const Batch& batch_pi, double trim_fraction);

}  // namespace omreg
