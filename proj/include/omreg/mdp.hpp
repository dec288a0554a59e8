#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace omreg {

struct Transition {
  int next;
  double prob;
};

/// Finite discounted MDP with sparse transition rows.
///
/// Rows are stored per (s, a) pair; duplicate successors are merged and zero
/// probabilities dropped at construction.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, std::vector<std::vector<Transition>> rows,
             Eigen::VectorXd initial_dist, double discount);

  /// Builds from a dense tensor laid out as p[(s * A + a) * S + next].
  static TabularMdp from_dense(int n_states, int n_actions, const std::vector<double>& p,
                               Eigen::VectorXd initial_dist, double discount);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  const Eigen::VectorXd& initial_dist() const { return initial_; }

  std::span<const Transition> successors(int s, int a) const {
    return rows_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  double transition_prob(int s, int a, int next) const;

  TabularMdp with_discount(double discount) const;

 private:
  int n_states_;
  int n_actions_;
  std::vector<std::vector<Transition>> rows_;
  Eigen::VectorXd initial_;
  double discount_;
};

class RewardTable {
 public:
  RewardTable() = default;
  explicit RewardTable(Eigen::MatrixXd values, bool state_only = false);
  /// One value per state, replicated across actions.
  static RewardTable from_states(const Eigen::VectorXd& state_values, int n_actions);

  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(int s, int a) const { return values_(s, a); }
  bool state_only() const { return state_only_; }
  int n_states() const { return static_cast<int>(values_.rows()); }
  int n_actions() const { return static_cast<int>(values_.cols()); }

 private:
  Eigen::MatrixXd values_;
  bool state_only_ = false;
};

class TabularPolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(Eigen::MatrixXd probs);

  static TabularPolicy uniform(int n_states, int n_actions);
  static TabularPolicy deterministic(int n_actions, const std::vector<int>& actions);

  const Eigen::MatrixXd& probs() const { return probs_; }
  double operator()(int s, int a) const { return probs_(s, a); }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

  /// (1 - eps) * this + eps * other.
  TabularPolicy mix(const TabularPolicy& other, double eps) const;

 private:
  Eigen::MatrixXd probs_;
};

enum class OccupancyKind { state_action, state };

/// Discounted visitation weights. Entries are laid out s * n_actions + a for
/// the state-action kind and by state for the state kind.
class OccupancyMeasure {
 public:
  OccupancyMeasure(OccupancyKind kind, int n_states, int n_actions, Eigen::VectorXd weights);

  OccupancyKind kind() const { return kind_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double at(int s, int a) const { return weights_(static_cast<Eigen::Index>(s) * n_actions_ + a); }
  double at(int s) const { return weights_(s); }
  double total() const { return weights_.sum(); }
  bool same_shape(const OccupancyMeasure& other) const;

  /// Collapses a state-action measure to its state marginal.
  OccupancyMeasure state_marginal() const;

 private:
  OccupancyKind kind_;
  int n_states_;
  int n_actions_;
  Eigen::VectorXd weights_;
};

struct Step {
  int state;
  int action;
  double reward;
  int next_state;
  double log_prob;
  bool done;
};

struct Trajectory {
  std::vector<Step> steps;
};

struct Batch {
  std::vector<Trajectory> trajectories;
  double discount = 0.0;

  std::size_t num_steps() const;
};

/// Smallest T with discount^T < tol (at least 1).
int default_horizon(double discount, double tol = 1e-4);

OccupancyMeasure exact_state_occupancy(const TabularMdp& mdp, const TabularPolicy& policy);
OccupancyMeasure exact_occupancy(const TabularMdp& mdp, const TabularPolicy& policy);
double policy_return(const TabularMdp& mdp, const TabularPolicy& policy, const RewardTable& reward);
double occupancy_expectation(const OccupancyMeasure& om, const RewardTable& reward);

/// Forward dynamic programming over the first `horizon` steps; not renormalized.
OccupancyMeasure brute_force_occupancy(const TabularMdp& mdp, const TabularPolicy& policy,
                                       int horizon);

/// Samples `count` trajectories of length `horizon`. Step rewards come from
/// `reward`. Trajectory i uses the stream Rng(seed).split(i).
Batch sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy,
                          const RewardTable& reward, int count, int horizon, std::uint64_t seed);

/// Unnormalized action values Q = R + gamma * P V and state values V.
struct ValueFunction {
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
};

ValueFunction evaluate_policy(const TabularMdp& mdp, const TabularPolicy& policy,
                              const RewardTable& reward);

struct PolicyIterationResult {
  TabularPolicy policy;
  ValueFunction values;
  int iterations = 0;
};

/// Howard policy iteration. When `allowed` is non-empty, action a is only
/// permitted at s if allowed[s * A + a] is true.
PolicyIterationResult policy_iteration(const TabularMdp& mdp, const RewardTable& reward,
                                       const std::vector<bool>& allowed = {});

void validate_compatible(const TabularMdp& mdp, const TabularPolicy& policy);
void validate_compatible(const TabularMdp& mdp, const RewardTable& reward);

}  // namespace omreg
