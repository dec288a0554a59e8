#include "omreg/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "omreg/errors.hpp"
#include "omreg/rng.hpp"

namespace omreg {

namespace {

constexpr double kRowTol = 1e-12;

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw InvalidArgument(what + ": negative or non-finite entry");
  if (std::abs(p.sum() - 1.0) > kRowTol) throw InvalidArgument(what + ": does not sum to 1");
}

Eigen::MatrixXd policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy(s, a);
      if (pa == 0.0) continue;
      for (const auto& t : mdp.successors(s, a)) p(s, t.next) += pa * t.prob;
    }
  return p;
}

Eigen::VectorXd solve_checked(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite()) throw SingularSystem("linear solve produced non-finite values");
  const double resid = (m * x - rhs).lpNorm<Eigen::Infinity>();
  if (resid > 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
    throw SingularSystem("linear solve residual too large: " + std::to_string(resid));
  return x;
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, std::vector<std::vector<Transition>> rows,
                       Eigen::VectorXd initial_dist, double discount)
    : n_states_(n_states),
      n_actions_(n_actions),
      initial_(std::move(initial_dist)),
      discount_(discount) {
  if (n_states <= 0 || n_actions <= 0) throw InvalidArgument("TabularMdp: empty state or action set");
  if (!(discount >= 0.0 && discount < 1.0)) throw InvalidArgument("TabularMdp: discount must be in [0,1)");
  if (rows.size() != static_cast<std::size_t>(n_states) * n_actions)
    throw InvalidArgument("TabularMdp: wrong number of transition rows");
  if (initial_.size() != n_states) throw InvalidArgument("TabularMdp: initial distribution size");
  check_distribution(initial_, "TabularMdp initial distribution");

  rows_.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::map<int, double> merged;
    for (const auto& t : rows[i]) {
      if (t.next < 0 || t.next >= n_states) throw InvalidArgument("TabularMdp: successor out of range");
      if (!(t.prob >= 0.0) || !std::isfinite(t.prob)) throw InvalidArgument("TabularMdp: bad probability");
      merged[t.next] += t.prob;
    }
    double total = 0.0;
    for (const auto& [next, p] : merged) {
      total += p;
      if (p > 0.0) rows_[i].push_back({next, p});
    }
    if (std::abs(total - 1.0) > kRowTol) throw InvalidArgument("TabularMdp: transition row does not sum to 1");
  }
}

TabularMdp TabularMdp::from_dense(int n_states, int n_actions, const std::vector<double>& p,
                                  Eigen::VectorXd initial_dist, double discount) {
  if (p.size() != static_cast<std::size_t>(n_states) * n_actions * n_states)
    throw InvalidArgument("from_dense: tensor size mismatch");
  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n_states) * n_actions);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int next = 0; next < n_states; ++next) {
      const double q = p[i * n_states + next];
      if (q != 0.0) rows[i].push_back({next, q});
    }
  return TabularMdp(n_states, n_actions, std::move(rows), std::move(initial_dist), discount);
}

double TabularMdp::transition_prob(int s, int a, int next) const {
  for (const auto& t : successors(s, a))
    if (t.next == next) return t.prob;
  return 0.0;
}

TabularMdp TabularMdp::with_discount(double discount) const {
  return TabularMdp(n_states_, n_actions_, rows_, initial_, discount);
}

RewardTable::RewardTable(Eigen::MatrixXd values, bool state_only)
    : values_(std::move(values)), state_only_(state_only) {
  if (!values_.allFinite()) throw InvalidArgument("RewardTable: non-finite entry");
  if (state_only_)
    for (Eigen::Index s = 0; s < values_.rows(); ++s)
      for (Eigen::Index a = 1; a < values_.cols(); ++a)
        if (values_(s, a) != values_(s, 0))
          throw InvalidArgument("RewardTable: state_only table varies across actions");
}

RewardTable RewardTable::from_states(const Eigen::VectorXd& state_values, int n_actions) {
  Eigen::MatrixXd v = state_values.replicate(1, n_actions);
  return RewardTable(std::move(v), true);
}

TabularPolicy::TabularPolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    Eigen::VectorXd row = probs_.row(s).transpose();
    check_distribution(row, "TabularPolicy row " + std::to_string(s));
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return TabularPolicy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(int n_actions, const std::vector<int>& actions) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) throw InvalidArgument("deterministic: action out of range");
    p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return TabularPolicy(std::move(p));
}

TabularPolicy TabularPolicy::mix(const TabularPolicy& other, double eps) const {
  if (other.probs_.rows() != probs_.rows() || other.probs_.cols() != probs_.cols())
    throw InvalidArgument("mix: shape mismatch");
  if (eps < 0.0 || eps > 1.0) throw InvalidArgument("mix: eps outside [0,1]");
  Eigen::MatrixXd p = (1.0 - eps) * probs_ + eps * other.probs_;
  // Renormalize rows to keep the 1e-12 row-sum invariant exact after mixing.
  for (Eigen::Index s = 0; s < p.rows(); ++s) p.row(s) /= p.row(s).sum();
  return TabularPolicy(std::move(p));
}

OccupancyMeasure::OccupancyMeasure(OccupancyKind kind, int n_states, int n_actions,
                                   Eigen::VectorXd weights)
    : kind_(kind), n_states_(n_states), n_actions_(n_actions), weights_(std::move(weights)) {
  const Eigen::Index expected =
      kind == OccupancyKind::state_action ? static_cast<Eigen::Index>(n_states) * n_actions : n_states;
  if (weights_.size() != expected) throw InvalidArgument("OccupancyMeasure: weight vector size");
  if ((weights_.array() < 0.0).any() || !weights_.allFinite())
    throw InvalidArgument("OccupancyMeasure: negative or non-finite weight");
}

bool OccupancyMeasure::same_shape(const OccupancyMeasure& other) const {
  return kind_ == other.kind_ && n_states_ == other.n_states_ &&
         (kind_ == OccupancyKind::state || n_actions_ == other.n_actions_);
}

OccupancyMeasure OccupancyMeasure::state_marginal() const {
  if (kind_ == OccupancyKind::state) return *this;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n_states_);
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < n_actions_; ++a) d(s) += at(s, a);
  return OccupancyMeasure(OccupancyKind::state, n_states_, n_actions_, std::move(d));
}

std::size_t Batch::num_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.steps.size();
  return n;
}

int default_horizon(double discount, double tol) {
  if (discount <= 0.0) return 1;
  int t = static_cast<int>(std::ceil(std::log(tol) / std::log(discount)));
  while (std::pow(discount, t) >= tol) ++t;
  return std::max(t, 1);
}

void validate_compatible(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw InvalidArgument("policy shape does not match MDP");
}

void validate_compatible(const TabularMdp& mdp, const RewardTable& reward) {
  if (reward.n_states() != mdp.n_states() || reward.n_actions() != mdp.n_actions())
    throw InvalidArgument("reward shape does not match MDP");
}

OccupancyMeasure exact_state_occupancy(const TabularMdp& mdp, const TabularPolicy& policy) {
  validate_compatible(mdp, policy);
  const int S = mdp.n_states();
  const double g = mdp.discount();
  Eigen::VectorXd d;
  if (g == 0.0) {
    d = mdp.initial_dist();
  } else {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(S, S) - g * policy_transition_matrix(mdp, policy).transpose();
    d = solve_checked(m, (1.0 - g) * mdp.initial_dist());
    // Round-off can leave tiny negative entries on unreachable states.
    d = d.cwiseMax(0.0);
  }
  return OccupancyMeasure(OccupancyKind::state, S, mdp.n_actions(), std::move(d));
}

OccupancyMeasure exact_occupancy(const TabularMdp& mdp, const TabularPolicy& policy) {
  const auto d = exact_state_occupancy(mdp, policy);
  const int S = mdp.n_states(), A = mdp.n_actions();
  Eigen::VectorXd mu(static_cast<Eigen::Index>(S) * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) mu(static_cast<Eigen::Index>(s) * A + a) = d.at(s) * policy(s, a);
  return OccupancyMeasure(OccupancyKind::state_action, S, A, std::move(mu));
}

double occupancy_expectation(const OccupancyMeasure& om, const RewardTable& reward) {
  if (om.n_states() != reward.n_states()) throw InvalidArgument("occupancy/reward shape mismatch");
  double j = 0.0;
  if (om.kind() == OccupancyKind::state_action) {
    for (int s = 0; s < om.n_states(); ++s)
      for (int a = 0; a < om.n_actions(); ++a) j += om.at(s, a) * reward(s, a);
  } else {
    if (!reward.state_only()) throw InvalidArgument("state occupancy needs a state-only reward");
    for (int s = 0; s < om.n_states(); ++s) j += om.at(s) * reward(s, 0);
  }
  return j;
}

double policy_return(const TabularMdp& mdp, const TabularPolicy& policy, const RewardTable& reward) {
  validate_compatible(mdp, reward);
  return occupancy_expectation(exact_occupancy(mdp, policy), reward);
}

OccupancyMeasure brute_force_occupancy(const TabularMdp& mdp, const TabularPolicy& policy, int horizon) {
  validate_compatible(mdp, policy);
  if (horizon < 1) throw InvalidArgument("brute_force_occupancy: horizon must be >= 1");
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double g = mdp.discount();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S) * A);
  Eigen::VectorXd marginal = mdp.initial_dist();
  double weight = 1.0 - g;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s) {
      if (marginal(s) == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        const double p = marginal(s) * policy(s, a);
        if (p == 0.0) continue;
        mu(static_cast<Eigen::Index>(s) * A + a) += weight * p;
        for (const auto& tr : mdp.successors(s, a)) next(tr.next) += p * tr.prob;
      }
    }
    marginal = std::move(next);
    weight *= g;
  }
  return OccupancyMeasure(OccupancyKind::state_action, S, A, std::move(mu));
}

Batch sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy, const RewardTable& reward,
                          int count, int horizon, std::uint64_t seed) {
  validate_compatible(mdp, policy);
  validate_compatible(mdp, reward);
  if (count < 0 || horizon < 1) throw InvalidArgument("sample_trajectories: bad count or horizon");
  const int A = mdp.n_actions();
  const Rng root(seed);
  const auto& mu0 = mdp.initial_dist();
  std::span<const double> mu0_span(mu0.data(), static_cast<std::size_t>(mu0.size()));

  Batch batch;
  batch.discount = mdp.discount();
  batch.trajectories.resize(count);
  std::vector<double> row(A);
  std::vector<double> succ;
  for (int i = 0; i < count; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    auto& steps = batch.trajectories[i].steps;
    steps.reserve(horizon);
    int s = rng.categorical(mu0_span);
    for (int t = 0; t < horizon; ++t) {
      for (int a = 0; a < A; ++a) row[a] = policy(s, a);
      const int a = rng.categorical(row);
      const auto next_list = mdp.successors(s, a);
      succ.resize(next_list.size());
      for (std::size_t k = 0; k < next_list.size(); ++k) succ[k] = next_list[k].prob;
      const int next = next_list[rng.categorical(succ)].next;
      steps.push_back({s, a, reward(s, a), next, std::log(policy(s, a)), t + 1 == horizon});
      s = next;
    }
  }
  return batch;
}

ValueFunction evaluate_policy(const TabularMdp& mdp, const TabularPolicy& policy, const RewardTable& reward) {
  validate_compatible(mdp, policy);
  validate_compatible(mdp, reward);
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double g = mdp.discount();
  Eigen::VectorXd r_pi = (policy.probs().cwiseProduct(reward.values())).rowwise().sum();
  ValueFunction out;
  if (g == 0.0) {
    out.v = r_pi;
  } else {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(S, S) - g * policy_transition_matrix(mdp, policy);
    out.v = solve_checked(m, r_pi);
  }
  out.q.resize(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double ev = 0.0;
      for (const auto& t : mdp.successors(s, a)) ev += t.prob * out.v(t.next);
      out.q(s, a) = reward(s, a) + g * ev;
    }
  return out;
}

PolicyIterationResult policy_iteration(const TabularMdp& mdp, const RewardTable& reward,
                                       const std::vector<bool>& allowed) {
  validate_compatible(mdp, reward);
  const int S = mdp.n_states(), A = mdp.n_actions();
  auto ok = [&](int s, int a) {
    return allowed.empty() || allowed[static_cast<std::size_t>(s) * A + a];
  };
  if (!allowed.empty() && allowed.size() != static_cast<std::size_t>(S) * A)
    throw InvalidArgument("policy_iteration: allowed mask has wrong size");

  std::vector<int> act(S, -1);
  for (int s = 0; s < S; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a)
      if (ok(s, a) && reward(s, a) > best) {
        best = reward(s, a);
        act[s] = a;
      }
    if (act[s] < 0) throw InvalidArgument("policy_iteration: state with no allowed action");
  }

  PolicyIterationResult res{TabularPolicy::deterministic(A, act), {}, 0};
  const double scale = 1.0 + reward.values().cwiseAbs().maxCoeff() / (1.0 - mdp.discount());
  for (int it = 0; it < 10000; ++it) {
    res.values = evaluate_policy(mdp, res.policy, reward);
    res.iterations = it + 1;
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      int best = act[s];
      for (int a = 0; a < A; ++a)
        if (ok(s, a) && res.values.q(s, a) > res.values.q(s, best) + 1e-12 * scale) best = a;
      if (best != act[s]) {
        act[s] = best;
        changed = true;
      }
    }
    if (!changed) return res;
    res.policy = TabularPolicy::deterministic(A, act);
  }
  throw Error("policy_iteration did not converge");
}

}  // namespace omreg
