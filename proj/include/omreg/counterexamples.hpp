#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omreg/divergence.hpp"
#include "omreg/mdp.hpp"

namespace omreg {

enum class ConstructionKind {
  unoptimizable_small_r,   // two states, r <= 1/2
  unoptimizable_large_r,   // three states, r > 1/2
  positive_bound,          // three states, r > 1/2
  positive_bound_balanced, // three states, balanced variant used for r <= 1/2
  ad_failure,
  bandit,
  token_tree,
};

std::string to_string(ConstructionKind kind);

enum class ScalingKind { identity, sqrt };

double apply_scaling(ScalingKind g, double x);
/// sup{ y in [0, 1e3] : g(y) <= x } by bisection.
double scaling_inverse(ScalingKind g, double x);

struct Construction {
  TabularMdp mdp;
  RewardTable r_true;
  RewardTable r_proxy;
  TabularPolicy pi_base;
  /// pi* for the bound constructions, pi-tilde for the AD failure, and a
  /// second random policy for the bandit and token tree.
  TabularPolicy pi_alt;
  double target_r = 1.0;
  ConstructionKind kind;

  // Only set for ad_failure.
  std::optional<DivergenceKind> f_kind;
  ScalingKind g_kind = ScalingKind::identity;
  double rho = 0.0;
  // Only set for token_tree.
  int depth = 0;
  int branching = 0;
};

Construction build_unoptimizable(double r);
Construction build_positive_bound(double r);
Construction build_ad_failure(double r, const DivergenceKind& f_kind, ScalingKind g_kind);
/// Random contextual bandit (discount 0) with two random full-support policies.
Construction build_bandit(std::uint64_t seed, int n_contexts = 5, int n_actions = 3);
/// Prefix tree over a `branching`-letter vocabulary. Leaves feed a shared
/// absorbing sink on which both policies agree.
Construction build_token_tree(int depth, int branching, std::uint64_t seed, double discount = 0.5);

/// Radius search used by build_ad_failure; exposed for testing.
double ad_failure_radius(const DivergenceKind& f_kind, double threshold);

/// L'(pi) = J(pi, proxy) - J(base, proxy) - g(AD divergence).
double ad_regularized_gain(const Construction& c, const TabularPolicy& pi);

/// pi(a1|s1) = p with every other state fixed to a1.
TabularPolicy first_state_policy(const Construction& c, double p);

struct Check {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double expected = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::string label;
  double target_r = 0.0;
  std::vector<Check> checks;
  bool all_passed() const;
};

VerificationReport verify(const Construction& c);

}  // namespace omreg
