#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace omreg {

struct SuiteCheck {
  std::string suite;
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::vector<SuiteCheck> checks;

  bool all_passed() const;
  std::size_t failures() const;
  /// One JSON object per check, newline separated.
  std::string json_lines() const;
  void append(const SuiteReport& other);
};

struct SuiteOptions {
  std::uint64_t seed = 2024;
  int theorem1_tuples = 1000;
  int bandits = 200;
  int learned_reward_pairs = 500;
  /// Negative control: flips the sign of the chi-squared term in the bound.
  bool inject_bug = false;
};

/// True-reward lower bound and its cap on random (MDP, base, reward pair, policy) tuples.
SuiteReport run_theorem1_suite(const SuiteOptions& opts);
/// Every analytic construction over r in {0.1, ..., 0.9}.
SuiteReport run_counterexample_suite(const SuiteOptions& opts);
/// Bandit and token-tree OM/AD equivalences and the log-ratio offsets.
SuiteReport run_equivalence_suite(const SuiteOptions& opts);
/// Correlation floor for rewards learned with a known mean squared error.
SuiteReport run_learned_reward_suite(const SuiteOptions& opts);

/// name is one of theorem1, counterexamples, equivalences, learned_rewards, all.
SuiteReport run_suite(const std::string& name, const SuiteOptions& opts);

const std::vector<std::string>& suite_names();

}  // namespace omreg
