#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "omreg/mdp.hpp"

namespace omreg {

/// Layout characters: '#' wall, '.' floor, 'T' tomato, 'S' sprinkler,
/// 'A' agent start (floor).
struct GridworldSpec {
  std::vector<std::string> layout;
  /// Expected number of steps a watered tomato stays watered. Each step a
  /// watered tomato dries with probability 1 / dry_steps.
  double dry_steps = 8.0;
  /// Probability that the chosen move is replaced by a uniformly random one.
  double slip = 0.0;
  double discount = 0.99;
  /// Per-step probability of restarting from the initial distribution.
  double reset_prob = 0.0;
  /// When set, the sprinkler cell cannot be left once entered.
  bool sprinkler_trap = false;
  int max_states = 4096;
};

GridworldSpec default_tomato_spec();

enum class Move { up = 0, down = 1, left = 2, right = 3 };

struct TomatoWorld {
  GridworldSpec spec;
  TabularMdp mdp;
  RewardTable r_true;
  RewardTable r_proxy;
  int n_cells = 0;
  int n_tomatoes = 0;
  std::vector<std::pair<int, int>> cell_coords;  // (row, col) per cell index
  int sprinkler_cell = -1;
  int start_cell = -1;

  int cell_of(int state) const { return state >> n_tomatoes; }
  unsigned watered_bits(int state) const { return static_cast<unsigned>(state) & ((1u << n_tomatoes) - 1u); }
  int state_of(int cell, unsigned bits) const { return (cell << n_tomatoes) | static_cast<int>(bits); }
  bool at_sprinkler(int state) const { return cell_of(state) == sprinkler_cell; }
};

void validate_gridworld(const GridworldSpec& spec);
TomatoWorld tomato_gridworld(const GridworldSpec& spec);

/// epsilon-greedy mixture of the true-reward-optimal policy with uniform.
TabularPolicy base_policy_for(const TabularMdp& mdp, const RewardTable& r_true, double epsilon_random = 0.1);

/// Transition rows drawn from Dirichlet(1) over a random support; each
/// successor is kept with probability 1 - sparsity (at least one is kept).
TabularMdp random_mdp(int n_states, int n_actions, double gamma, double sparsity, std::uint64_t seed);

/// Dirichlet(1) rows, so every action has positive probability.
TabularPolicy random_policy(int n_states, int n_actions, std::uint64_t seed);

/// Reward pair whose correlation under the base occupancy equals target_r.
/// Returns (true, proxy).
std::pair<RewardTable, RewardTable> random_reward_pair(const TabularMdp& mdp, const TabularPolicy& pi_base,
                                                       double target_r, std::uint64_t seed);

}  // namespace omreg
