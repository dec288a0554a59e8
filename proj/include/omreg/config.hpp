#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "omreg/envs.hpp"
#include "omreg/orpo.hpp"

namespace omreg {

enum class EnvironmentType { tomato, random_mdp };

struct EnvironmentConfig {
  EnvironmentType type = EnvironmentType::tomato;
  GridworldSpec grid = default_tomato_spec();
  // random_mdp only
  int n_states = 6;
  int n_actions = 3;
  double discount = 0.9;
  double sparsity = 0.3;
  double correlation = 0.5;
  std::uint64_t seed = 0;
};

enum class BasePolicyType { epsilon_optimal, random };

struct BasePolicyConfig {
  BasePolicyType type = BasePolicyType::epsilon_optimal;
  /// Weight of the uniform policy in the epsilon-optimal mixture.
  double epsilon = 0.1;
  std::uint64_t seed = 0;
};

enum class LambdaScale { absolute, sigma_proxy };

struct AblationCell {
  RegKind kind = RegKind::om_chi2;
  /// Raw coefficient, or a multiple of sigma_proxy depending on the grid scale.
  std::optional<double> lambda;
};

struct ExperimentConfig {
  std::string name = "experiment";
  EnvironmentConfig environment;
  BasePolicyConfig base_policy;
  std::vector<RegKind> kinds = {RegKind::om_chi2};
  std::vector<double> lambdas = {1.0};
  LambdaScale lambda_scale = LambdaScale::sigma_proxy;
  /// Template for every cell; kind and lambda are overwritten per cell.
  RegConfig regularization;
  std::vector<std::uint64_t> seeds = {0};
  PpoHyper hyper;
  bool baselines = true;
  AblationCell ablation;
  int scatter_samples = 2000;
  std::string output_dir = "omreg_out";
};

/// Parses a JSON document. Unknown keys and invalid values raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON with every field written out.
std::string serialize_config(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);
/// Extra checks that only apply to the ablation command.
void validate_ablation(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Everything a training run needs, built from the environment section.
struct ExperimentSetup {
  TabularMdp mdp;
  TrainRewards rewards;
  TabularPolicy pi_base;
  double sigma_proxy = 0.0;
  double sigma_true = 0.0;
  double correlation = 0.0;
};

ExperimentSetup build_setup(const ExperimentConfig& cfg);

/// Converts a grid value to a raw lambda.
double resolve_lambda(const ExperimentConfig& cfg, const ExperimentSetup& setup, double grid_value);

}  // namespace omreg
