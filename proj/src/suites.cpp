#include "omreg/suites.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "omreg/counterexamples.hpp"
#include "omreg/envs.hpp"
#include "omreg/errors.hpp"
#include "omreg/proxy_analysis.hpp"
#include "omreg/rng.hpp"

namespace omreg {

bool SuiteReport::all_passed() const { return failures() == 0; }

std::size_t SuiteReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += c.passed ? 0 : 1;
  return n;
}

std::string SuiteReport::json_lines() const {
  std::string out;
  for (const auto& c : checks) {
    nlohmann::json j = {{"suite", c.suite}, {"check", c.name}, {"passed", c.passed}};
    // JSON has no representation for inf or nan.
    j["measured"] = std::isfinite(c.measured) ? nlohmann::json(c.measured) : nlohmann::json(std::to_string(c.measured));
    j["bound"] = std::isfinite(c.bound) ? nlohmann::json(c.bound) : nlohmann::json(std::to_string(c.bound));
    if (!c.detail.empty()) j["detail"] = c.detail;
    out += j.dump() + "\n";
  }
  return out;
}

void SuiteReport::append(const SuiteReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

namespace {

constexpr double kBoundTol = 1e-9;
constexpr double kExactTol = 1e-12;

// Collapses a verification report into one suite check so the report stays
// readable, keeping the first failing sub-check as the detail.
SuiteCheck from_report(const std::string& suite, const VerificationReport& rep) {
  SuiteCheck out{suite, rep.label, rep.all_passed(), 0.0, 0.0, ""};
  for (const auto& c : rep.checks)
    if (!c.passed) {
      out.measured = c.measured;
      out.bound = c.expected;
      out.detail = c.name + (c.detail.empty() ? "" : ": " + c.detail);
      break;
    }
  return out;
}

// Policy for the lower-bound ensemble. Cycles through random stochastic,
// random deterministic and proxy-greedy policies so the bound is probed near
// its tight regime as well as in the bulk.
TabularPolicy ensemble_policy(const TabularMdp& mdp, const RewardTable& proxy, int variant, Rng& rng) {
  const int S = mdp.n_states(), A = mdp.n_actions();
  switch (variant % 3) {
    case 0:
      return random_policy(S, A, rng.next_u64());
    case 1: {
      std::vector<int> acts(S);
      for (auto& a : acts) a = rng.uniform_int(A);
      return TabularPolicy::deterministic(A, acts);
    }
    default:
      return policy_iteration(mdp, proxy).policy.mix(random_policy(S, A, rng.next_u64()), 0.3 * rng.uniform());
  }
}

}  // namespace

SuiteReport run_theorem1_suite(const SuiteOptions& opts) {
  SuiteReport rep;
  Rng root(opts.seed);
  int bound_violations = 0, cap_violations = 0, tuples = 0;
  double worst_bound_slack = INFINITY, worst_cap_slack = INFINITY;
  std::string first_failure;
  // Tuples whose reward pair cannot reach the target correlation are redrawn,
  // up to twice the requested count.
  for (int i = 0; tuples < opts.theorem1_tuples && i < 2 * opts.theorem1_tuples; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int S = 2 + rng.uniform_int(7);
    const int A = 1 + rng.uniform_int(4);
    const double gamma = 0.95 * rng.uniform();
    const TabularMdp mdp = random_mdp(S, A, gamma, 0.5 * rng.uniform(), rng.next_u64());
    const TabularPolicy base = random_policy(S, A, rng.next_u64());
    const double r = 0.05 + 0.95 * rng.uniform();
    std::pair<RewardTable, RewardTable> pair;
    try {
      pair = random_reward_pair(mdp, base, r, rng.next_u64());
    } catch (const CorrelationUnreachable&) {
      continue;  // e.g. a single reachable state-action pair
    }
    const auto& [r_true, r_proxy] = pair;
    const ProxyReport pr = proxy_correlation(mdp, base, r_true, r_proxy);
    const TabularPolicy pi = ensemble_policy(mdp, r_proxy, i, rng);
    const BoundReport b = true_reward_lower_bound(mdp, base, pi, r_proxy, pr);
    double L = b.lower_bound_L;
    if (opts.inject_bug) L = (b.proxy_gain_normalized + std::sqrt((1.0 - pr.r * pr.r) * b.chi2_term)) / pr.r;
    const double gain = (policy_return(mdp, pi, r_true) - pr.j_base_true) / pr.sigma_true;
    ++tuples;
    const double slack = gain - L;
    worst_bound_slack = std::min(worst_bound_slack, slack);
    if (slack < -kBoundTol) {
      ++bound_violations;
      if (first_failure.empty()) first_failure = "tuple " + std::to_string(i);
    }
    const double cap_slack = b.cap - L;
    worst_cap_slack = std::min(worst_cap_slack, cap_slack);
    if (cap_slack < -kBoundTol) ++cap_violations;
  }
  rep.checks.push_back({"theorem1", "gain_at_least_lower_bound", bound_violations == 0, worst_bound_slack, -kBoundTol,
                        std::to_string(bound_violations) + " violations over " + std::to_string(tuples) + " tuples" +
                            (first_failure.empty() ? "" : ", first at " + first_failure)});
  rep.checks.push_back({"theorem1", "lower_bound_below_cap", cap_violations == 0, worst_cap_slack, -kBoundTol,
                        std::to_string(cap_violations) + " violations over " + std::to_string(tuples) + " tuples"});
  rep.checks.push_back({"theorem1", "ensemble_size", tuples == opts.theorem1_tuples, static_cast<double>(tuples),
                        static_cast<double>(opts.theorem1_tuples), "usable tuples"});
  return rep;
}

SuiteReport run_counterexample_suite(const SuiteOptions&) {
  SuiteReport rep;
  const DivergenceKind fs[] = {DivergenceKind::kl(), DivergenceKind::chi2(), DivergenceKind::tv()};
  for (int k = 1; k <= 9; ++k) {
    const double r = 0.1 * k;
    rep.checks.push_back(from_report("counterexamples", verify(build_unoptimizable(r))));
    rep.checks.push_back(from_report("counterexamples", verify(build_positive_bound(r))));
    for (const auto& f : fs)
      for (ScalingKind g : {ScalingKind::identity, ScalingKind::sqrt})
        rep.checks.push_back(from_report("counterexamples", verify(build_ad_failure(r, f, g))));
  }
  return rep;
}

SuiteReport run_equivalence_suite(const SuiteOptions& opts) {
  SuiteReport rep;
  int bandit_failures = 0;
  for (int i = 0; i < opts.bandits; ++i) {
    const auto v = verify(build_bandit(splitmix64(opts.seed + static_cast<std::uint64_t>(i))));
    if (!v.all_passed()) {
      ++bandit_failures;
      if (bandit_failures == 1) rep.checks.push_back(from_report("equivalences", v));
    }
  }
  rep.checks.push_back({"equivalences", "bandit_om_equals_ad", bandit_failures == 0,
                        static_cast<double>(bandit_failures), 0.0,
                        std::to_string(opts.bandits) + " random contextual bandits"});
  for (int depth = 1; depth <= 4; ++depth)
    for (int b = 2; b <= 3; ++b)
      rep.checks.push_back(
          from_report("equivalences", verify(build_token_tree(depth, b, opts.seed + 100 * depth + b))));

  // Log-ratio forms against the direct divergences on random occupancy pairs.
  Rng rng(opts.seed ^ 0x5eedULL);
  double worst_kl = 0.0, worst_chi2 = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int S = 2 + rng.uniform_int(6), A = 1 + rng.uniform_int(3);
    const TabularMdp mdp = random_mdp(S, A, 0.9 * rng.uniform(), 0.0, rng.next_u64());
    const auto mu = exact_occupancy(mdp, random_policy(S, A, rng.next_u64()));
    const auto nu = exact_occupancy(mdp, random_policy(S, A, rng.next_u64()));
    // Both sides are O(value) sums, so the comparison is relative to the
    // value once it exceeds 1.
    const double kl = om_divergence(mu, nu, DivergenceKind::kl()) + 1.0;
    const double chi2 = om_divergence(mu, nu, DivergenceKind::chi2()) + 2.0;
    worst_kl = std::max(worst_kl, std::abs(log_ratio_form(mu, nu, LogRatioForm::kl) - kl) / std::max(1.0, kl));
    worst_chi2 =
        std::max(worst_chi2, std::abs(log_ratio_form(mu, nu, LogRatioForm::chi2) - chi2) / std::max(1.0, chi2));
  }
  rep.checks.push_back({"equivalences", "log_ratio_kl_offset_one", worst_kl <= kExactTol, worst_kl, kExactTol, ""});
  rep.checks.push_back(
      {"equivalences", "log_ratio_chi2_offset_two", worst_chi2 <= kExactTol, worst_chi2, kExactTol, ""});
  return rep;
}

SuiteReport run_learned_reward_suite(const SuiteOptions& opts) {
  SuiteReport rep;
  Rng root(opts.seed ^ 0x1ea4dULL);
  int violations = 0, trials = 0;
  double worst = INFINITY;
  for (int i = 0; trials < opts.learned_reward_pairs && i < 2 * opts.learned_reward_pairs; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const int S = 2 + rng.uniform_int(7), A = 1 + rng.uniform_int(4);
    const TabularMdp mdp = random_mdp(S, A, 0.95 * rng.uniform(), 0.3 * rng.uniform(), rng.next_u64());
    const TabularPolicy base = random_policy(S, A, rng.next_u64());
    const auto om = exact_occupancy(mdp, base);
    const Eigen::VectorXd& w = om.weights();
    Eigen::VectorXd truth(w.size()), noise(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      truth(k) = rng.normal();
      noise(k) = rng.normal() + rng.uniform();  // includes a mean shift
    }
    // Mix in a component along the true reward so the error is not always
    // orthogonal to it.
    noise += (2.0 * rng.uniform() - 1.0) * truth;
    const double mean_t = w.dot(truth);
    const double var_t = w.dot((truth.array() - mean_t).square().matrix());
    const double raw_mse = w.dot(noise.cwiseProduct(noise));
    if (var_t < 1e-12 || raw_mse < 1e-15) continue;
    const double eps = 0.9 * rng.uniform();
    noise *= std::sqrt(eps * var_t / raw_mse);
    const Eigen::VectorXd learned = truth + noise;
    const double mse = w.dot(noise.cwiseProduct(noise));
    auto table = [&](const Eigen::VectorXd& v) {
      return RewardTable(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          v.data(), S, A));
    };
    ProxyReport pr;
    try {
      pr = proxy_correlation(om, table(truth), table(learned));
    } catch (const DegenerateReward&) {
      continue;
    }
    ++trials;
    const double floor = learned_reward_correlation_floor(mse, pr.sigma_true);
    worst = std::min(worst, pr.r - floor);
    if (pr.r < floor - kBoundTol) ++violations;
  }
  rep.checks.push_back({"learned_rewards", "correlation_at_least_floor", violations == 0 && trials == opts.learned_reward_pairs, worst,
                        -kBoundTol,
                        std::to_string(violations) + " violations over " + std::to_string(trials) + " pairs"});
  return rep;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"theorem1", "counterexamples", "equivalences", "learned_rewards",
                                                 "all"};
  return names;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& opts) {
  if (name == "theorem1") return run_theorem1_suite(opts);
  if (name == "counterexamples") return run_counterexample_suite(opts);
  if (name == "equivalences") return run_equivalence_suite(opts);
  if (name == "learned_rewards") return run_learned_reward_suite(opts);
  if (name == "all") {
    SuiteReport rep = run_theorem1_suite(opts);
    rep.append(run_counterexample_suite(opts));
    rep.append(run_equivalence_suite(opts));
    rep.append(run_learned_reward_suite(opts));
    return rep;
  }
  throw InvalidArgument("unknown suite '" + name + "'");
}

}  // namespace omreg
