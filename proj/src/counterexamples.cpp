#include "omreg/counterexamples.hpp"

#include <cmath>
#include <functional>

#include "omreg/errors.hpp"
#include "omreg/proxy_analysis.hpp"
#include "omreg/rng.hpp"

namespace omreg {

namespace {

constexpr double kCorrTol = 1e-9;

void require_open_unit(double r, const char* who) {
  if (!(r > 0.0 && r < 1.0)) throw InvalidArgument(std::string(who) + ": r must lie in (0, 1)");
}

/// Discount-0 MDP where every action returns to mu0. Transitions are
/// irrelevant at discount 0 but must still be valid distributions.
TabularMdp bandit_mdp(const Eigen::VectorXd& mu0, int n_actions) {
  const int S = static_cast<int>(mu0.size());
  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(S) * n_actions);
  for (auto& row : rows) row.push_back({0, 1.0});
  return TabularMdp(S, n_actions, std::move(rows), mu0, 0.0);
}

Eigen::MatrixXd two_action_policy(const std::vector<double>& p_first) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(p_first.size()), 2);
  for (std::size_t s = 0; s < p_first.size(); ++s) {
    p(static_cast<Eigen::Index>(s), 0) = p_first[s];
    p(static_cast<Eigen::Index>(s), 1) = 1.0 - p_first[s];
  }
  return p;
}

Check make_check(std::string name, double measured, double expected, double tol) {
  Check c;
  c.name = std::move(name);
  c.measured = measured;
  c.expected = expected;
  c.passed = std::abs(measured - expected) <= tol;
  return c;
}

Check make_flag(std::string name, bool ok, double measured, double expected, std::string detail) {
  Check c;
  c.name = std::move(name);
  c.passed = ok;
  c.measured = measured;
  c.expected = expected;
  c.detail = std::move(detail);
  return c;
}

Construction unoptimizable_small_r(double r) {
  const double a = std::sqrt(r / (1.0 - r));
  const double b = std::sqrt((1.0 - r) / r);
  Eigen::VectorXd mu0(2);
  mu0 << 1.0 / (1.0 + r), r / (1.0 + r);
  Eigen::MatrixXd rt(2, 2), rp(2, 2);
  rt << a, -b, 0.0, 0.0;
  rp << a, 0.0, -b, -b;
  return Construction{bandit_mdp(mu0, 2),
                      RewardTable(rt),
                      RewardTable(rp),
                      TabularPolicy(two_action_policy({1.0 - r, 1.0})),
                      TabularPolicy(two_action_policy({1.0, 1.0})),
                      r,
                      ConstructionKind::unoptimizable_small_r};
}

Construction unoptimizable_large_r(double r) {
  const double a = std::sqrt((1.0 - r) / r);
  const double b = std::sqrt(r / (1.0 - r));
  const double D = r * r - r + 1.0;
  const double q = 2.0 * r * r - 2.0 * r + 1.0;
  Eigen::VectorXd mu0(3);
  mu0 << q / D, (1.0 - r) * (1.0 - r) / D, (1.0 - r) * (2.0 * r - 1.0) / D;
  Eigen::MatrixXd rt(3, 2), rp(3, 2);
  rt << a, -b, 0.0, 0.0, -b, -b;
  rp << a, 0.0, -b, -b, -b, -b;
  return Construction{bandit_mdp(mu0, 2),
                      RewardTable(rt),
                      RewardTable(rp),
                      TabularPolicy(two_action_policy({r * r / q, 1.0, 1.0})),
                      TabularPolicy(two_action_policy({1.0, 1.0, 1.0})),
                      r,
                      ConstructionKind::unoptimizable_large_r};
}

}  // namespace

std::string to_string(ConstructionKind kind) {
  switch (kind) {
    case ConstructionKind::unoptimizable_small_r: return "unoptimizable_small_r";
    case ConstructionKind::unoptimizable_large_r: return "unoptimizable_large_r";
    case ConstructionKind::positive_bound: return "positive_bound";
    case ConstructionKind::positive_bound_balanced: return "positive_bound_balanced";
    case ConstructionKind::ad_failure: return "ad_failure";
    case ConstructionKind::bandit: return "bandit";
    case ConstructionKind::token_tree: return "token_tree";
  }
  return "unknown";
}

double apply_scaling(ScalingKind g, double x) {
  return g == ScalingKind::identity ? x : std::sqrt(x);
}

double scaling_inverse(ScalingKind g, double x) {
  if (x < 0.0) throw InvalidArgument("scaling_inverse: argument must be >= 0");
  double lo = 0.0, hi = 1e3;
  if (apply_scaling(g, hi) <= x) return hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (apply_scaling(g, mid) <= x)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

Construction build_unoptimizable(double r) {
  require_open_unit(r, "build_unoptimizable");
  return r <= 0.5 ? unoptimizable_small_r(r) : unoptimizable_large_r(r);
}

Construction build_positive_bound(double r) {
  require_open_unit(r, "build_positive_bound");
  Eigen::VectorXd mu0(3);
  Eigen::MatrixXd rt(3, 2), rp(3, 2);
  ConstructionKind kind;
  if (r > 0.5) {
    const double big = std::sqrt(2.0 * (1.0 + r) / (1.0 - r));
    const double c = std::sqrt(2.0 * (1.0 - r) / (3.0 + r));
    mu0 << (1.0 - r) / 4.0, (3.0 + r) / 8.0, (3.0 + r) / 8.0;
    rt << big, -big, c, c, -c, -c;
    rp << big, -big, -c, -c, c, c;
    kind = ConstructionKind::positive_bound;
  } else {
    // Half the base mass sits on s1, where the proxy is a scaled copy of the
    // true reward; s2 and s3 carry the uncorrelated part of the true reward.
    const double m = 0.5;
    const double c = std::sqrt((1.0 - r * r) / (1.0 - m));
    const double p = 1.0 / std::sqrt(m);
    mu0 << m, (1.0 - m) / 2.0, (1.0 - m) / 2.0;
    rt << r * p, -r * p, c, c, -c, -c;
    rp << p, -p, 0.0, 0.0, 0.0, 0.0;
    kind = ConstructionKind::positive_bound_balanced;
  }
  return Construction{bandit_mdp(mu0, 2),
                      RewardTable(rt),
                      RewardTable(rp),
                      TabularPolicy(two_action_policy({0.5, 1.0, 1.0})),
                      TabularPolicy(two_action_policy({1.0, 1.0, 1.0})),
                      r,
                      kind};
}

double ad_failure_radius(const DivergenceKind& f_kind, double threshold) {
  double rho = 1.0;
  for (int k = 0; k < 80; ++k, rho *= 0.5) {
    const double lo = std::max(0.0, 1.0 - rho), hi = 1.0 + rho;
    const int n = std::max(2, static_cast<int>(std::ceil((hi - lo) / 1e-4)));
    bool ok = true;
    for (int i = 0; i <= n && ok; ++i) {
      const double u = lo + (hi - lo) * static_cast<double>(i) / n;
      ok = f_kind.f(u) < threshold;
    }
    if (ok) return rho;
  }
  throw RadiusSearchFailed("ad_failure_radius: no radius found for f = " + f_kind.name());
}

Construction build_ad_failure(double r, const DivergenceKind& f_kind, ScalingKind g_kind) {
  require_open_unit(r, "build_ad_failure");
  const double ginv = scaling_inverse(g_kind, (1.0 - r) / 8.0);
  const double threshold = 2.0 * ginv / (1.0 - r);
  const double rho = ad_failure_radius(f_kind, threshold);
  const double f2 = f_kind.f(2.0);
  double gamma = std::max(1.0 / (1.0 + rho), 0.5);
  if (f2 > 0.0) gamma = std::max(gamma, 1.0 - threshold / f2);
  if (!(gamma < 1.0)) throw RadiusSearchFailed("build_ad_failure: discount reached 1");

  std::vector<std::vector<Transition>> rows(8);
  rows[0] = {{0, 1.0}};
  rows[1] = {{0, 1.0}};
  rows[2] = {{1, 1.0}};
  rows[3] = {{1, 1.0}};
  rows[4] = {{2, 1.0}};
  rows[5] = {{3, 1.0}};
  rows[6] = {{3, 1.0}};
  rows[7] = {{3, 1.0}};
  Eigen::VectorXd mu0(4);
  mu0 << (1.0 + r) / 4.0, (1.0 + r) / 4.0, (1.0 - r) * (1.0 + gamma) / 4.0, (1.0 - r) * (1.0 - gamma) / 4.0;
  Eigen::VectorXd rt(4), rp(4);
  rt << 1.0, -1.0, 1.0, -1.0;
  rp << 1.0, -1.0, -1.0, 1.0;

  Construction c{TabularMdp(4, 2, std::move(rows), mu0, gamma),
                 RewardTable::from_states(rt, 2),
                 RewardTable::from_states(rp, 2),
                 TabularPolicy(two_action_policy({1.0, 1.0, gamma, 1.0})),
                 TabularPolicy(two_action_policy({1.0, 1.0, 2.0 * gamma - 1.0, 1.0})),
                 r,
                 ConstructionKind::ad_failure};
  c.f_kind = f_kind;
  c.g_kind = g_kind;
  c.rho = rho;
  return c;
}

Construction build_bandit(std::uint64_t seed, int n_contexts, int n_actions) {
  if (n_contexts < 1 || n_actions < 2) throw InvalidArgument("build_bandit: need >= 1 context and >= 2 actions");
  Rng rng(seed);
  const auto m = rng.dirichlet(n_contexts);
  Eigen::VectorXd mu0 = Eigen::Map<const Eigen::VectorXd>(m.data(), n_contexts);
  Eigen::MatrixXd pa(n_contexts, n_actions), pb(n_contexts, n_actions), rt(n_contexts, n_actions);
  for (int s = 0; s < n_contexts; ++s) {
    const auto x = rng.dirichlet(n_actions);
    const auto y = rng.dirichlet(n_actions);
    for (int a = 0; a < n_actions; ++a) {
      pa(s, a) = x[a];
      pb(s, a) = y[a];
      rt(s, a) = rng.normal();
    }
  }
  return Construction{bandit_mdp(mu0, n_actions), RewardTable(rt),          RewardTable(rt),
                      TabularPolicy(pb),          TabularPolicy(pa),        1.0,
                      ConstructionKind::bandit};
}

Construction build_token_tree(int depth, int branching, std::uint64_t seed, double discount) {
  if (depth < 0 || branching < 1) throw InvalidArgument("build_token_tree: bad depth or branching");
  double count = 0.0, level = 1.0;
  for (int d = 0; d <= depth; ++d, level *= branching) count += level;
  if (count > 1e6) throw StateSpaceTooLarge("build_token_tree: too many prefix states");

  // Prefix states in breadth-first order: level d starts at first[d], and the
  // child of node i via token a is first[d+1] + (i - first[d]) * b + a.
  std::vector<int> first(depth + 2, 0);
  int width = 1;
  for (int d = 0; d <= depth; ++d, width *= branching) first[d + 1] = first[d] + width;
  const int sink = first[depth + 1];
  const int S = sink + 1;

  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(S) * branching);
  for (int d = 0; d <= depth; ++d)
    for (int i = first[d]; i < first[d + 1]; ++i)
      for (int a = 0; a < branching; ++a) {
        const int next = d < depth ? first[d + 1] + (i - first[d]) * branching + a : sink;
        rows[static_cast<std::size_t>(i) * branching + a] = {{next, 1.0}};
      }
  for (int a = 0; a < branching; ++a) rows[static_cast<std::size_t>(sink) * branching + a] = {{sink, 1.0}};

  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(S);
  mu0(0) = 1.0;
  Rng rng(seed);
  Eigen::MatrixXd pa(S, branching), pb(S, branching);
  for (int s = 0; s < sink; ++s) {
    const auto x = rng.dirichlet(branching);
    const auto y = rng.dirichlet(branching);
    for (int a = 0; a < branching; ++a) {
      pa(s, a) = x[a];
      pb(s, a) = y[a];
    }
  }
  pa.row(sink).setConstant(1.0 / branching);
  pb.row(sink).setConstant(1.0 / branching);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(S, branching);
  Construction c{TabularMdp(S, branching, std::move(rows), mu0, discount),
                 RewardTable(zero),
                 RewardTable(zero),
                 TabularPolicy(pb),
                 TabularPolicy(pa),
                 1.0,
                 ConstructionKind::token_tree};
  c.depth = depth;
  c.branching = branching;
  return c;
}

double ad_regularized_gain(const Construction& c, const TabularPolicy& pi) {
  if (!c.f_kind) throw InvalidArgument("ad_regularized_gain: construction has no f-divergence");
  const double gain = policy_return(c.mdp, pi, c.r_proxy) - policy_return(c.mdp, c.pi_base, c.r_proxy);
  return gain - apply_scaling(c.g_kind, ad_divergence(c.mdp, pi, c.pi_base, *c.f_kind));
}

TabularPolicy first_state_policy(const Construction& c, double p) {
  std::vector<double> firsts(static_cast<std::size_t>(c.mdp.n_states()), 1.0);
  firsts[0] = p;
  return TabularPolicy(two_action_policy(firsts));
}

bool VerificationReport::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return !checks.empty();
}

namespace {

void add_correlation_check(VerificationReport& rep, const Construction& c) {
  try {
    const auto pr = proxy_correlation(c.mdp, c.pi_base, c.r_true, c.r_proxy);
    rep.checks.push_back(make_check("correlation", pr.r, c.target_r, kCorrTol));
  } catch (const DegenerateReward& e) {
    rep.checks.push_back(make_flag("correlation", false, 0.0, c.target_r, e.what()));
  }
}

double bound_at(const Construction& c, const ProxyReport& pr, const TabularPolicy& pi) {
  return true_reward_lower_bound(c.mdp, c.pi_base, pi, c.r_proxy, pr).lower_bound_L;
}

void verify_unoptimizable(VerificationReport& rep, const Construction& c) {
  const double r = c.target_r;
  const auto pr = proxy_correlation(c.mdp, c.pi_base, c.r_true, c.r_proxy);
  if (c.kind == ConstructionKind::unoptimizable_small_r) {
    const double sigma = std::sqrt(1.0 / (1.0 + r));
    rep.checks.push_back(make_check("sigma_true", pr.sigma_true, sigma, 1e-12));
    rep.checks.push_back(make_check("sigma_proxy", pr.sigma_proxy, sigma, 1e-12));
  } else {
    const double sigma = std::sqrt(r / (r * r - r + 1.0));
    rep.checks.push_back(make_check("sigma_true", pr.sigma_true, sigma, 1e-12));
    rep.checks.push_back(make_check("sigma_proxy", pr.sigma_proxy, sigma, 1e-12));
  }
  const double jb = policy_return(c.mdp, c.pi_base, c.r_true);
  const double js = policy_return(c.mdp, c.pi_alt, c.r_true);
  const double jbp = policy_return(c.mdp, c.pi_base, c.r_proxy);
  const double jsp = policy_return(c.mdp, c.pi_alt, c.r_proxy);
  rep.checks.push_back(make_flag("improves_true", js > jb, js - jb, 0.0, "J(pi*,R) > J(base,R)"));
  rep.checks.push_back(make_flag("improves_proxy", jsp > jbp, jsp - jbp, 0.0, "J(pi*,proxy) > J(base,proxy)"));

  double best = -std::numeric_limits<double>::infinity(), best_p = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double p = i / 1000.0;
    const double l = bound_at(c, pr, first_state_policy(c, p));
    if (l > best) {
      best = l;
      best_p = p;
    }
  }
  rep.checks.push_back(make_flag("bound_grid_max", best <= 1e-9, best, 0.0,
                                 "max over pi(a1|s1) grid at p=" + std::to_string(best_p)));
}

void verify_positive_bound(VerificationReport& rep, const Construction& c) {
  const double r = c.target_r;
  const auto pr = proxy_correlation(c.mdp, c.pi_base, c.r_true, c.r_proxy);
  rep.checks.push_back(make_check("sigma_true", pr.sigma_true, 1.0, 1e-12));
  rep.checks.push_back(make_check("sigma_proxy", pr.sigma_proxy, 1.0, 1e-12));
  rep.checks.push_back(make_check("base_true_return", pr.j_base_true, 0.0, 1e-12));

  const double l_half = bound_at(c, pr, c.pi_alt);
  const double closed_form = c.kind == ConstructionKind::positive_bound
                                 ? std::sqrt(1.0 - r * r) / r * (0.5 / std::sqrt(2.0) - 0.5 * std::sqrt(1.0 - r))
                                 : std::sqrt(2.0) / r * 0.5 * (1.0 - std::sqrt(1.0 - r * r));
  rep.checks.push_back(make_flag("bound_positive", l_half > 0.0, l_half, 0.0, "L(pi_1/2) > 0"));
  rep.checks.push_back(make_check("bound_closed_form", l_half, closed_form, 1e-12));

  double best = -std::numeric_limits<double>::infinity(), best_delta = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double delta = -0.5 + i / 1000.0;
    const double l = bound_at(c, pr, first_state_policy(c, 0.5 + delta));
    if (l > best) {
      best = l;
      best_delta = delta;
    }
  }
  rep.checks.push_back(make_check("bound_argmax_delta", best_delta, 0.5, 1e-12));
  const double j_star = policy_return(c.mdp, policy_iteration(c.mdp, c.r_true).policy, c.r_true);
  rep.checks.push_back(make_check("argmax_is_true_optimal", policy_return(c.mdp, c.pi_alt, c.r_true), j_star, 1e-12));
}

void verify_ad_failure(VerificationReport& rep, const Construction& c) {
  const double r = c.target_r;
  const double g = c.mdp.discount();
  const auto base_state = exact_state_occupancy(c.mdp, c.pi_base);
  rep.checks.push_back(make_check("base_occupancy_s3", base_state.at(2), (1.0 - r) / 4.0, 1e-9));
  const double jb = policy_return(c.mdp, c.pi_base, c.r_true);
  const double jt = policy_return(c.mdp, c.pi_alt, c.r_true);
  rep.checks.push_back(make_check("base_true_return", jb, 0.0, 1e-9));
  rep.checks.push_back(make_check("tilde_true_return", jt, -g * (1.0 - r) / (2.0 * (1.0 + 2.0 * g)), 1e-9));
  const double jp = policy_return(c.mdp, c.pi_alt, c.r_proxy);
  rep.checks.push_back(make_flag("tilde_proxy_floor", jp >= (1.0 - r) / 8.0 - 1e-12, jp, (1.0 - r) / 8.0,
                                 "J(pi~,proxy) >= (1-r)/8"));
  const double lp = ad_regularized_gain(c, c.pi_alt);
  rep.checks.push_back(make_flag("regularized_gain_positive", lp > 0.0, lp, 0.0, "L'(pi~) > 0"));
  rep.checks.push_back(make_flag("hacking", hacking_verdict(c.mdp, c.pi_base, c.pi_alt, c.r_true), jt - jb, 0.0,
                                 "J(pi~,R) < J(base,R)"));
}

void verify_bandit(VerificationReport& rep, const Construction& c) {
  const auto mu = exact_occupancy(c.mdp, c.pi_alt);
  const auto nu = exact_occupancy(c.mdp, c.pi_base);
  for (const auto& kind : {DivergenceKind::chi2(), DivergenceKind::kl()}) {
    const Eigen::VectorXd per_state = per_state_divergence(c.pi_alt, c.pi_base, kind);
    const double expected = c.mdp.initial_dist().dot(per_state);
    rep.checks.push_back(make_check("om_equals_ad_" + kind.name(), om_divergence(mu, nu, kind), expected, 1e-12));
  }
}

/// Returns {sum_t gamma^t E[KL_t], sum_t E[KL_t]} over tree levels by
/// enumerating action paths from the root.
std::pair<double, double> token_tree_path_sums(const Construction& c) {
  const int b = c.branching;
  const double g = c.mdp.discount();
  const Eigen::VectorXd kl = per_state_divergence(c.pi_alt, c.pi_base, DivergenceKind::kl());
  double discounted = 0.0, plain = 0.0;
  std::function<void(int, int, double)> walk = [&](int s, int d, double prob) {
    discounted += prob * std::pow(g, d) * kl(s);
    plain += prob * kl(s);
    if (d == c.depth) return;
    for (int a = 0; a < b; ++a) walk(c.mdp.successors(s, a)[0].next, d + 1, prob * c.pi_alt(s, a));
  };
  walk(0, 0, 1.0);
  return {discounted, plain};
}

void verify_token_tree(VerificationReport& rep, const Construction& c) {
  const double g = c.mdp.discount();
  const auto mu = exact_occupancy(c.mdp, c.pi_alt);
  const auto nu = exact_occupancy(c.mdp, c.pi_base);
  const double om_kl = om_divergence(mu, nu, DivergenceKind::kl());
  const auto [ad_sum, plain_sum] = token_tree_path_sums(c);
  const double tail_factor = std::pow(g, c.depth + 1);
  const Eigen::VectorXd kl = per_state_divergence(c.pi_alt, c.pi_base, DivergenceKind::kl());
  const double tail_bound = tail_factor * (c.depth + 1) * kl.maxCoeff() + 1e-12;
  Check within = make_flag("om_kl_vs_ad_sum", std::abs(om_kl - ad_sum) <= tail_bound, om_kl, ad_sum,
                           "tail bound " + std::to_string(tail_bound));
  rep.checks.push_back(within);
  rep.checks.push_back(make_check("om_kl_truncation_exact", om_kl, ad_sum - tail_factor * plain_sum, 1e-12));
}

}  // namespace

VerificationReport verify(const Construction& c) {
  VerificationReport rep;
  rep.label = to_string(c.kind);
  rep.target_r = c.target_r;
  try {
    switch (c.kind) {
      case ConstructionKind::unoptimizable_small_r:
      case ConstructionKind::unoptimizable_large_r:
        add_correlation_check(rep, c);
        verify_unoptimizable(rep, c);
        break;
      case ConstructionKind::positive_bound:
      case ConstructionKind::positive_bound_balanced:
        add_correlation_check(rep, c);
        verify_positive_bound(rep, c);
        break;
      case ConstructionKind::ad_failure:
        add_correlation_check(rep, c);
        verify_ad_failure(rep, c);
        break;
      case ConstructionKind::bandit:
        verify_bandit(rep, c);
        break;
      case ConstructionKind::token_tree:
        verify_token_tree(rep, c);
        break;
    }
  } catch (const Error& e) {
    rep.checks.push_back(make_flag("exception", false, 0.0, 0.0, e.what()));
  }
  return rep;
}

}  // namespace omreg
