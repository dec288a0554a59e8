#include "omreg/envs.hpp"

#include <bit>
#include <cmath>
#include <map>

#include "omreg/errors.hpp"
#include "omreg/rng.hpp"

namespace omreg {

GridworldSpec default_tomato_spec() {
  GridworldSpec spec;
  spec.layout = {
      "#########",
      "#T..A..S#",
      "#########",
  };
  return spec;
}

void validate_gridworld(const GridworldSpec& spec) {
  if (spec.layout.empty()) throw InvalidArgument("gridworld: empty layout");
  const std::size_t width = spec.layout.front().size();
  int sprinklers = 0, tomatoes = 0, starts = 0;
  for (const auto& row : spec.layout) {
    if (row.size() != width) throw InvalidArgument("gridworld: layout is not rectangular");
    for (char ch : row) {
      switch (ch) {
        case '#':
        case '.':
          break;
        case 'T':
          ++tomatoes;
          break;
        case 'S':
          ++sprinklers;
          break;
        case 'A':
          ++starts;
          break;
        default:
          throw InvalidArgument(std::string("gridworld: unknown layout character '") + ch + "'");
      }
    }
  }
  if (sprinklers != 1) throw InvalidArgument("gridworld: need exactly one sprinkler cell");
  if (tomatoes < 1) throw InvalidArgument("gridworld: need at least one tomato");
  if (starts != 1) throw InvalidArgument("gridworld: need exactly one start cell");
  if (!(spec.dry_steps >= 1.0)) throw InvalidArgument("gridworld: dry_steps must be >= 1");
  if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) throw InvalidArgument("gridworld: slip must be in [0,1]");
  if (!(spec.reset_prob >= 0.0 && spec.reset_prob <= 1.0))
    throw InvalidArgument("gridworld: reset_prob must be in [0,1]");
  if (!(spec.discount >= 0.0 && spec.discount < 1.0)) throw InvalidArgument("gridworld: discount must be in [0,1)");
}

TomatoWorld tomato_gridworld(const GridworldSpec& spec) {
  validate_gridworld(spec);
  const int H = static_cast<int>(spec.layout.size());
  const int W = static_cast<int>(spec.layout.front().size());
  std::vector<int> cell_index(static_cast<std::size_t>(H) * W, -1);
  std::vector<std::pair<int, int>> coords;
  std::vector<int> tomato_of_cell;
  int n_tomatoes = 0, sprinkler = -1, start = -1;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const char ch = spec.layout[i][j];
      if (ch == '#') continue;
      const int c = static_cast<int>(coords.size());
      cell_index[static_cast<std::size_t>(i) * W + j] = c;
      coords.emplace_back(i, j);
      tomato_of_cell.push_back(ch == 'T' ? n_tomatoes++ : -1);
      if (ch == 'S') sprinkler = c;
      if (ch == 'A') start = c;
    }
  const int n_cells = static_cast<int>(coords.size());
  if (n_tomatoes > 20) throw StateSpaceTooLarge("gridworld: too many tomatoes");
  const long long n_states_ll = static_cast<long long>(n_cells) << n_tomatoes;
  if (n_states_ll > spec.max_states)
    throw StateSpaceTooLarge("gridworld: " + std::to_string(n_states_ll) + " states exceed the cap of " +
                             std::to_string(spec.max_states));
  const int S = static_cast<int>(n_states_ll);
  const int A = 4;
  const unsigned n_bits = 1u << n_tomatoes;

  auto move = [&](int cell, int a) {
    static const int di[4] = {-1, 1, 0, 0};
    static const int dj[4] = {0, 0, -1, 1};
    const int i = coords[cell].first + di[a], j = coords[cell].second + dj[a];
    if (i < 0 || i >= H || j < 0 || j >= W) return cell;
    if (spec.sprinkler_trap && cell == sprinkler) return cell;
    const int next = cell_index[static_cast<std::size_t>(i) * W + j];
    return next < 0 ? cell : next;
  };

  // Drying probabilities: P(bits' | bits, cell') with the tomato under the
  // agent watered after drying.
  const double p_dry = 1.0 / spec.dry_steps;
  auto bit_outcomes = [&](unsigned bits, int next_cell) {
    std::vector<std::pair<unsigned, double>> out;
    for (unsigned nb = 0; nb < n_bits; ++nb) {
      if ((nb & ~bits) != 0) continue;  // drying can only clear bits
      double p = 1.0;
      for (int k = 0; k < n_tomatoes; ++k) {
        if (!(bits >> k & 1u)) continue;
        p *= (nb >> k & 1u) ? 1.0 - p_dry : p_dry;
      }
      if (p == 0.0) continue;
      const int t = tomato_of_cell[next_cell];
      out.emplace_back(t >= 0 ? nb | (1u << t) : nb, p);
    }
    return out;
  };

  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(S);
  mu0((start << n_tomatoes) | 0) = 1.0;

  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(S) * A);
  for (int cell = 0; cell < n_cells; ++cell)
    for (unsigned bits = 0; bits < n_bits; ++bits) {
      const int s = static_cast<int>((static_cast<unsigned>(cell) << n_tomatoes) | bits);
      for (int a = 0; a < A; ++a) {
        std::map<int, double> acc;
        for (int eff = 0; eff < A; ++eff) {
          const double pa = (eff == a ? 1.0 - spec.slip : 0.0) + spec.slip / A;
          if (pa == 0.0) continue;
          const int nc = move(cell, eff);
          for (const auto& [nb, pb] : bit_outcomes(bits, nc))
            acc[static_cast<int>((static_cast<unsigned>(nc) << n_tomatoes) | nb)] +=
                (1.0 - spec.reset_prob) * pa * pb;
        }
        if (spec.reset_prob > 0.0)
          for (int s0 = 0; s0 < S; ++s0)
            if (mu0(s0) > 0.0) acc[s0] += spec.reset_prob * mu0(s0);
        auto& row = rows[static_cast<std::size_t>(s) * A + a];
        double total = 0.0;
        for (const auto& [next, p] : acc) total += p;
        for (const auto& [next, p] : acc) row.push_back({next, p / total});
      }
    }

  Eigen::VectorXd rt(S), rp(S);
  for (int s = 0; s < S; ++s) {
    const unsigned bits = static_cast<unsigned>(s) & (n_bits - 1u);
    rt(s) = static_cast<double>(std::popcount(bits)) / n_tomatoes;
    rp(s) = (s >> n_tomatoes) == sprinkler ? 1.0 : rt(s);
  }

  return TomatoWorld{spec,
                     TabularMdp(S, A, std::move(rows), mu0, spec.discount),
                     RewardTable::from_states(rt, A),
                     RewardTable::from_states(rp, A),
                     n_cells,
                     n_tomatoes,
                     std::move(coords),
                     sprinkler,
                     start};
}

TabularPolicy base_policy_for(const TabularMdp& mdp, const RewardTable& r_true, double epsilon_random) {
  if (!(epsilon_random >= 0.0 && epsilon_random <= 1.0))
    throw InvalidArgument("base_policy_for: epsilon must be in [0,1]");
  const auto opt = policy_iteration(mdp, r_true);
  if (epsilon_random == 0.0) return opt.policy;
  return opt.policy.mix(TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()), epsilon_random);
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, double sparsity, std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1) throw InvalidArgument("random_mdp: sizes must be positive");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw InvalidArgument("random_mdp: sparsity must be in [0,1)");
  Rng rng(seed);
  std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n_states) * n_actions);
  for (auto& row : rows) {
    std::vector<int> support;
    for (int s = 0; s < n_states; ++s)
      if (rng.uniform() >= sparsity) support.push_back(s);
    if (support.empty()) support.push_back(rng.uniform_int(n_states));
    const auto w = rng.dirichlet(static_cast<int>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) row.push_back({support[k], w[k]});
    // Absorb round-off so the row sums to 1 well within tolerance.
    double total = 0.0;
    for (const auto& t : row) total += t.prob;
    for (auto& t : row) t.prob /= total;
  }
  const auto m = rng.dirichlet(n_states);
  Eigen::VectorXd mu0 = Eigen::Map<const Eigen::VectorXd>(m.data(), n_states);
  mu0 /= mu0.sum();
  return TabularMdp(n_states, n_actions, std::move(rows), mu0, gamma);
}

TabularPolicy random_policy(int n_states, int n_actions, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd p(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    const auto row = rng.dirichlet(n_actions);
    double total = 0.0;
    for (double x : row) total += x;
    for (int a = 0; a < n_actions; ++a) p(s, a) = row[a] / total;
  }
  return TabularPolicy(std::move(p));
}

std::pair<RewardTable, RewardTable> random_reward_pair(const TabularMdp& mdp, const TabularPolicy& pi_base,
                                                       double target_r, std::uint64_t seed) {
  if (!(target_r > 0.0 && target_r <= 1.0)) throw InvalidArgument("random_reward_pair: target_r must be in (0,1]");
  const int S = mdp.n_states(), A = mdp.n_actions();
  const Eigen::VectorXd w = exact_occupancy(mdp, pi_base).weights();
  Rng rng(seed);
  Eigen::VectorXd r(static_cast<Eigen::Index>(S) * A), n(static_cast<Eigen::Index>(S) * A);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
  for (Eigen::Index i = 0; i < n.size(); ++i) n(i) = rng.normal();

  auto mean = [&](const Eigen::VectorXd& x) { return w.dot(x); };
  auto inner = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return w.dot(x.cwiseProduct(y)); };
  Eigen::VectorXd rc = r.array() - mean(r);
  Eigen::VectorXd nc = n.array() - mean(n);
  const double rr = inner(rc, rc);
  if (rr < 1e-18) throw CorrelationUnreachable("random_reward_pair: true reward is constant on the base support");
  nc -= (inner(nc, rc) / rr) * rc;
  const double nn = inner(nc, nc);
  const double beta = std::sqrt(std::max(0.0, 1.0 - target_r * target_r));
  if (beta > 0.0 && nn < 1e-18)
    throw CorrelationUnreachable("random_reward_pair: noise direction degenerates on the base support");
  Eigen::VectorXd proxy = target_r * rc / std::sqrt(rr);
  if (beta > 0.0) proxy += beta * nc / std::sqrt(nn);
  const double scale = 0.5 + 1.5 * rng.uniform();
  const double offset = rng.normal();
  proxy = (scale * proxy).array() + offset;

  Eigen::MatrixXd rt(S, A), rp(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      rt(s, a) = r(static_cast<Eigen::Index>(s) * A + a);
      rp(s, a) = proxy(static_cast<Eigen::Index>(s) * A + a);
    }
  return {RewardTable(rt), RewardTable(rp)};
}

}  // namespace omreg
