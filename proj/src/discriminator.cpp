#include "omreg/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "omreg/errors.hpp"
#include "omreg/rng.hpp"

namespace omreg {

namespace {

/// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double total_weight(const SampleSet& xs) {
  double w = 0.0;
  for (const auto& x : xs) w += x.weight;
  return w;
}

void require_nonempty(const SampleSet& xs, const char* what) {
  if (xs.empty() || !(total_weight(xs) > 0.0)) throw InvalidArgument(std::string(what) + ": empty sample set");
}

}  // namespace

SampleSet to_samples(const Batch& batch, bool discount_weighted) {
  SampleSet out;
  out.reserve(batch.num_steps());
  for (const auto& traj : batch.trajectories) {
    double w = 1.0;
    for (const auto& st : traj.steps) {
      out.push_back({st.state, st.action, w});
      if (discount_weighted) w *= batch.discount;
    }
  }
  return out;
}

SampleSet occupancy_as_samples(const OccupancyMeasure& om) {
  SampleSet out;
  if (om.kind() == OccupancyKind::state) {
    for (int s = 0; s < om.n_states(); ++s)
      if (om.at(s) > 0.0) out.push_back({s, 0, om.at(s)});
  } else {
    for (int s = 0; s < om.n_states(); ++s)
      for (int a = 0; a < om.n_actions(); ++a)
        if (om.at(s, a) > 0.0) out.push_back({s, a, om.at(s, a)});
  }
  return out;
}

SampleSet sample_from_occupancy(const OccupancyMeasure& om, int n, std::uint64_t seed) {
  if (om.kind() != OccupancyKind::state_action) throw InvalidArgument("sample_from_occupancy: needs state-action kind");
  const auto& w = om.weights();
  std::vector<double> cdf(static_cast<std::size_t>(w.size()));
  std::partial_sum(w.data(), w.data() + w.size(), cdf.begin());
  const double total = cdf.back();
  Rng rng(seed);
  SampleSet out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int idx = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), w.size() - 1));
    while (w(idx) == 0.0 && idx > 0) --idx;
    out.push_back({idx / om.n_actions(), idx % om.n_actions(), 1.0});
  }
  return out;
}

Discriminator::Discriminator(int n_states, int n_actions, DiscriminatorInput input, DiscriminatorConfig cfg,
                             std::uint64_t seed)
    : n_states_(n_states), n_actions_(n_actions), input_(input), cfg_(std::move(cfg)), seed_(seed) {
  if (n_states <= 0 || n_actions <= 0) throw InvalidArgument("Discriminator: sizes must be positive");
  const int dim = input == DiscriminatorInput::state ? n_states : n_states * n_actions;
  if (cfg_.mode == DiscriminatorMode::tabular) {
    logits_ = Eigen::VectorXd::Zero(dim);
  } else {
    const int in = input == DiscriminatorInput::state ? n_states : n_states + n_actions;
    net_ = Mlp(in, cfg_.hidden, seed);
    adam_ = Adam(net_.num_params(), cfg_.lr);
  }
}

Eigen::VectorXd Discriminator::features(int s, int a) const {
  const int in = net_.input_dim();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(in);
  x(s) = 1.0;
  if (input_ == DiscriminatorInput::state_action) x(n_states_ + a) = 1.0;
  return x;
}

double Discriminator::operator()(int s, int a) const {
  if (cfg_.mode == DiscriminatorMode::tabular) return logits_(index(s, a));
  return net_.forward(features(s, a));
}

void Discriminator::set_logits(const Eigen::MatrixXd& logits) {
  if (cfg_.mode != DiscriminatorMode::tabular) throw InvalidArgument("set_logits: tabular mode only");
  const int cols = input_ == DiscriminatorInput::state ? 1 : n_actions_;
  if (logits.rows() != n_states_ || logits.cols() != cols) throw InvalidArgument("set_logits: wrong shape");
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < cols; ++a) logits_(index(s, a)) = logits(s, a);
}

Eigen::MatrixXd Discriminator::logit_table() const {
  const int cols = input_ == DiscriminatorInput::state ? 1 : n_actions_;
  Eigen::MatrixXd out(n_states_, cols);
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < cols; ++a) out(s, a) = (*this)(s, a);
  return out;
}

double Discriminator::fit(const SampleSet& pi_samples, const SampleSet& base_samples) {
  require_nonempty(pi_samples, "Discriminator::fit");
  require_nonempty(base_samples, "Discriminator::fit");
  ++fits_;
  return cfg_.mode == DiscriminatorMode::tabular ? fit_tabular(pi_samples, base_samples)
                                                 : fit_feedforward(pi_samples, base_samples);
}

double Discriminator::fit_tabular(const SampleSet& pi_samples, const SampleSet& base_samples) {
  // The loss separates across table entries, so each logit gets its own
  // diagonal-Newton step; entries absent from both sets keep their value.
  const Eigen::Index n = logits_.size();
  Eigen::VectorXd wp = Eigen::VectorXd::Zero(n), wb = Eigen::VectorXd::Zero(n);
  const double tp = total_weight(pi_samples), tb = total_weight(base_samples);
  for (const auto& x : pi_samples) wp(index(x.state, x.action)) += x.weight / tp;
  for (const auto& x : base_samples) wb(index(x.state, x.action)) += x.weight / tb;

  const double bound = cfg_.logit_bound, l2 = cfg_.l2;
  auto loss_at = [&](const Eigen::VectorXd& d) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (wp(i) > 0.0) l += wp(i) * softplus(-d(i));
      if (wb(i) > 0.0) l += wb(i) * softplus(d(i));
    }
    return l + 0.5 * l2 * d.squaredNorm();
  };
  double loss = loss_at(logits_);
  for (int it = 0; it < cfg_.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (wp(i) == 0.0 && wb(i) == 0.0 && l2 == 0.0) continue;
      const double d = logits_(i);
      const double sp = sigmoid(d), sm = 1.0 - sp;
      const double g = -wp(i) * sm + wb(i) * sp + l2 * d;
      const double h = (wp(i) + wb(i)) * sp * sm + l2;
      double step = h > 1e-300 ? g / h : (g > 0.0 ? 1.0 : -1.0);
      step = std::clamp(step, -2.0, 2.0);
      logits_(i) = std::clamp(d - step, -bound, bound);
    }
    const double next = loss_at(logits_);
    const double decrease = loss - next;
    loss = next;
    if (std::abs(decrease) < cfg_.tol) break;
  }
  return loss;
}

double Discriminator::fit_feedforward(const SampleSet& pi_samples, const SampleSet& base_samples) {
  Rng rng = Rng(seed_).split(fits_);
  const double tp = total_weight(pi_samples), tb = total_weight(base_samples);
  // Each sample carries its label and normalized weight.
  struct Item {
    int s, a;
    double w;
    bool from_pi;
  };
  std::vector<Item> items;
  items.reserve(pi_samples.size() + base_samples.size());
  for (const auto& x : pi_samples) items.push_back({x.state, x.action, x.weight / tp, true});
  for (const auto& x : base_samples) items.push_back({x.state, x.action, x.weight / tb, false});
  const std::size_t n = items.size();
  const double mean_w_scale = static_cast<double>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(std::max(1, cfg_.minibatch));
  Eigen::VectorXd grad(net_.num_params());
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      grad.setZero();
      const double scale = mean_w_scale / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& it = items[order[k]];
        const double d = net_.forward(features(it.s, it.a));
        // d/dd of softplus(-d) is -sigmoid(-d); of softplus(d) is sigmoid(d).
        const double g = it.from_pi ? -sigmoid(-d) : sigmoid(d);
        net_.accumulate_gradient(features(it.s, it.a), scale * it.w * g, grad);
      }
      if (!grad.allFinite()) throw NonFiniteGradient("discriminator gradient is not finite");
      adam_.step(net_.params(), grad);
    }
  }
  return discriminator_loss(*this, pi_samples, base_samples);
}

double discriminator_loss(const Discriminator& d, const SampleSet& pi_samples, const SampleSet& base_samples) {
  require_nonempty(pi_samples, "discriminator_loss");
  require_nonempty(base_samples, "discriminator_loss");
  double lp = 0.0, lb = 0.0;
  for (const auto& x : pi_samples) lp += x.weight * softplus(-d(x.state, x.action));
  for (const auto& x : base_samples) lb += x.weight * softplus(d(x.state, x.action));
  return lp / total_weight(pi_samples) + lb / total_weight(base_samples);
}

double discriminator_loss(const Discriminator& d, const Batch& batch_pi, const Batch& batch_base) {
  return discriminator_loss(d, to_samples(batch_pi), to_samples(batch_base));
}

double estimate_chi2(const Discriminator& d, const SampleSet& pi_samples, double trim_fraction) {
  require_nonempty(pi_samples, "estimate_chi2");
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) throw InvalidArgument("estimate_chi2: trim must be in [0, 0.5)");
  std::vector<std::pair<double, double>> vw;
  vw.reserve(pi_samples.size());
  for (const auto& x : pi_samples) vw.emplace_back(std::expm1(d(x.state, x.action)), x.weight);
  std::sort(vw.begin(), vw.end());
  const double total = total_weight(pi_samples);
  const double lo = trim_fraction * total, hi = (1.0 - trim_fraction) * total;
  double acc = 0.0, cum = 0.0;
  for (const auto& [v, w] : vw) {
    const double a = std::max(cum, lo), b = std::min(cum + w, hi);
    if (b > a) acc += v * (b - a);
    cum += w;
  }
  return acc / (hi - lo);
}

double estimate_chi2(const Discriminator& d, const Batch& batch_pi, double trim_fraction) {
  return estimate_chi2(d, to_samples(batch_pi), trim_fraction);
}

}  // namespace omreg
