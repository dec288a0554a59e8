#include "omreg/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "omreg/errors.hpp"

namespace omreg {

PolicyParams::PolicyParams(Eigen::MatrixXd logits) : logits_(std::move(logits)) {
  if (!logits_.allFinite()) throw InvalidArgument("PolicyParams: non-finite logits");
}

PolicyParams PolicyParams::uniform(int n_states, int n_actions) {
  return PolicyParams(Eigen::MatrixXd::Zero(n_states, n_actions));
}

PolicyParams PolicyParams::from_policy(const TabularPolicy& pi, double floor) {
  return PolicyParams(pi.probs().cwiseMax(floor).array().log().matrix());
}

Eigen::VectorXd softmax_row(const Eigen::MatrixXd& logits, int s) {
  Eigen::VectorXd z = logits.row(s).transpose();
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

TabularPolicy PolicyParams::policy() const {
  Eigen::MatrixXd p(logits_.rows(), logits_.cols());
  for (int s = 0; s < n_states(); ++s) p.row(s) = softmax_row(logits_, s).transpose();
  return TabularPolicy(std::move(p));
}

Eigen::MatrixXd surrogate_gradient(const Eigen::MatrixXd& logits, std::span<const SurrogateSample> samples,
                                   double clip_param, const AdPenalty* ad) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  for (const auto& x : samples) {
    const Eigen::VectorXd pi = softmax_row(logits, x.state);
    const double q = pi(x.action);
    const double ratio = std::exp(std::log(q) - x.old_log_prob);
    // d q / d logits(s, .) = q (e_a - pi)
    Eigen::VectorXd dq = -q * pi;
    dq(x.action) += q;
    const double clipped = std::clamp(ratio, 1.0 - clip_param, 1.0 + clip_param);
    if (ratio * x.advantage <= clipped * x.advantage) {
      // d ratio / d logits = ratio (e_a - pi) = dq / q_old
      g.row(x.state) += (x.weight * x.advantage * std::exp(-x.old_log_prob)) * dq.transpose();
    }
    if (ad != nullptr && ad->lambda != 0.0) {
      const double b = (*ad->base)(x.state, x.action);
      const double q_old = std::exp(x.old_log_prob);
      const double u = q / b;
      const double coef = per_sample_estimator(u, ad->family) / q_old +
                          (q / q_old) * per_sample_estimator_derivative(u, ad->family) / b;
      g.row(x.state) -= (ad->lambda * x.weight * coef) * dq.transpose();
    }
  }
  return g;
}

PpoState make_ppo_state(PolicyParams params, const PpoHyper& hyper) {
  PpoState st;
  const Eigen::Index n = params.logits().size();
  st.value = Eigen::VectorXd::Zero(params.n_states());
  st.params = std::move(params);
  st.adam = Adam(n, hyper.lr);
  st.kl_coeff = hyper.kl_coeff_init;
  return st;
}

std::vector<double> compute_gae(const Batch& batch, const Eigen::VectorXd& value, double gae_lambda) {
  std::vector<double> adv;
  adv.reserve(batch.num_steps());
  const double g = batch.discount;
  for (const auto& traj : batch.trajectories) {
    const std::size_t n = traj.steps.size();
    std::vector<double> a(n);
    double running = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      const auto& st = traj.steps[k];
      // Trajectories are truncations of an infinite horizon, so the last
      // step bootstraps from the value of its successor.
      const double delta = st.reward + g * value(st.next_state) - value(st.state);
      running = delta + (k + 1 < n ? g * gae_lambda * running : 0.0);
      a[k] = running;
    }
    adv.insert(adv.end(), a.begin(), a.end());
  }
  return adv;
}

PpoStats policy_update(PpoState& state, const Batch& batch, const PpoHyper& hyper, Rng& rng, const AdPenalty* ad) {
  const std::size_t n = batch.num_steps();
  if (n == 0) throw InvalidArgument("policy_update: empty batch");
  if (ad != nullptr && ad->base == nullptr) throw InvalidArgument("policy_update: AD penalty without base policy");
  auto& logits = state.params.logits();
  const Eigen::MatrixXd old_logits = logits;
  const int S = state.params.n_states();

  const std::vector<double> adv = compute_gae(batch, state.value, hyper.gae_lambda);

  std::vector<SurrogateSample> samples;
  samples.reserve(n);
  {
    std::size_t k = 0;
    Eigen::VectorXd ret_sum = Eigen::VectorXd::Zero(S), ret_cnt = Eigen::VectorXd::Zero(S);
    for (const auto& traj : batch.trajectories)
      for (const auto& st : traj.steps) {
        const double old_lp = std::log(softmax_row(old_logits, st.state)(st.action));
        samples.push_back({st.state, st.action, adv[k], old_lp, 1.0});
        ret_sum(st.state) += adv[k] + state.value(st.state);
        ret_cnt(st.state) += 1.0;
        ++k;
      }
    for (int s = 0; s < S; ++s)
      if (ret_cnt(s) > 0.0) {
        const double diff = std::clamp(ret_sum(s) / ret_cnt(s) - state.value(s), -hyper.vf_clip, hyper.vf_clip);
        state.value(s) += hyper.value_lr * diff;
      }
  }

  PpoStats stats;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(std::max(1, hyper.minibatch));
  std::vector<SurrogateSample> chunk;
  Eigen::Map<Eigen::VectorXd> flat(logits.data(), logits.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const double w = 1.0 / static_cast<double>(end - start);
      chunk.clear();
      for (std::size_t k = start; k < end; ++k) {
        chunk.push_back(samples[order[k]]);
        chunk.back().weight = w;
      }
      Eigen::MatrixXd ascent = surrogate_gradient(logits, chunk, hyper.clip_param, ad);
      for (const auto& x : chunk) {
        const Eigen::VectorXd pi = softmax_row(logits, x.state);
        const Eigen::VectorXd logp = pi.array().max(1e-300).log();
        const double h = -pi.dot(logp);
        // dH/dlogits = -pi (log pi + H)
        ascent.row(x.state) += (hyper.entropy_coef * w) * (-(pi.array() * (logp.array() + h))).matrix().transpose();
        if (hyper.use_kl_penalty) {
          const Eigen::VectorXd old = softmax_row(old_logits, x.state);
          ascent.row(x.state) -= (state.kl_coeff * w) * (pi - old).transpose();
        }
      }
      Eigen::VectorXd grad = -Eigen::Map<Eigen::VectorXd>(ascent.data(), ascent.size());
      if (!grad.allFinite()) throw NonFiniteGradient("policy gradient is not finite (epoch " + std::to_string(epoch) + ")");
      stats.grad_norm = clip_grad_norm(grad, hyper.grad_clip);
      state.adam.step(flat, grad);
    }
  }

  double kl = 0.0, ent = 0.0, pen = 0.0;
  for (const auto& x : samples) {
    const Eigen::VectorXd pi = softmax_row(logits, x.state);
    const Eigen::VectorXd old = softmax_row(old_logits, x.state);
    for (Eigen::Index a = 0; a < pi.size(); ++a) {
      if (old(a) > 0.0) kl += old(a) * (std::log(old(a)) - std::log(std::max(pi(a), 1e-300)));
      if (pi(a) > 0.0) ent -= pi(a) * std::log(pi(a));
    }
    if (ad != nullptr && ad->lambda != 0.0)
      pen += per_sample_estimator(old(x.action) / (*ad->base)(x.state, x.action), ad->family);
  }
  stats.mean_kl = kl / static_cast<double>(n);
  stats.entropy = ent / static_cast<double>(n);
  stats.penalty = pen / static_cast<double>(n);
  if (hyper.use_kl_penalty) {
    if (stats.mean_kl > 2.0 * hyper.kl_target)
      state.kl_coeff *= 1.5;
    else if (stats.mean_kl < 0.5 * hyper.kl_target)
      state.kl_coeff *= 0.5;
  }
  return stats;
}

}  // namespace omreg
