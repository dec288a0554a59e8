#include "omreg/mlp.hpp"

#include <cmath>

#include "omreg/errors.hpp"
#include "omreg/rng.hpp"

namespace omreg {

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw InvalidArgument("Adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

double clip_grad_norm(Eigen::Ref<Eigen::VectorXd> grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

Mlp::Mlp(int input_dim, std::vector<int> hidden, std::uint64_t seed) : input_dim_(input_dim) {
  if (input_dim <= 0) throw InvalidArgument("Mlp: input_dim must be positive");
  hidden.push_back(1);
  Eigen::Index offset = 0;
  int in = input_dim;
  for (int out : hidden) {
    if (out <= 0) throw InvalidArgument("Mlp: layer sizes must be positive");
    layers_.push_back({in, out, offset, offset + static_cast<Eigen::Index>(in) * out});
    offset += static_cast<Eigen::Index>(in) * out + out;
    in = out;
  }
  params_ = Eigen::VectorXd::Zero(offset);
  Rng rng(seed);
  for (const auto& l : layers_) {
    const double scale = std::sqrt(1.0 / l.in);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(l.in) * l.out; ++i)
      params_(l.w_offset + i) = scale * rng.normal();
  }
}

double Mlp::forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.b_offset, l.out);
    Eigen::VectorXd z = w * h + b;
    h = k + 1 < layers_.size() ? Eigen::VectorXd(z.array().tanh()) : z;
  }
  return h(0);
}

double Mlp::accumulate_gradient(const Eigen::VectorXd& x, double grad_out, Eigen::VectorXd& grad) const {
  std::vector<Eigen::VectorXd> acts{x};
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.b_offset, l.out);
    Eigen::VectorXd z = w * acts.back() + b;
    acts.push_back(k + 1 < layers_.size() ? Eigen::VectorXd(z.array().tanh()) : z);
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, grad_out);
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.b_offset, l.out);
    gw.noalias() += delta * acts[k].transpose();
    gb += delta;
    if (k == 0) break;
    Eigen::VectorXd back = w.transpose() * delta;
    delta = back.array() * (1.0 - acts[k].array().square());
  }
  return acts.back()(0);
}

}  // namespace omreg
