#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace omreg {

/// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  double lr() const { return lr_; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// Scales `grad` in place so its Euclidean norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(Eigen::Ref<Eigen::VectorXd> grad, double max_norm);

/// Scalar-output perceptron with tanh hidden layers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, std::vector<int> hidden, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  Eigen::Index num_params() const { return params_.size(); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  double forward(const Eigen::VectorXd& x) const;
  /// Adds grad_out * d(output)/d(params) into `grad`. Returns the output.
  double accumulate_gradient(const Eigen::VectorXd& x, double grad_out, Eigen::VectorXd& grad) const;

 private:
  struct Layer {
    int in, out;
    Eigen::Index w_offset, b_offset;
  };
  int input_dim_ = 0;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_;
};

}  // namespace omreg
