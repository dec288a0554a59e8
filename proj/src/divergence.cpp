#include "omreg/divergence.hpp"

#include <cmath>
#include <limits>

#include "omreg/errors.hpp"

namespace omreg {

DivergenceKind DivergenceKind::chi2() {
  return {DivergenceFamily::chi2, "chi2", [](double u) { return (u - 1.0) * (u - 1.0); }};
}

DivergenceKind DivergenceKind::kl() {
  return {DivergenceFamily::kl, "kl", [](double u) { return u > 0.0 ? u * std::log(u) : 0.0; }};
}

DivergenceKind DivergenceKind::tv() {
  return {DivergenceFamily::tv, "tv", [](double u) { return 0.5 * std::abs(u - 1.0); }};
}

DivergenceKind DivergenceKind::generic(std::string name, std::function<double(double)> f) {
  if (!f) throw InvalidArgument("generic divergence needs a function");
  if (std::abs(f(1.0)) > 1e-12) throw InvalidArgument("generic divergence: f(1) must be 0");
  return {DivergenceFamily::generic, std::move(name), std::move(f)};
}

double f_divergence(std::span<const double> p, std::span<const double> q, const DivergenceKind& kind) {
  if (p.size() != q.size()) throw InvalidArgument("f_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i], qi = q[i];
    if (pi < 0.0 || qi < 0.0) throw InvalidArgument("f_divergence: negative mass");
    if (kind.family() == DivergenceFamily::tv) {
      total += 0.5 * std::abs(pi - qi);
      continue;
    }
    if (qi == 0.0) {
      if (pi > 0.0)
        throw AbsoluteContinuityViolated("f_divergence(" + kind.name() + "): mass at index " +
                                         std::to_string(i) + " where the reference has none");
      continue;
    }
    switch (kind.family()) {
      case DivergenceFamily::chi2:
        total += (pi - qi) * (pi - qi) / qi;
        break;
      case DivergenceFamily::kl:
        if (pi > 0.0) total += pi * std::log(pi / qi);
        break;
      default:
        total += qi * kind.f(pi / qi);
    }
  }
  return total;
}

double om_divergence(const OccupancyMeasure& mu, const OccupancyMeasure& nu, const DivergenceKind& kind) {
  if (!mu.same_shape(nu)) throw InvalidArgument("om_divergence: occupancy measures differ in shape");
  const auto& a = mu.weights();
  const auto& b = nu.weights();
  return f_divergence({a.data(), static_cast<std::size_t>(a.size())},
                      {b.data(), static_cast<std::size_t>(b.size())}, kind);
}

Eigen::VectorXd per_state_divergence(const TabularPolicy& pi, const TabularPolicy& pi_base,
                                     const DivergenceKind& kind) {
  if (pi.n_states() != pi_base.n_states() || pi.n_actions() != pi_base.n_actions())
    throw InvalidArgument("per_state_divergence: policy shapes differ");
  Eigen::VectorXd out(pi.n_states());
  std::vector<double> p(pi.n_actions()), q(pi.n_actions());
  for (int s = 0; s < pi.n_states(); ++s) {
    for (int a = 0; a < pi.n_actions(); ++a) {
      p[a] = pi(s, a);
      q[a] = pi_base(s, a);
    }
    try {
      out(s) = f_divergence(p, q, kind);
    } catch (const AbsoluteContinuityViolated&) {
      out(s) = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

double ad_divergence(const OccupancyMeasure& state_om, const TabularPolicy& pi, const TabularPolicy& pi_base,
                     const DivergenceKind& kind) {
  if (state_om.kind() != OccupancyKind::state) throw InvalidArgument("ad_divergence: needs a state occupancy");
  const Eigen::VectorXd per_state = per_state_divergence(pi, pi_base, kind);
  double total = 0.0;
  for (int s = 0; s < state_om.n_states(); ++s) {
    const double d = state_om.at(s);
    if (d == 0.0) continue;
    if (!std::isfinite(per_state(s)))
      throw AbsoluteContinuityViolated("ad_divergence: policy leaves the base support at state " +
                                       std::to_string(s));
    total += d * per_state(s);
  }
  return total;
}

double ad_divergence(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_base,
                     const DivergenceKind& kind) {
  validate_compatible(mdp, pi_base);
  return ad_divergence(exact_state_occupancy(mdp, pi), pi, pi_base, kind);
}

double log_ratio_form(const OccupancyMeasure& mu, const OccupancyMeasure& nu, LogRatioForm form) {
  if (!mu.same_shape(nu)) throw InvalidArgument("log_ratio_form: occupancy measures differ in shape");
  const auto& a = mu.weights();
  const auto& b = nu.weights();
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if ((a(i) > 0.0) != (b(i) > 0.0))
      throw AbsoluteContinuityViolated("log_ratio_form: supports differ at index " + std::to_string(i));
    if (a(i) == 0.0) continue;
    const double d = std::log(a(i) / b(i));
    total += form == LogRatioForm::kl ? a(i) * (d + std::exp(-d)) : a(i) * (std::exp(d) + std::exp(-d));
  }
  return total;
}

double per_sample_estimator(double ratio, DivergenceFamily family) {
  if (!(ratio > 0.0)) throw NonpositiveRatio("per_sample_estimator: ratio must be positive");
  switch (family) {
    case DivergenceFamily::chi2:
      return ratio + 1.0 / ratio - 2.0;
    case DivergenceFamily::kl:
      return std::log(ratio) + 1.0 / ratio - 1.0;
    default:
      throw InvalidArgument("per_sample_estimator: only chi2 and kl have sample estimators");
  }
}

double per_sample_estimator_derivative(double ratio, DivergenceFamily family) {
  if (!(ratio > 0.0)) throw NonpositiveRatio("per_sample_estimator_derivative: ratio must be positive");
  switch (family) {
    case DivergenceFamily::chi2:
      return 1.0 - 1.0 / (ratio * ratio);
    case DivergenceFamily::kl:
      return 1.0 / ratio - 1.0 / (ratio * ratio);
    default:
      throw InvalidArgument("per_sample_estimator_derivative: only chi2 and kl are supported");
  }
}

}  // namespace omreg
