#pragma once

#include <functional>
#include <span>
#include <string>

#include "omreg/mdp.hpp"

namespace omreg {

enum class DivergenceFamily { chi2, kl, tv, generic };

/// An f-divergence D_f(P||Q) = sum_x Q(x) f(P(x)/Q(x)).
class DivergenceKind {
 public:
  static DivergenceKind chi2();
  static DivergenceKind kl();
  static DivergenceKind tv();
  /// `f` must be convex on [0, inf) with f(1) = 0.
  static DivergenceKind generic(std::string name, std::function<double(double)> f);

  DivergenceFamily family() const { return family_; }
  const std::string& name() const { return name_; }
  double f(double u) const { return f_(u); }

 private:
  DivergenceKind(DivergenceFamily family, std::string name, std::function<double(double)> f)
      : family_(family), name_(std::move(name)), f_(std::move(f)) {}

  DivergenceFamily family_;
  std::string name_;
  std::function<double(double)> f_;
};

/// D(p || q) between two nonnegative vectors of equal length.
/// For chi2 and kl, p(x) > 0 with q(x) == 0 throws AbsoluteContinuityViolated;
/// tv is always finite; generic f requires the same support condition.
double f_divergence(std::span<const double> p, std::span<const double> q, const DivergenceKind& kind);

double om_divergence(const OccupancyMeasure& mu, const OccupancyMeasure& nu, const DivergenceKind& kind);

/// sum_s d_pi(s) D(pi(.|s) || base(.|s)). States that pi never reaches are skipped.
double ad_divergence(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_base,
                     const DivergenceKind& kind);
/// Same, with the state occupancy of pi already known.
double ad_divergence(const OccupancyMeasure& state_om, const TabularPolicy& pi,
                     const TabularPolicy& pi_base, const DivergenceKind& kind);

/// Per-state divergences D(pi(.|s) || base(.|s)); states where continuity
/// fails get +inf.
Eigen::VectorXd per_state_divergence(const TabularPolicy& pi, const TabularPolicy& pi_base,
                                     const DivergenceKind& kind);

enum class LogRatioForm { kl, chi2 };

/// With d = log(mu/nu): E_mu[d + exp(-d)] (kl form, equals KL + 1) or
/// E_mu[exp(d) + exp(-d)] (chi2 form, equals chi2 + 2).
double log_ratio_form(const OccupancyMeasure& mu, const OccupancyMeasure& nu, LogRatioForm form);

/// Single-sample estimators in the importance ratio rho = pi / pi_base:
/// chi2: rho + 1/rho - 2, kl: log(rho) + 1/rho - 1.
double per_sample_estimator(double ratio, DivergenceFamily family);
/// Derivative of the estimator with respect to the ratio.
double per_sample_estimator_derivative(double ratio, DivergenceFamily family);

}  // namespace omreg
