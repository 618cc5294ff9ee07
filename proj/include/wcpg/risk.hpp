#pragma once

// Closed-form calculus for Gaussian return distributions: normal pdf/cdf and
// quantile, CVaR with its partial derivatives, and the 2-Wasserstein distance.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace wcpg {

inline constexpr double kVarianceFloor = 1e-6;

struct GaussianReturn {
  double mean = 0.0;
  double variance = kVarianceFloor;

  double std_dev() const { return std::sqrt(std::max(variance, kVarianceFloor)); }
};

/// Risk level alpha, restricted to [0.01, 1].
class RiskLevel {
 public:
  static constexpr double kMin = 0.01;
  static constexpr double kMax = 1.0;

  explicit RiskLevel(double alpha) : alpha_(alpha) {
    if (!(alpha >= kMin && alpha <= kMax))
      throw std::out_of_range("risk level must lie in [0.01, 1], got " + std::to_string(alpha));
  }
  double value() const { return alpha_; }

 private:
  double alpha_;
};

/// Which coefficient multiplies the standard deviation in CVaR = Q - k(alpha) * sigma.
enum class CvarRule {
  paper,     // k = phi(alpha) / Phi(alpha)
  standard,  // k = phi(Phi^-1(alpha)) / alpha, the lower-tail mean of a Gaussian
};

inline const char* to_string(CvarRule r) { return r == CvarRule::paper ? "paper" : "standard"; }

inline CvarRule cvar_rule_from_string(const std::string& s) {
  if (s == "paper") return CvarRule::paper;
  if (s == "standard") return CvarRule::standard;
  throw std::invalid_argument("unknown cvar rule: " + s);
}

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse standard normal CDF: Acklam's rational approximation (relative
/// error < 1.2e-9) polished by one Halley step against erfc.
inline double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    throw std::domain_error("quantile probability outside [0, 1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = std_normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double cvar_coefficient(double alpha, CvarRule rule) {
  if (rule == CvarRule::paper) return std_normal_pdf(alpha) / std_normal_cdf(alpha);
  if (alpha >= 1.0) return 0.0;
  return std_normal_pdf(std_normal_quantile(alpha)) / alpha;
}

/// d coefficient / d alpha: -C (alpha + C) for CvarRule::paper, -(z + k) / alpha
/// with z = Phi^-1(alpha) for the standard rule (taken as 0 at alpha = 1).
inline double cvar_coefficient_slope(double alpha, CvarRule rule) {
  const double c = cvar_coefficient(alpha, rule);
  if (rule == CvarRule::paper) return -c * (alpha + c);
  if (alpha >= 1.0) return 0.0;
  return -(std_normal_quantile(alpha) + c) / alpha;
}

inline double cvar(const GaussianReturn& z, RiskLevel alpha, CvarRule rule) {
  return z.mean - cvar_coefficient(alpha.value(), rule) * z.std_dev();
}

/// Q - (phi(alpha) / Phi(alpha)) * sqrt(variance)
inline double cvar_gaussian(const GaussianReturn& z, RiskLevel alpha) {
  return cvar(z, alpha, CvarRule::paper);
}

/// Q - sqrt(variance) * phi(Phi^-1(alpha)) / alpha; exactly the mean at alpha = 1.
inline double cvar_gaussian_standard(const GaussianReturn& z, RiskLevel alpha) {
  if (alpha.value() == 1.0) return z.mean;
  return cvar(z, alpha, CvarRule::standard);
}

struct CvarPartials {
  double d_mean = 1.0;
  double d_variance = 0.0;
  double d_alpha = 0.0;  // through the coefficient only
};

inline CvarPartials cvar_partials(const GaussianReturn& z, RiskLevel alpha,
                                  CvarRule rule = CvarRule::paper) {
  const double sd = z.std_dev();
  return {1.0, -cvar_coefficient(alpha.value(), rule) / (2.0 * sd),
          -cvar_coefficient_slope(alpha.value(), rule) * sd};
}

/// Squared 2-Wasserstein distance between scalar Gaussians:
/// (mu1 - mu2)^2 + (sigma1 - sigma2)^2.
inline double w2_gaussian(const GaussianReturn& u, const GaussianReturn& v) {
  const double dm = u.mean - v.mean;
  const double ds = std::sqrt(u.variance) - std::sqrt(v.variance);
  return dm * dm + ds * ds;
}

}  // namespace wcpg
