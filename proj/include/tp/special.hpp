#ifndef TP_SPECIAL_HPP
#define TP_SPECIAL_HPP

#include <cmath>
#include <limits>

#include "tp/types.hpp"

namespace tp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kSqrt2 = 1.4142135623730950488;

/// Regularized lower incomplete gamma P(a, x).
/// Series expansion for x < a + 1, Lentz continued fraction otherwise.
inline double gamma_p(double a, double x) {
  if (a <= 0.0) throw DomainError("gamma_p: shape must be positive");
  if (x < 0.0) throw DomainError("gamma_p: negative argument");
  if (x == 0.0) return 0.0;
  const double lga = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lga);
  }
  // continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - lga) * h;
  return 1.0 - q;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

/// Regularized incomplete beta I_x(a, b) by Lentz continued fraction.
inline double inc_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw DomainError("inc_beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  auto cf = [](double aa, double bb, double xx) {
    const double tiny = 1e-300;
    double c = 1.0, d = 1.0 - (aa + bb) * xx / (aa + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
      double m2 = 2.0 * m;
      double num = m * (bb - m) * xx / ((aa + m2 - 1.0) * (aa + m2));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(aa + m) * (aa + bb + m) * xx / ((aa + m2) * (aa + m2 + 1.0));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h;
  };
  if (x < (a + 1.0) / (a + b + 2.0)) return front * cf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - lbeta) * cf(b, a, 1.0 - x) / b;
}

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLogTwoPi); }
inline double norm_logpdf(double x) { return -0.5 * x * x - 0.5 * kLogTwoPi; }
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

/// log Phi(x), stable in the far left tail where Phi underflows.
inline double log_norm_cdf(double x) {
  if (x > -8.0) {
    double c = norm_cdf(x);
    if (c > 0.0) return std::log(c);
  }
  // asymptotic expansion of the Mills ratio
  const double x2 = x * x;
  double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return norm_logpdf(x) - std::log(-x) + std::log(series);
}

/// Inverse standard normal CDF: Acklam's rational approximation polished by
/// one Halley step (log-space residual in the tails).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("norm_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement on log-residuals keeps the tails accurate
  for (int it = 0; it < 2; ++it) {
    double lf, lp = std::log(p <= 0.5 ? p : 1.0 - p);
    double z = p <= 0.5 ? x : -x;
    lf = log_norm_cdf(z);
    double e = lf - lp;                       // want 0
    double u = e * std::exp(lf - norm_logpdf(z));  // e * Phi/phi
    z -= u / (1.0 + 0.5 * u * z);
    x = p <= 0.5 ? z : -z;
  }
  return x;
}

/// Student-t CDF with nu degrees of freedom.
inline double student_t_cdf(double x, double nu) {
  if (nu <= 0.0) throw DomainError("student_t_cdf: dof must be positive");
  if (x == 0.0) return 0.5;
  double ib = inc_beta(nu / 2.0, 0.5, nu / (nu + x * x));
  return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

namespace detail {

/// Bracketed bisection to width 1e-12 followed by Newton polish steps.
/// `cdf` must be nondecreasing; `pdf` may be null (skips the polish).
template <class Cdf, class Pdf>
double invert_monotone_cdf(const Cdf& cdf, const Pdf& pdf, double u, double lo, double hi,
                           int max_doublings = 200) {
  // grow the bracket until it straddles u
  int k = 0;
  while (cdf(hi) < u) {
    lo = hi;
    hi = hi > 0.0 ? hi * 2.0 : (hi < 0.0 ? hi * 0.5 : 1.0);
    if (++k > max_doublings) throw NumericalError("invert_monotone_cdf: no upper bracket");
  }
  k = 0;
  while (cdf(lo) > u) {
    hi = lo;
    lo = lo > 0.0 ? lo * 0.5 : (lo < 0.0 ? lo * 2.0 : -1.0);
    if (++k > max_doublings) throw NumericalError("invert_monotone_cdf: no lower bracket");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket collapsed to adjacent doubles
    (cdf(mid) < u ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  if constexpr (!std::is_same_v<Pdf, std::nullptr_t>) {
    for (int it = 0; it < 3; ++it) {
      double f = cdf(x) - u, df = pdf(x);
      if (df <= 0.0 || !std::isfinite(df)) break;
      double step = f / df;
      double xn = x - step;
      if (xn <= lo || xn >= hi) break;
      x = xn;
    }
  }
  return x;
}

}  // namespace detail

}  // namespace tp

#endif
