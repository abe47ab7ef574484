#ifndef TP_DIST_HPP
#define TP_DIST_HPP

#include <cmath>
#include <variant>

#include "tp/rng.hpp"
#include "tp/special.hpp"
#include "tp/types.hpp"

namespace tp {

namespace detail {

/// Inverse of the regularized lower incomplete gamma in x: P(a, x) = u.
inline double gamma_p_inv(double a, double u) {
  auto cdf = [a](double x) { return x > 0.0 ? gamma_p(a, x) : 0.0; };
  auto pdf = [a, lga = std::lgamma(a)](double x) {
    return x > 0.0 ? std::exp((a - 1.0) * std::log(x) - x - lga) : 0.0;
  };
  return invert_monotone_cdf(cdf, pdf, u, 0.0, a + 1.0);
}

/// Standard gamma draw with given shape, Marsaglia-Tsang squeeze.
inline double gamma_draw(double shape, Rng& rng) {
  if (shape < 1.0) {
    double u = rng.uniform_pos();
    return gamma_draw(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = norm_quantile(rng.uniform_pos());
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = rng.uniform_pos();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace detail

/// One-dimensional distribution with cdf, quantile, density and sampling.
/// Quantiles use closed forms where available, otherwise bracketed bisection
/// to width 1e-12 followed by three Newton steps.
class Dist1D {
 public:
  struct StdNormal {};
  struct Gamma { double shape, rate; };
  struct InvGamma { double shape, rate; };
  struct SqrtChiSquared { int dof; };
  struct FisherSnedecor { double d1, d2; };
  struct ScaledSqrtF { double scale, d1, d2; };
  struct Exponential { double rate; };
  struct ShiftedPareto { double theta; };
  struct Uniform01 {};

  static Dist1D std_normal() { return Dist1D(StdNormal{}); }
  static Dist1D gamma(double shape, double rate) {
    require(shape > 0.0 && rate > 0.0, "Gamma: shape and rate must be positive");
    return Dist1D(Gamma{shape, rate});
  }
  static Dist1D inv_gamma(double shape, double rate) {
    require(shape > 0.0 && rate > 0.0, "InvGamma: shape and rate must be positive");
    return Dist1D(InvGamma{shape, rate});
  }
  static Dist1D sqrt_chi_squared(int dof) {
    require(dof >= 1, "SqrtChiSquared: dof must be a positive integer");
    return Dist1D(SqrtChiSquared{dof});
  }
  static Dist1D fisher_snedecor(double d1, double d2) {
    require(d1 > 0.0 && d2 > 0.0, "FisherSnedecor: dof must be positive");
    return Dist1D(FisherSnedecor{d1, d2});
  }
  static Dist1D scaled_sqrt_f(double scale, double d1, double d2) {
    require(scale > 0.0 && d1 > 0.0 && d2 > 0.0, "ScaledSqrtF: parameters must be positive");
    return Dist1D(ScaledSqrtF{scale, d1, d2});
  }
  static Dist1D exponential(double rate) {
    require(rate > 0.0, "Exponential: rate must be positive");
    return Dist1D(Exponential{rate});
  }
  static Dist1D shifted_pareto(double theta) {
    require(theta > 0.0, "ShiftedPareto: theta must be positive");
    return Dist1D(ShiftedPareto{theta});
  }
  static Dist1D uniform01() { return Dist1D(Uniform01{}); }

  double cdf(double x) const {
    if (!std::isfinite(x)) throw DomainError("cdf: argument must be finite");
    return std::visit(
        [x](const auto& d) { return cdf_impl(d, x); }, family_);
  }

  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile: u outside (0,1)");
    return std::visit(
        [u](const auto& d) { return quantile_impl(d, u); }, family_);
  }

  double pdf(double x) const {
    double lp = logpdf(x);
    return std::isfinite(lp) ? std::exp(lp) : 0.0;
  }

  double logpdf(double x) const {
    return std::visit(
        [x](const auto& d) { return logpdf_impl(d, x); }, family_);
  }

  double sample(Rng& rng) const {
    return std::visit(
        [&rng](const auto& d) { return sample_impl(d, rng); }, family_);
  }

  /// Infimum of the support (0 for the positive families, -inf otherwise).
  double support_lower() const {
    return std::holds_alternative<StdNormal>(family_)
               ? -std::numeric_limits<double >::infinity()
               : 0.0;
  }

 private:
  using Family = std::variant<StdNormal, Gamma, InvGamma, SqrtChiSquared, FisherSnedecor,
                              ScaledSqrtF, Exponential, ShiftedPareto, Uniform01>;

  explicit Dist1D(Family f) : family_(f) {}

  static void require(bool ok, const char* msg) {
    if (!ok) throw DomainError(msg);
  }

  // --- cdf ---
  static double cdf_impl(StdNormal, double x) { return norm_cdf(x); }
  static double cdf_impl(const Gamma& d, double x) {
    return x > 0.0 ? gamma_p(d.shape, d.rate * x) : 0.0;
  }
  static double cdf_impl(const InvGamma& d, double x) {
    return x > 0.0 ? gamma_q(d.shape, d.rate / x) : 0.0;
  }
  static double cdf_impl(const SqrtChiSquared& d, double x) {
    return x > 0.0 ? gamma_p(0.5 * d.dof, 0.5 * x * x) : 0.0;
  }
  static double cdf_impl(const FisherSnedecor& d, double x) {
    if (x <= 0.0) return 0.0;
    return inc_beta(0.5 * d.d1, 0.5 * d.d2, d.d1 * x / (d.d1 * x + d.d2));
  }
  static double cdf_impl(const ScaledSqrtF& d, double x) {
    return x > 0.0 ? cdf_impl(FisherSnedecor{d.d1, d.d2}, x * x / d.scale) : 0.0;
  }
  static double cdf_impl(const Exponential& d, double x) {
    return x > 0.0 ? -std::expm1(-d.rate * x) : 0.0;
  }
  static double cdf_impl(const ShiftedPareto& d, double x) {
    return x > 0.0 ? -std::expm1(-std::log1p(x) / d.theta) : 0.0;
  }
  static double cdf_impl(Uniform01, double x) { return std::clamp(x, 0.0, 1.0); }

  // --- logpdf ---
  static double logpdf_impl(StdNormal, double x) { return norm_logpdf(x); }
  static double logpdf_impl(const Gamma& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return d.shape * std::log(d.rate) + (d.shape - 1.0) * std::log(x) - d.rate * x -
           std::lgamma(d.shape);
  }
  static double logpdf_impl(const InvGamma& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return d.shape * std::log(d.rate) - (d.shape + 1.0) * std::log(x) - d.rate / x -
           std::lgamma(d.shape);
  }
  static double logpdf_impl(const SqrtChiSquared& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    double n2 = 0.5 * d.dof;
    return (1.0 - n2) * std::log(2.0) + (d.dof - 1.0) * std::log(x) - 0.5 * x * x -
           std::lgamma(n2);
  }
  static double logpdf_impl(const FisherSnedecor& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    double a = 0.5 * d.d1, b = 0.5 * d.d2;
    double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    return a * std::log(d.d1) + b * std::log(d.d2) + (a - 1.0) * std::log(x) -
           (a + b) * std::log(d.d2 + d.d1 * x) - lbeta;
  }
  static double logpdf_impl(const ScaledSqrtF& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(2.0 * x / d.scale) +
           logpdf_impl(FisherSnedecor{d.d1, d.d2}, x * x / d.scale);
  }
  static double logpdf_impl(const Exponential& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(d.rate) - d.rate * x;
  }
  static double logpdf_impl(const ShiftedPareto& d, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return -std::log(d.theta) - (1.0 / d.theta + 1.0) * std::log1p(x);
  }
  static double logpdf_impl(Uniform01, double x) {
    return (x >= 0.0 && x <= 1.0) ? 0.0 : -std::numeric_limits<double>::infinity();
  }

  // --- quantile ---
  static double quantile_impl(StdNormal, double u) { return norm_quantile(u); }
  static double quantile_impl(const Gamma& d, double u) {
    return detail::gamma_p_inv(d.shape, u) / d.rate;
  }
  static double quantile_impl(const InvGamma& d, double u) {
    return d.rate / detail::gamma_p_inv(d.shape, 1.0 - u);
  }
  static double quantile_impl(const SqrtChiSquared& d, double u) {
    return std::sqrt(2.0 * detail::gamma_p_inv(0.5 * d.dof, u));
  }
  static double quantile_impl(const FisherSnedecor& d, double u) {
    auto cdf = [&d](double x) { return cdf_impl(d, x); };
    auto pdf = [&d](double x) { return x > 0.0 ? std::exp(logpdf_impl(d, x)) : 0.0; };
    return detail::invert_monotone_cdf(cdf, pdf, u, 0.0, 1.0);
  }
  static double quantile_impl(const ScaledSqrtF& d, double u) {
    return std::sqrt(d.scale * quantile_impl(FisherSnedecor{d.d1, d.d2}, u));
  }
  static double quantile_impl(const Exponential& d, double u) {
    return -std::log1p(-u) / d.rate;
  }
  static double quantile_impl(const ShiftedPareto& d, double u) {
    return std::expm1(-d.theta * std::log1p(-u));
  }
  static double quantile_impl(Uniform01, double u) { return u; }

  // --- sample ---
  static double sample_impl(StdNormal, Rng& rng) { return norm_quantile(rng.uniform_pos()); }
  static double sample_impl(const Gamma& d, Rng& rng) {
    return detail::gamma_draw(d.shape, rng) / d.rate;
  }
  static double sample_impl(const InvGamma& d, Rng& rng) {
    return d.rate / detail::gamma_draw(d.shape, rng);
  }
  static double sample_impl(const SqrtChiSquared& d, Rng& rng) {
    return std::sqrt(2.0 * detail::gamma_draw(0.5 * d.dof, rng));
  }
  static double sample_impl(const FisherSnedecor& d, Rng& rng) {
    double g1 = detail::gamma_draw(0.5 * d.d1, rng);
    double g2 = detail::gamma_draw(0.5 * d.d2, rng);
    return (g1 / g2) * (d.d2 / d.d1);
  }
  static double sample_impl(const ScaledSqrtF& d, Rng& rng) {
    return std::sqrt(d.scale * sample_impl(FisherSnedecor{d.d1, d.d2}, rng));
  }
  static double sample_impl(const Exponential& d, Rng& rng) {
    return -std::log1p(-rng.uniform()) / d.rate;
  }
  static double sample_impl(const ShiftedPareto& d, Rng& rng) {
    return std::expm1(-d.theta * std::log1p(-rng.uniform()));
  }
  static double sample_impl(Uniform01, Rng& rng) { return rng.uniform(); }

  Family family_;
};

}  // namespace tp

#endif
