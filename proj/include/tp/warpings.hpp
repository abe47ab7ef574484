#ifndef TP_WARPINGS_HPP
#define TP_WARPINGS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "tp/special.hpp"
#include "tp/types.hpp"

namespace tp {

/// Increasing scalar bijection phi: data space -> latent space, with
/// derivative. Marginal layers apply h(t,x) = phi^{-1}(m(t) + sigma(t) x).
class Warping {
 public:
  struct Affine { double shift, scale; };
  struct Log {};
  struct BoxCoxShifted { double lambda, shift; };
  struct SinhArcsinh { double skew, tail; };
  struct NegLogNormCDF {};
  struct Composite { std::vector<Warping> parts; };

  static Warping affine(double shift, double scale) {
    if (scale <= 0.0) throw DomainError("Affine: scale must be positive");
    return Warping(Affine{shift, scale});
  }
  static Warping log() { return Warping(Log{}); }
  static Warping box_cox_shifted(double lambda, double shift) {
    if (lambda <= 0.0) throw DomainError("BoxCoxShifted: lambda must be positive");
    return Warping(BoxCoxShifted{lambda, shift});
  }
  static Warping sinh_arcsinh(double skew, double tail) {
    if (tail <= 0.0) throw DomainError("SinhArcsinh: tail must be positive");
    return Warping(SinhArcsinh{skew, tail});
  }
  static Warping neg_log_norm_cdf() { return Warping(NegLogNormCDF{}); }
  static Warping composite(std::vector<Warping> parts) {
    if (parts.empty()) throw DomainError("Composite: needs at least one warping");
    return Warping(Composite{std::move(parts)});
  }

  double forward(double y) const {
    return std::visit([y](const auto& w) { return fwd(w, y); }, family_);
  }
  double inverse(double x) const {
    return std::visit([x](const auto& w) { return inv(w, x); }, family_);
  }
  /// log phi'(y); throws if the derivative is nonpositive or undefined at y.
  double log_deriv(double y) const {
    return std::visit([y](const auto& w) { return ld(w, y); }, family_);
  }

  template <class F>
  void visit(F&& f) const { std::visit(std::forward<F>(f), family_); }

 private:
  using Family = std::variant<Affine, Log, BoxCoxShifted, SinhArcsinh, NegLogNormCDF, Composite>;
  explicit Warping(Family f) : family_(std::move(f)) {}

  static double fwd(const Affine& w, double y) { return w.shift + w.scale * y; }
  static double inv(const Affine& w, double x) { return (x - w.shift) / w.scale; }
  static double ld(const Affine& w, double) { return std::log(w.scale); }

  static double fwd(Log, double y) {
    if (y <= 0.0) throw DomainError("Log warping: argument must be positive");
    return std::log(y);
  }
  static double inv(Log, double x) { return std::exp(x); }
  static double ld(Log, double y) {
    if (y <= 0.0) throw DomainError("Log warping: argument must be positive");
    return -std::log(y);
  }

  // signed power keeps the bijection on the whole real line
  static double fwd(const BoxCoxShifted& w, double y) {
    double u = y + w.shift;
    double p = u == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(u), w.lambda), u);
    return (p - 1.0) / w.lambda;
  }
  static double inv(const BoxCoxShifted& w, double x) {
    double v = w.lambda * x + 1.0;
    double p = v == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(v), 1.0 / w.lambda), v);
    return p - w.shift;
  }
  static double ld(const BoxCoxShifted& w, double y) {
    double u = y + w.shift;
    if (u == 0.0 && w.lambda != 1.0) {
      throw DomainError("BoxCoxShifted: derivative undefined at the shift point");
    }
    return (w.lambda - 1.0) * std::log(std::abs(u));
  }

  static double fwd(const SinhArcsinh& w, double y) {
    return std::sinh(w.tail * std::asinh(y) - w.skew);
  }
  static double inv(const SinhArcsinh& w, double x) {
    return std::sinh((std::asinh(x) + w.skew) / w.tail);
  }
  static double ld(const SinhArcsinh& w, double y) {
    double u = w.tail * std::asinh(y) - w.skew;
    return std::log(w.tail) + std::log(std::cosh(u)) - 0.5 * std::log1p(y * y);
  }

  // increasing variant of the normal-CDF exponential map: phi(y) = -Phi^{-1}(e^{-y}),
  // so phi^{-1}(x) = -log Phi(-x); the joint law under a symmetric reference is
  // the same as for -log Phi(x)
  static double fwd(NegLogNormCDF, double y) {
    if (y <= 0.0) throw DomainError("NegLogNormCDF: argument must be positive");
    if (y > 700.0) throw DomainError("NegLogNormCDF: argument too large for double range");
    return -norm_quantile(std::exp(-y));
  }
  static double inv(NegLogNormCDF, double x) { return -log_norm_cdf(-x); }
  static double ld(NegLogNormCDF w, double y) {
    double x = fwd(w, y);
    return log_norm_cdf(-x) - norm_logpdf(-x);
  }

  static double fwd(const Composite& w, double y) {
    double v = y;
    for (const auto& part : w.parts) v = part.forward(v);
    return v;
  }
  static double inv(const Composite& w, double x) {
    double v = x;
    for (auto it = w.parts.rbegin(); it != w.parts.rend(); ++it) v = it->inverse(v);
    return v;
  }
  static double ld(const Composite& w, double y) {
    double v = y, acc = 0.0;
    for (const auto& part : w.parts) {
      acc += part.log_deriv(v);
      v = part.forward(v);
    }
    return acc;
  }

  Family family_;
};

/// Location term m(t): polynomial in t of degree <= 3.
struct LocationFn {
  Vec coeffs;  // c0 + c1 t + c2 t^2 + c3 t^3

  static LocationFn constant(double c) {
    LocationFn f;
    f.coeffs = Vec::Constant(1, c);
    return f;
  }
  static LocationFn polynomial(Vec c) {
    if (c.size() < 1 || c.size() > 4) throw DomainError("LocationFn: degree must be <= 3");
    LocationFn f;
    f.coeffs = std::move(c);
    return f;
  }
  double operator()(double t) const {
    double acc = 0.0;
    for (Index k = coeffs.size() - 1; k >= 0; --k) acc = acc * t + coeffs[k];
    return acc;
  }
};

/// Diagonal transport layer [T_t(x)]_i = h(t_i, x_i) with
/// h(t,x) = phi^{-1}(m(t) + sigma x).
struct MarginalLayer {
  Warping warping;
  LocationFn location;
  double scale = 1.0;

  MarginalLayer(Warping w, LocationFn m, double sigma)
      : warping(std::move(w)), location(std::move(m)), scale(sigma) {
    if (sigma <= 0.0) throw DomainError("MarginalLayer: scale must be positive");
  }
};

inline Vec marginal_forward(const MarginalLayer& layer, const Vec& t, const Vec& x) {
  if (t.size() != x.size()) throw DomainError("marginal_forward: size mismatch");
  Vec y(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    try {
      y[i] = layer.warping.inverse(layer.location(t[i]) + layer.scale * x[i]);
    } catch (const DomainError& e) {
      throw DomainError("marginal_forward at coordinate " + std::to_string(i) + ": " + e.what());
    }
    if (!std::isfinite(y[i])) {
      throw DomainError("marginal_forward at coordinate " + std::to_string(i) + ": non-finite");
    }
  }
  return y;
}

inline Vec marginal_inverse(const MarginalLayer& layer, const Vec& t, const Vec& y) {
  if (t.size() != y.size()) throw DomainError("marginal_inverse: size mismatch");
  Vec x(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    try {
      x[i] = (layer.warping.forward(y[i]) - layer.location(t[i])) / layer.scale;
    } catch (const DomainError& e) {
      throw DomainError("marginal_inverse at coordinate " + std::to_string(i) + ": " + e.what());
    }
  }
  return x;
}

/// log|grad S_t(y)| = sum_i log phi'(y_i)/sigma.
inline double marginal_logdet_inv(const MarginalLayer& layer, const Vec& t, const Vec& y) {
  if (t.size() != y.size()) throw DomainError("marginal_logdet_inv: size mismatch");
  double acc = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    double ld = layer.warping.log_deriv(y[i]);
    if (!std::isfinite(ld)) {
      throw DomainError("marginal_logdet_inv: nonpositive derivative at coordinate " +
                        std::to_string(i));
    }
    acc += ld - std::log(layer.scale);
  }
  return acc;
}

/// Monte Carlo mean of v over the push-forward: samples_x holds reference
/// draws row-wise; returns the grand mean of v(h(t_i, x_i)) over rows and
/// coordinates.
inline double pushforward_expectation(const MarginalLayer& layer, const Vec& t,
                                      const Mat& samples_x,
                                      const std::function<double(double)>& v) {
  if (samples_x.cols() != t.size()) throw DomainError("pushforward_expectation: size mismatch");
  double acc = 0.0;
  for (Index r = 0; r < samples_x.rows(); ++r) {
    Vec y = marginal_forward(layer, t, samples_x.row(r).transpose());
    for (Index i = 0; i < y.size(); ++i) acc += v(y[i]);
  }
  return acc / (double(samples_x.rows()) * double(t.size()));
}

}  // namespace tp

#endif
