#ifndef TP_RADIAL_LAYER_HPP
#define TP_RADIAL_LAYER_HPP

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <variant>
#include <vector>

#include "tp/dist.hpp"
#include "tp/quadrature.hpp"
#include "tp/slice.hpp"
#include "tp/special.hpp"
#include "tp/types.hpp"

namespace tp {

namespace detail {

/// Fritsch-Carlson monotone cubic interpolant through increasing knots.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(Vec x, Vec y) : x_(std::move(x)), y_(std::move(y)) {
    const Index n = x_.size();
    Vec delta(n - 1);
    for (Index i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    m_.resize(n);
    m_[0] = delta[0];
    m_[n - 1] = delta[n - 2];
    for (Index i = 1; i + 1 < n; ++i) {
      m_[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    }
    for (Index i = 0; i + 1 < n; ++i) {
      if (delta[i] == 0.0) {
        m_[i] = m_[i + 1] = 0.0;
        continue;
      }
      double a = m_[i] / delta[i], b = m_[i + 1] / delta[i];
      double s = a * a + b * b;
      if (s > 9.0) {
        double tau = 3.0 / std::sqrt(s);
        m_[i] = tau * a * delta[i];
        m_[i + 1] = tau * b * delta[i];
      }
    }
  }

  bool contains(double q) const { return q >= x_[0] && q <= x_[x_.size() - 1]; }
  double lo() const { return x_[0]; }
  double hi() const { return x_[x_.size() - 1]; }

  double operator()(double q) const {
    Index lo = 0, hi = x_.size() - 1;
    while (hi - lo > 1) {
      Index mid = (lo + hi) / 2;
      (x_[mid] <= q ? lo : hi) = mid;
    }
    double h = x_[lo + 1] - x_[lo];
    double t = (q - x_[lo]) / h;
    double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[lo] + (t3 - 2 * t2 + t) * h * m_[lo] +
           (-2 * t3 + 3 * t2) * y_[lo + 1] + (t3 - t2) * h * m_[lo + 1];
  }

  double deriv(double q) const {
    Index lo = 0, hi = x_.size() - 1;
    while (hi - lo > 1) {
      Index mid = (lo + hi) / 2;
      (x_[mid] <= q ? lo : hi) = mid;
    }
    double h = x_[lo + 1] - x_[lo];
    double t = (q - x_[lo]) / h;
    return ((6 * t * t - 6 * t) * y_[lo] + (3 * t * t - 4 * t + 1) * h * m_[lo] +
            (-6 * t * t + 6 * t) * y_[lo + 1] + (3 * t * t - 2 * t) * h * m_[lo + 1]) /
           h;
  }

 private:
  Vec x_, y_, m_;
};

}  // namespace detail

/// Elliptical radial transport T(x) = alpha_n(|x|_2) x / |x|_2. The Gaussian
/// identity and the Student-t mixing use closed-form F compositions; a general
/// mixing density goes through the product-radial CDF with a per-dimension
/// grid cache (512 log-spaced knots, monotone cubic, exact bisection outside).
class EllipticalLayer {
 public:
  struct GaussianIdentity {};
  struct StudentT { double nu_inv; };  // 1/theta in [0, 0.5); 0 is the Gaussian boundary
  struct GeneralMixing {
    std::function<double(double)> density;  // mixing density on the positive line
    double s_lo, s_hi;                      // quadrature support
  };

  static EllipticalLayer gaussian_identity() { return EllipticalLayer(GaussianIdentity{}); }
  static EllipticalLayer student_t(double nu_inv) {
    if (!(nu_inv >= 0.0 && nu_inv < 0.5)) {
      throw DomainError("EllipticalLayer: nu_inv must lie in [0, 0.5)");
    }
    return EllipticalLayer(StudentT{nu_inv});
  }
  static EllipticalLayer general_mixing(std::function<double(double)> density, double s_lo,
                                        double s_hi) {
    if (!(s_lo > 0.0 && s_hi > s_lo)) {
      throw DomainError("EllipticalLayer: mixing support must satisfy 0 < s_lo < s_hi");
    }
    return EllipticalLayer(GeneralMixing{std::move(density), s_lo, s_hi});
  }

  bool is_identity() const {
    if (std::holds_alternative<GaussianIdentity>(mode_)) return true;
    if (auto* st = std::get_if<StudentT>(&mode_)) return st->nu_inv == 0.0;
    return false;
  }
  bool is_student_t() const { return std::holds_alternative<StudentT>(mode_); }
  bool is_general() const { return std::holds_alternative<GeneralMixing>(mode_); }
  double nu_inv() const { return std::get<StudentT>(mode_).nu_inv; }
  double theta() const { return 1.0 / std::get<StudentT>(mode_).nu_inv; }

  /// alpha_n(r) = F^{-1}_{R_n,theta} o F_{R_n}(r).
  double alpha(int n, double r) const {
    if (r < 0.0) throw DomainError("ell_alpha: r must be nonnegative");
    if (is_identity() || r == 0.0) return r;
    if (is_student_t()) {
      double th = theta();
      double u = gamma_p(0.5 * n, 0.5 * r * r);
      u = std::min(u, 1.0 - 1e-16);
      if (u <= 0.0) return 0.0;
      return std::sqrt(double(n) * Dist1D::fisher_snedecor(double(n), th).quantile(u));
    }
    const AlphaGrid& grid = general_grid(n);
    if (grid.r_to_rho.contains(r)) {
      double rho = grid.r_to_rho(r);
      // one correction step through the exact inverse map
      double slope = grid.r_to_rho.deriv(r);
      if (std::isfinite(slope) && slope > 0.0) {
        double err = alpha_inv(n, rho) - r;
        rho -= err * slope;
      }
      return std::max(rho, 0.0);
    }
    return alpha_general_bisect(n, r);
  }

  /// Exact inverse map alpha_n^{-1}(rho) = F^{-1}_{R_n} o F_{R_n,theta}(rho).
  double alpha_inv(int n, double rho) const {
    if (rho < 0.0) throw DomainError("ell_alpha_inv: rho must be nonnegative");
    if (is_identity() || rho == 0.0) return rho;
    double u;
    if (is_student_t()) {
      u = Dist1D::fisher_snedecor(double(n), theta()).cdf(rho * rho / double(n));
    } else {
      u = (*general_grid(n).mix)(rho);
    }
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    return std::sqrt(2.0 * detail::gamma_p_inv(0.5 * n, u));
  }

  /// alpha'_n by central finite differences, step 1e-5 (1 + r).
  double alpha_deriv(int n, double r) const {
    if (is_identity()) return 1.0;
    double h = 1e-5 * (1.0 + r);
    double lo = std::max(r - h, 0.0);
    return (alpha(n, r + h) - alpha(n, lo)) / (r + h - lo);
  }

  Vec forward(const Vec& x) const {
    if (is_identity()) return x;
    double r = x.norm();
    if (r == 0.0) return x;
    return (alpha(int(x.size()), r) / r) * x;
  }

  Vec inverse(const Vec& y) const {
    if (is_identity()) return y;
    double rho = y.norm();
    if (rho == 0.0) return y;
    return (alpha_inv(int(y.size()), rho) / rho) * y;
  }

  /// log|grad S(y)| = (n-1) log(alpha^{-1}(|y|)/|y|) - log alpha'(alpha^{-1}(|y|)).
  double logdet_inv(int n, const Vec& y) const {
    if (is_identity()) return 0.0;
    double rho = y.norm();
    if (rho == 0.0) throw DomainError("ell_logdet_inv: singular point y = 0");
    double ri = alpha_inv(n, rho);
    return (n - 1) * std::log(ri / rho) - std::log(alpha_deriv(n, ri));
  }

  /// log-density of the n-dimensional law at squared norm s.
  double log_density_sqnorm(int n, double s) const {
    if (is_identity()) return -0.5 * n * kLogTwoPi - 0.5 * s;
    if (is_student_t()) {
      double th = theta();
      return std::lgamma(0.5 * (th + n)) - std::lgamma(0.5 * th) - 0.5 * n * std::log(th * kPi) -
             0.5 * (th + n) * std::log1p(s / th);
    }
    double rho = std::sqrt(s);
    double ri = alpha_inv(n, rho);
    double h = 1e-5 * (1.0 + rho);
    double lo = std::max(rho - h, 0.0);
    double dinv = (alpha_inv(n, rho + h) - alpha_inv(n, lo)) / (rho + h - lo);
    return -0.5 * n * kLogTwoPi - 0.5 * ri * ri + (n - 1) * std::log(ri / rho) + std::log(dinv);
  }

  /// One draw of |y_new| given |y| for the Student-t mixing:
  /// sqrt(n_new (theta + |y|^2) / (theta + n) F(n_new, theta + n)).
  double student_t_posterior_radius(double norm_y, int n, int n_new, Rng& rng) const {
    double th = theta();
    double c = n_new * (th + norm_y * norm_y) / (th + n);
    double f = Dist1D::fisher_snedecor(double(n_new), th + n).sample(rng);
    return std::sqrt(c * f);
  }

  /// Slice-sampled draws of |y_new| given |y| for a general mixing;
  /// unnormalized target rho^{n_new - 1} h_{n + n_new}(rho^2 + |y|^2).
  std::vector<double> general_posterior_radius(double norm_y, int n, int n_new, int count,
                                               Rng& rng, int thin = 5) const {
    const double y2 = norm_y * norm_y;
    auto logtarget = [&](double rho) {
      if (rho <= 0.0) return -std::numeric_limits<double>::infinity();
      return (n_new - 1) * std::log(rho) + log_density_sqnorm(n + n_new, rho * rho + y2);
    };
    auto chain = slice_sample_1d(logtarget, std::sqrt(double(n_new)), count * thin, rng);
    std::vector<double> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(chain[std::size_t(i) * thin + thin - 1]);
    return out;
  }

 private:
  using Mode = std::variant<GaussianIdentity, StudentT, GeneralMixing>;
  explicit EllipticalLayer(Mode m)
      : mode_(std::move(m)), cache_(std::make_shared<Cache>()) {}

  struct AlphaGrid {
    std::shared_ptr<ProductRadialCDF> mix;
    detail::MonotoneCubic r_to_rho;
  };

  // copies share the cache; parameters are immutable so entries stay valid
  struct Cache {
    std::shared_mutex mutex;
    std::map<int, AlphaGrid> grids;
  };

  double alpha_general_bisect(int n, double r) const {
    const AlphaGrid& grid = general_grid(n);
    double target = gamma_p(0.5 * n, 0.5 * r * r);
    auto cdf = [&](double rho) { return (*grid.mix)(rho); };
    return detail::invert_monotone_cdf(cdf, nullptr, std::clamp(target, 1e-300, 1.0 - 1e-16), 0.0,
                                       std::max(r, 1.0));
  }

  const AlphaGrid& general_grid(int n) const {
    {
      std::shared_lock lock(cache_->mutex);
      auto it = cache_->grids.find(n);
      if (it != cache_->grids.end()) return it->second;
    }
    const auto& gm = std::get<GeneralMixing>(mode_);
    AlphaGrid grid;
    grid.mix = std::make_shared<ProductRadialCDF>(gm.density, Dist1D::sqrt_chi_squared(n),
                                                  gm.s_lo, gm.s_hi);
    const int m = 512;
    // knots on the output axis, mapped back through the exact inverse
    double rho_lo = detail::invert_monotone_cdf([&](double v) { return (*grid.mix)(v); }, nullptr,
                                                1e-9, 0.0, 1.0);
    double rho_hi = detail::invert_monotone_cdf([&](double v) { return (*grid.mix)(v); }, nullptr,
                                                1.0 - 1e-9, 0.0, 1.0);
    Vec rho(m), r(m);
    for (int i = 0; i < m; ++i) {
      double u = double(i) / (m - 1);
      rho[i] = rho_lo * std::pow(rho_hi / rho_lo, u);
      r[i] = alpha_inv_raw(n, rho[i], *grid.mix);
    }
    grid.r_to_rho = detail::MonotoneCubic(r, rho);
    std::unique_lock lock(cache_->mutex);
    return cache_->grids.emplace(n, std::move(grid)).first->second;
  }

  double alpha_inv_raw(int n, double rho, const ProductRadialCDF& mix) const {
    double u = std::clamp(mix(rho), 1e-300, 1.0 - 1e-16);
    return std::sqrt(2.0 * detail::gamma_p_inv(0.5 * n, u));
  }

  Mode mode_;
  std::shared_ptr<Cache> cache_;
};

inline double ell_alpha(const EllipticalLayer& layer, int n, double r) { return layer.alpha(n, r); }
inline Vec ell_forward(const EllipticalLayer& layer, const Vec& x) { return layer.forward(x); }
inline Vec ell_inverse(const EllipticalLayer& layer, const Vec& y) { return layer.inverse(y); }
inline double ell_logdet_inv(const EllipticalLayer& layer, int n, const Vec& y) {
  return layer.logdet_inv(n, y);
}
inline double studentt_posterior_radius(const EllipticalLayer& layer, double norm_y, int n,
                                        int n_new, Rng& rng) {
  return layer.student_t_posterior_radius(norm_y, n, n_new, rng);
}
inline double ell_posterior_radius_general(const EllipticalLayer& layer, double norm_y, int n,
                                           int n_new, Rng& rng) {
  return layer.general_posterior_radius(norm_y, n, n_new, 1, rng)[0];
}

/// Archimedean transport: the fixed increasing pre-map e_i = -log Phi(-x_i)
/// followed by the l1 radial rescale r -> F_S^{-1}(F_{Gamma(n,1)}(r)).
/// Generators: independence psi(s) = e^{-s} (radial stage is the identity) and
/// Clayton psi(s) = (1+s)^{-1/theta} with radius law theta n F(2n, 2/theta).
class ArchimedeanLayer {
 public:
  struct Independence {};
  struct Clayton { double theta; };

  static ArchimedeanLayer independence() { return ArchimedeanLayer(Independence{}); }
  static ArchimedeanLayer clayton(double theta) {
    if (theta <= 0.0) throw DomainError("ArchimedeanLayer: theta must be positive");
    return ArchimedeanLayer(Clayton{theta});
  }

  bool is_independence() const { return std::holds_alternative<Independence>(mode_); }
  double theta() const { return std::get<Clayton>(mode_).theta; }

  double psi(double s) const {
    if (s < 0.0) throw DomainError("psi: argument must be nonnegative");
    if (is_independence()) return std::exp(-s);
    return std::exp(-std::log1p(s) / theta());
  }
  double psi_inv(double u) const {
    if (!(u > 0.0 && u <= 1.0)) throw DomainError("psi_inv: u outside (0,1]");
    if (is_independence()) return -std::log(u);
    return std::expm1(-theta() * std::log(u));
  }
  double psi_deriv(double s) const {
    if (is_independence()) return -std::exp(-s);
    double ti = 1.0 / theta();
    return -ti * std::exp(-(ti + 1.0) * std::log1p(s));
  }
  double log_abs_psi_deriv(double s) const {
    if (is_independence()) return -s;
    double ti = 1.0 / theta();
    return std::log(ti) - (ti + 1.0) * std::log1p(s);
  }

  // pre-map and its pieces (kept internal to the layer's construction)
  static double premap(double x) { return -log_norm_cdf(-x); }
  static double premap_inv(double e) {
    if (e <= 0.0) throw DomainError("ArchimedeanLayer: pre-map inverse needs e > 0");
    if (e > 700.0) throw DomainError("ArchimedeanLayer: pre-map inverse out of double range");
    return -norm_quantile(std::exp(-e));
  }
  static double premap_log_deriv(double x) {  // log de/dx
    return norm_logpdf(x) - log_norm_cdf(-x);
  }

  double alpha1(int n, double r) const {
    if (r < 0.0) throw DomainError("arch alpha: r must be nonnegative");
    if (is_independence() || r == 0.0) return r;
    double u = gamma_p(double(n), r);
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    double th = theta();
    return th * n * Dist1D::fisher_snedecor(2.0 * n, 2.0 / th).quantile(u);
  }
  double alpha1_inv(int n, double rho) const {
    if (rho < 0.0) throw DomainError("arch alpha_inv: rho must be nonnegative");
    if (is_independence() || rho == 0.0) return rho;
    double th = theta();
    double u = Dist1D::fisher_snedecor(2.0 * n, 2.0 / th).cdf(rho / (th * n));
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    return detail::gamma_p_inv(double(n), u);
  }
  double alpha1_deriv(int n, double r) const {
    if (is_independence()) return 1.0;
    double h = 1e-5 * (1.0 + r);
    double lo = std::max(r - h, 0.0);
    return (alpha1(n, r + h) - alpha1(n, lo)) / (r + h - lo);
  }

  Vec forward(const Vec& x) const {
    const int n = int(x.size());
    Vec e(n);
    for (int i = 0; i < n; ++i) e[i] = premap(x[i]);
    if (is_independence()) return e;
    double r = e.sum();
    return (alpha1(n, r) / r) * e;
  }

  Vec inverse(const Vec& y) const {
    const int n = int(y.size());
    for (int i = 0; i < n; ++i) {
      if (!(y[i] > 0.0)) {
        throw DomainError("arch_inverse: coordinate " + std::to_string(i) +
                          " must be strictly positive");
      }
    }
    Vec e = y;
    if (!is_independence()) {
      double rho = y.sum();
      e *= alpha1_inv(n, rho) / rho;
    }
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = premap_inv(e[i]);
    return x;
  }

  /// log|grad S(y)|: the l1 radial term plus the diagonal pre-map term.
  double logdet_inv(int n, const Vec& y) const {
    for (int i = 0; i < n; ++i) {
      if (!(y[i] > 0.0)) throw DomainError("arch_logdet_inv: coordinates must be positive");
    }
    double rho = y.sum();
    double radial = 0.0;
    Vec e = y;
    if (!is_independence()) {
      double ri = alpha1_inv(n, rho);
      radial = (n - 1) * std::log(ri / rho) - std::log(alpha1_deriv(n, ri));
      e *= ri / rho;
    }
    double pre = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = premap_inv(e[i]);
      pre -= premap_log_deriv(x);
    }
    return radial + pre;
  }

  double marginal_cdf(double x) const {
    if (x < 0.0) throw DomainError("arch_marginal_cdf: x must be nonnegative");
    return 1.0 - psi(x);
  }

  /// Draws from the conditional copula given observed copula-scale values,
  /// via the mixing-variable route: for Clayton, W | a ~ Gamma(1/theta + k, 1 + a).
  Vec conditional_sample(const Vec& observed, int n_new, Rng& rng) const {
    Vec u(n_new);
    if (is_independence()) {
      for (int i = 0; i < n_new; ++i) u[i] = rng.uniform();
      return u;
    }
    double a = 0.0;
    for (Index j = 0; j < observed.size(); ++j) a += psi_inv(observed[j]);
    double w = Dist1D::gamma(1.0 / theta() + double(observed.size()), 1.0 + a).sample(rng);
    auto e1 = Dist1D::exponential(1.0);
    for (int i = 0; i < n_new; ++i) u[i] = psi(e1.sample(rng) / w);
    return u;
  }

  /// Conditional draw of the simplicial vector itself given observed data
  /// coordinates (all positive): z_new,i = Exp(1)/W with W | sum(z_obs).
  Vec conditional_sample_data(const Vec& z_obs, int n_new, Rng& rng) const {
    Vec z(n_new);
    auto e1 = Dist1D::exponential(1.0);
    if (is_independence()) {
      for (int i = 0; i < n_new; ++i) z[i] = e1.sample(rng);
      return z;
    }
    double a = z_obs.sum();
    double w = Dist1D::gamma(1.0 / theta() + double(z_obs.size()), 1.0 + a).sample(rng);
    for (int i = 0; i < n_new; ++i) z[i] = e1.sample(rng) / w;
    return z;
  }

 private:
  using Mode = std::variant<Independence, Clayton>;
  explicit ArchimedeanLayer(Mode m) : mode_(m) {}
  Mode mode_;
};

inline Vec arch_forward(const ArchimedeanLayer& layer, const Vec& x) { return layer.forward(x); }
inline Vec arch_inverse(const ArchimedeanLayer& layer, const Vec& y) { return layer.inverse(y); }
inline double arch_logdet_inv(const ArchimedeanLayer& layer, int n, const Vec& y) {
  return layer.logdet_inv(n, y);
}
inline double arch_marginal_cdf(const ArchimedeanLayer& layer, double x) {
  return layer.marginal_cdf(x);
}
inline Vec arch_conditional_sample(const ArchimedeanLayer& layer, const Vec& observed, int n_new,
                                   Rng& rng) {
  return layer.conditional_sample(observed, n_new, rng);
}

struct TailDependence {
  double lower = 0.0;
  double upper = 0.0;
};

inline TailDependence tail_dependence_gaussian(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("tail_dependence_gaussian: invalid rho");
  if (rho == 1.0) return {1.0, 1.0};
  return {0.0, 0.0};
}

inline TailDependence tail_dependence_student_t(double theta, double rho) {
  if (theta <= 0.0) throw DomainError("tail_dependence_student_t: theta must be positive");
  if (!(rho > -1.0 && rho <= 1.0)) throw DomainError("tail_dependence_student_t: invalid rho");
  double lam =
      2.0 * student_t_cdf(-std::sqrt((theta + 1.0) * (1.0 - rho) / (1.0 + rho)), theta + 1.0);
  return {lam, lam};
}

/// Both limits evaluated from the generator derivative at proxy points
/// x = 1e-8 (upper) and x = 1e8 (lower); the ratio runs in log space so
/// exponentially decaying generators do not underflow.
inline TailDependence tail_dependence_archimedean(
    const std::function<double(double)>& log_abs_psi_deriv) {
  const double x0 = 1e-8, x1 = 1e8;
  double upper = 2.0 * -std::expm1(log_abs_psi_deriv(2.0 * x0) - log_abs_psi_deriv(x0));
  double lower = 2.0 * std::exp(log_abs_psi_deriv(2.0 * x1) - log_abs_psi_deriv(x1));
  return {std::clamp(lower, 0.0, 1.0), std::clamp(upper, 0.0, 1.0)};
}

inline TailDependence tail_dependence_archimedean(const ArchimedeanLayer& layer) {
  return tail_dependence_archimedean([&layer](double s) { return layer.log_abs_psi_deriv(s); });
}

}  // namespace tp

#endif
