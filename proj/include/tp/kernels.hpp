#ifndef TP_KERNELS_HPP
#define TP_KERNELS_HPP

#include <atomic>
#include <cmath>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "tp/special.hpp"
#include "tp/types.hpp"

namespace tp {

namespace detail {
// process-wide count of factorizations that needed a nonzero jitter rung;
// reporting only, never read by numerical code
inline std::atomic<long> jitter_event_counter{0};
}  // namespace detail

/// Positive-definite covariance function on a scalar index. The white-noise
/// summand contributes sigma0^2 only on exactly coincident inputs and can be
/// dropped at evaluation time for noise-free prediction.
class Kernel {
 public:
  struct SquaredExponential { double sigma, rate; };
  struct Brownian { double sigma; };
  struct SMComponent { double weight, mean, variance; };
  struct SpectralMixture { std::vector<SMComponent> components; };
  struct WhiteNoise { double sigma0; };
  struct Sum { std::vector<Kernel> terms; };

  static Kernel squared_exponential(double sigma, double rate) {
    if (sigma <= 0.0 || rate <= 0.0) throw DomainError("SquaredExponential: parameters must be positive");
    return Kernel(SquaredExponential{sigma, rate});
  }
  static Kernel brownian(double sigma) {
    if (sigma <= 0.0) throw DomainError("Brownian: sigma must be positive");
    return Kernel(Brownian{sigma});
  }
  static Kernel spectral_mixture(std::vector<SMComponent> components) {
    if (components.empty()) throw DomainError("SpectralMixture: needs at least one component");
    for (const auto& c : components) {
      if (c.variance <= 0.0) throw DomainError("SpectralMixture: component variance must be positive");
    }
    return Kernel(SpectralMixture{std::move(components)});
  }
  static Kernel white_noise(double sigma0) {
    if (sigma0 < 0.0) throw DomainError("WhiteNoise: sigma0 must be nonnegative");
    return Kernel(WhiteNoise{sigma0});
  }
  static Kernel sum(std::vector<Kernel> terms) {
    if (terms.empty()) throw DomainError("Sum: needs at least one term");
    return Kernel(Sum{std::move(terms)});
  }

  double operator()(double t, double s, bool include_noise = true) const {
    return std::visit([&](const auto& k) { return eval(k, t, s, include_noise); }, family_);
  }

  bool has_noise() const {
    return std::visit(
        []<class K>(const K& k) {
          if constexpr (std::is_same_v<K, WhiteNoise>) return k.sigma0 > 0.0;
          else if constexpr (std::is_same_v<K, Sum>) {
            for (const auto& t : k.terms)
              if (t.has_noise()) return true;
            return false;
          } else {
            return false;
          }
        },
        family_);
  }

  template <class F>
  void visit(F&& f) const { std::visit(std::forward<F>(f), family_); }
  template <class F>
  void visit(F&& f) { std::visit(std::forward<F>(f), family_); }

 private:
  using Family =
      std::variant<SquaredExponential, Brownian, SpectralMixture, WhiteNoise, Sum>;
  explicit Kernel(Family f) : family_(std::move(f)) {}

  static double eval(const SquaredExponential& k, double t, double s, bool) {
    double d = t - s;
    return k.sigma * k.sigma * std::exp(-k.rate * d * d);
  }
  static double eval(const Brownian& k, double t, double s, bool) {
    return k.sigma * k.sigma * std::min(t, s);
  }
  static double eval(const SpectralMixture& k, double t, double s, bool) {
    double tau = t - s, acc = 0.0;
    for (const auto& c : k.components) {
      acc += c.weight * c.weight * std::exp(-2.0 * kPi * kPi * c.variance * tau * tau) *
             std::cos(2.0 * kPi * c.mean * tau);
    }
    return acc;
  }
  static double eval(const WhiteNoise& k, double t, double s, bool include_noise) {
    return (include_noise && t == s) ? k.sigma0 * k.sigma0 : 0.0;
  }
  static double eval(const Sum& k, double t, double s, bool include_noise) {
    double acc = 0.0;
    for (const auto& term : k.terms) acc += term(t, s, include_noise);
    return acc;
  }

  Family family_;
};

/// Gram matrix [G]_ij = k(t_i, s_j). With include_noise=false the white-noise
/// summand is dropped everywhere.
inline Mat gram(const Kernel& k, const Vec& t, const Vec& s, bool include_noise = true) {
  Mat g(t.size(), s.size());
  for (Index i = 0; i < t.size(); ++i)
    for (Index j = 0; j < s.size(); ++j) g(i, j) = k(t[i], s[j], include_noise);
  return g;
}

inline Mat gram(const Kernel& k, const Vec& t, bool include_noise = true) {
  return gram(k, t, t, include_noise);
}

struct CholeskyPSD {
  Mat lower;      // L with L L^T = G + jitter I
  double jitter;  // the epsilon actually added
};

/// Lower Cholesky factor with a deterministic jitter ladder
/// {0, 1e-10, 1e-8, 1e-6} * max diagonal. Throws NumericalError naming the
/// offending leading minor if every rung fails.
template <class Derived>
CholeskyPSD cholesky_psd(const Eigen::MatrixBase<Derived>& g) {
  const Index n = g.rows();
  if (n != g.cols()) throw DomainError("cholesky_psd: matrix must be square");
  const double scale = n > 0 ? g.diagonal().maxCoeff() : 0.0;
  const double ladder[] = {0.0, 1e-10, 1e-8, 1e-6};
  for (double rel : ladder) {
    Mat trial = g;
    trial.diagonal().array() += rel * scale;
    Eigen::LLT<Mat> llt(trial);
    if (llt.info() == Eigen::Success) {
      if (rel > 0.0) detail::jitter_event_counter.fetch_add(1, std::memory_order_relaxed);
      return {Mat(llt.matrixL()), rel * scale};
    }
  }
  // locate the first nonpositive pivot for the error message
  Mat a = g;
  a.diagonal().array() += ladder[3] * scale;
  Index bad = 0;
  for (Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Index k = 0; k < j; ++k) pivot -= a(j, k) * a(j, k);
    if (pivot <= 0.0 || !std::isfinite(pivot)) {
      bad = j;
      break;
    }
    a(j, j) = std::sqrt(pivot);
    for (Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / a(j, j);
    }
  }
  throw NumericalError("cholesky_psd: not positive definite, leading minor of order " +
                       std::to_string(bad + 1) + " fails after jitter ladder");
}

}  // namespace tp

#endif
