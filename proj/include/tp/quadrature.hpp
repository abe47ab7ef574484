#ifndef TP_QUADRATURE_HPP
#define TP_QUADRATURE_HPP

#include <cmath>
#include <functional>

#include "tp/dist.hpp"
#include "tp/types.hpp"

namespace tp {

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
inline void gauss_legendre(int n, Vec& nodes, Vec& weights) {
  nodes.resize(n);
  weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

/// CDF of the product R_base * S where S has density `mixing` on the positive
/// line: F(r) = integral of mixing(s) * F_base(r/s) ds. The integral runs on a
/// log axis with fixed Gauss-Legendre nodes; the quadrature mass of the mixing
/// density normalizes the result so both limits stay exact. A degenerate
/// mixing (s_lo == s_hi) collapses to a single point mass.
class ProductRadialCDF {
 public:
  ProductRadialCDF(std::function<double(double)> mixing_density, Dist1D base, double s_lo,
                   double s_hi, int n_nodes = 256)
      : base_(base) {
    if (!(s_lo > 0.0) || s_hi < s_lo) {
      throw DomainError("ProductRadialCDF: support must satisfy 0 < s_lo <= s_hi");
    }
    if (s_lo == s_hi) {
      nodes_.resize(1);
      weights_.resize(1);
      nodes_[0] = s_lo;
      weights_[0] = 1.0;
      return;
    }
    Vec x, w;
    gauss_legendre(n_nodes, x, w);
    const double a = std::log(s_lo), b = std::log(s_hi);
    nodes_.resize(n_nodes);
    weights_.resize(n_nodes);
    double mass = 0.0;
    for (int i = 0; i < n_nodes; ++i) {
      double u = 0.5 * (b - a) * x[i] + 0.5 * (a + b);
      double s = std::exp(u);
      nodes_[i] = s;
      weights_[i] = 0.5 * (b - a) * w[i] * mixing_density(s) * s;
      mass += weights_[i];
    }
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw NumericalError("ProductRadialCDF: quadrature mass of mixing density is degenerate");
    }
    weights_ /= mass;
  }

  double operator()(double r) const {
    if (r < 0.0) throw DomainError("ProductRadialCDF: r must be nonnegative");
    if (r == 0.0) return 0.0;
    double acc = 0.0;
    for (Index i = 0; i < nodes_.size(); ++i) acc += weights_[i] * base_.cdf(r / nodes_[i]);
    return std::clamp(acc, 0.0, 1.0);
  }

  const Vec& nodes() const { return nodes_; }
  const Vec& weights() const { return weights_; }
  const Dist1D& base() const { return base_; }

 private:
  Dist1D base_;
  Vec nodes_;
  Vec weights_;
};

}  // namespace tp

#endif
