#ifndef TP_SLICE_HPP
#define TP_SLICE_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "tp/rng.hpp"
#include "tp/types.hpp"

namespace tp {

struct SliceOptions {
  int burn_in = 100;
  double width = 1.0;
  int max_expansions = 50;
};

/// Univariate slice sampler with stepping-out and shrinkage (Neal 2003).
/// Returns n draws after burn-in from the possibly unnormalized logdensity.
inline std::vector<double> slice_sample_1d(const std::function<double(double)>& logdensity,
                                           double x0, int n, Rng& rng,
                                           const SliceOptions& opt = {}) {
  std::vector<double> out;
  if (n <= 0) return out;
  out.reserve(n);
  double x = x0;
  double fx = logdensity(x);
  if (!std::isfinite(fx)) throw DomainError("slice_sample_1d: logdensity not finite at x0");
  const int total = n + opt.burn_in;
  for (int k = 0; k < total; ++k) {
    const double level = fx - (-std::log(rng.uniform_pos()));
    // stepping out
    double lo = x - opt.width * rng.uniform();
    double hi = lo + opt.width;
    int expansions = 0;
    while (logdensity(lo) > level) {
      lo -= opt.width;
      if (++expansions > opt.max_expansions) {
        throw NumericalError("slice_sample_1d: slice interval not found (left)");
      }
    }
    while (logdensity(hi) > level) {
      hi += opt.width;
      if (++expansions > opt.max_expansions) {
        throw NumericalError("slice_sample_1d: slice interval not found (right)");
      }
    }
    // shrinkage
    for (;;) {
      double cand = lo + (hi - lo) * rng.uniform();
      double fc = logdensity(cand);
      if (fc > level) {
        x = cand;
        fx = fc;
        break;
      }
      (cand < x ? lo : hi) = cand;
      if (hi - lo < 1e-300) throw NumericalError("slice_sample_1d: shrinkage collapsed");
    }
    if (k >= opt.burn_in) out.push_back(x);
  }
  return out;
}

}  // namespace tp

#endif
