#ifndef TP_METRICS_HPP
#define TP_METRICS_HPP

#include <cmath>

#include "tp/types.hpp"

namespace tp {

/// Point-prediction and sample-expectation errors over a validation set.
/// ESE >= MSE and EAE >= MAE hold on any sample set (Jensen).
struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double ese = 0.0;
  double eae = 0.0;
};

/// samples holds one sampled path per row; columns align with y_true.
inline Metrics compute_metrics(const Vec& y_true, const Mat& samples) {
  if (samples.cols() != y_true.size()) throw DomainError("compute_metrics: size mismatch");
  if (samples.rows() < 1) throw DomainError("compute_metrics: need at least one sample");
  const Index n = y_true.size();
  const Index s = samples.rows();
  Metrics m;
  for (Index i = 0; i < n; ++i) {
    double pred = samples.col(i).mean();
    m.mse += (y_true[i] - pred) * (y_true[i] - pred);
    m.mae += std::abs(y_true[i] - pred);
    double se = 0.0, ae = 0.0;
    for (Index k = 0; k < s; ++k) {
      double d = y_true[i] - samples(k, i);
      se += d * d;
      ae += std::abs(d);
    }
    m.ese += se / double(s);
    m.eae += ae / double(s);
  }
  m.mse /= double(n);
  m.mae /= double(n);
  m.ese /= double(n);
  m.eae /= double(n);
  return m;
}

}  // namespace tp

#endif
