#ifndef TP_COV_LAYER_HPP
#define TP_COV_LAYER_HPP

#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "tp/kernels.hpp"
#include "tp/types.hpp"

namespace tp {

/// Trainable pseudo-data for the sparse covariance transport.
struct SparseConfig {
  Vec pseudo_inputs;
  Vec pseudo_values;
};

/// Covariance transport T_t(x) = L_t x with L_t the lower Cholesky factor of
/// the Gram matrix. Backward solves use the full kernel k = r + sigma0 delta;
/// forward prediction drops the noise summand. Factors are cached per input
/// vector behind a read-through lock.
class CovarianceLayer {
 public:
  explicit CovarianceLayer(Kernel k, std::optional<SparseConfig> sparse = std::nullopt)
      : kernel_(std::move(k)), sparse_(std::move(sparse)), cache_(std::make_shared<Cache>()) {
    if (sparse_ && sparse_->pseudo_inputs.size() != sparse_->pseudo_values.size()) {
      throw ValidationError("CovarianceLayer: pseudo inputs and values must match in size");
    }
  }

  const Kernel& kernel() const { return kernel_; }
  bool is_sparse() const { return sparse_.has_value(); }
  const SparseConfig& sparse() const { return *sparse_; }

  /// Cached lower factor of gram(kernel, t, t, include_noise=true).
  const CholeskyPSD& factor(const Vec& t) const {
    std::uint64_t key = hash_vec(t);
    {
      std::shared_lock lock(cache_->mutex);
      for (const auto& e : cache_->entries) {
        if (e->key == key && e->t.size() == t.size() && e->t == t) return e->factor;
      }
    }
    CholeskyPSD ch = cholesky_psd(gram(kernel_, t, true));
    std::unique_lock lock(cache_->mutex);
    for (const auto& e : cache_->entries) {
      if (e->key == key && e->t.size() == t.size() && e->t == t) return e->factor;
    }
    cache_->entries.push_back(std::make_unique<Entry>(Entry{key, t, std::move(ch)}));
    return cache_->entries.back()->factor;
  }

 private:
  static std::uint64_t hash_vec(const Vec& v) {
    std::uint64_t h = 1469598103934665603ULL;
    for (Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &v[i], sizeof bits);
      h = (h ^ bits) * 1099511628211ULL;
    }
    return h;
  }

  struct Entry {
    std::uint64_t key;
    Vec t;
    CholeskyPSD factor;
  };

  // copies share the cache; the kernel is immutable so entries stay valid
  struct Cache {
    std::shared_mutex mutex;
    std::vector<std::unique_ptr<Entry>> entries;
  };

  Kernel kernel_;
  std::optional<SparseConfig> sparse_;
  std::shared_ptr<Cache> cache_;
};

inline Vec cov_forward(const CovarianceLayer& layer, const Vec& t, const Vec& x) {
  if (t.size() != x.size()) throw DomainError("cov_forward: size mismatch");
  return layer.factor(t).lower.triangularView<Eigen::Lower>() * x;
}

/// Forward substitution L_t x = y; no explicit inverse is formed.
inline Vec cov_inverse(const CovarianceLayer& layer, const Vec& t, const Vec& y) {
  if (t.size() != y.size()) throw DomainError("cov_inverse: size mismatch");
  const Mat& lower = layer.factor(t).lower;
  for (Index i = 0; i < lower.rows(); ++i) {
    if (lower(i, i) <= 0.0 || !std::isfinite(lower(i, i))) {
      throw NumericalError("cov_inverse: singular diagonal entry");
    }
  }
  return lower.triangularView<Eigen::Lower>().solve(y);
}

/// log|grad S_t| = -sum_i log l_ii, independent of y.
inline double cov_logdet_inv(const CovarianceLayer& layer, const Vec& t) {
  return -layer.factor(t).lower.diagonal().array().log().sum();
}

/// Affine posterior push-forward u -> mean + L_cond u, precomputed once and
/// applied to many reference draws.
struct AffinePush {
  Vec mean;
  Mat lower;  // factor of the conditional covariance; zero when degenerate

  Vec operator()(const Vec& u) const {
    if (u.size() != mean.size()) throw DomainError("AffinePush: size mismatch");
    return mean + lower.triangularView<Eigen::Lower>() * u;
  }
};

namespace detail {

/// Factor a conditional covariance. A matrix that is numerically zero
/// relative to the prior scale collapses to the exact zero factor
/// (noise-free interpolation at observed inputs).
inline Mat conditional_factor(Mat cond, double prior_scale) {
  cond = 0.5 * (cond + cond.transpose()).eval();
  const double scale = cond.diagonal().maxCoeff();
  if (scale <= 1e-12 * std::max(prior_scale, 1e-300)) {
    return Mat::Zero(cond.rows(), cond.cols());
  }
  try {
    return cholesky_psd(cond).lower;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("conditional covariance not PSD: ") + e.what());
  }
}

}  // namespace detail

/// Posterior map for the exact covariance layer: the t-block keeps the noise
/// (backward uses k), the prediction blocks drop it (forward uses r).
inline AffinePush cov_posterior_operator(const CovarianceLayer& layer, const Vec& t,
                                         const Vec& t_new, const Vec& x_ref) {
  if (t.size() != x_ref.size()) throw DomainError("cov_posterior_operator: size mismatch");
  const Mat& lower = layer.factor(t).lower;
  Vec y_obs = lower.triangularView<Eigen::Lower>() * x_ref;
  Mat cross = gram(layer.kernel(), t_new, t, false);
  Mat prior = gram(layer.kernel(), t_new, t_new, false);

  // solve Sigma_tt^{-1} via the cached factor
  Vec w = lower.triangularView<Eigen::Lower>().solve(y_obs);
  w = lower.transpose().triangularView<Eigen::Upper>().solve(w);
  Vec mean = cross * w;

  Mat v = lower.triangularView<Eigen::Lower>().solve(cross.transpose());
  Mat cond = prior - v.transpose() * v;
  double prior_scale = prior.rows() > 0 ? prior.diagonal().maxCoeff() : 0.0;
  return {std::move(mean), detail::conditional_factor(std::move(cond), prior_scale)};
}

inline Vec cov_posterior_map(const CovarianceLayer& layer, const Vec& t, const Vec& t_new,
                             const Vec& x_ref, const Vec& u) {
  return cov_posterior_operator(layer, t, t_new, x_ref)(u);
}

/// Sparse transport through pseudo-data (s, z): the s-block keeps the noise,
/// prediction blocks are noise-free.
inline AffinePush sparse_operator(const CovarianceLayer& layer, const Vec& t_new) {
  if (!layer.is_sparse()) throw ValidationError("sparse_operator: layer is not in sparse mode");
  const Vec& s = layer.sparse().pseudo_inputs;
  const Vec& z = layer.sparse().pseudo_values;
  auto ch = cholesky_psd(gram(layer.kernel(), s, true));
  Mat cross = gram(layer.kernel(), t_new, s, false);
  Mat prior = gram(layer.kernel(), t_new, t_new, false);

  Vec w = ch.lower.triangularView<Eigen::Lower>().solve(z);
  w = ch.lower.transpose().triangularView<Eigen::Upper>().solve(w);
  Vec mean = cross * w;

  Mat v = ch.lower.triangularView<Eigen::Lower>().solve(cross.transpose());
  Mat cond = prior - v.transpose() * v;
  double prior_scale = prior.rows() > 0 ? prior.diagonal().maxCoeff() : 0.0;
  return {std::move(mean), detail::conditional_factor(std::move(cond), prior_scale)};
}

inline Vec sparse_forward(const CovarianceLayer& layer, const Vec& t_new, const Vec& u) {
  return sparse_operator(layer, t_new)(u);
}

}  // namespace tp

#endif
