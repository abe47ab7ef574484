#ifndef TP_STACK_HPP
#define TP_STACK_HPP

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tp/cov_layer.hpp"
#include "tp/parallel.hpp"
#include "tp/radial_layer.hpp"
#include "tp/warpings.hpp"

namespace tp {

using CopulaLayer = std::variant<EllipticalLayer, ArchimedeanLayer>;

/// Deep transport process over a Gaussian white-noise reference, with the
/// fixed layer order [copula?] -> [covariance?] -> [marginal*].
struct LayerStack {
  std::optional<CopulaLayer> copula;
  std::optional<CovarianceLayer> covariance;
  std::vector<MarginalLayer> marginals;
};

using LayerSpec = std::variant<EllipticalLayer, ArchimedeanLayer, CovarianceLayer, MarginalLayer>;

struct ValidationReport {
  bool valid = true;
  std::vector<std::string> issues;
  int layer_count = 0;
};

inline bool stack_has_archimedean(const LayerStack& stack) {
  return stack.copula && std::holds_alternative<ArchimedeanLayer>(*stack.copula);
}

inline bool stack_copula_is_identity(const LayerStack& stack) {
  if (!stack.copula) return true;
  if (auto* ell = std::get_if<EllipticalLayer>(&*stack.copula)) return ell->is_identity();
  return false;
}

/// Checks the composition rules on an ordered layer list.
inline ValidationReport validate_stack(const std::vector<LayerSpec>& layers) {
  ValidationReport report;
  report.layer_count = int(layers.size());
  int stage = 0;  // 0: copula allowed, 1: covariance allowed, 2: marginals only
  bool has_copula = false, has_cov = false, archimedean = false, sparse = false;
  bool copula_identity = true;
  for (const auto& layer : layers) {
    if (std::holds_alternative<EllipticalLayer>(layer) ||
        std::holds_alternative<ArchimedeanLayer>(layer)) {
      if (stage > 0 || has_copula) {
        report.issues.push_back("copula layer must come first and appear at most once");
      }
      has_copula = true;
      archimedean = std::holds_alternative<ArchimedeanLayer>(layer);
      if (auto* ell = std::get_if<EllipticalLayer>(&layer)) copula_identity = ell->is_identity();
      else copula_identity = false;
      stage = 1;
    } else if (std::holds_alternative<CovarianceLayer>(layer)) {
      if (stage > 1 || has_cov) {
        report.issues.push_back("covariance layer must precede marginals and appear at most once");
      }
      has_cov = true;
      sparse = std::get<CovarianceLayer>(layer).is_sparse();
      stage = 2;
    } else {
      stage = 2;
    }
  }
  if (archimedean && has_cov) {
    report.issues.push_back("archimedean copula cannot be composed with a covariance layer");
  }
  if (sparse && has_copula && !copula_identity) {
    report.issues.push_back("sparse covariance mode requires a gaussian (identity) copula");
  }
  report.valid = report.issues.empty();
  return report;
}

inline ValidationReport validate_stack(const LayerStack& stack) {
  std::vector<LayerSpec> layers;
  if (stack.copula) {
    if (auto* ell = std::get_if<EllipticalLayer>(&*stack.copula)) layers.push_back(*ell);
    else layers.push_back(std::get<ArchimedeanLayer>(*stack.copula));
  }
  if (stack.covariance) layers.push_back(*stack.covariance);
  for (const auto& m : stack.marginals) layers.push_back(m);
  return validate_stack(layers);
}

/// Builds a stack from an ordered layer list, rejecting invalid compositions.
inline LayerStack make_stack(const std::vector<LayerSpec>& layers) {
  auto report = validate_stack(layers);
  if (!report.valid) {
    std::string msg = "invalid stack:";
    for (const auto& issue : report.issues) msg += " " + issue + ";";
    throw ValidationError(msg);
  }
  LayerStack stack;
  for (const auto& layer : layers) {
    if (auto* ell = std::get_if<EllipticalLayer>(&layer)) stack.copula = *ell;
    else if (auto* arch = std::get_if<ArchimedeanLayer>(&layer)) stack.copula = *arch;
    else if (auto* cov = std::get_if<CovarianceLayer>(&layer)) stack.covariance = *cov;
    else stack.marginals.push_back(std::get<MarginalLayer>(layer));
  }
  return stack;
}

namespace detail {

/// Training-side affine map of a sparse covariance layer at the data inputs:
/// mean from the pseudo-data, conditional covariance with the noise kept on
/// the data block.
inline AffinePush sparse_training_operator(const CovarianceLayer& layer, const Vec& t) {
  const Vec& s = layer.sparse().pseudo_inputs;
  const Vec& z = layer.sparse().pseudo_values;
  if (s.size() >= t.size()) {
    throw ValidationError("sparse covariance: pseudo-input count must be below the data size");
  }
  auto ch = cholesky_psd(gram(layer.kernel(), s, true));
  Mat cross = gram(layer.kernel(), t, s, false);
  Mat prior = gram(layer.kernel(), t, true);
  Vec w = ch.lower.triangularView<Eigen::Lower>().solve(z);
  w = ch.lower.transpose().triangularView<Eigen::Upper>().solve(w);
  Mat v = ch.lower.triangularView<Eigen::Lower>().solve(cross.transpose());
  Mat cond = prior - v.transpose() * v;
  return {cross * w, cholesky_psd(cond).lower};
}

}  // namespace detail

struct NllResult {
  double value = std::numeric_limits<double>::infinity();
  std::string reason;  // nonempty when the +inf sentinel fired
};

/// Composite NLL: walk the inverse layers top-down, accumulating each layer's
/// log|grad S| at the current intermediate values, then score the white-noise
/// reference. Domain violations return the +inf sentinel with a reason so
/// optimizers can reject the candidate.
inline NllResult stack_nll_explained(const LayerStack& stack, const Vec& t, const Vec& y) {
  if (t.size() != y.size()) throw ValidationError("stack_nll: |t| != |y|");
  auto report = validate_stack(stack);
  if (!report.valid) throw ValidationError("stack_nll: invalid stack: " + report.issues.front());
  const int n = int(t.size());
  try {
    Vec z = y;
    double nll = 0.0;
    for (auto it = stack.marginals.rbegin(); it != stack.marginals.rend(); ++it) {
      nll -= marginal_logdet_inv(*it, t, z);
      z = marginal_inverse(*it, t, z);
    }
    if (stack.covariance) {
      if (stack.covariance->is_sparse()) {
        auto push = detail::sparse_training_operator(*stack.covariance, t);
        nll -= -push.lower.diagonal().array().log().sum();
        z = push.lower.triangularView<Eigen::Lower>().solve((z - push.mean).eval());
      } else {
        nll -= cov_logdet_inv(*stack.covariance, t);
        z = cov_inverse(*stack.covariance, t, z);
      }
    }
    if (stack.copula) {
      if (auto* ell = std::get_if<EllipticalLayer>(&*stack.copula)) {
        if (!ell->is_identity()) {
          nll -= ell->logdet_inv(n, z);
          z = ell->inverse(z);
        }
      } else {
        const auto& arch = std::get<ArchimedeanLayer>(*stack.copula);
        nll -= arch.logdet_inv(n, z);
        z = arch.inverse(z);
      }
    }
    nll += 0.5 * n * kLogTwoPi + 0.5 * z.squaredNorm();
    if (!std::isfinite(nll)) return {std::numeric_limits<double>::infinity(), "non-finite NLL"};
    return {nll, {}};
  } catch (const DomainError& e) {
    return {std::numeric_limits<double>::infinity(), e.what()};
  }
}

inline double stack_nll(const LayerStack& stack, const Vec& t, const Vec& y) {
  return stack_nll_explained(stack, t, y).value;
}

/// Matrix of sampled process values at prediction inputs plus provenance.
struct PosteriorSampleSet {
  Vec inputs;           // prediction inputs, one column per entry
  Mat samples;          // one sampled path per row
  std::uint64_t seed = 0;
  std::string model_hash;
};

/// Algorithm 2: invert the observed side once, sample the collapsed reference
/// posterior, and push every draw through the forward prediction maps.
/// Parallel over samples with split rng streams.
inline PosteriorSampleSet stack_posterior_sample(const LayerStack& stack, const Vec& t,
                                                 const Vec& y, const Vec& t_new, int n_samples,
                                                 std::uint64_t seed,
                                                 const std::string& model_hash = {}) {
  if (t.size() != y.size()) throw ValidationError("stack_posterior_sample: |t| != |y|");
  if (n_samples <= 0) throw ValidationError("stack_posterior_sample: need a positive sample count");
  auto report = validate_stack(stack);
  if (!report.valid) {
    throw ValidationError("stack_posterior_sample: invalid stack: " + report.issues.front());
  }
  const int n = int(t.size());
  const int n_new = int(t_new.size());
  Rng root(seed);

  // observed side: invert marginals down to the covariance/copula interface
  Vec z = y;
  for (auto it = stack.marginals.rbegin(); it != stack.marginals.rend(); ++it) {
    z = marginal_inverse(*it, t, z);
  }

  PosteriorSampleSet out;
  out.inputs = t_new;
  out.samples.resize(n_samples, n_new);
  out.seed = seed;
  out.model_hash = model_hash;

  auto push_marginals = [&](Vec v) {
    for (const auto& m : stack.marginals) v = marginal_forward(m, t_new, v);
    return v;
  };

  if (stack_has_archimedean(stack)) {
    const auto& arch = std::get<ArchimedeanLayer>(*stack.copula);
    for (Index i = 0; i < z.size(); ++i) {
      if (!(z[i] > 0.0)) {
        throw DomainError("stack_posterior_sample: archimedean stack needs positive values");
      }
    }
    parallel_for(std::size_t(n_samples), [&](std::size_t i) {
      Rng rng = root.split(i);
      Vec z_new = arch.conditional_sample_data(z, n_new, rng);
      out.samples.row(Index(i)) = push_marginals(std::move(z_new)).transpose();
    });
    return out;
  }

  // elliptical (or absent) copula path
  const EllipticalLayer* ell =
      stack.copula ? std::get_if<EllipticalLayer>(&*stack.copula) : nullptr;
  const bool gaussian_reference = !ell || ell->is_identity();

  Vec x_ref;
  AffinePush push;
  if (stack.covariance) {
    if (stack.covariance->is_sparse()) {
      push = sparse_operator(*stack.covariance, t_new);
      x_ref = Vec::Zero(n);  // unused: sparse mode requires the gaussian reference
    } else {
      x_ref = cov_inverse(*stack.covariance, t, z);
      push = cov_posterior_operator(*stack.covariance, t, t_new, x_ref);
    }
  } else {
    x_ref = z;
    push = AffinePush{Vec::Zero(n_new), Mat::Identity(n_new, n_new)};
  }

  std::vector<double> radii;
  if (!gaussian_reference && ell->is_general()) {
    // one scalar chain for the batch, thinned; directions drawn per sample
    Rng chain_rng = root.split(0x7ad1a1);
    radii = ell->general_posterior_radius(x_ref.norm(), n, n_new, n_samples, chain_rng);
  }

  parallel_for(std::size_t(n_samples), [&](std::size_t i) {
    Rng rng = root.split(i);
    auto normal = Dist1D::std_normal();
    Vec u(n_new);
    for (Index j = 0; j < n_new; ++j) u[j] = normal.sample(rng);
    if (!gaussian_reference) {
      double beta;
      if (ell->is_general()) {
        beta = radii[i];
      } else {
        beta = ell->student_t_posterior_radius(x_ref.norm(), n, n_new, rng);
      }
      double norm_u = u.norm();
      if (norm_u > 0.0) u *= beta / norm_u;
    }
    out.samples.row(Index(i)) = push_marginals(push(u)).transpose();
  });
  return out;
}

struct QuantileTable {
  Vec inputs;
  Vec mean;
  Mat quantiles;  // one row per input, one column per probability
  Vec probs;
};

/// Per-input empirical quantiles (type-7 interpolation) from a sample set.
inline QuantileTable stack_quantiles(const PosteriorSampleSet& set, const Vec& probs) {
  const Index n_samples = set.samples.rows();
  if (n_samples < 100) throw ValidationError("stack_quantiles: need at least 100 samples");
  QuantileTable table;
  table.inputs = set.inputs;
  table.probs = probs;
  table.mean = set.samples.colwise().mean();
  table.quantiles.resize(set.inputs.size(), probs.size());
  std::vector<double> column(static_cast<std::size_t>(n_samples));
  for (Index j = 0; j < set.inputs.size(); ++j) {
    for (Index i = 0; i < n_samples; ++i) column[std::size_t(i)] = set.samples(i, j);
    std::sort(column.begin(), column.end());
    for (Index p = 0; p < probs.size(); ++p) {
      double prob = probs[p];
      if (!(prob >= 0.0 && prob <= 1.0)) throw ValidationError("stack_quantiles: prob outside [0,1]");
      double h = prob * double(n_samples - 1);
      Index lo = Index(std::floor(h));
      Index hi = std::min(lo + 1, n_samples - 1);
      double w = h - double(lo);
      table.quantiles(j, p) = (1.0 - w) * column[std::size_t(lo)] + w * column[std::size_t(hi)];
    }
  }
  return table;
}

}  // namespace tp

#endif
