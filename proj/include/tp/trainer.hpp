#ifndef TP_TRAINER_HPP
#define TP_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tp/rng.hpp"
#include "tp/special.hpp"
#include "tp/stack.hpp"
#include "tp/types.hpp"

namespace tp {

/// Scalar reparameterization between unconstrained optimizer space and the
/// constrained model space. ZeroFloorInterval maps u <= 0 to exactly 0 and
/// (0, inf) onto (0, hi); it exists so a boundary value like nu_inv = 0 is
/// representable and trainable (IntervalLogit cannot reach its endpoints).
struct Transform {
  enum class Kind { Identity, SoftplusPositive, IntervalLogit, ZeroFloorInterval };
  Kind kind = Kind::Identity;
  double lo = 0.0, hi = 1.0;

  static Transform identity() { return {Kind::Identity, 0.0, 0.0}; }
  static Transform softplus_positive() { return {Kind::SoftplusPositive, 0.0, 0.0}; }
  static Transform interval_logit(double lo, double hi) {
    if (!(hi > lo)) throw DomainError("IntervalLogit: hi must exceed lo");
    return {Kind::IntervalLogit, lo, hi};
  }
  static Transform zero_floor_interval(double hi) {
    if (!(hi > 0.0)) throw DomainError("ZeroFloorInterval: hi must be positive");
    return {Kind::ZeroFloorInterval, 0.0, hi};
  }

  double to_constrained(double u) const {
    switch (kind) {
      case Kind::Identity: return u;
      case Kind::SoftplusPositive: return u > 30.0 ? u : std::log1p(std::exp(u));
      case Kind::IntervalLogit: return lo + (hi - lo) / (1.0 + std::exp(-u));
      case Kind::ZeroFloorInterval:
        return u <= 0.0 ? 0.0 : std::min(hi * std::tanh(u), hi * (1.0 - 1e-12));
    }
    return u;
  }
  double to_unconstrained(double c) const {
    switch (kind) {
      case Kind::Identity: return c;
      case Kind::SoftplusPositive:
        if (!(c > 0.0)) throw DomainError("SoftplusPositive: value must be positive");
        return c > 30.0 ? c : std::log(std::expm1(c));
      case Kind::IntervalLogit: {
        if (!(c > lo && c < hi)) throw DomainError("IntervalLogit: value outside interval");
        double p = (c - lo) / (hi - lo);
        return std::log(p / (1.0 - p));
      }
      case Kind::ZeroFloorInterval:
        if (!(c >= 0.0 && c < hi)) throw DomainError("ZeroFloorInterval: value outside [0, hi)");
        return c == 0.0 ? 0.0 : std::atanh(c / hi);
    }
    return c;
  }
  bool valid_constrained(double c) const {
    switch (kind) {
      case Kind::Identity: return std::isfinite(c);
      case Kind::SoftplusPositive: return c > 0.0;
      case Kind::IntervalLogit: return c > lo && c < hi;
      case Kind::ZeroFloorInterval: return c >= 0.0 && c < hi;
    }
    return false;
  }
};

struct ParamDef {
  std::string name;
  Transform transform;
  double init = 0.0;                               // constrained space
  std::function<double(Rng&)> restart_sampler;     // constrained space; optional
};

/// Flat unconstrained parameter vector with a name registry.
class ParamSpace {
 public:
  Index add(std::string name, Transform tf, double init_constrained,
            std::function<double(Rng&)> restart_sampler = nullptr) {
    if (!tf.valid_constrained(init_constrained)) {
      throw DomainError("ParamSpace: initial value invalid for '" + name + "'");
    }
    defs_.push_back({std::move(name), tf, init_constrained, std::move(restart_sampler)});
    return Index(defs_.size()) - 1;
  }

  Index size() const { return Index(defs_.size()); }
  const std::vector<ParamDef>& defs() const { return defs_; }

  Vec init_unconstrained() const {
    Vec u(size());
    for (Index i = 0; i < size(); ++i) u[i] = defs_[i].transform.to_unconstrained(defs_[i].init);
    return u;
  }

  Vec to_constrained(const Vec& u) const {
    Vec c(size());
    for (Index i = 0; i < size(); ++i) c[i] = defs_[i].transform.to_constrained(u[i]);
    return c;
  }

  Vec to_unconstrained(const Vec& c) const {
    Vec u(size());
    for (Index i = 0; i < size(); ++i) u[i] = defs_[i].transform.to_unconstrained(c[i]);
    return u;
  }

  bool valid_constrained(const Vec& c) const {
    for (Index i = 0; i < size(); ++i) {
      if (!defs_[i].transform.valid_constrained(c[i])) return false;
    }
    return true;
  }

  Vec random_init_unconstrained(Rng& rng) const {
    Vec u = init_unconstrained();
    auto normal = Dist1D::std_normal();
    for (Index i = 0; i < size(); ++i) {
      if (defs_[i].restart_sampler) {
        u[i] = defs_[i].transform.to_unconstrained(defs_[i].restart_sampler(rng));
      } else {
        u[i] += normal.sample(rng);
      }
    }
    return u;
  }

  std::map<std::string, double> named(const Vec& constrained) const {
    std::map<std::string, double> out;
    for (Index i = 0; i < size(); ++i) out[defs_[i].name] = constrained[i];
    return out;
  }

 private:
  std::vector<ParamDef> defs_;
};

/// A parameterized stack family: the trainer owns the parameter vector, the
/// builder produces an immutable stack for each candidate.
struct TrainableModel {
  ParamSpace params;
  std::function<LayerStack(const Vec& constrained)> build;
};

struct TrainConfig {
  int iterations = 300;   // stochastic minibatch phase
  int polish = 50;        // full-data phase, strictly nonincreasing
  int batch = 32;         // capped at n
  int restarts = 4;
  std::uint64_t seed = 1;
  double eta_minus = 0.5;
  double eta_plus = 1.2;
  double step_min = 1e-6;
  double step_max = 1.0;
  double step_init = 0.02;
  double fd_step_rel = 1e-5;

  void validate(Index n) const {
    if (iterations < 0 || polish < 0 || batch < 1 || restarts < 1) {
      throw ValidationError("TrainConfig: counts must be positive");
    }
    if (batch > n) throw ValidationError("TrainConfig: batch exceeds data size");
    if (!(eta_minus > 0 && eta_minus < 1 && eta_plus > 1)) {
      throw ValidationError("TrainConfig: rprop factors out of range");
    }
  }
};

struct FitReport {
  double initial_nll = 0.0;
  double final_nll = 0.0;
  std::vector<double> trace;  // initial full NLL, minibatch losses, polish losses
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  long jitter_events = 0;
  int winning_restart = 0;
};

struct FitResult {
  FitReport report;
  Vec constrained;
};

/// Raised when every candidate step keeps the objective at +inf.
struct FitFailure : NumericalError {
  FitFailure(const std::string& what, Vec last_valid)
      : NumericalError(what), last_valid_params(std::move(last_valid)) {}
  Vec last_valid_params;
};

/// Central finite differences with per-coordinate step rel*(1+|p|); falls back
/// to one-sided differences when a probe hits the +inf sentinel, and zeroes
/// the coordinate (flagging it) when both sides are infinite.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& objective, const Vec& params,
                            double step_rel = 1e-5, std::vector<int>* dead_coords = nullptr) {
  const double f0 = objective(params);
  if (!std::isfinite(f0)) throw DomainError("finite_diff_grad: objective not finite at params");
  Vec grad(params.size());
  if (dead_coords) dead_coords->clear();
  for (Index i = 0; i < params.size(); ++i) {
    double h = step_rel * (1.0 + std::abs(params[i]));
    Vec p = params;
    p[i] = params[i] + h;
    double fp = objective(p);
    p[i] = params[i] - h;
    double fm = objective(p);
    if (std::isfinite(fp) && std::isfinite(fm)) {
      grad[i] = (fp - fm) / (2.0 * h);
    } else if (std::isfinite(fp)) {
      grad[i] = (fp - f0) / h;
    } else if (std::isfinite(fm)) {
      grad[i] = (f0 - fm) / h;
    } else {
      grad[i] = 0.0;
      if (dead_coords) dead_coords->push_back(int(i));
    }
  }
  return grad;
}

/// Uniform without-replacement minibatches, reshuffled each epoch.
class MinibatchSchedule {
 public:
  MinibatchSchedule(Index n, Index batch, Rng rng) : n_(n), batch_(batch), rng_(rng) {
    if (batch < 1 || batch > n) throw ValidationError("MinibatchSchedule: 1 <= batch <= n");
    perm_.resize(std::size_t(n));
    std::iota(perm_.begin(), perm_.end(), Index(0));
    shuffle();
  }

  std::vector<Index> next() {
    std::vector<Index> idx;
    idx.reserve(std::size_t(batch_));
    for (Index k = 0; k < batch_; ++k) {
      if (pos_ == n_) {
        if (!idx.empty()) break;  // epoch boundary: emit the short tail batch
        shuffle();
      }
      idx.push_back(perm_[std::size_t(pos_++)]);
    }
    return idx;
  }

 private:
  void shuffle() {
    for (Index i = n_ - 1; i > 0; --i) {
      Index j = Index(rng_.uniform() * double(i + 1));
      std::swap(perm_[std::size_t(i)], perm_[std::size_t(j)]);
    }
    pos_ = 0;
  }

  Index n_, batch_;
  Rng rng_;
  std::vector<Index> perm_;
  Index pos_ = 0;
};

namespace detail {

struct RestartOutcome {
  Vec best_u;          // unconstrained params of the best full-data NLL seen
  double best_nll = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  bool exhausted = false;  // every candidate was +inf
  Vec last_valid_u;
};

/// One iRprop- run: stochastic minibatch phase followed by a strictly
/// nonincreasing full-data polish. Tracks the best full-data iterate.
inline RestartOutcome run_restart(const TrainableModel& model, const Vec& t, const Vec& y,
                                  const TrainConfig& config, Vec u, Rng rng) {
  auto objective_on = [&](const std::vector<Index>& idx, const Vec& uu) {
    Vec c = model.params.to_constrained(uu);
    if (!model.params.valid_constrained(c)) return std::numeric_limits<double>::infinity();
    Vec tb(Index(idx.size())), yb(Index(idx.size()));
    for (Index k = 0; k < Index(idx.size()); ++k) {
      tb[k] = t[idx[std::size_t(k)]];
      yb[k] = y[idx[std::size_t(k)]];
    }
    return stack_nll(model.build(c), tb, yb);
  };
  std::vector<Index> all(std::size_t(t.size()));
  std::iota(all.begin(), all.end(), Index(0));
  auto full_objective = [&](const Vec& uu) { return objective_on(all, uu); };

  RestartOutcome out;
  out.last_valid_u = u;
  double f_init = full_objective(u);
  out.trace.push_back(f_init);
  if (std::isfinite(f_init)) {
    out.best_nll = f_init;
    out.best_u = u;
  }

  const Index p = model.params.size();
  Vec step = Vec::Constant(p, config.step_init);
  Vec prev_grad = Vec::Zero(p);
  int stuck = 0;

  MinibatchSchedule schedule(t.size(), std::min<Index>(config.batch, t.size()), rng.split(1));

  // stochastic phase
  for (int it = 0; it < config.iterations && p > 0; ++it) {
    auto idx = schedule.next();
    auto obj = [&](const Vec& uu) { return objective_on(idx, uu); };
    double f_here = obj(u);
    if (!std::isfinite(f_here)) {
      u = out.best_u.size() ? out.best_u : out.last_valid_u;
      step *= config.eta_minus;
      step = step.cwiseMax(config.step_min);
      if (++stuck > 60) break;
      out.trace.push_back(f_here);
      continue;
    }
    out.last_valid_u = u;
    Vec grad = finite_diff_grad(obj, u, config.fd_step_rel);
    for (Index i = 0; i < p; ++i) {
      double s = prev_grad[i] * grad[i];
      if (s > 0.0) step[i] = std::min(step[i] * config.eta_plus, config.step_max);
      else if (s < 0.0) {
        step[i] = std::max(step[i] * config.eta_minus, config.step_min);
        grad[i] = 0.0;  // iRprop-: skip the flipped coordinate this iteration
      }
      if (grad[i] > 0.0) u[i] -= step[i];
      else if (grad[i] < 0.0) u[i] += step[i];
    }
    prev_grad = grad;
    out.trace.push_back(obj(u));
  }

  // full-data check after the stochastic phase
  double f_mid = full_objective(u);
  if (std::isfinite(f_mid) && f_mid < out.best_nll) {
    out.best_nll = f_mid;
    out.best_u = u;
  }
  if (!std::isfinite(f_mid) && out.best_u.size()) u = out.best_u;

  // polish: full data, reject any step that increases the objective
  double f_cur = full_objective(u);
  prev_grad.setZero();
  for (int it = 0; it < config.polish && p > 0 && std::isfinite(f_cur); ++it) {
    Vec grad = finite_diff_grad(full_objective, u, config.fd_step_rel);
    Vec u_cand = u;
    for (Index i = 0; i < p; ++i) {
      double s = prev_grad[i] * grad[i];
      if (s > 0.0) step[i] = std::min(step[i] * config.eta_plus, config.step_max);
      else if (s < 0.0) {
        step[i] = std::max(step[i] * config.eta_minus, config.step_min);
        grad[i] = 0.0;
      }
      if (grad[i] > 0.0) u_cand[i] -= step[i];
      else if (grad[i] < 0.0) u_cand[i] += step[i];
    }
    double f_cand = full_objective(u_cand);
    if (std::isfinite(f_cand) && f_cand <= f_cur) {
      u = u_cand;
      f_cur = f_cand;
      prev_grad = grad;
    } else {
      step *= config.eta_minus;
      step = step.cwiseMax(config.step_min);
      prev_grad.setZero();
    }
    out.trace.push_back(f_cur);
    if (f_cur < out.best_nll) {
      out.best_nll = f_cur;
      out.best_u = u;
    }
  }

  out.exhausted = !out.best_u.size();
  return out;
}

}  // namespace detail

/// Minimize the stack NLL by minibatch iRprop- with finite-difference
/// gradients, multi-start, and a full-data polish. Deterministic given the
/// seed; restarts run concurrently and are reduced in index order.
inline FitResult fit(const TrainableModel& model, const Vec& t, const Vec& y,
                     const TrainConfig& config) {
  if (t.size() != y.size()) throw ValidationError("fit: |t| != |y|");
  if (t.size() < 2) throw ValidationError("fit: need at least two observations");
  config.validate(t.size());
  {
    // composition problems surface before any optimization
    auto report = validate_stack(model.build(model.params.to_constrained(
        model.params.init_unconstrained())));
    if (!report.valid) throw ValidationError("fit: invalid stack: " + report.issues.front());
  }

  const auto t_start = std::chrono::steady_clock::now();
  const long jitter_before = detail::jitter_event_counter.load(std::memory_order_relaxed);
  Rng root(config.seed);

  std::vector<std::future<detail::RestartOutcome>> futures;
  for (int r = 0; r < config.restarts; ++r) {
    futures.push_back(std::async(std::launch::async, [&, r]() {
      Rng rng = root.split(std::uint64_t(r));
      Vec u0 = r == 0 ? model.params.init_unconstrained()
                      : [&] {
                          Rng init_rng = root.split(1000 + std::uint64_t(r));
                          return model.params.random_init_unconstrained(init_rng);
                        }();
      return detail::run_restart(model, t, y, config, u0, rng);
    }));
  }
  std::vector<detail::RestartOutcome> outcomes;
  outcomes.reserve(futures.size());
  for (auto& f : futures) outcomes.push_back(f.get());

  int best = -1;
  for (int r = 0; r < config.restarts; ++r) {
    if (outcomes[std::size_t(r)].exhausted) continue;
    if (best < 0 || outcomes[std::size_t(r)].best_nll < outcomes[std::size_t(best)].best_nll) {
      best = r;
    }
  }
  if (best < 0) {
    throw FitFailure("fit: every candidate step produced a non-finite NLL",
                     outcomes.front().last_valid_u);
  }
  const auto& win = outcomes[std::size_t(best)];

  FitResult result;
  result.constrained = model.params.to_constrained(win.best_u);
  result.report.initial_nll = outcomes.front().trace.front();
  result.report.final_nll = win.best_nll;
  result.report.trace = win.trace;
  result.report.params = model.params.named(result.constrained);
  result.report.seed = config.seed;
  result.report.winning_restart = best;
  result.report.jitter_events =
      detail::jitter_event_counter.load(std::memory_order_relaxed) - jitter_before;
  result.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace tp

#endif
