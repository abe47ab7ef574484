#ifndef TP_BENCHMARK_HPP
#define TP_BENCHMARK_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tp/config.hpp"
#include "tp/metrics.hpp"
#include "tp/series_io.hpp"

namespace tp {

/// Warped-GP preset: two-component spectral mixture plus noise for the
/// covariance, shifted Box-Cox marginal. Initial values are scaled to the
/// training series; frequencies start below the Nyquist rate of the sampling.
inline ModelConfig wgp_preset(const Series& data, const TrainConfig& train) {
  const Index n = data.t.size();
  double mean_y = data.y.mean();
  double sd_y = std::sqrt((data.y.array() - mean_y).square().sum() / double(std::max<Index>(n - 1, 1)));
  if (!(sd_y > 0.0)) sd_y = 1.0;

  Vec dt(std::max<Index>(n - 1, 1));
  Vec sorted_t = data.t;
  std::sort(sorted_t.data(), sorted_t.data() + sorted_t.size());
  for (Index i = 0; i + 1 < n; ++i) dt[i] = sorted_t[i + 1] - sorted_t[i];
  std::sort(dt.data(), dt.data() + dt.size());
  double dt_med = std::max(dt[dt.size() / 2], 1e-9);
  double f_max = 0.5 / dt_med;

  ModelConfig m;
  m.copula.family = "none";
  CovarianceConfig cov;
  cov.kernel.type = "sm";
  cov.kernel.components = {{0.7, 0.02 * f_max, std::pow(0.05 * f_max, 2.0)},
                           {0.7, 0.10 * f_max, std::pow(0.05 * f_max, 2.0)}};
  cov.noise = 0.15;
  m.covariance = std::move(cov);

  MarginalConfig marg;
  marg.warping.type = "boxcox";
  marg.warping.lambda = 1.0;
  marg.warping.shift = 1.0;
  marg.location = {mean_y};
  marg.scale = sd_y;
  m.marginals.push_back(std::move(marg));
  m.train = train;
  return m;
}

inline ModelConfig tgp_preset(const Series& data, const TrainConfig& train) {
  ModelConfig m = wgp_preset(data, train);
  m.copula.family = "studentt";
  m.copula.nu_inv = 0.0;  // warm boundary: the gaussian model is the start point
  return m;
}

/// Restart sampler hook for the presets: spectral-mixture frequencies explore
/// (0, 0.35 f_max), bandwidths and weights move on a log scale.
inline RestartFactory preset_restart_factory(double f_max) {
  return [f_max](const std::string& name) -> std::function<double(Rng&)> {
    if (name.find(".mean") != std::string::npos) {
      return [f_max](Rng& rng) { return 0.35 * f_max * rng.uniform_pos(); };
    }
    if (name.find(".variance") != std::string::npos) {
      return [f_max](Rng& rng) {
        double base = std::pow(0.05 * f_max, 2.0);
        return base * std::exp(2.0 * (rng.uniform() - 0.5) * 2.3);
      };
    }
    if (name == "copula.nu_inv") {
      return [](Rng& rng) { return 0.45 * rng.uniform(); };
    }
    return nullptr;
  };
}

inline double preset_f_max(const Series& data) {
  const Index n = data.t.size();
  Vec sorted_t = data.t;
  std::sort(sorted_t.data(), sorted_t.data() + sorted_t.size());
  Vec dt(std::max<Index>(n - 1, 1));
  for (Index i = 0; i + 1 < n; ++i) dt[i] = sorted_t[i + 1] - sorted_t[i];
  std::sort(dt.data(), dt.data() + dt.size());
  return 0.5 / std::max(dt[dt.size() / 2], 1e-9);
}

struct BenchmarkOptions {
  std::vector<std::string> models = {"wgp", "tgp"};
  int splits = 10;
  double train_frac = 0.15;
  int samples = 200;
  std::uint64_t seed = 1;
  TrainConfig train;  // per-fit budget; seed is overridden per split
};

struct BenchmarkRow {
  int split = 0;
  std::string model;
  Metrics metrics;
  double train_nll = 0.0;
};

struct BenchmarkSummary {
  std::string model;
  Metrics mean;
  Metrics sd;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkSummary> summaries;
  int tgp_ese_wins = 0;  // splits with TGP ESE <= WGP ESE (ties included)
  int paired_splits = 0;
};

namespace detail {

inline void accumulate_summary(BenchmarkResult& result, const std::vector<std::string>& models) {
  for (const auto& model : models) {
    std::vector<Metrics> ms;
    for (const auto& row : result.rows) {
      if (row.model == model) ms.push_back(row.metrics);
    }
    if (ms.empty()) continue;
    auto stat = [&](auto pick) {
      double mean = 0.0;
      for (const auto& m : ms) mean += pick(m);
      mean /= double(ms.size());
      double var = 0.0;
      for (const auto& m : ms) var += (pick(m) - mean) * (pick(m) - mean);
      double sd = ms.size() > 1 ? std::sqrt(var / double(ms.size() - 1)) : 0.0;
      return std::pair<double, double>(mean, sd);
    };
    BenchmarkSummary s;
    s.model = model;
    std::tie(s.mean.mse, s.sd.mse) = stat([](const Metrics& m) { return m.mse; });
    std::tie(s.mean.mae, s.sd.mae) = stat([](const Metrics& m) { return m.mae; });
    std::tie(s.mean.ese, s.sd.ese) = stat([](const Metrics& m) { return m.ese; });
    std::tie(s.mean.eae, s.sd.eae) = stat([](const Metrics& m) { return m.eae; });
    result.summaries.push_back(std::move(s));
  }
}

}  // namespace detail

/// Random-split benchmark: per split, fit each requested model on the
/// training fraction and score posterior samples on the validation rest.
/// The TGP fit warm-starts from the fitted WGP (nu_inv = 0), so its training
/// NLL can only match or beat the WGP's. Both models share the sampling seed
/// within a split.
inline BenchmarkResult run_benchmark(const Series& data, const BenchmarkOptions& options) {
  if (options.splits < 1) throw ValidationError("benchmark: splits must be positive");
  if (!(options.train_frac > 0.0 && options.train_frac < 1.0)) {
    throw ValidationError("benchmark: train fraction must lie in (0,1)");
  }
  const Index n = data.t.size();
  const Index n_train = std::max<Index>(Index(std::llround(options.train_frac * double(n))), 4);
  if (n_train >= n) throw ValidationError("benchmark: training fraction leaves no validation data");

  bool want_wgp = false, want_tgp = false;
  for (const auto& m : options.models) {
    if (m == "wgp") want_wgp = true;
    else if (m == "tgp") want_tgp = true;
    else throw ValidationError("benchmark: unknown model '" + m + "' (expected wgp|tgp)");
  }
  if (want_tgp && !want_wgp) {
    throw ValidationError("benchmark: tgp warm-starts from wgp; include both models");
  }

  BenchmarkResult result;
  Rng root(options.seed);
  std::map<int, double> wgp_ese, tgp_ese;

  for (int split = 0; split < options.splits; ++split) {
    Rng split_rng = root.split(std::uint64_t(split));
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index(0));
    for (Index i = n - 1; i > 0; --i) {
      Index j = Index(split_rng.uniform() * double(i + 1));
      std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
    }
    Series train, val;
    train.t.resize(n_train);
    train.y.resize(n_train);
    val.t.resize(n - n_train);
    val.y.resize(n - n_train);
    for (Index i = 0; i < n_train; ++i) {
      train.t[i] = data.t[perm[std::size_t(i)]];
      train.y[i] = data.y[perm[std::size_t(i)]];
    }
    for (Index i = n_train; i < n; ++i) {
      val.t[i - n_train] = data.t[perm[std::size_t(i)]];
      val.y[i - n_train] = data.y[perm[std::size_t(i)]];
    }

    TrainConfig tc = options.train;
    tc.batch = int(std::min<Index>(Index(tc.batch), n_train));
    tc.seed = options.seed * 1000003ULL + std::uint64_t(split);
    const std::uint64_t sample_seed = options.seed * 7777777ULL + std::uint64_t(split);
    const double f_max = preset_f_max(train);

    // WGP fit
    ModelConfig wgp_cfg = wgp_preset(train, tc);
    auto wgp = make_trainable(wgp_cfg, preset_restart_factory(f_max));
    auto wgp_fit = fit(wgp.model, train.t, train.y, tc);
    ModelConfig wgp_trained = wgp.config_with(wgp_fit.constrained);

    if (want_wgp) {
      auto stack = build_stack(wgp_trained);
      auto set = stack_posterior_sample(stack, train.t, train.y, val.t, options.samples,
                                        sample_seed);
      BenchmarkRow row;
      row.split = split;
      row.model = "wgp";
      row.metrics = compute_metrics(val.y, set.samples);
      row.train_nll = wgp_fit.report.final_nll;
      wgp_ese[split] = row.metrics.ese;
      result.rows.push_back(std::move(row));
    }

    if (want_tgp) {
      // warm start: the trained WGP values with the copula at the boundary
      ModelConfig tgp_cfg = wgp_trained;
      tgp_cfg.copula.family = "studentt";
      tgp_cfg.copula.nu_inv = 0.0;
      tgp_cfg.train = tc;
      TrainConfig tgp_tc = tc;
      tgp_tc.seed = tc.seed + 500000011ULL;
      auto tgp = make_trainable(tgp_cfg, preset_restart_factory(f_max));
      auto tgp_fit = fit(tgp.model, train.t, train.y, tgp_tc);
      ModelConfig tgp_trained = tgp.config_with(tgp_fit.constrained);

      auto stack = build_stack(tgp_trained);
      auto set = stack_posterior_sample(stack, train.t, train.y, val.t, options.samples,
                                        sample_seed);
      BenchmarkRow row;
      row.split = split;
      row.model = "tgp";
      row.metrics = compute_metrics(val.y, set.samples);
      row.train_nll = tgp_fit.report.final_nll;
      tgp_ese[split] = row.metrics.ese;
      result.rows.push_back(std::move(row));
    }
  }

  detail::accumulate_summary(result, options.models);
  if (want_wgp && want_tgp) {
    for (const auto& [split, ese] : wgp_ese) {
      if (!tgp_ese.count(split)) continue;
      ++result.paired_splits;
      if (tgp_ese[split] <= ese) ++result.tgp_ese_wins;
    }
  }
  return result;
}

}  // namespace tp

#endif
