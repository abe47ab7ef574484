#ifndef TP_CONFIG_HPP
#define TP_CONFIG_HPP

#include <fstream>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tp/trainer.hpp"

namespace tp {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// typed configuration mirroring the stack config file
// ---------------------------------------------------------------------------

struct KernelConfig {
  std::string type;  // se | brownian | sm | sum
  double sigma = 1.0, rate = 1.0;
  struct SMComp { double weight = 1.0, mean = 0.0, variance = 0.1; };
  std::vector<SMComp> components;
  std::vector<KernelConfig> terms;
};

struct WarpingConfig {
  std::string type;  // affine | log | boxcox | sinharcsinh | neglognormcdf | composite
  double shift = 0.0, scale = 1.0;  // affine; shift doubles as the boxcox shift
  double lambda = 1.0;              // boxcox
  double skew = 0.0, tail = 1.0;    // sinharcsinh
  std::vector<WarpingConfig> parts;
};

struct MarginalConfig {
  WarpingConfig warping;
  std::vector<double> location = {0.0};  // polynomial coefficients, degree <= 3
  double scale = 1.0;
};

struct CopulaConfig {
  std::string family = "none";  // none | gaussian | studentt | independence | clayton
  double nu_inv = 0.0;
  double theta = 1.0;
};

struct SparseModeConfig {
  int m = 0;  // requested pseudo-input count; inputs/values filled at fit time
  Vec pseudo_inputs;
  Vec pseudo_values;
};

struct CovarianceConfig {
  KernelConfig kernel;
  double noise = 0.0;  // sigma0 of the white-noise summand; 0 disables it
  std::optional<SparseModeConfig> sparse;
};

struct ModelConfig {
  CopulaConfig copula;
  std::optional<CovarianceConfig> covariance;
  std::vector<MarginalConfig> marginals;
  TrainConfig train;
};

// ---------------------------------------------------------------------------
// JSON parsing (strict: unknown keys are rejected)
// ---------------------------------------------------------------------------

namespace cfg {

inline void expect_keys(const Json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ValidationError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

inline double number_at(const Json& j, const std::string& key, const std::string& where,
                        std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing '" + key + "'");
  }
  if (!j.at(key).is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

inline KernelConfig parse_kernel(const Json& j, const std::string& where) {
  KernelConfig k;
  if (!j.is_object() || !j.contains("type")) throw ValidationError(where + ": missing kernel type");
  k.type = j.at("type").get<std::string>();
  if (k.type == "se") {
    expect_keys(j, {"type", "sigma", "rate"}, where);
    k.sigma = number_at(j, "sigma", where);
    k.rate = number_at(j, "rate", where);
  } else if (k.type == "brownian") {
    expect_keys(j, {"type", "sigma"}, where);
    k.sigma = number_at(j, "sigma", where);
  } else if (k.type == "sm") {
    expect_keys(j, {"type", "components"}, where);
    if (!j.contains("components") || !j.at("components").is_array() || j.at("components").empty()) {
      throw ValidationError(where + ": 'sm' needs a nonempty components array");
    }
    for (std::size_t q = 0; q < j.at("components").size(); ++q) {
      const Json& c = j.at("components")[q];
      std::string cw = where + ".components[" + std::to_string(q) + "]";
      expect_keys(c, {"weight", "mean", "variance"}, cw);
      k.components.push_back(
          {number_at(c, "weight", cw), number_at(c, "mean", cw), number_at(c, "variance", cw)});
    }
  } else if (k.type == "sum") {
    expect_keys(j, {"type", "terms"}, where);
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty()) {
      throw ValidationError(where + ": 'sum' needs a nonempty terms array");
    }
    for (std::size_t i = 0; i < j.at("terms").size(); ++i) {
      k.terms.push_back(parse_kernel(j.at("terms")[i], where + ".terms[" + std::to_string(i) + "]"));
    }
  } else {
    throw ValidationError(where + ": unknown kernel type '" + k.type + "'");
  }
  return k;
}

inline WarpingConfig parse_warping(const Json& j, const std::string& where) {
  WarpingConfig w;
  if (!j.is_object() || !j.contains("type")) throw ValidationError(where + ": missing warping type");
  w.type = j.at("type").get<std::string>();
  if (w.type == "affine") {
    expect_keys(j, {"type", "shift", "scale"}, where);
    w.shift = number_at(j, "shift", where, 0.0);
    w.scale = number_at(j, "scale", where, 1.0);
  } else if (w.type == "log" || w.type == "neglognormcdf") {
    expect_keys(j, {"type"}, where);
  } else if (w.type == "boxcox") {
    expect_keys(j, {"type", "lambda", "shift"}, where);
    w.lambda = number_at(j, "lambda", where, 1.0);
    w.shift = number_at(j, "shift", where, 0.0);
  } else if (w.type == "sinharcsinh") {
    expect_keys(j, {"type", "skew", "tail"}, where);
    w.skew = number_at(j, "skew", where, 0.0);
    w.tail = number_at(j, "tail", where, 1.0);
  } else if (w.type == "composite") {
    expect_keys(j, {"type", "parts"}, where);
    if (!j.contains("parts") || !j.at("parts").is_array() || j.at("parts").empty()) {
      throw ValidationError(where + ": 'composite' needs a nonempty parts array");
    }
    for (std::size_t i = 0; i < j.at("parts").size(); ++i) {
      w.parts.push_back(parse_warping(j.at("parts")[i], where + ".parts[" + std::to_string(i) + "]"));
    }
  } else {
    throw ValidationError(where + ": unknown warping type '" + w.type + "'");
  }
  return w;
}

}  // namespace cfg

inline ModelConfig parse_model_config(const Json& j) {
  cfg::expect_keys(j, {"copula", "covariance", "marginals", "train"}, "config");
  ModelConfig m;
  if (j.contains("copula")) {
    const Json& c = j.at("copula");
    cfg::expect_keys(c, {"family", "nu_inv", "theta"}, "copula");
    m.copula.family = c.contains("family") ? c.at("family").get<std::string>() : "none";
    m.copula.nu_inv = cfg::number_at(c, "nu_inv", "copula", 0.0);
    m.copula.theta = cfg::number_at(c, "theta", "copula", 1.0);
    const std::set<std::string> families = {"none", "gaussian", "studentt", "independence",
                                            "clayton"};
    if (!families.count(m.copula.family)) {
      throw ValidationError("copula: unknown family '" + m.copula.family + "'");
    }
  }
  if (j.contains("covariance")) {
    const Json& c = j.at("covariance");
    cfg::expect_keys(c, {"kernel", "noise", "mode"}, "covariance");
    CovarianceConfig cov;
    if (!c.contains("kernel")) throw ValidationError("covariance: missing 'kernel'");
    cov.kernel = cfg::parse_kernel(c.at("kernel"), "covariance.kernel");
    cov.noise = cfg::number_at(c, "noise", "covariance", 0.0);
    if (cov.noise < 0.0) throw ValidationError("covariance: noise must be nonnegative");
    if (c.contains("mode")) {
      const Json& mode = c.at("mode");
      if (mode.is_string() && mode.get<std::string>() == "exact") {
        // default
      } else if (mode.is_object()) {
        cfg::expect_keys(mode, {"sparse"}, "covariance.mode");
        const Json& sp = mode.at("sparse");
        cfg::expect_keys(sp, {"m", "pseudo_inputs", "pseudo_values"}, "covariance.mode.sparse");
        SparseModeConfig s;
        s.m = int(cfg::number_at(sp, "m", "covariance.mode.sparse"));
        if (s.m < 1) throw ValidationError("covariance.mode.sparse: m must be positive");
        if (sp.contains("pseudo_inputs")) {
          auto pi = sp.at("pseudo_inputs").get<std::vector<double>>();
          auto pv = sp.at("pseudo_values").get<std::vector<double>>();
          if (pi.size() != pv.size()) {
            throw ValidationError("covariance.mode.sparse: pseudo arrays must match");
          }
          s.pseudo_inputs = Eigen::Map<Vec>(pi.data(), Index(pi.size()));
          s.pseudo_values = Eigen::Map<Vec>(pv.data(), Index(pv.size()));
        }
        cov.sparse = std::move(s);
      } else {
        throw ValidationError("covariance.mode: expected 'exact' or {\"sparse\": {...}}");
      }
    }
    m.covariance = std::move(cov);
  }
  if (j.contains("marginals")) {
    if (!j.at("marginals").is_array()) throw ValidationError("marginals: expected an array");
    for (std::size_t i = 0; i < j.at("marginals").size(); ++i) {
      const Json& mj = j.at("marginals")[i];
      std::string where = "marginals[" + std::to_string(i) + "]";
      cfg::expect_keys(mj, {"warping", "location", "scale"}, where);
      MarginalConfig mc;
      if (!mj.contains("warping")) throw ValidationError(where + ": missing 'warping'");
      mc.warping = cfg::parse_warping(mj.at("warping"), where + ".warping");
      if (mj.contains("location")) {
        const Json& loc = mj.at("location");
        cfg::expect_keys(loc, {"type", "value", "coeffs"}, where + ".location");
        std::string type = loc.contains("type") ? loc.at("type").get<std::string>() : "constant";
        if (type == "constant") {
          mc.location = {cfg::number_at(loc, "value", where + ".location", 0.0)};
        } else if (type == "poly") {
          mc.location = loc.at("coeffs").get<std::vector<double>>();
          if (mc.location.empty() || mc.location.size() > 4) {
            throw ValidationError(where + ".location: polynomial degree must be <= 3");
          }
        } else {
          throw ValidationError(where + ".location: unknown type '" + type + "'");
        }
      }
      mc.scale = cfg::number_at(mj, "scale", where, 1.0);
      if (mc.scale <= 0.0) throw ValidationError(where + ": scale must be positive");
      m.marginals.push_back(std::move(mc));
    }
  }
  if (j.contains("train")) {
    const Json& tr = j.at("train");
    cfg::expect_keys(tr,
                     {"iterations", "polish", "batch", "restarts", "seed", "eta_minus", "eta_plus",
                      "step_min", "step_max", "step_init", "fd_step_rel"},
                     "train");
    m.train.iterations = int(cfg::number_at(tr, "iterations", "train", m.train.iterations));
    m.train.polish = int(cfg::number_at(tr, "polish", "train", m.train.polish));
    m.train.batch = int(cfg::number_at(tr, "batch", "train", m.train.batch));
    m.train.restarts = int(cfg::number_at(tr, "restarts", "train", m.train.restarts));
    m.train.seed = std::uint64_t(cfg::number_at(tr, "seed", "train", double(m.train.seed)));
    m.train.eta_minus = cfg::number_at(tr, "eta_minus", "train", m.train.eta_minus);
    m.train.eta_plus = cfg::number_at(tr, "eta_plus", "train", m.train.eta_plus);
    m.train.step_min = cfg::number_at(tr, "step_min", "train", m.train.step_min);
    m.train.step_max = cfg::number_at(tr, "step_max", "train", m.train.step_max);
    m.train.step_init = cfg::number_at(tr, "step_init", "train", m.train.step_init);
    m.train.fd_step_rel = cfg::number_at(tr, "fd_step_rel", "train", m.train.fd_step_rel);
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON serialization with stable key order
// ---------------------------------------------------------------------------

inline Json kernel_to_json(const KernelConfig& k) {
  Json j;
  j["type"] = k.type;
  if (k.type == "se") {
    j["sigma"] = k.sigma;
    j["rate"] = k.rate;
  } else if (k.type == "brownian") {
    j["sigma"] = k.sigma;
  } else if (k.type == "sm") {
    Json comps = Json::array();
    for (const auto& c : k.components) {
      comps.push_back(Json{{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
    }
    j["components"] = std::move(comps);
  } else if (k.type == "sum") {
    Json terms = Json::array();
    for (const auto& t : k.terms) terms.push_back(kernel_to_json(t));
    j["terms"] = std::move(terms);
  }
  return j;
}

inline Json warping_to_json(const WarpingConfig& w) {
  Json j;
  j["type"] = w.type;
  if (w.type == "affine") {
    j["shift"] = w.shift;
    j["scale"] = w.scale;
  } else if (w.type == "boxcox") {
    j["lambda"] = w.lambda;
    j["shift"] = w.shift;
  } else if (w.type == "sinharcsinh") {
    j["skew"] = w.skew;
    j["tail"] = w.tail;
  } else if (w.type == "composite") {
    Json parts = Json::array();
    for (const auto& p : w.parts) parts.push_back(warping_to_json(p));
    j["parts"] = std::move(parts);
  }
  return j;
}

inline Json model_config_to_json(const ModelConfig& m) {
  Json j;
  Json cop;
  cop["family"] = m.copula.family;
  if (m.copula.family == "studentt") cop["nu_inv"] = m.copula.nu_inv;
  if (m.copula.family == "clayton") cop["theta"] = m.copula.theta;
  j["copula"] = std::move(cop);
  if (m.covariance) {
    Json cov;
    cov["kernel"] = kernel_to_json(m.covariance->kernel);
    cov["noise"] = m.covariance->noise;
    if (m.covariance->sparse) {
      Json sp;
      sp["m"] = m.covariance->sparse->m;
      if (m.covariance->sparse->pseudo_inputs.size() > 0) {
        sp["pseudo_inputs"] = std::vector<double>(
            m.covariance->sparse->pseudo_inputs.data(),
            m.covariance->sparse->pseudo_inputs.data() + m.covariance->sparse->pseudo_inputs.size());
        sp["pseudo_values"] = std::vector<double>(
            m.covariance->sparse->pseudo_values.data(),
            m.covariance->sparse->pseudo_values.data() + m.covariance->sparse->pseudo_values.size());
      }
      cov["mode"] = Json{{"sparse", std::move(sp)}};
    } else {
      cov["mode"] = "exact";
    }
    j["covariance"] = std::move(cov);
  }
  Json margs = Json::array();
  for (const auto& mc : m.marginals) {
    Json mj;
    mj["warping"] = warping_to_json(mc.warping);
    if (mc.location.size() == 1) {
      mj["location"] = Json{{"type", "constant"}, {"value", mc.location[0]}};
    } else {
      mj["location"] = Json{{"type", "poly"}, {"coeffs", mc.location}};
    }
    mj["scale"] = mc.scale;
    margs.push_back(std::move(mj));
  }
  j["marginals"] = std::move(margs);
  Json tr;
  tr["iterations"] = m.train.iterations;
  tr["polish"] = m.train.polish;
  tr["batch"] = m.train.batch;
  tr["restarts"] = m.train.restarts;
  tr["seed"] = m.train.seed;
  j["train"] = std::move(tr);
  return j;
}

// ---------------------------------------------------------------------------
// stack construction
// ---------------------------------------------------------------------------

inline Kernel build_kernel(const KernelConfig& k) {
  if (k.type == "se") return Kernel::squared_exponential(k.sigma, k.rate);
  if (k.type == "brownian") return Kernel::brownian(k.sigma);
  if (k.type == "sm") {
    std::vector<Kernel::SMComponent> comps;
    for (const auto& c : k.components) comps.push_back({c.weight, c.mean, c.variance});
    return Kernel::spectral_mixture(std::move(comps));
  }
  if (k.type == "sum") {
    std::vector<Kernel> terms;
    for (const auto& t : k.terms) terms.push_back(build_kernel(t));
    return Kernel::sum(std::move(terms));
  }
  throw ValidationError("build_kernel: unknown type '" + k.type + "'");
}

inline Warping build_warping(const WarpingConfig& w) {
  if (w.type == "affine") return Warping::affine(w.shift, w.scale);
  if (w.type == "log") return Warping::log();
  if (w.type == "boxcox") return Warping::box_cox_shifted(w.lambda, w.shift);
  if (w.type == "sinharcsinh") return Warping::sinh_arcsinh(w.skew, w.tail);
  if (w.type == "neglognormcdf") return Warping::neg_log_norm_cdf();
  if (w.type == "composite") {
    std::vector<Warping> parts;
    for (const auto& p : w.parts) parts.push_back(build_warping(p));
    return Warping::composite(std::move(parts));
  }
  throw ValidationError("build_warping: unknown type '" + w.type + "'");
}

inline LayerStack build_stack(const ModelConfig& m) {
  LayerStack stack;
  if (m.copula.family == "gaussian") {
    stack.copula = EllipticalLayer::gaussian_identity();
  } else if (m.copula.family == "studentt") {
    stack.copula = EllipticalLayer::student_t(m.copula.nu_inv);
  } else if (m.copula.family == "independence") {
    stack.copula = ArchimedeanLayer::independence();
  } else if (m.copula.family == "clayton") {
    stack.copula = ArchimedeanLayer::clayton(m.copula.theta);
  }
  if (m.covariance) {
    Kernel k = build_kernel(m.covariance->kernel);
    if (m.covariance->noise > 0.0) {
      k = Kernel::sum({std::move(k), Kernel::white_noise(m.covariance->noise)});
    }
    std::optional<SparseConfig> sparse;
    if (m.covariance->sparse && m.covariance->sparse->pseudo_inputs.size() > 0) {
      sparse = SparseConfig{m.covariance->sparse->pseudo_inputs,
                            m.covariance->sparse->pseudo_values};
    }
    stack.covariance = CovarianceLayer(std::move(k), std::move(sparse));
  }
  for (const auto& mc : m.marginals) {
    Vec coeffs = Eigen::Map<const Vec>(mc.location.data(), Index(mc.location.size()));
    stack.marginals.push_back(
        MarginalLayer(build_warping(mc.warping), LocationFn::polynomial(coeffs), mc.scale));
  }
  return stack;
}

// ---------------------------------------------------------------------------
// trainable model assembly
// ---------------------------------------------------------------------------

/// Optional per-parameter restart sampler, keyed on the registered name.
using RestartFactory = std::function<std::function<double(Rng&)>(const std::string& name)>;

namespace cfg {

using Setter = std::function<void(ModelConfig&, double)>;

struct Registrar {
  ParamSpace params;
  std::vector<Setter> setters;
  const RestartFactory* factory = nullptr;

  void add(const std::string& name, Transform tf, double init, Setter set) {
    std::function<double(Rng&)> sampler;
    if (factory && *factory) sampler = (*factory)(name);
    params.add(name, tf, init, std::move(sampler));
    setters.push_back(std::move(set));
  }
};

inline KernelConfig* kernel_at(ModelConfig& m, const std::vector<int>& path) {
  KernelConfig* k = &m.covariance->kernel;
  for (int idx : path) k = &k->terms[std::size_t(idx)];
  return k;
}

inline void register_kernel(Registrar& reg, const KernelConfig& k, std::vector<int> path,
                            const std::string& prefix) {
  auto at = [path](ModelConfig& m) { return kernel_at(m, path); };
  if (k.type == "se") {
    reg.add(prefix + ".sigma", Transform::softplus_positive(), k.sigma,
            [at](ModelConfig& m, double v) { at(m)->sigma = v; });
    reg.add(prefix + ".rate", Transform::softplus_positive(), k.rate,
            [at](ModelConfig& m, double v) { at(m)->rate = v; });
  } else if (k.type == "brownian") {
    reg.add(prefix + ".sigma", Transform::softplus_positive(), k.sigma,
            [at](ModelConfig& m, double v) { at(m)->sigma = v; });
  } else if (k.type == "sm") {
    for (std::size_t q = 0; q < k.components.size(); ++q) {
      std::string base = prefix + ".sm" + std::to_string(q);
      reg.add(base + ".weight", Transform::softplus_positive(), k.components[q].weight,
              [at, q](ModelConfig& m, double v) { at(m)->components[q].weight = v; });
      reg.add(base + ".mean", Transform::identity(), k.components[q].mean,
              [at, q](ModelConfig& m, double v) { at(m)->components[q].mean = v; });
      reg.add(base + ".variance", Transform::softplus_positive(), k.components[q].variance,
              [at, q](ModelConfig& m, double v) { at(m)->components[q].variance = v; });
    }
  } else if (k.type == "sum") {
    for (std::size_t i = 0; i < k.terms.size(); ++i) {
      auto sub = path;
      sub.push_back(int(i));
      register_kernel(reg, k.terms[i], std::move(sub), prefix + ".t" + std::to_string(i));
    }
  }
}

inline void register_warping(Registrar& reg, const WarpingConfig& w, std::size_t marg,
                             std::vector<int> path, const std::string& prefix) {
  auto at = [marg, path](ModelConfig& m) {
    WarpingConfig* wc = &m.marginals[marg].warping;
    for (int idx : path) wc = &wc->parts[std::size_t(idx)];
    return wc;
  };
  if (w.type == "affine") {
    reg.add(prefix + ".shift", Transform::identity(), w.shift,
            [at](ModelConfig& m, double v) { at(m)->shift = v; });
    reg.add(prefix + ".scale", Transform::softplus_positive(), w.scale,
            [at](ModelConfig& m, double v) { at(m)->scale = v; });
  } else if (w.type == "boxcox") {
    reg.add(prefix + ".lambda", Transform::softplus_positive(), w.lambda,
            [at](ModelConfig& m, double v) { at(m)->lambda = v; });
    reg.add(prefix + ".shift", Transform::identity(), w.shift,
            [at](ModelConfig& m, double v) { at(m)->shift = v; });
  } else if (w.type == "sinharcsinh") {
    reg.add(prefix + ".skew", Transform::identity(), w.skew,
            [at](ModelConfig& m, double v) { at(m)->skew = v; });
    reg.add(prefix + ".tail", Transform::softplus_positive(), w.tail,
            [at](ModelConfig& m, double v) { at(m)->tail = v; });
  } else if (w.type == "composite") {
    for (std::size_t i = 0; i < w.parts.size(); ++i) {
      auto sub = path;
      sub.push_back(int(i));
      register_warping(reg, w.parts[i], marg, std::move(sub), prefix + ".p" + std::to_string(i));
    }
  }
}

}  // namespace cfg

/// A config bound to its parameter registry: `model` drives the trainer and
/// `config_with` writes a trained vector back into a config copy.
struct ConfiguredModel {
  ModelConfig base;
  TrainableModel model;
  std::vector<cfg::Setter> setters;

  ModelConfig config_with(const Vec& constrained) const {
    if (constrained.size() != Index(setters.size())) {
      throw ValidationError("config_with: parameter count mismatch");
    }
    ModelConfig m = base;
    for (Index i = 0; i < constrained.size(); ++i) setters[std::size_t(i)](m, constrained[i]);
    return m;
  }
};

/// Builds the trainable family for a config: every continuous layer parameter
/// is registered with its positivity/interval transform, and build(c)
/// re-assembles an immutable stack from the candidate vector.
inline ConfiguredModel make_trainable(const ModelConfig& base,
                                      const RestartFactory& restart_factory = nullptr) {
  cfg::Registrar reg;
  reg.factory = &restart_factory;

  if (base.copula.family == "studentt") {
    reg.add("copula.nu_inv", Transform::zero_floor_interval(0.5), base.copula.nu_inv,
            [](ModelConfig& m, double v) { m.copula.nu_inv = v; });
  } else if (base.copula.family == "clayton") {
    reg.add("copula.theta", Transform::softplus_positive(), base.copula.theta,
            [](ModelConfig& m, double v) { m.copula.theta = v; });
  }
  if (base.covariance) {
    cfg::register_kernel(reg, base.covariance->kernel, {}, "cov.kernel");
    if (base.covariance->noise > 0.0) {
      reg.add("cov.noise", Transform::softplus_positive(), base.covariance->noise,
              [](ModelConfig& m, double v) { m.covariance->noise = v; });
    }
    if (base.covariance->sparse && base.covariance->sparse->pseudo_inputs.size() > 0) {
      for (Index i = 0; i < base.covariance->sparse->pseudo_inputs.size(); ++i) {
        reg.add("cov.pseudo.in" + std::to_string(i), Transform::identity(),
                base.covariance->sparse->pseudo_inputs[i],
                [i](ModelConfig& m, double v) { m.covariance->sparse->pseudo_inputs[i] = v; });
        reg.add("cov.pseudo.val" + std::to_string(i), Transform::identity(),
                base.covariance->sparse->pseudo_values[i],
                [i](ModelConfig& m, double v) { m.covariance->sparse->pseudo_values[i] = v; });
      }
    }
  }
  for (std::size_t mi = 0; mi < base.marginals.size(); ++mi) {
    std::string prefix = "marg" + std::to_string(mi);
    cfg::register_warping(reg, base.marginals[mi].warping, mi, {}, prefix + ".warp");
    for (std::size_t c = 0; c < base.marginals[mi].location.size(); ++c) {
      reg.add(prefix + ".loc" + std::to_string(c), Transform::identity(),
              base.marginals[mi].location[c],
              [mi, c](ModelConfig& m, double v) { m.marginals[mi].location[c] = v; });
    }
    reg.add(prefix + ".scale", Transform::softplus_positive(), base.marginals[mi].scale,
            [mi](ModelConfig& m, double v) { m.marginals[mi].scale = v; });
  }

  ConfiguredModel out;
  out.base = base;
  out.setters = reg.setters;
  out.model.params = std::move(reg.params);
  out.model.build = [base, setters = std::move(reg.setters)](const Vec& c) {
    ModelConfig m = base;
    for (Index i = 0; i < Index(setters.size()); ++i) setters[std::size_t(i)](m, c[i]);
    return build_stack(m);
  };
  return out;
}

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

inline std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Self-contained trained model: config with fitted values, the training
/// series (posterior sampling conditions on it), the seed, and a content hash.
struct ModelFile {
  ModelConfig config;
  Vec data_t;
  Vec data_y;
  std::uint64_t seed = 0;
  double final_nll = 0.0;
  std::string hash;
};

inline std::string model_content_hash(const ModelFile& mf) {
  Json j;
  j["config"] = model_config_to_json(mf.config);
  j["data_t"] = std::vector<double>(mf.data_t.data(), mf.data_t.data() + mf.data_t.size());
  j["data_y"] = std::vector<double>(mf.data_y.data(), mf.data_y.data() + mf.data_y.size());
  j["seed"] = mf.seed;
  return fnv1a64_hex(j.dump());
}

inline Json model_file_to_json(const ModelFile& mf) {
  Json j;
  j["format"] = "tp-model";
  j["version"] = 1;
  j["config"] = model_config_to_json(mf.config);
  Json data;
  data["t"] = std::vector<double>(mf.data_t.data(), mf.data_t.data() + mf.data_t.size());
  data["y"] = std::vector<double>(mf.data_y.data(), mf.data_y.data() + mf.data_y.size());
  j["data"] = std::move(data);
  j["seed"] = mf.seed;
  j["final_nll"] = mf.final_nll;
  j["hash"] = model_content_hash(mf);
  return j;
}

inline void save_model_file(const std::string& path, const ModelFile& mf) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ParseError("cannot write '" + tmp + "'");
    out << model_file_to_json(mf).dump(2) << '\n';
  }
  std::rename(tmp.c_str(), path.c_str());
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (!j.contains("format") || j.at("format") != "tp-model") {
    throw ValidationError(path + ": not a tp model file");
  }
  ModelFile mf;
  mf.config = parse_model_config(j.at("config"));
  auto ts = j.at("data").at("t").get<std::vector<double>>();
  auto ys = j.at("data").at("y").get<std::vector<double>>();
  if (ts.size() != ys.size()) throw ValidationError(path + ": data arrays disagree in size");
  mf.data_t = Eigen::Map<Vec>(ts.data(), Index(ts.size()));
  mf.data_y = Eigen::Map<Vec>(ys.data(), Index(ys.size()));
  mf.seed = j.at("seed").get<std::uint64_t>();
  mf.final_nll = j.at("final_nll").get<double>();
  mf.hash = j.at("hash").get<std::string>();
  if (mf.hash != model_content_hash(mf)) {
    throw ValidationError(path + ": content hash mismatch (file corrupted or edited)");
  }
  return mf;
}

inline Json fit_report_to_json(const FitReport& report) {
  Json j;
  j["final_nll"] = report.final_nll;
  j["initial_nll"] = report.initial_nll;
  j["trace"] = report.trace;
  j["params"] = report.params;
  j["seed"] = report.seed;
  j["wall_time_s"] = report.wall_time_s;
  j["jitter_events"] = report.jitter_events;
  j["winning_restart"] = report.winning_restart;
  return j;
}

}  // namespace tp

#endif
