// tp: fit, sample and diagnose deep transport-process regression models.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tp/benchmark.hpp"
#include "tp/datasets.hpp"

namespace {

using namespace tp;

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ParseError("cannot write '" + tmp + "'");
    out << content;
  }
  std::rename(tmp.c_str(), path.c_str());
}

Vec read_inputs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool two_columns = line == "t,y";
  if (line != "t" && !two_columns) {
    throw ParseError(path + ":1: expected header 't' or 't,y'");
  }
  std::vector<double> ts;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string field = two_columns ? line.substr(0, line.find(',')) : line;
    try {
      ts.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
    }
  }
  if (ts.empty()) throw ParseError(path + ": no inputs");
  return Eigen::Map<Vec>(ts.data(), Index(ts.size()));
}

Vec parse_grid(const std::string& spec) {
  double lo, hi;
  long count;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%ld", &lo, &hi, &count) != 3 || count < 1) {
    throw ValidationError("--grid expects lo:hi:count");
  }
  Vec t(count);
  for (long i = 0; i < count; ++i) {
    t[i] = count == 1 ? lo : lo + (hi - lo) * double(i) / double(count - 1);
  }
  return t;
}

// uniform subsample of the sorted training inputs seeds the pseudo-data
void init_sparse_pseudo_data(ModelConfig& config, const Series& data) {
  if (!config.covariance || !config.covariance->sparse) return;
  auto& sparse = *config.covariance->sparse;
  if (sparse.pseudo_inputs.size() > 0) return;
  const Index n = data.t.size();
  const Index m = Index(sparse.m);
  if (m >= n) throw ValidationError("sparse mode: m must be below the data size");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return data.t[a] < data.t[b]; });
  sparse.pseudo_inputs.resize(m);
  sparse.pseudo_values.resize(m);
  for (Index i = 0; i < m; ++i) {
    Index pick = order[std::size_t((n - 1) * i / std::max<Index>(m - 1, 1))];
    sparse.pseudo_inputs[i] = data.t[pick];
    sparse.pseudo_values[i] = data.y[pick];
  }
}

int cmd_fit(const std::string& data_path, const std::string& config_path,
            const std::string& out_path, std::int64_t seed_flag, bool allow_duplicates) {
  Series data = read_series_csv(data_path, allow_duplicates);
  ModelConfig config = parse_model_config(read_json_file(config_path));
  if (seed_flag >= 0) config.train.seed = std::uint64_t(seed_flag);
  init_sparse_pseudo_data(config, data);

  auto configured = make_trainable(config);
  auto result = fit(configured.model, data.t, data.y, config.train);

  ModelFile mf;
  mf.config = configured.config_with(result.constrained);
  mf.data_t = data.t;
  mf.data_y = data.y;
  mf.seed = config.train.seed;
  mf.final_nll = result.report.final_nll;
  save_model_file(out_path, mf);
  atomic_write(out_path + ".report.json", fit_report_to_json(result.report).dump(2) + "\n");

  std::printf("fit: n=%ld final_nll=%.9f (initial %.9f) restarts=%d winner=%d\n",
              long(data.t.size()), result.report.final_nll, result.report.initial_nll,
              config.train.restarts, result.report.winning_restart);
  std::printf("model: %s (hash %s)\n", out_path.c_str(), model_content_hash(mf).c_str());
  std::printf("report: %s.report.json\n", out_path.c_str());
  return 0;
}

int cmd_sample(const std::string& model_path, const std::string& inputs_path,
               const std::string& grid_spec, int n_samples, const std::string& out_prefix,
               std::int64_t seed_flag) {
  if (n_samples < 1) throw ValidationError("--n must be positive");
  ModelFile mf = load_model_file(model_path);
  Vec t_new;
  if (!inputs_path.empty()) t_new = read_inputs_file(inputs_path);
  else if (!grid_spec.empty()) t_new = parse_grid(grid_spec);
  else throw ValidationError("sample: provide --inputs or --grid");

  std::uint64_t seed = seed_flag >= 0 ? std::uint64_t(seed_flag) : mf.seed + 1;
  auto stack = build_stack(mf.config);
  auto set = stack_posterior_sample(stack, mf.data_t, mf.data_y, t_new, n_samples, seed,
                                    model_content_hash(mf));

  std::ostringstream samples;
  samples << "t,sample_id,value\n";
  samples.precision(12);
  for (Index s = 0; s < set.samples.rows(); ++s) {
    for (Index j = 0; j < t_new.size(); ++j) {
      samples << t_new[j] << ',' << s << ',' << set.samples(s, j) << '\n';
    }
  }
  atomic_write(out_prefix + "_samples.csv", samples.str());

  Vec probs(3);
  probs << 0.025, 0.5, 0.975;
  auto table = stack_quantiles(set, probs);
  std::ostringstream quant;
  quant << "t,mean,q025,q50,q975\n";
  quant.precision(12);
  for (Index j = 0; j < t_new.size(); ++j) {
    quant << t_new[j] << ',' << table.mean[j] << ',' << table.quantiles(j, 0) << ','
          << table.quantiles(j, 1) << ',' << table.quantiles(j, 2) << '\n';
  }
  atomic_write(out_prefix + "_quantiles.csv", quant.str());

  std::printf("sample: %d paths at %ld inputs (seed %llu)\n", n_samples, long(t_new.size()),
              static_cast<unsigned long long>(seed));
  std::printf("wrote %s_samples.csv and %s_quantiles.csv\n", out_prefix.c_str(),
              out_prefix.c_str());
  return 0;
}

int cmd_nll(const std::string& model_path, const std::string& data_path) {
  ModelFile mf = load_model_file(model_path);
  Series data = read_series_csv(data_path, true);
  auto stack = build_stack(mf.config);
  double nll = stack_nll(stack, data.t, data.y);
  std::printf("%.9f\n", nll);
  return 0;
}

struct CopulaSpec {
  std::string family;  // gaussian | studentt | clayton | independence
  double rho = 0.0;
  double theta = 1.0;
};

CopulaSpec parse_copula_spec(const std::string& spec) {
  CopulaSpec c;
  auto colon = spec.find(':');
  c.family = spec.substr(0, colon);
  if (colon != std::string::npos) {
    std::istringstream rest(spec.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("--copula: expected key=value pairs");
      std::string key = item.substr(0, eq);
      double value = std::stod(item.substr(eq + 1));
      if (key == "rho") c.rho = value;
      else if (key == "theta") c.theta = value;
      else throw ValidationError("--copula: unknown key '" + key + "'");
    }
  }
  const std::set<std::string> families = {"gaussian", "studentt", "clayton", "independence"};
  if (!families.count(c.family)) throw ValidationError("--copula: unknown family '" + c.family + "'");
  return c;
}

// simulate pseudo-uniform pairs from the requested copula
void simulate_pairs(const CopulaSpec& spec, long n, Rng& rng, std::vector<double>& u,
                    std::vector<double>& v) {
  u.resize(std::size_t(n));
  v.resize(std::size_t(n));
  auto normal = Dist1D::std_normal();
  if (spec.family == "gaussian" || spec.family == "studentt") {
    double rho = spec.rho;
    double w = std::sqrt(1.0 - rho * rho);
    for (long i = 0; i < n; ++i) {
      double z1 = normal.sample(rng), z2 = rho * z1 + w * normal.sample(rng);
      if (spec.family == "studentt") {
        double g = detail::gamma_draw(spec.theta / 2.0, rng) / (spec.theta / 2.0);
        double scale = 1.0 / std::sqrt(g);
        z1 *= scale;
        z2 *= scale;
      }
      u[std::size_t(i)] = z1;
      v[std::size_t(i)] = z2;
    }
  } else {
    auto layer = spec.family == "clayton" ? ArchimedeanLayer::clayton(spec.theta)
                                          : ArchimedeanLayer::independence();
    for (long i = 0; i < n; ++i) {
      Vec pair = layer.conditional_sample(Vec(0), 2, rng);
      u[std::size_t(i)] = pair[0];
      v[std::size_t(i)] = pair[1];
    }
  }
  // rank-transform to pseudo-uniform scores
  for (auto* col : {&u, &v}) {
    std::vector<std::size_t> idx(col->size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return (*col)[a] < (*col)[b]; });
    std::vector<double> ranks(col->size());
    for (std::size_t r = 0; r < idx.size(); ++r) ranks[idx[r]] = (double(r) + 0.5) / double(n);
    *col = std::move(ranks);
  }
}

int cmd_diagnose(const std::string& model_path, const std::string& copula_spec, double t1,
                 double t2, const std::string& pairs_path, long n_pairs, std::int64_t seed_flag) {
  CopulaSpec spec;
  if (!copula_spec.empty()) {
    spec = parse_copula_spec(copula_spec);
  } else if (!model_path.empty()) {
    ModelFile mf = load_model_file(model_path);
    if (!mf.config.covariance && (mf.config.copula.family == "none" ||
                                  mf.config.copula.family == "gaussian")) {
      throw ValidationError("diagnose: model has no dependence structure to report");
    }
    if (mf.config.copula.family == "independence" || mf.config.copula.family == "clayton") {
      spec.family = mf.config.copula.family;
      spec.theta = mf.config.copula.theta;
    } else {
      spec.family = mf.config.copula.family == "studentt" ? "studentt" : "gaussian";
      if (spec.family == "studentt") {
        if (mf.config.copula.nu_inv <= 0.0) spec.family = "gaussian";
        else spec.theta = 1.0 / mf.config.copula.nu_inv;
      }
      if (!mf.config.covariance) throw ValidationError("diagnose: model has no covariance layer");
      Kernel k = build_kernel(mf.config.covariance->kernel);
      double k11 = k(t1, t1, false), k22 = k(t2, t2, false), k12 = k(t1, t2, false);
      spec.rho = k12 / std::sqrt(k11 * k22);
    }
  } else {
    throw ValidationError("diagnose: provide --model or --copula");
  }

  TailDependence closed;
  if (spec.family == "gaussian") closed = tail_dependence_gaussian(spec.rho);
  else if (spec.family == "studentt") closed = tail_dependence_student_t(spec.theta, spec.rho);
  else if (spec.family == "clayton") closed = tail_dependence_archimedean(ArchimedeanLayer::clayton(spec.theta));
  else closed = tail_dependence_archimedean(ArchimedeanLayer::independence());

  std::printf("copula: %s", spec.family.c_str());
  if (spec.family == "gaussian" || spec.family == "studentt") std::printf(" rho=%.6f", spec.rho);
  if (spec.family == "studentt" || spec.family == "clayton") std::printf(" theta=%.6f", spec.theta);
  std::printf("\nclosed-form tail dependence: lower=%.6f upper=%.6f\n", closed.lower,
              closed.upper);

  std::vector<double> u, v;
  if (!pairs_path.empty()) {
    Series pairs = read_series_csv(pairs_path, true);
    u.assign(pairs.t.data(), pairs.t.data() + pairs.t.size());
    v.assign(pairs.y.data(), pairs.y.data() + pairs.y.size());
    long n = long(u.size());
    for (auto* col : {&u, &v}) {
      std::vector<std::size_t> idx(col->size());
      std::iota(idx.begin(), idx.end(), std::size_t(0));
      std::sort(idx.begin(), idx.end(),
                [&](std::size_t a, std::size_t b) { return (*col)[a] < (*col)[b]; });
      std::vector<double> ranks(col->size());
      for (std::size_t r = 0; r < idx.size(); ++r) ranks[idx[r]] = (double(r) + 0.5) / double(n);
      *col = std::move(ranks);
    }
  } else {
    Rng rng(seed_flag >= 0 ? std::uint64_t(seed_flag) : 20080915ULL);
    simulate_pairs(spec, n_pairs, rng, u, v);
  }

  std::printf("empirical estimates from %zu pairs:\n", u.size());
  for (double q : {0.01, 0.005, 0.001}) {
    long lo_joint = 0, lo_cond = 0, up_joint = 0, up_cond = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i] <= q) {
        ++lo_cond;
        if (v[i] <= q) ++lo_joint;
      }
      if (u[i] > 1.0 - q) {
        ++up_cond;
        if (v[i] > 1.0 - q) ++up_joint;
      }
    }
    double lo = lo_cond ? double(lo_joint) / double(lo_cond) : 0.0;
    double up = up_cond ? double(up_joint) / double(up_cond) : 0.0;
    std::printf("  lambda_hat(q=%.3f): lower=%.4f upper=%.4f\n", q, lo, up);
  }
  return 0;
}

int cmd_benchmark(const std::string& dataset, const std::string& models_csv, int splits,
                  double train_frac, int samples, std::int64_t seed_flag,
                  const std::string& out_prefix, int iterations, int polish, int restarts) {
  Series data;
  if (std::filesystem::exists(dataset)) data = read_series_csv(dataset);
  else data = datasets::by_name(dataset);

  BenchmarkOptions options;
  options.models.clear();
  std::istringstream ms(models_csv);
  std::string item;
  while (std::getline(ms, item, ',')) options.models.push_back(item);
  options.splits = splits;
  options.train_frac = train_frac;
  options.samples = samples;
  options.seed = seed_flag >= 0 ? std::uint64_t(seed_flag) : 1;
  options.train.iterations = iterations;
  options.train.polish = polish;
  options.train.restarts = restarts;
  options.train.batch = 32;

  auto result = run_benchmark(data, options);

  std::printf("%-6s %-6s %12s %12s %12s %12s %12s\n", "split", "model", "MAE", "EAE", "MSE",
              "ESE", "trainNLL");
  for (const auto& row : result.rows) {
    std::printf("%-6d %-6s %12.4f %12.4f %12.4f %12.4f %12.4f\n", row.split, row.model.c_str(),
                row.metrics.mae, row.metrics.eae, row.metrics.mse, row.metrics.ese, row.train_nll);
  }
  std::printf("\n%-6s %14s %14s %14s %14s\n", "model", "MAE", "EAE", "MSE", "ESE");
  for (const auto& s : result.summaries) {
    std::printf("%-6s %8.3f+-%-6.3f %7.3f+-%-6.3f %7.3f+-%-6.3f %7.3f+-%-6.3f\n",
                s.model.c_str(), s.mean.mae, s.sd.mae, s.mean.eae, s.sd.eae, s.mean.mse, s.sd.mse,
                s.mean.ese, s.sd.ese);
  }
  if (result.paired_splits > 0) {
    std::printf("paired splits with TGP ESE <= WGP ESE: %d of %d\n", result.tgp_ese_wins,
                result.paired_splits);
  }

  if (!out_prefix.empty()) {
    std::ostringstream csv;
    csv << "split,model,mae,eae,mse,ese,train_nll\n";
    csv.precision(12);
    for (const auto& row : result.rows) {
      csv << row.split << ',' << row.model << ',' << row.metrics.mae << ',' << row.metrics.eae
          << ',' << row.metrics.mse << ',' << row.metrics.ese << ',' << row.train_nll << '\n';
    }
    atomic_write(out_prefix + "_splits.csv", csv.str());
    std::ostringstream sum;
    sum << "model,mae_mean,mae_sd,eae_mean,eae_sd,mse_mean,mse_sd,ese_mean,ese_sd\n";
    sum.precision(12);
    for (const auto& s : result.summaries) {
      sum << s.model << ',' << s.mean.mae << ',' << s.sd.mae << ',' << s.mean.eae << ','
          << s.sd.eae << ',' << s.mean.mse << ',' << s.sd.mse << ',' << s.mean.ese << ','
          << s.sd.ese << '\n';
    }
    atomic_write(out_prefix + "_summary.csv", sum.str());
    std::printf("wrote %s_splits.csv and %s_summary.csv\n", out_prefix.c_str(),
                out_prefix.c_str());
  }
  return 0;
}

int cmd_fetch(const std::string& name, const std::string& out_path) {
  Series s = datasets::by_name(name);
  write_series_csv(out_path, s);
  std::printf("fetched %s: %ld rows -> %s\n", name.c_str(), long(s.t.size()), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tp: deep transport-process regression"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_path, model_path, inputs_path, grid_spec;
  std::string copula_spec, pairs_path, dataset, models_csv = "wgp,tgp", out_prefix;
  std::int64_t seed = -1;
  int n_samples = 1000, splits = 10, bench_samples = 200;
  int iterations = 200, polish = 30, restarts = 4;
  long n_pairs = 1000000;
  double train_frac = 0.15, t1 = 0.0, t2 = 1.0;
  bool allow_duplicates = false;

  auto* fit_cmd = app.add_subcommand("fit", "train a model on a t,y series");
  fit_cmd->add_option("--data", data_path, "training CSV with header t,y")->required();
  fit_cmd->add_option("--config", config_path, "stack configuration JSON")->required();
  fit_cmd->add_option("--out", out_path, "output model file")->required();
  fit_cmd->add_option("--seed", seed, "override the training seed");
  fit_cmd->add_flag("--allow-duplicates", allow_duplicates, "keep duplicate t rows");

  auto* sample_cmd = app.add_subcommand("sample", "draw posterior sample paths");
  sample_cmd->add_option("--model", model_path, "trained model file")->required();
  sample_cmd->add_option("--inputs", inputs_path, "CSV of prediction inputs (header t)");
  sample_cmd->add_option("--grid", grid_spec, "prediction grid lo:hi:count");
  sample_cmd->add_option("--n", n_samples, "number of sample paths");
  sample_cmd->add_option("--out", out_prefix, "output prefix")->required();
  sample_cmd->add_option("--seed", seed, "sampling seed");

  auto* nll_cmd = app.add_subcommand("nll", "print the full-data NLL of a model");
  nll_cmd->add_option("--model", model_path, "trained model file")->required();
  nll_cmd->add_option("--data", data_path, "CSV with header t,y")->required();

  auto* diag_cmd = app.add_subcommand("diagnose", "tail-dependence and copula report");
  diag_cmd->add_option("--model", model_path, "trained model file");
  diag_cmd->add_option("--copula", copula_spec,
                       "copula spec, e.g. studentt:theta=1,rho=0 or clayton:theta=1");
  diag_cmd->add_option("--t1", t1, "first input location (with --model)");
  diag_cmd->add_option("--t2", t2, "second input location (with --model)");
  diag_cmd->add_option("--pairs", pairs_path, "CSV of observed pairs (header t,y)");
  diag_cmd->add_option("--n-pairs", n_pairs, "simulated pair count");
  diag_cmd->add_option("--seed", seed, "simulation seed");

  auto* bench_cmd = app.add_subcommand("benchmark", "random-split WGP/TGP comparison");
  bench_cmd->add_option("--dataset", dataset, "dataset name (sunspots|heart|tb3ms) or CSV path")
      ->required();
  bench_cmd->add_option("--models", models_csv, "comma-separated list from {wgp,tgp}");
  bench_cmd->add_option("--splits", splits, "number of random splits");
  bench_cmd->add_option("--train-frac", train_frac, "training fraction per split");
  bench_cmd->add_option("--samples", bench_samples, "posterior samples per prediction");
  bench_cmd->add_option("--seed", seed, "benchmark seed");
  bench_cmd->add_option("--out", out_prefix, "output CSV prefix");
  bench_cmd->add_option("--iterations", iterations, "minibatch iterations per fit");
  bench_cmd->add_option("--polish", polish, "full-data polish iterations per fit");
  bench_cmd->add_option("--restarts", restarts, "random restarts per fit");

  auto* fetch_cmd = app.add_subcommand("fetch", "download or copy a benchmark dataset");
  fetch_cmd->add_option("--name", dataset, "sunspots|heart|tb3ms")->required();
  fetch_cmd->add_option("--out", out_path, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(data_path, config_path, out_path, seed, allow_duplicates);
    if (sample_cmd->parsed())
      return cmd_sample(model_path, inputs_path, grid_spec, n_samples, out_prefix, seed);
    if (nll_cmd->parsed()) return cmd_nll(model_path, data_path);
    if (diag_cmd->parsed())
      return cmd_diagnose(model_path, copula_spec, t1, t2, pairs_path, n_pairs, seed);
    if (bench_cmd->parsed())
      return cmd_benchmark(dataset, models_csv, splits, train_frac, bench_samples, seed,
                           out_prefix, iterations, polish, restarts);
    if (fetch_cmd->parsed()) return cmd_fetch(dataset, out_path);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DownloadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "hint: set TP_CACHE_DIR to a directory with a prepared <name>.csv\n";
    return 5;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
