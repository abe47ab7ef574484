#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "tp/benchmark.hpp"
#include "tp/datasets.hpp"

using namespace tp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tp_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args, std::string* output = nullptr) {
  TempDir scratch;
  std::string log = scratch.file("out.txt");
  std::string cmd = std::string(TP_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string toy_series_csv() {
  std::ostringstream ss;
  ss << "t,y\n";
  Rng rng(6);
  for (int i = 0; i < 16; ++i) {
    double t = 0.5 * i;
    ss << t << ',' << 8.0 + 3.0 * std::sin(t) + 0.3 * Dist1D::std_normal().sample(rng) << '\n';
  }
  return ss.str();
}

std::string toy_config_json(int iterations = 40, int polish = 10, int restarts = 2) {
  std::ostringstream ss;
  ss << R"({
  "copula": {"family": "none"},
  "covariance": {"kernel": {"type": "se", "sigma": 1.0, "rate": 0.5}, "noise": 0.2, "mode": "exact"},
  "marginals": [{"warping": {"type": "boxcox", "lambda": 1.0, "shift": 1.0},
                 "location": {"type": "constant", "value": 8.0}, "scale": 2.0}],
  "train": {"iterations": )"
     << iterations << R"(, "polish": )" << polish << R"(, "batch": 16, "restarts": )" << restarts
     << R"(, "seed": 7}
})";
  return ss.str();
}

}  // namespace

TEST_CASE("series io: round trip, duplicates, line-numbered errors") {
  TempDir dir;
  write_file(dir.file("ok.csv"), "t,y\n0,1.5\n1,2.5\n");
  auto s = read_series_csv(dir.file("ok.csv"));
  CHECK(s.t.size() == 2);
  CHECK(s.y[1] == 2.5);

  write_file(dir.file("dup.csv"), "t,y\n0,1\n0,2\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_series_csv(dir.file("dup.csv"))),
                       doctest::Contains(":3"), ParseError);
  CHECK_NOTHROW(static_cast<void>(read_series_csv(dir.file("dup.csv"), true)));

  write_file(dir.file("bad.csv"), "t,y\n0,1\nfoo,2\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_series_csv(dir.file("bad.csv"))),
                       doctest::Contains(":3"), ParseError);
  write_file(dir.file("hdr.csv"), "time,value\n0,1\n");
  CHECK_THROWS_AS(static_cast<void>(read_series_csv(dir.file("hdr.csv"))), ParseError);
}

TEST_CASE("metrics: definitional checks and jensen ordering") {
  Vec y(3);
  y << 1.0, 2.0, 3.0;
  // constant predictor = mean of y: hand-computed MSE and MAE
  Mat constant(4, 3);
  constant.setConstant(2.0);
  auto m = compute_metrics(y, constant);
  CHECK(m.mse == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(m.mae == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  // identical samples for all k collapse ESE to MSE and EAE to MAE
  CHECK(m.ese == doctest::Approx(m.mse).epsilon(1e-14));
  CHECK(m.eae == doctest::Approx(m.mae).epsilon(1e-14));

  // spread samples keep the jensen ordering strict
  Rng rng(3);
  Mat spread(200, 3);
  for (Index i = 0; i < 200; ++i)
    for (Index j = 0; j < 3; ++j) spread(i, j) = 2.0 + Dist1D::std_normal().sample(rng);
  auto ms = compute_metrics(y, spread);
  CHECK(ms.ese >= ms.mse);
  CHECK(ms.eae >= ms.mae);
}

TEST_CASE("config: strict schema") {
  auto good = Json::parse(toy_config_json());
  CHECK_NOTHROW(static_cast<void>(parse_model_config(good)));

  auto unknown_top = good;
  unknown_top["surprise"] = 1;
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_model_config(unknown_top)),
                       doctest::Contains("unknown key"), ValidationError);

  auto unknown_nested = good;
  unknown_nested["covariance"]["kernel"]["length"] = 2.0;
  CHECK_THROWS_AS(static_cast<void>(parse_model_config(unknown_nested)), ValidationError);

  auto bad_family = good;
  bad_family["copula"]["family"] = "vine";
  CHECK_THROWS_AS(static_cast<void>(parse_model_config(bad_family)), ValidationError);
}

TEST_CASE("model file: round trip and hash integrity") {
  TempDir dir;
  ModelFile mf;
  mf.config = parse_model_config(Json::parse(toy_config_json()));
  mf.data_t = Vec::LinSpaced(5, 0.0, 4.0);
  mf.data_y = Vec::LinSpaced(5, 1.0, 9.0);
  mf.seed = 42;
  mf.final_nll = 3.25;
  save_model_file(dir.file("m.json"), mf);
  auto loaded = load_model_file(dir.file("m.json"));
  CHECK(loaded.seed == 42);
  CHECK(loaded.final_nll == 3.25);
  CHECK((loaded.data_t - mf.data_t).cwiseAbs().maxCoeff() == 0.0);

  // tampering breaks the hash
  std::ifstream in(dir.file("m.json"));
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  auto pos = text.find("\"final_nll\": 3.25");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 17, "\"final_nll\": 9.99");
  write_file(dir.file("tampered.json"), text);
  CHECK_NOTHROW(static_cast<void>(load_model_file(dir.file("tampered.json"))));  // nll not hashed
  auto pos2 = text.find("\"seed\": 42");
  REQUIRE(pos2 != std::string::npos);
  text.replace(pos2, 10, "\"seed\": 43");
  write_file(dir.file("tampered2.json"), text);
  CHECK_THROWS_WITH_AS(static_cast<void>(load_model_file(dir.file("tampered2.json"))),
                       doctest::Contains("hash"), ValidationError);
}

TEST_CASE("cli: fit completes fast, deterministic hash, nll round trip") {
  TempDir dir;
  write_file(dir.file("toy.csv"), toy_series_csv());
  write_file(dir.file("cfg.json"), toy_config_json());

  auto t0 = std::chrono::steady_clock::now();
  std::string out1;
  int rc = run_cli("fit --data " + dir.file("toy.csv") + " --config " + dir.file("cfg.json") +
                       " --out " + dir.file("m1.json") + " --seed 11",
                   &out1);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(rc == 0);
  CHECK(secs < 10.0);

  std::string out2;
  rc = run_cli("fit --data " + dir.file("toy.csv") + " --config " + dir.file("cfg.json") +
                   " --out " + dir.file("m2.json") + " --seed 11",
               &out2);
  CHECK(rc == 0);
  auto m1 = load_model_file(dir.file("m1.json"));
  auto m2 = load_model_file(dir.file("m2.json"));
  CHECK(model_content_hash(m1) == model_content_hash(m2));

  // printed NLL equals the library value through the same model file
  std::string nll_out;
  rc = run_cli("nll --model " + dir.file("m1.json") + " --data " + dir.file("toy.csv"), &nll_out);
  CHECK(rc == 0);
  Series data = read_series_csv(dir.file("toy.csv"));
  double expected = stack_nll(build_stack(m1.config), data.t, data.y);
  CHECK(std::stod(nll_out) == doctest::Approx(expected).epsilon(1e-9));
  // fit report final nll agrees with the recomputed value
  CHECK(std::stod(nll_out) == doctest::Approx(m1.final_nll).epsilon(1e-9));
}

TEST_CASE("cli: exit codes") {
  TempDir dir;
  write_file(dir.file("cfg.json"), toy_config_json());
  write_file(dir.file("toy.csv"), toy_series_csv());

  // missing file -> parse error (2)
  CHECK(run_cli("fit --data " + dir.file("absent.csv") + " --config " + dir.file("cfg.json") +
                " --out " + dir.file("m.json")) == 2);
  // invalid schema -> validation (3)
  write_file(dir.file("bad.json"), "{\"noise\": 1}");
  CHECK(run_cli("fit --data " + dir.file("toy.csv") + " --config " + dir.file("bad.json") +
                " --out " + dir.file("m.json")) == 3);
  // malformed json -> parse (2)
  write_file(dir.file("broken.json"), "{");
  CHECK(run_cli("fit --data " + dir.file("toy.csv") + " --config " + dir.file("broken.json") +
                " --out " + dir.file("m.json")) == 2);

  // corrupted model hash -> 3
  REQUIRE(run_cli("fit --data " + dir.file("toy.csv") + " --config " + dir.file("cfg.json") +
                  " --out " + dir.file("m.json") + " --seed 3") == 0);
  std::ifstream in(dir.file("m.json"));
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  auto pos = text.find("\"seed\": 3");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 9, "\"seed\": 4");
  write_file(dir.file("corrupt.json"), text);
  CHECK(run_cli("nll --model " + dir.file("corrupt.json") + " --data " + dir.file("toy.csv")) ==
        3);

  // N = 0 samples -> 3
  CHECK(run_cli("sample --model " + dir.file("m.json") + " --grid 0:1:5 --n 0 --out " +
                dir.file("s")) == 3);
}

TEST_CASE("cli: quantile file pins noiseless predictions to the data") {
  TempDir dir;
  std::string cfg = R"({
  "copula": {"family": "none"},
  "covariance": {"kernel": {"type": "se", "sigma": 1.0, "rate": 0.5}, "noise": 0.0},
  "train": {"iterations": 0, "polish": 0, "batch": 8, "restarts": 1, "seed": 5}
})";
  write_file(dir.file("cfg.json"), cfg);
  std::ostringstream data;
  data << "t,y\n";
  data.precision(17);
  Rng rng(9);
  for (int i = 0; i < 8; ++i) data << 0.5 * i << ',' << Dist1D::std_normal().sample(rng) << '\n';
  write_file(dir.file("d.csv"), data.str());
  std::vector<double> ys;
  {
    auto reread = read_series_csv(dir.file("d.csv"));
    ys.assign(reread.y.data(), reread.y.data() + reread.y.size());
  }
  REQUIRE(run_cli("fit --data " + dir.file("d.csv") + " --config " + dir.file("cfg.json") +
                  " --out " + dir.file("m.json")) == 0);
  REQUIRE(run_cli("sample --model " + dir.file("m.json") + " --inputs " + dir.file("d.csv") +
                  " --n 150 --out " + dir.file("pred")) == 0);
  std::ifstream in(dir.file("pred_quantiles.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,mean,q025,q50,q975");
  int row = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string item;
    std::vector<double> vals;
    while (std::getline(fields, item, ',')) vals.push_back(std::stod(item));
    REQUIRE(vals.size() == 5);
    CHECK(vals[3] == doctest::Approx(ys[std::size_t(row)]).epsilon(0).scale(1).epsilon(1e-7));
    ++row;
  }
  CHECK(row == 8);
  // samples CSV has the documented columns
  std::ifstream sin(dir.file("pred_samples.csv"));
  std::getline(sin, line);
  CHECK(line == "t,sample_id,value");
}

TEST_CASE("cli: diagnose closed forms") {
  std::string out;
  CHECK(run_cli("diagnose --copula gaussian:rho=0.5 --n-pairs 1000 --seed 2", &out) == 0);
  CHECK(out.find("lower=0.000000 upper=0.000000") != std::string::npos);
  CHECK(run_cli("diagnose --copula studentt:theta=1,rho=0 --n-pairs 1000 --seed 2", &out) == 0);
  CHECK(out.find("lower=0.292893 upper=0.292893") != std::string::npos);
  CHECK(run_cli("diagnose --copula independence --n-pairs 1000", &out) == 0);
  CHECK(out.find("lower=0.000000 upper=0.000000") != std::string::npos);
  CHECK(run_cli("diagnose --copula clayton:theta=1 --n-pairs 1000", &out) == 0);
  CHECK(out.find("lower=0.500000 upper=0.000000") != std::string::npos);
}

TEST_CASE("cli: fetch bundled sunspots and offline failure for remote sets") {
  TempDir dir;
  std::string out;
  CHECK(run_cli("fetch --name sunspots --out " + dir.file("ss.csv"), &out) == 0);
  auto s = read_series_csv(dir.file("ss.csv"));
  CHECK(s.t.size() == 309);
  CHECK(s.t[0] == 1700.0);
  CHECK(s.t[308] == 2008.0);
  CHECK(s.y.minCoeff() >= 0.0);

  // remote datasets are unreachable in the sandbox: exit 5 with a cache hint
  int rc = run_cli("fetch --name heart --out " + dir.file("h.csv"), &out);
  if (rc != 0) {
    CHECK(rc == 5);
    CHECK(out.find("TP_CACHE_DIR") != std::string::npos);
  }
}

TEST_CASE("cli: benchmark smoke run emits table, csv, and jensen-ordered metrics") {
  TempDir dir;
  std::string out;
  int rc = run_cli(
      "benchmark --dataset sunspots --splits 2 --samples 40 --seed 3 --iterations 30 "
      "--polish 8 --restarts 2 --out " +
          dir.file("bench"),
      &out);
  CHECK(rc == 0);
  CHECK(out.find("paired splits with TGP ESE <= WGP ESE") != std::string::npos);
  std::ifstream csv(dir.file("bench_splits.csv"));
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "split,model,mae,eae,mse,ese,train_nll");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string item;
    std::vector<std::string> vals;
    while (std::getline(fields, item, ',')) vals.push_back(item);
    REQUIRE(vals.size() == 7);
    double mae = std::stod(vals[2]), eae = std::stod(vals[3]);
    double mse = std::stod(vals[4]), ese = std::stod(vals[5]);
    CHECK(ese >= mse);  // jensen ordering on every emitted report
    CHECK(eae >= mae);
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("benchmark split reproducibility") {
  Series data = datasets::sunspots();
  BenchmarkOptions options;
  options.splits = 1;
  options.samples = 30;
  options.seed = 11;
  options.train.iterations = 10;
  options.train.polish = 4;
  options.train.restarts = 1;
  auto a = run_benchmark(data, options);
  auto b = run_benchmark(data, options);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].metrics.mse == b.rows[i].metrics.mse);
    CHECK(a.rows[i].metrics.ese == b.rows[i].metrics.ese);
    CHECK(a.rows[i].train_nll == b.rows[i].train_nll);
  }
}
