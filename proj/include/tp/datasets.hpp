#ifndef TP_DATASETS_HPP
#define TP_DATASETS_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "tp/series_io.hpp"
#include "tp/types.hpp"

namespace tp {

/// Raised when a dataset cannot be downloaded; the CLI maps it to exit 5.
struct DownloadError : std::runtime_error {
  explicit DownloadError(const std::string& what) : std::runtime_error(what) {}
};

namespace datasets {

inline std::string bundled_dir() {
#ifdef TP_BUNDLED_DATA_DIR
  return TP_BUNDLED_DATA_DIR;
#else
  return "data";
#endif
}

inline std::string cache_dir() {
  const char* env = std::getenv("TP_CACHE_DIR");
  return env ? env : "";
}

inline bool try_cache(const std::string& name, Series& out) {
  std::string dir = cache_dir();
  if (dir.empty()) return false;
  std::filesystem::path p = std::filesystem::path(dir) / (name + ".csv");
  if (!std::filesystem::exists(p)) return false;
  out = read_series_csv(p.string());
  return true;
}

inline std::string http_get(const std::string& host, const std::string& path, bool https) {
  std::string body;
  auto check = [&](auto& client) {
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    auto res = client.Get(path);
    if (!res || res->status != 200) {
      throw DownloadError("GET " + host + path + " failed" +
                          (res ? " with status " + std::to_string(res->status) : ""));
    }
    body = res->body;
  };
  if (https) {
    httplib::SSLClient client(host);
    client.enable_server_certificate_verification(false);
    check(client);
  } else {
    httplib::Client client(host);
    check(client);
  }
  return body;
}

/// Yearly sunspot numbers 1700-2008 (SIDC yearly means, 309 rows), bundled
/// with the repository so the benchmark runs offline.
inline Series sunspots() {
  Series s;
  if (try_cache("sunspots", s)) return s;
  std::filesystem::path p = std::filesystem::path(bundled_dir()) / "sunspots.csv";
  if (!std::filesystem::exists(p)) {
    throw DownloadError("bundled sunspots.csv not found under '" + bundled_dir() +
                        "'; set TP_CACHE_DIR to a directory holding sunspots.csv");
  }
  return read_series_csv(p.string());
}

/// MIT-BIH instantaneous heart rate series (ecg.mit.edu/time-series), 1800
/// samples at 0.5 s; returned as the 450-point subsample at 2.0 s intervals.
inline Series heart() {
  Series s;
  if (try_cache("heart", s)) return s;
  std::string body;
  try {
    body = http_get("ecg.mit.edu", "/time-series/hr.7257", false);
  } catch (const DownloadError& e) {
    throw DownloadError(std::string(e.what()) +
                        "; place a prepared heart.csv under TP_CACHE_DIR to run offline");
  }
  std::istringstream in(body);
  std::vector<double> values;
  double v;
  while (in >> v) values.push_back(v);
  if (values.size() < 1800) throw DownloadError("heart series: expected 1800 samples");
  Series out;
  out.t.resize(450);
  out.y.resize(450);
  for (Index i = 0; i < 450; ++i) {
    out.t[i] = 2.0 * double(i);
    out.y[i] = values[std::size_t(4 * i)];
  }
  return out;
}

/// 3-Month Treasury Bill secondary market rate, quarterly averages
/// 1959Q1-2009Q3 (FRED TB3MS), 203 observations.
inline Series tb3ms() {
  Series s;
  if (try_cache("tb3ms", s)) return s;
  std::string body;
  try {
    body = http_get("fred.stlouisfed.org",
                    "/graph/fredgraph.csv?id=TB3MS&frequency=q&aggregation_method=avg"
                    "&cosd=1959-01-01&coed=2009-09-30",
                    true);
  } catch (const DownloadError& e) {
    throw DownloadError(std::string(e.what()) +
                        "; place a prepared tb3ms.csv under TP_CACHE_DIR to run offline");
  }
  std::istringstream in(body);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> ts, ys;
  while (std::getline(in, line)) {
    if (line.size() < 12) continue;
    int year = std::stoi(line.substr(0, 4));
    int month = std::stoi(line.substr(5, 2));
    auto comma = line.find(',');
    double value = std::stod(line.substr(comma + 1));
    ts.push_back(double(year) + double(month - 1) / 12.0);
    ys.push_back(value);
  }
  if (ts.size() != 203) {
    throw DownloadError("tb3ms: expected 203 quarterly observations, got " +
                        std::to_string(ts.size()));
  }
  Series out;
  out.t = Eigen::Map<Vec>(ts.data(), Index(ts.size()));
  out.y = Eigen::Map<Vec>(ys.data(), Index(ys.size()));
  return out;
}

inline Series by_name(const std::string& name) {
  if (name == "sunspots") return sunspots();
  if (name == "heart") return heart();
  if (name == "tb3ms") return tb3ms();
  throw ValidationError("unknown dataset '" + name + "' (expected sunspots|heart|tb3ms)");
}

}  // namespace datasets

}  // namespace tp

#endif
