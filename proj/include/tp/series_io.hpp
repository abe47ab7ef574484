#ifndef TP_SERIES_IO_HPP
#define TP_SERIES_IO_HPP

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "tp/types.hpp"

namespace tp {

struct Series {
  Vec t;
  Vec y;
};

/// Reads a "t,y" CSV. Parse problems report the offending line number;
/// duplicate t values are rejected unless allow_duplicates is set.
inline Series read_series_csv(const std::string& path, bool allow_duplicates = false) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,y") throw ParseError(path + ":1: expected header 't,y', got '" + line + "'");

  std::vector<double> ts, ys;
  std::set<double> seen;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 't,y' row");
    }
    auto parse_field = [&](const std::string& field) {
      double value = 0.0;
      auto begin = field.data();
      auto end = field.data() + field.size();
      auto res = std::from_chars(begin, end, value);
      if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(value)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      return value;
    };
    double t = parse_field(line.substr(0, comma));
    double y = parse_field(line.substr(comma + 1));
    if (!allow_duplicates && !seen.insert(t).second) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate input t=" +
                       std::to_string(t) + " (pass --allow-duplicates to keep)");
    }
    ts.push_back(t);
    ys.push_back(y);
  }
  if (ts.empty()) throw ParseError(path + ": no data rows");
  Series s;
  s.t = Eigen::Map<Vec>(ts.data(), Index(ts.size()));
  s.y = Eigen::Map<Vec>(ys.data(), Index(ys.size()));
  return s;
}

inline void write_series_csv(const std::string& path, const Series& s) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "t,y\n";
  out.precision(17);
  for (Index i = 0; i < s.t.size(); ++i) out << s.t[i] << ',' << s.y[i] << '\n';
}

}  // namespace tp

#endif
