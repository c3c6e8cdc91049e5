#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmc/error.hpp"

namespace gmc {

inline constexpr const char* kVersion = "0.3.1";

using Json = nlohmann::ordered_json;

// Tabular estimator output.  Point estimates carry either a companion
// "<name>_se" column or an entry in `exact_columns`.
struct ExperimentReport {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> exact_columns;
  Json metadata = Json::object();
  Json metrics = Json::object();
  std::vector<std::string> flags;

  std::size_t column(const std::string& key) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == key) return i;
    }
    throw InvalidArgument("report " + name + " has no column " + key);
  }

  void add_row(std::vector<double> row) {
    detail::require(row.size() == columns.size(), "report row width mismatch");
    rows.push_back(std::move(row));
  }

  double at(std::size_t row, const std::string& key) const { return rows.at(row).at(column(key)); }

  std::vector<double> column_values(const std::string& key) const {
    const std::size_t c = column(key);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  double metric(const std::string& key) const {
    if (!metrics.contains(key)) throw InvalidArgument("report " + name + " has no metric " + key);
    const auto& v = metrics.at(key);
    if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
    return v.get<double>();
  }

  bool has_flag(const std::string& flag) const {
    for (const auto& f : flags) {
      if (f == flag) return true;
    }
    return false;
  }
};

// Shortest text that round-trips; NaN and infinities spelled out.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string to_csv(const ExperimentReport& report) {
  std::string out;
  out += "# report: " + report.name + "\n";
  out += "# version: " + std::string(kVersion) + "\n";
  for (const auto& [key, value] : report.metadata.items()) {
    out += "# " + key + ": " + (value.is_string() ? value.get<std::string>() : value.dump()) + "\n";
  }
  for (const auto& f : report.flags) out += "# flag: " + f + "\n";
  for (std::size_t i = 0; i < report.columns.size(); ++i) {
    out += (i ? "," : "") + report.columns[i];
  }
  out += "\n";
  for (const auto& row : report.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += (i ? "," : "") + format_number(row[i]);
    }
    out += "\n";
  }
  return out;
}

inline Json number_json(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

inline Json to_json(const ExperimentReport& report) {
  Json j;
  j["report"] = report.name;
  j["version"] = kVersion;
  j["config"] = report.metadata;
  j["metrics"] = report.metrics;
  j["flags"] = report.flags;
  j["exact_columns"] = report.exact_columns;
  j["columns"] = report.columns;
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    Json r = Json::array();
    for (double x : row) r.push_back(number_json(x));
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace gmc
