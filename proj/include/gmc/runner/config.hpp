#pragma once

// Flat key = value run configuration with dotted section keys.  Every
// experiment declares its keys with defaults; file values and command-line
// overrides are checked against that schema before anything runs.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/report.hpp"

namespace gmc::runner {

enum class KeyType { real, integer, boolean, text, real_list, choice };

struct KeySpec {
  std::string key;
  KeyType type = KeyType::real;
  std::string default_value;
  std::vector<std::string> choices;  // KeyType::choice only
};

// Keys that never influence results; left out of the embedded configuration.
inline bool is_run_local_key(const std::string& key) { return key == "run.workers" || key == "run.out"; }

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_real(const std::string& text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && std::isfinite(out);
}

inline bool parse_integer(const std::string& text, std::int64_t& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

inline bool parse_list(const std::string& text, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_real(item, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

inline std::string type_name(KeyType t) {
  switch (t) {
    case KeyType::real: return "a real number";
    case KeyType::integer: return "an integer";
    case KeyType::boolean: return "true or false";
    case KeyType::text: return "text";
    case KeyType::real_list: return "a comma-separated list of reals";
    case KeyType::choice: return "one of the listed choices";
  }
  return "a value";
}

}  // namespace detail

// Raw assignments with their origin ("file.cfg:12" or "--set").
struct Assignment {
  std::string value;
  std::string origin;
};

using Assignments = std::map<std::string, Assignment>;

// Parses `key = value` lines; '#' starts a comment.  Later lines win.
inline Assignments parse_config_text(const std::string& text, const std::string& source) {
  Assignments out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos) throw ConfigError(where + ": malformed key");
    if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
    out[key] = {value, where};
  }
  return out;
}

inline Assignments load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

// Schema-checked values for one experiment.
class Params {
 public:
  Params(std::string experiment, const std::vector<KeySpec>& schema, const Assignments& given)
      : experiment_(std::move(experiment)) {
    for (const auto& spec : schema) {
      specs_[spec.key] = spec;
      values_[spec.key] = spec.default_value;
    }
    for (const auto& [key, a] : given) {
      if (key == "experiment") {
        if (a.value != experiment_) {
          throw ConfigError(a.origin + ": config is for experiment '" + a.value + "', not '" + experiment_ + "'");
        }
        continue;
      }
      const auto it = specs_.find(key);
      if (it == specs_.end()) throw ConfigError(a.origin + ": unknown key '" + key + "' for " + experiment_);
      check(it->second, a.value, a.origin);
      values_[key] = detail::trim(a.value);
    }
  }

  const std::string& experiment() const { return experiment_; }

  double real(const std::string& key) const {
    double v = 0.0;
    detail::parse_real(raw(key, KeyType::real), v);
    return v;
  }
  std::int64_t integer(const std::string& key) const {
    std::int64_t v = 0;
    detail::parse_integer(raw(key, KeyType::integer), v);
    return v;
  }
  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
  bool boolean(const std::string& key) const { return raw(key, KeyType::boolean) == "true"; }
  std::string text(const std::string& key) const {
    const auto& s = spec(key);
    if (s.type != KeyType::text && s.type != KeyType::choice) throw Error("key " + key + " is not text");
    return values_.at(key);
  }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> v;
    detail::parse_list(raw(key, KeyType::real_list), v);
    return v;
  }
  std::uint64_t seed() const {
    std::uint64_t v = 0;
    const std::string& s = values_.at("run.seed");
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
  }

  // Sorted key = value lines, run-local keys excluded.
  std::string resolved_text() const {
    std::string out = "experiment = " + experiment_ + "\n";
    for (const auto& [k, v] : values_) {
      if (!is_run_local_key(k)) out += k + " = " + v + "\n";
    }
    return out;
  }

  Json resolved_json() const {
    Json j = Json::object();
    j["experiment"] = experiment_;
    for (const auto& [k, v] : values_) {
      if (!is_run_local_key(k)) j[k] = v;
    }
    return j;
  }

 private:
  const KeySpec& spec(const std::string& key) const {
    const auto it = specs_.find(key);
    if (it == specs_.end()) throw Error("experiment " + experiment_ + " has no key " + key);
    return it->second;
  }

  const std::string& raw(const std::string& key, KeyType type) const {
    if (spec(key).type != type) throw Error("key " + key + " read with the wrong type");
    return values_.at(key);
  }

  static void check(const KeySpec& spec, const std::string& value, const std::string& origin) {
    bool ok = true;
    double r = 0.0;
    std::int64_t i = 0;
    std::vector<double> l;
    switch (spec.type) {
      case KeyType::real: ok = detail::parse_real(value, r); break;
      case KeyType::integer: ok = detail::parse_integer(value, i) && i >= 0; break;
      case KeyType::boolean: ok = value == "true" || value == "false"; break;
      case KeyType::text: ok = !value.empty(); break;
      case KeyType::real_list: ok = detail::parse_list(value, l); break;
      case KeyType::choice:
        ok = std::find(spec.choices.begin(), spec.choices.end(), value) != spec.choices.end();
        break;
    }
    if (spec.key == "run.seed") {
      std::uint64_t s = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), s);
      ok = res.ec == std::errc() && res.ptr == value.data() + value.size();
    }
    if (!ok) {
      std::string msg = origin + ": key '" + spec.key + "' expects " + detail::type_name(spec.type) + ", got '" +
                        value + "'";
      if (spec.type == KeyType::choice) {
        msg += " (choices:";
        for (const auto& c : spec.choices) msg += " " + c;
        msg += ")";
      }
      throw ConfigError(msg);
    }
  }

  std::string experiment_;
  std::map<std::string, KeySpec> specs_;
  std::map<std::string, std::string> values_;
};

}  // namespace gmc::runner
