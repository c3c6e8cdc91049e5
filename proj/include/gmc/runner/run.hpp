#pragma once

// Resolve a configuration, run one experiment and write its run directory:
//   <out>/<experiment>-<UTC stamp>[-k]/{report.csv, report.json, config.resolved}

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include "gmc/runner/config.hpp"
#include "gmc/runner/experiments.hpp"

namespace gmc::runner {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kInvalidArgument = 3,
  kSynthesis = 4,
  kResolution = 5,
  kFormat = 6,
  kStatistics = 7,
  kInternal = 8,
};

struct RunRequest {
  std::string experiment;
  std::string config_file;  // empty: defaults only
  Assignments overrides;    // win over the file
};

inline Params resolve(const RunRequest& request) {
  const Experiment& e = find_experiment(request.experiment);
  Assignments given;
  if (!request.config_file.empty()) given = load_config_file(request.config_file);
  for (const auto& [k, v] : request.overrides) given[k] = v;
  return Params(e.name, e.schema, given);
}

inline unsigned workers_of(const Params& p) {
  const auto w = p.integer("run.workers");
  if (w < 1) throw ConfigError("run.workers must be at least 1");
  return static_cast<unsigned>(w);
}

inline ExperimentReport run_resolved(const Params& p) {
  ExperimentReport report = find_experiment(p.experiment()).run(p, workers_of(p));
  report.metadata["resolved_config"] = p.resolved_json();
  report.metadata["master_seed"] = std::to_string(p.seed());
  return report;
}

inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline std::string write_run(const Params& p, const ExperimentReport& report) {
  namespace fs = std::filesystem;
  const fs::path root = p.text("run.out");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw FormatError("cannot create output directory " + root.string() + ": " + ec.message());
  const std::string base = p.experiment() + "-" + utc_stamp();
  fs::path dir = root / base;
  for (int k = 1; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directory(dir, ec);
  if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
  try {
    write_text((dir / "report.csv").string(), to_csv(report));
    write_text((dir / "report.json").string(), to_json(report).dump(2) + "\n");
    write_text((dir / "config.resolved").string(), p.resolved_text());
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
  return dir.string();
}

inline void print_summary(std::ostream& out, const ExperimentReport& report) {
  for (const auto& [key, value] : report.metrics.items()) {
    out << report.name << "." << key << " = "
        << (value.is_number() ? format_number(value.get<double>()) : value.dump()) << "\n";
  }
  for (const auto& f : report.flags) out << report.name << ".flag " << f << "\n";
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const InvalidArgument*>(&e)) return kInvalidArgument;
  if (dynamic_cast<const SynthesisFailure*>(&e)) return kSynthesis;
  if (dynamic_cast<const ResolutionError*>(&e)) return kResolution;
  if (dynamic_cast<const FormatError*>(&e)) return kFormat;
  if (dynamic_cast<const DegenerateSample*>(&e) || dynamic_cast<const InsufficientScales*>(&e)) return kStatistics;
  if (dynamic_cast<const SequencingError*>(&e) || dynamic_cast<const CorruptField*>(&e)) return kInternal;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kFormat;
  return kUnexpected;
}

// Full command: resolve, run, write, print.  Errors become exit codes.
inline int execute(const RunRequest& request, std::ostream& out, std::ostream& err) {
  try {
    const Params p = resolve(request);
    const ExperimentReport report = run_resolved(p);
    const std::string dir = write_run(p, report);
    print_summary(out, report);
    out << "wrote " << dir << "\n";
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace gmc::runner
