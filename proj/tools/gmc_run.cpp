// Command-line front end: one subcommand per experiment.
//
//   gmc_run cov-check --replicas 500 --seed 7
//   gmc_run kpz --config kpz.cfg --set kpz.target=cantor --workers 4

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gmc/runner/run.hpp"

int main(int argc, char** argv) {
  using namespace gmc::runner;
  CLI::App app{"Critical Gaussian multiplicative chaos experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gmc::kVersion));

  struct Flags {
    std::string config, seed, replicas, out, workers;
    std::vector<std::string> sets;
  };
  std::vector<Flags> flags(experiments().size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < experiments().size(); ++i) {
    const auto& e = experiments()[i];
    auto* sub = app.add_subcommand(e.name, e.description);
    auto& f = flags[i];
    sub->add_option("--config", f.config, "key = value configuration file");
    sub->add_option("--seed", f.seed, "master seed (run.seed)");
    sub->add_option("--replicas", f.replicas, "replica or sample count (run.replicas)");
    sub->add_option("--out", f.out, "output root directory (run.out)");
    sub->add_option("--workers", f.workers, "worker threads (run.workers)");
    sub->add_option("--set", f.sets, "override any key: --set key=value");
    sub->footer([&e] {
      std::string s = "Keys and defaults:\n";
      for (const auto& k : e.schema) s += "  " + k.key + " = " + k.default_value + "\n";
      return s;
    }());
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto& f = flags[i];
    RunRequest request{experiments()[i].name, f.config, {}};
    for (const auto& s : f.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got '" << s << "'\n";
        return kConfig;
      }
      request.overrides[detail::trim(s.substr(0, eq))] = {detail::trim(s.substr(eq + 1)), "--set"};
    }
    const auto flag = [&](const std::string& key, const std::string& value, const char* name) {
      if (!value.empty()) request.overrides[key] = {value, name};
    };
    flag("run.seed", f.seed, "--seed");
    flag("run.replicas", f.replicas, "--replicas");
    flag("run.out", f.out, "--out");
    flag("run.workers", f.workers, "--workers");
    return execute(request, std::cout, std::cerr);
  }
  return kUnexpected;
}
