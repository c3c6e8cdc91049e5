#pragma once

// The experiment catalogue behind the command-line runner.  Each entry holds
// its key schema (with defaults) and a function from resolved parameters to a
// report.  Replicas run on a worker pool; every reduction is applied in
// replica-index order, so reports do not depend on the worker count.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "gmc/chaos_measures.hpp"
#include "gmc/estimators.hpp"
#include "gmc/field_synthesis.hpp"
#include "gmc/free_fields.hpp"
#include "gmc/kernels.hpp"
#include "gmc/kpz.hpp"
#include "gmc/parallel.hpp"
#include "gmc/report.hpp"
#include "gmc/runner/config.hpp"
#include "gmc/spine.hpp"

namespace gmc::runner {

struct Experiment {
  std::string name;
  std::string description;
  std::vector<KeySpec> schema;
  std::function<ExperimentReport(const Params&, unsigned workers)> run;
};

namespace detail {

using gmc::detail::require;

inline constexpr double kThreeSigmaTail = 0.0013498980316300946;  // Phi(-3)

struct Moments {
  std::size_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    const double m = mean();
    const double var = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

// produce(i) runs in parallel; consume(i, value) runs in index order.  Blocks
// keep at most ~32 MiB of produced values alive.
template <class Produce, class Consume>
void for_replicas(std::size_t count, unsigned workers, std::size_t bytes_per_item, Produce&& produce,
                  Consume&& consume) {
  using T = std::invoke_result_t<Produce&, std::size_t>;
  const std::size_t block = std::clamp<std::size_t>((std::size_t{32} << 20) / std::max<std::size_t>(bytes_per_item, 1),
                                                    1, 256);
  std::vector<T> slot;
  for (std::size_t start = 0; start < count; start += block) {
    const std::size_t n = std::min(block, count - start);
    slot.assign(n, T{});
    parallel_for(n, workers, [&](std::size_t i) { slot[i] = produce(start + i); });
    for (std::size_t i = 0; i < n; ++i) consume(start + i, slot[i]);
  }
}

inline KeySpec real_key(std::string k, std::string v) { return {std::move(k), KeyType::real, std::move(v), {}}; }
inline KeySpec int_key(std::string k, std::string v) { return {std::move(k), KeyType::integer, std::move(v), {}}; }
inline KeySpec bool_key(std::string k, std::string v) { return {std::move(k), KeyType::boolean, std::move(v), {}}; }
inline KeySpec text_key(std::string k, std::string v) { return {std::move(k), KeyType::text, std::move(v), {}}; }
inline KeySpec list_key(std::string k, std::string v) { return {std::move(k), KeyType::real_list, std::move(v), {}}; }
inline KeySpec choice_key(std::string k, std::string v, std::vector<std::string> c) {
  return {std::move(k), KeyType::choice, std::move(v), std::move(c)};
}

inline std::vector<KeySpec> run_keys(const std::string& replicas) {
  std::vector<KeySpec> keys{int_key("run.seed", "1"), int_key("run.workers", "1"), text_key("run.out", "runs")};
  if (!replicas.empty()) keys.push_back(int_key("run.replicas", replicas));
  return keys;
}

inline std::vector<KeySpec> field_keys(const std::string& d, const std::string& n) {
  return {choice_key("kernel.kind", "auto", {"auto", "triangle", "disc_overlap", "mff", "tabulated"}),
          real_key("kernel.mass", "1"),
          text_key("kernel.file", "none"),
          int_key("lattice.d", d),
          int_key("lattice.n", n),
          int_key("field.layers_per_unit", "4")};
}

template <class... Lists>
std::vector<KeySpec> join(Lists... lists) {
  std::vector<KeySpec> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

inline SeedKernel seed_from(const Params& p, int d) {
  const std::string kind = p.text("kernel.kind");
  if (kind == "triangle") return SeedKernel::triangle();
  if (kind == "disc_overlap") return SeedKernel::disc_overlap();
  if (kind == "mff") return SeedKernel::mff(p.real("kernel.mass"));
  if (kind == "tabulated") return load_tabulated_seed(p.text("kernel.file"));
  return d == 1 ? SeedKernel::triangle() : SeedKernel::disc_overlap();
}

inline LatticeSpec lattice_from(const Params& p) {
  LatticeSpec lat{static_cast<int>(p.integer("lattice.d")), p.count("lattice.n"), 1.0, 0.0};
  lat.validate();
  return lat;
}

inline std::size_t replicas_from(const Params& p, std::size_t minimum) {
  const std::size_t r = p.count("run.replicas");
  require(r >= minimum, p.experiment() + " needs at least " + std::to_string(minimum) + " replicas");
  return r;
}

// Indices of t-grid points that are layer boundaries of the plan.
inline std::vector<double> checked_grid(const std::vector<double>& grid, int layers_per_unit) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    require(grid[k] > 0.0 && (k == 0 || grid[k] > grid[k - 1]), "t grid must be positive and increasing");
    const double steps = grid[k] * layers_per_unit;
    require(std::abs(steps - std::round(steps)) < 1e-9, "t grid points must be layer boundaries");
  }
  return grid;
}

inline std::size_t grid_index(const std::vector<double>& grid, double t) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::abs(grid[k] - t) < 1e-9) return k;
  }
  return grid.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline ExperimentReport run_cov_check(const Params& p, unsigned workers) {
  const LatticeSpec lat = detail::lattice_from(p);
  const SeedKernel seed = detail::seed_from(p, lat.dimension);
  const double t = p.real("field.t");
  const std::size_t replicas = detail::replicas_from(p, 100);
  const FieldSynthesizer synth(lat, plan_layers(seed, t, static_cast<int>(p.integer("field.layers_per_unit"))));
  const long max_lag = p.integer("cov.max_lag");
  const std::size_t base = lat.points_per_side / 4;
  detail::require(base + static_cast<std::size_t>(max_lag) < lat.points_per_side, "cov.max_lag leaves the lattice");
  std::vector<CovarianceAccumulator::Lag> lags{{0, 0}};
  for (long k = 1; k <= max_lag; ++k) {
    lags.push_back({k, 0});
    if (lat.dimension == 2) {
      lags.push_back({0, k});
      lags.push_back({k, k});
    }
  }
  CovarianceAccumulator acc(lat, lags, base, lat.dimension == 2 ? base : 0);
  const std::uint64_t master = p.seed();
  detail::for_replicas(
      replicas, workers, lat.cells() * sizeof(double) * 2,
      [&](std::size_t r) { return synth.run({master, static_cast<std::uint32_t>(r)}); },
      [&](std::size_t, const FieldState& s) { acc.add(s); });
  ExperimentReport report = empirical_cov_report(acc, StarCovariance{seed, lat.dimension, 32}, t);
  // Var at the base cell against chi-square bounds (the mean is known to be 0).
  const boost::math::chi_squared_distribution<double> chi(static_cast<double>(replicas));
  const double n = static_cast<double>(replicas);
  const double lo = t * boost::math::quantile(chi, detail::kThreeSigmaTail) / n;
  const double hi = t * boost::math::quantile(boost::math::complement(chi, detail::kThreeSigmaTail)) / n;
  const double var = acc.mean(0);
  report.metadata["seed_kernel"] = to_string(seed.kind());
  report.metadata["layers"] = synth.layers().size();
  report.metrics["variance_fixed_cell"] = var;
  report.metrics["variance_lower"] = lo;
  report.metrics["variance_upper"] = hi;
  report.metrics["variance_within_chi2"] = var >= lo && var <= hi;
  report.metrics["lags_ok"] = report.metric("fraction_abs_z_le_4") >= 0.95;
  return report;
}

inline ExperimentReport run_martingale(const Params& p, unsigned workers) {
  const LatticeSpec lat = detail::lattice_from(p);
  const SeedKernel seed = detail::seed_from(p, lat.dimension);
  const double t = p.real("field.t");
  const double gamma = p.real("martingale.gamma");
  const double beta = p.real("martingale.beta");
  const bool bridge = p.boolean("martingale.bridge");
  const std::size_t replicas = detail::replicas_from(p, 100);
  const FieldSynthesizer synth(lat, plan_layers(seed, t, static_cast<int>(p.integer("field.layers_per_unit"))));
  const std::uint64_t master = p.seed();

  struct Masses {
    double gmc = 0, derivative = 0, z = 0, r = 0;
  };
  ExperimentReport report;
  report.name = "martingale";
  report.columns = {"replica", "gmc_mass", "derivative_mass", "z_mass", "r_mass"};
  report.exact_columns = {"replica"};
  detail::Moments mg, md, mz;
  std::size_t positive = 0;
  detail::for_replicas(
      replicas, workers, sizeof(Masses),
      [&](std::size_t r) {
        BridgeSurvival survival(lat.cells(), beta);
        FieldState prev = initial_state(lat);
        const FieldState s =
            synth.run({master, static_cast<std::uint32_t>(r)}, [&](const FieldState& now, const ScaleLayer&, const auto&) {
              if (bridge) {
                survival.update(prev, now);
                prev = now;
              }
            });
        const auto zr = barrier_measures(s, beta, bridge ? &survival : nullptr);
        return Masses{total_mass(gmc_measure(s, gamma)), total_mass(derivative_measure(s)), total_mass(zr.first),
                      total_mass(zr.second)};
      },
      [&](std::size_t r, const Masses& m) {
        report.add_row({static_cast<double>(r), m.gmc, m.derivative, m.z, m.r});
        mg.add(m.gmc);
        md.add(m.derivative);
        mz.add(m.z);
        positive += m.derivative > 0.0;
      });
  report.metadata["seed_kernel"] = to_string(seed.kind());
  report.metadata["barrier_monitoring"] = bridge ? "brownian_bridge" : "layer_boundaries";
  report.metrics["gmc_mean"] = mg.mean();
  report.metrics["gmc_mean_se"] = mg.se();
  report.metrics["gmc_ok"] = std::abs(mg.mean() - 1.0) <= 4.0 * mg.se();
  report.metrics["derivative_mean"] = md.mean();
  report.metrics["derivative_mean_se"] = md.se();
  report.metrics["derivative_ok"] = std::abs(md.mean()) <= 4.0 * md.se();
  report.metrics["z_mean"] = mz.mean();
  report.metrics["z_mean_se"] = mz.se();
  report.metrics["z_target"] = beta;
  report.metrics["z_ok"] = std::abs(mz.mean() - beta) <= 4.0 * mz.se();
  report.metrics["derivative_positive_fraction"] = static_cast<double>(positive) / static_cast<double>(replicas);
  return report;
}

// Nested trajectories: masses of A at every t in the grid from one run per replica.
struct NestedMasses {
  std::vector<double> seneta;
  std::vector<double> derivative;
};

inline std::vector<NestedMasses> nested_masses(const Params& p, unsigned workers, const std::vector<double>& grid,
                                               std::size_t replicas, bool want_derivative) {
  const LatticeSpec lat = detail::lattice_from(p);
  const SeedKernel seed = detail::seed_from(p, lat.dimension);
  const int lpu = static_cast<int>(p.integer("field.layers_per_unit"));
  detail::checked_grid(grid, lpu);
  const FieldSynthesizer synth(lat, plan_layers(seed, grid.back(), lpu));
  const double lo = p.real("region.lo"), hi = p.real("region.hi");
  detail::require(lo >= 0.0 && hi <= 1.0 && lo < hi, "region must be an interval inside [0, 1]");
  const Box region = lat.dimension == 1 ? Box::interval(lo, hi) : Box::square(lo, hi);
  const std::uint64_t master = p.seed();
  std::vector<NestedMasses> out(replicas);
  detail::for_replicas(
      replicas, workers, 16 * grid.size(),
      [&](std::size_t r) {
        NestedMasses m{std::vector<double>(grid.size()), std::vector<double>(grid.size())};
        synth.run({master, static_cast<std::uint32_t>(r)}, [&](const FieldState& s, const ScaleLayer&, const auto&) {
          const std::size_t k = detail::grid_index(grid, s.t);
          if (k == grid.size()) return;
          m.seneta[k] = total_mass(seneta_heyde_measure(s), region);
          if (want_derivative) m.derivative[k] = total_mass(derivative_measure(s), region);
        });
        return m;
      },
      [&](std::size_t r, const NestedMasses& m) { out[r] = m; });
  return out;
}

inline ExperimentReport run_seneta(const Params& p, unsigned workers) {
  const auto grid = p.list("field.t_grid");
  const std::size_t replicas = detail::replicas_from(p, 1);
  const auto masses = nested_masses(p, workers, grid, replicas, true);
  std::vector<RatioSample> samples;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    RatioSample s{grid[k], {}, {}};
    for (const auto& m : masses) {
      s.seneta.push_back(m.seneta[k]);
      s.derivative.push_back(m.derivative[k]);
    }
    samples.push_back(std::move(s));
  }
  ExperimentReport report = seneta_ratio_series(samples);
  report.metrics["reference"] = kSenetaConstant;
  report.metrics["replicas"] = replicas;
  return report;
}

inline ExperimentReport run_negmoment(const Params& p, unsigned workers) {
  const auto grid = p.list("field.t_grid");
  const std::size_t replicas = detail::replicas_from(p, 100);
  const double q = p.real("negmoment.q");
  const double factor = p.real("negmoment.max_ratio");
  const auto masses = nested_masses(p, workers, grid, replicas, false);
  ExperimentReport report;
  report.name = "negmoment";
  report.columns = {"t", "moment", "moment_se", "used", "nonpositive"};
  report.exact_columns = {"t", "used", "nonpositive"};
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  bool finite = true;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> s;
    for (const auto& m : masses) s.push_back(m.seneta[k]);
    const auto e = moment_estimate(s, q);
    report.add_row({grid[k], e.value, e.standard_error, static_cast<double>(e.used), static_cast<double>(e.nonpositive)});
    finite = finite && std::isfinite(e.value);
    lo = std::min(lo, e.value);
    hi = std::max(hi, e.value);
  }
  report.metadata["q"] = q;
  report.metrics["max_over_min"] = hi / lo;
  report.metrics["max_ratio_allowed"] = factor;
  report.metrics["finite"] = finite;
  report.metrics["bounded"] = finite && hi / lo < factor;
  return report;
}

inline ExperimentReport run_spectrum(const Params& p, unsigned workers) {
  const LatticeSpec lat = detail::lattice_from(p);
  const SeedKernel seed = detail::seed_from(p, lat.dimension);
  const double t = p.real("field.t");
  const std::size_t replicas = detail::replicas_from(p, 100);
  const auto qs = p.list("spectrum.q");
  const long e_lo = p.integer("spectrum.lambda_min_log2"), e_hi = p.integer("spectrum.lambda_max_log2");
  detail::require(e_lo > e_hi, "spectrum.lambda_min_log2 must exceed spectrum.lambda_max_log2 (scales are 2^-k)");
  std::vector<double> lambdas;
  for (long e = e_hi; e <= e_lo; ++e) lambdas.push_back(std::ldexp(1.0, -static_cast<int>(e)));
  const double tolerance = p.real("spectrum.tolerance");
  const bool tiling = p.text("spectrum.boxes") == "tiling";
  const FieldSynthesizer synth(lat, plan_layers(seed, t, static_cast<int>(p.integer("field.layers_per_unit"))));
  const Box full = Box::full(lat);
  const std::uint64_t master = p.seed();
  // Tiling: every box of the side-lambda grid, which by stationarity has the
  // same law as the centred one.  Boxes of a replica stay contiguous so the
  // jackknife can drop whole replicas.
  auto boxes_at = [&](double l) {
    if (!tiling) return std::vector<Box>{Box::scaled_about_center(full, l)};
    const auto k = static_cast<std::size_t>(std::llround(1.0 / l));
    std::vector<Box> out;
    for (std::size_t j = 0; j < (lat.dimension == 2 ? k : 1); ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        Box b = full;
        b.lo[0] = i * l;
        b.hi[0] = (i + 1) * l;
        if (lat.dimension == 2) {
          b.lo[1] = j * l;
          b.hi[1] = (j + 1) * l;
        }
        out.push_back(b);
      }
    }
    return out;
  };
  std::vector<std::vector<Box>> boxes;
  std::size_t per_replica = 0;
  for (double l : lambdas) {
    boxes.push_back(boxes_at(l));
    per_replica += boxes.back().size();
  }
  std::map<double, std::vector<double>> by_scale;
  detail::for_replicas(
      replicas, workers, 8 * per_replica,
      [&](std::size_t r) {
        const auto m = derivative_measure(synth.run({master, static_cast<std::uint32_t>(r)}));
        std::vector<std::vector<double>> out;
        for (const auto& bs : boxes) {
          out.emplace_back();
          for (const auto& b : bs) out.back().push_back(total_mass(m, b));
        }
        return out;
      },
      [&](std::size_t, const std::vector<std::vector<double>>& m) {
        for (std::size_t k = 0; k < lambdas.size(); ++k) {
          by_scale[lambdas[k]].insert(by_scale[lambdas[k]].end(), m[k].begin(), m[k].end());
        }
      });
  std::vector<std::pair<double, SpectrumFit>> fits;
  bool ok = true;
  for (double q : qs) {
    fits.emplace_back(q, spectrum_fit(by_scale, q, lat.dimension, 8.0 * lat.spacing(), replicas));
    ok = ok && std::abs(fits.back().second.slope - xi(q, lat.dimension)) <= tolerance;
  }
  ExperimentReport report = spectrum_report(fits, lat.dimension);
  report.metadata["t"] = t;
  report.metadata["lambda_min"] = lambdas.front();
  report.metadata["lambda_max"] = lambdas.back();
  report.metadata["boxes"] = tiling ? "tiling" : "centred";
  report.metrics["replicas"] = replicas;
  report.metrics["tolerance"] = tolerance;
  report.metrics["slopes_within_tolerance"] = ok;
  return report;
}

namespace detail {

struct SpineCase {
  double beta = 1.0;
  double t = 1.0;
  std::size_t paths = 0;
};

// "beta:t[:paths]" entries separated by ';'.
inline std::vector<SpineCase> parse_spine_cases(const std::string& text, std::size_t default_paths) {
  std::vector<SpineCase> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string f;
    while (std::getline(is, f, ':')) parts.push_back(f);
    SpineCase c;
    std::int64_t paths = 0;
    const bool ok = (parts.size() == 2 || parts.size() == 3) && runner::detail::parse_real(parts[0], c.beta) &&
                    runner::detail::parse_real(parts[1], c.t) &&
                    (parts.size() == 2 || (runner::detail::parse_integer(parts[2], paths) && paths > 0));
    if (!ok) throw ConfigError("spine.cases: cannot parse '" + item + "' (expected beta:t or beta:t:paths)");
    c.paths = parts.size() == 3 ? static_cast<std::size_t>(paths) : default_paths;
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("spine.cases is empty");
  return out;
}

}  // namespace detail

inline ExperimentReport run_spine(const Params& p, unsigned workers) {
  SpineOptions options;
  options.adaptive = p.boolean("spine.adaptive");
  options.workers = workers;
  const int d = static_cast<int>(p.integer("spine.d"));
  const double per_unit = p.real("spine.steps_per_unit");
  if (p.text("spine.mode") == "histogram") {
    const double t = p.real("spine.t");
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(per_unit * t)));
    ExperimentReport report = spine_histogram(p.real("spine.beta"), t, p.count("run.replicas"), steps, d,
                                              p.count("spine.bins"), p.seed(), options);
    report.metrics["bins_ok"] = report.metric("fraction_abs_z_le_4") >= 0.95;
    report.metrics["second_moment_ok"] = std::abs(report.metric("second_moment") - report.metric("second_moment_target")) <=
                                         4.0 * report.metric("second_moment_se");
    return report;
  }
  const auto cases = detail::parse_spine_cases(p.text("spine.cases"), p.count("run.replicas"));
  const double band = p.real("spine.asymptotic_band");
  ExperimentReport report;
  report.name = "spine";
  report.columns = {"beta", "t", "paths", "steps", "mc_estimate", "mc_estimate_se", "analytic", "z", "asymptotic",
                    "normals_per_path"};
  report.exact_columns = {"beta", "t", "paths", "steps", "analytic", "asymptotic"};
  bool all_ok = true;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& c = cases[k];
    const auto steps = static_cast<std::size_t>(std::ceil(per_unit * c.t));
    const auto e = barrier_ratio_expectation(c.beta, c.t, c.paths, steps, d, p.seed() + k, options);
    const double z = e.standard_error > 0.0 ? (e.mc_estimate - e.analytic) / e.standard_error : 0.0;
    report.add_row({c.beta, c.t, static_cast<double>(c.paths), static_cast<double>(e.steps), e.mc_estimate,
                    e.standard_error, e.analytic, z, asymptotic_ratio(c.t), e.mean_normals_per_path});
    all_ok = all_ok && std::abs(e.mc_estimate - e.analytic) <= 4.0 * e.standard_error + 1e-12;
    if (c.t >= 100.0) {
      const double rel = std::abs(e.mc_estimate / asymptotic_ratio(c.t) - 1.0);
      report.metrics["asymptotic_relative_gap_t" + format_number(c.t)] = rel;
      report.metrics["asymptotic_ok_t" + format_number(c.t)] = rel <= band;
      all_ok = all_ok && rel <= band;
    }
  }
  report.metadata["estimator"] = options.adaptive ? "adaptive_bridge" : "bridge";
  report.metrics["all_within_4se"] = all_ok;
  return report;
}

inline ExperimentReport run_kahane(const Params& p, unsigned workers) {
  const ConvexForm form{p.text("kahane.form") == "square" ? ConvexForm::square : ConvexForm::exp_negative,
                        p.real("kahane.s")};
  const std::size_t samples = detail::replicas_from(p, 100);
  const std::size_t pairs = p.count("kahane.pairs");
  const std::uint64_t seed = p.seed();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2), b(2, 2);
  b << 1.0, 0.5, 0.5, 1.0;
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> cases{{a, b}};
  NormalStream normal(seed_stream(seed, 0, streams::kKahane));
  for (std::size_t k = 0; k < pairs; ++k) cases.push_back(random_dominated_pair(2 + static_cast<int>(k % 3), normal));
  std::vector<ExperimentReport> results(cases.size());
  parallel_for(cases.size(), workers, [&](std::size_t k) {
    results[k] = kahane_check(cases[k].first, cases[k].second, form, samples, seed, static_cast<std::uint32_t>(k + 1));
  });
  ExperimentReport report;
  report.name = "kahane";
  report.columns = {"case", "dimension", "lhs", "lhs_se", "rhs", "rhs_se", "difference", "difference_se",
                    "exact_lhs", "exact_rhs", "holds"};
  report.exact_columns = {"case", "dimension", "exact_lhs", "exact_rhs", "holds"};
  std::size_t holds = 0;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& r = results[k];
    const bool h = r.has_flag("holds");
    holds += h;
    report.add_row({static_cast<double>(k), static_cast<double>(cases[k].first.rows()), r.at(0, "mc_mean"),
                    r.at(0, "mc_se"), r.at(1, "mc_mean"), r.at(1, "mc_se"), r.metric("difference"),
                    r.metric("difference_se"), r.at(0, "exact"), r.at(1, "exact"), h ? 1.0 : 0.0});
  }
  report.metadata["form"] = form.name();
  report.metrics["two_point_holds"] = results[0].has_flag("holds");
  report.metrics["two_point_exact_lhs"] = results[0].at(0, "exact");
  report.metrics["two_point_exact_rhs"] = results[0].at(1, "exact");
  report.metrics["random_pairs"] = pairs;
  report.metrics["random_pairs_holding"] = holds - (results[0].has_flag("holds") ? 1 : 0);
  report.metrics["all_hold"] = holds == cases.size();
  return report;
}

inline ExperimentReport run_gff_cov(const Params& p, unsigned) {
  const DomainSpec domain = DomainSpec::rectangle(p.real("domain.a"), p.real("domain.b"));
  const std::size_t points = p.count("gff.points");
  const int modes = static_cast<int>(p.integer("gff.modes"));
  const auto grid = p.list("gff.t_grid");
  detail::require(grid.size() >= 3, "gff.t_grid needs at least three cut-offs");
  const double shrink = p.real("gff.shrink");
  const std::size_t probes = p.count("gff.probes_per_side");
  detail::require(probes >= 2, "gff.probes_per_side must be at least 2");

  Philox4x32 rng = seed_stream(p.seed(), 0, 0);
  double worst = 0.0;
  std::size_t tested = 0;
  while (tested < points) {
    const double s = 0.01 + 0.99 * rng.uniform();
    const Point x{domain.width * rng.uniform(), domain.height * rng.uniform()};
    const Point y{domain.width * rng.uniform(), domain.height * rng.uniform()};
    if (!domain.inside(x.x, x.y) || !domain.inside(y.x, y.y)) continue;
    worst = std::max(worst, std::abs(dirichlet_heat_kernel(domain, s, x, y).value -
                                     dirichlet_heat_kernel_eigen(domain, s, x, y).value));
    ++tested;
  }

  // Sup over a probe grid of D' of |(Var X_{t_k} - t_k) - (Var X_{t_{k-1}} - t_{k-1})|.
  std::vector<Point> probe;
  const double m = domain.margin;
  for (std::size_t j = 0; j < probes; ++j) {
    for (std::size_t i = 0; i < probes; ++i) {
      probe.push_back({m + (domain.width - 2 * m) * i / (probes - 1.0), m + (domain.height - 2 * m) * j / (probes - 1.0)});
    }
  }
  std::vector<std::vector<double>> shift(grid.size());
  double tail = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (const auto& x : probe) {
      const auto c = gff_cutoff_covariance(domain, grid[k], x, x, modes);
      shift[k].push_back(c.value - grid[k]);
      tail = std::max(tail, c.tail_estimate);
    }
  }
  ExperimentReport report;
  report.name = "gff-cov";
  report.columns = {"t", "sup_abs_difference", "shrink_factor"};
  report.exact_columns = {"t", "sup_abs_difference", "shrink_factor"};
  bool shrinking = true;
  double prev = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    double sup = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) sup = std::max(sup, std::abs(shift[k][i] - shift[k - 1][i]));
    const double factor = k > 1 ? prev / sup : std::nan("");
    if (k > 1) shrinking = shrinking && factor >= shrink;
    report.add_row({grid[k], sup, factor});
    prev = sup;
  }
  report.metadata["domain"] = {domain.width, domain.height};
  report.metadata["modes"] = modes;
  report.metrics["heat_kernel_points"] = points;
  report.metrics["heat_kernel_max_difference"] = worst;
  report.metrics["heat_kernel_ok"] = worst <= 1e-8;
  report.metrics["variance_shift_shrinks"] = shrinking;
  report.metrics["required_shrink_factor"] = shrink;
  report.metrics["max_tail_estimate"] = tail;
  if (tail > 1e-6) report.flags.push_back("eigen_truncation_above_1e-6");
  return report;
}

inline ExperimentReport run_liouville(const Params& p, unsigned workers) {
  const DomainSpec domain = DomainSpec::rectangle(p.real("domain.a"), p.real("domain.b"));
  const std::size_t n = p.count("lattice.n");
  const LatticeSpec lat{2, n, std::max(domain.width, domain.height), 0.0};
  const int modes = static_cast<int>(p.integer("gff.modes"));
  const auto grid = p.list("field.t_grid");
  const std::size_t replicas = detail::replicas_from(p, 2);
  const GffSynthesizer synth(domain, lat, grid, modes);
  const auto profile = conformal_radius_profile(domain, lat, modes);
  const std::uint64_t master = p.seed();
  auto working_mass = [&](const ChaosMeasure& m) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        if (domain.in_working_subdomain(lat.center(i), lat.center(j))) s += m.weights[j * n + i];
      }
    }
    return s;
  };
  std::vector<std::vector<double>> masses(replicas);
  detail::for_replicas(
      replicas, workers, 8 * grid.size(),
      [&](std::size_t r) {
        std::vector<double> out(grid.size());
        synth.run({master, static_cast<std::uint32_t>(r)}, [&](const FieldState& s, std::size_t k) {
          out[k] = working_mass(liouville_measure(derivative_measure(s), domain, profile));
        });
        return out;
      },
      [&](std::size_t r, const std::vector<double>& m) { masses[r] = m; });
  ExperimentReport report;
  report.name = "liouville";
  report.columns = {"t", "mean_mass", "mean_mass_se", "median_mass", "positive_fraction"};
  report.exact_columns = {"t", "median_mass", "positive_fraction"};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    detail::Moments mm;
    std::vector<double> v;
    std::size_t positive = 0;
    for (const auto& m : masses) {
      mm.add(m[k]);
      v.push_back(m[k]);
      positive += m[k] > 0.0;
    }
    report.add_row({grid[k], mm.mean(), mm.se(), gmc::detail::median_of(v),
                    static_cast<double>(positive) / static_cast<double>(replicas)});
  }
  double centre_radius = conformal_radius(domain, {0.5 * domain.width, 0.5 * domain.height}).value;
  report.metadata["domain"] = {domain.width, domain.height};
  report.metadata["modes"] = modes;
  report.metrics["conformal_radius_centre"] = centre_radius;
  report.metrics["max_tail_estimate"] = synth.sampler().tail_estimate(grid.back());
  return report;
}

inline ExperimentReport run_conformal(const Params& p, unsigned workers) {
  ConformalCheckSpec spec;
  spec.replicas = detail::replicas_from(p, 10);
  spec.t = p.real("field.t");
  spec.points_per_side = p.count("lattice.n");
  spec.region_radius = p.real("conformal.region_radius");
  spec.psi = Mobius{{p.real("conformal.a_re"), p.real("conformal.a_im")}};
  spec.seed = p.seed();
  spec.workers = workers;
  return conformal_covariance_check(spec);
}

inline ExperimentReport run_kpz(const Params& p, unsigned workers) {
  KpzSpec spec;
  const std::string target = p.text("kpz.target");
  if (target == "segment") {
    spec.target = TargetSet::segment();
  } else if (target == "cantor") {
    spec.target = TargetSet::cantor();
  } else if (target == "full_box") {
    spec.target = TargetSet::full_box(static_cast<int>(p.integer("kpz.d")));
  } else {
    spec.target = load_mask(p.text("kpz.mask"));
  }
  const std::size_t n = p.count("lattice.n");
  spec.points_per_side = n > 0 ? n : (spec.target.dimension == 1 ? 65536 : 1024);
  spec.t = p.real("field.t");
  spec.replicas = detail::replicas_from(p, 1);
  spec.seed = p.seed();
  spec.min_level = static_cast<int>(p.integer("kpz.min_level"));
  spec.max_level = static_cast<int>(p.integer("kpz.max_level"));
  spec.s_step = p.real("kpz.s_step");
  spec.tolerance = p.real("kpz.tolerance");
  spec.workers = workers;
  return kpz_experiment(spec, detail::seed_from(p, spec.target.dimension));
}

// ---------------------------------------------------------------------------

inline const std::vector<Experiment>& experiments() {
  using namespace detail;
  static const std::vector<Experiment> all{
      {"cov-check", "empirical covariance of X_t against K_t",
       join(run_keys("10000"), field_keys("1", "256"), std::vector<KeySpec>{real_key("field.t", "4"), int_key("cov.max_lag", "32")}),
       run_cov_check},
      {"martingale", "means of M_t^gamma, M'_t and Z_t^beta over the unit box",
       join(run_keys("1000"), field_keys("1", "512"),
            std::vector<KeySpec>{real_key("field.t", "6"), real_key("martingale.gamma", "1.4142135623730951"),
                                 real_key("martingale.beta", "1"), bool_key("martingale.bridge", "true")}),
       run_martingale},
      {"seneta", "median of sqrt(t) M_t / M'_t over nested replicas",
       join(run_keys("200"), field_keys("1", "1024"),
            std::vector<KeySpec>{list_key("field.t_grid", "4,8,16"), real_key("region.lo", "0"), real_key("region.hi", "1")}),
       run_seneta},
      {"spectrum", "power-law spectrum of the derivative measure",
       join(run_keys("200"), field_keys("1", "4096"),
            std::vector<KeySpec>{real_key("field.t", "10"), list_key("spectrum.q", "0.25,0.5,0.75"),
                                 int_key("spectrum.lambda_min_log2", "9"), int_key("spectrum.lambda_max_log2", "5"),
                                 choice_key("spectrum.boxes", "tiling", {"tiling", "centred"}),
                                 real_key("spectrum.tolerance", "0.15")}),
       run_spectrum},
      {"negmoment", "negative moments of sqrt(t) M_t across t",
       join(run_keys("1000"), field_keys("1", "1024"),
            std::vector<KeySpec>{list_key("field.t_grid", "4,8,16"), real_key("region.lo", "0"), real_key("region.hi", "1"),
                                 real_key("negmoment.q", "-1"), real_key("negmoment.max_ratio", "3")}),
       run_negmoment},
      {"spine", "barrier-ratio identity and the Bessel-3 spine",
       join(run_keys("1048576"),
            std::vector<KeySpec>{choice_key("spine.mode", "ratio", {"ratio", "histogram"}),
                                 text_key("spine.cases", "1:4;1:100:8388608;10:1"), int_key("spine.d", "1"),
                                 real_key("spine.steps_per_unit", "100"), bool_key("spine.adaptive", "true"),
                                 real_key("spine.asymptotic_band", "0.005"), real_key("spine.beta", "1"),
                                 real_key("spine.t", "1"), int_key("spine.bins", "40")}),
       run_spine},
      {"kahane", "Kahane convexity comparator on dominated covariance pairs",
       join(run_keys("20000"),
            std::vector<KeySpec>{choice_key("kahane.form", "square", {"square", "exp_negative"}),
                                 real_key("kahane.s", "1"), int_key("kahane.pairs", "50")}),
       run_kahane},
      {"gff-cov", "heat-kernel routes and variance-shift convergence on a rectangle",
       join(run_keys(""),
            std::vector<KeySpec>{real_key("domain.a", "1"), real_key("domain.b", "1"), int_key("gff.points", "100"),
                                 int_key("gff.modes", "256"), list_key("gff.t_grid", "3,4,5"),
                                 int_key("gff.probes_per_side", "5"), real_key("gff.shrink", "3")}),
       run_gff_cov},
      {"liouville", "critical Liouville measure of a rectangle",
       join(run_keys("100"),
            std::vector<KeySpec>{real_key("domain.a", "1"), real_key("domain.b", "1"), int_key("lattice.n", "64"),
                                 int_key("gff.modes", "256"), list_key("field.t_grid", "1,2,3")}),
       run_liouville},
      {"conformal", "conformal covariance of the disc measure under a Moebius map",
       join(run_keys("400"),
            std::vector<KeySpec>{real_key("field.t", "5"), int_key("lattice.n", "64"),
                                 real_key("conformal.region_radius", "0.3"), real_key("conformal.a_re", "0.3"),
                                 real_key("conformal.a_im", "0")}),
       run_conformal},
      {"kpz", "quantum box-counting dimension against the KPZ prediction",
       join(run_keys("100"),
            std::vector<KeySpec>{choice_key("kernel.kind", "auto", {"auto", "triangle", "disc_overlap", "mff", "tabulated"}),
                                 real_key("kernel.mass", "1"), text_key("kernel.file", "none"),
                                 int_key("lattice.n", "0"), real_key("field.t", "10"),
                                 choice_key("kpz.target", "segment", {"segment", "cantor", "full_box", "mask"}),
                                 int_key("kpz.d", "2"), text_key("kpz.mask", "none"), int_key("kpz.min_level", "2"),
                                 int_key("kpz.max_level", "0"), real_key("kpz.s_step", "0.01"),
                                 real_key("kpz.tolerance", "0.1")}),
       run_kpz},
  };
  return all;
}

inline const Experiment& find_experiment(const std::string& name) {
  for (const auto& e : experiments()) {
    if (e.name == name) return e;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

}  // namespace gmc::runner
