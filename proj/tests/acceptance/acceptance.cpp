// End-to-end acceptance run.  Each criterion goes through the same resolved
// configuration path as the command-line runner and is judged against
// reference values computed here.  One PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion ran to a verdict (FAIL lines
// included) and 1 if a criterion could not be evaluated at all.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gmc.hpp"

namespace {

using gmc::ExperimentReport;
using gmc::runner::Assignments;

struct Verdict {
  bool pass = false;
  std::string detail;
};

ExperimentReport run(const std::string& name, const Assignments& over, unsigned workers = 1) {
  const auto& e = gmc::runner::find_experiment(name);
  Assignments given = over;
  given["run.workers"] = {std::to_string(workers), "acceptance"};
  return gmc::runner::run_resolved(gmc::runner::Params(e.name, e.schema, given));
}

Assignments set(std::initializer_list<std::pair<const char*, const char*>> kv) {
  Assignments a;
  for (const auto& [k, v] : kv) a[k] = {v, "acceptance"};
  return a;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Chi-square quantile by the Wilson-Hilferty cube; relative error well under
// 1e-4 at 10^4 degrees of freedom.
double chi2_quantile_wh(double n, double z) {
  const double c = 2.0 / (9.0 * n);
  return n * std::pow(1.0 - c + z * std::sqrt(c), 3.0);
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

// ---------------------------------------------------------------------------

Verdict covariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run("cov-check", set({{"kernel.kind", "triangle"}, {"lattice.d", "1"}, {"lattice.n", "256"},
                                       {"field.t", "4"}, {"run.replicas", "10000"}}));
  const double secs = seconds_since(t0);
  const double n = 1e4, t = 4.0;
  const double lo = t * chi2_quantile_wh(n, -3.0) / n, hi = t * chi2_quantile_wh(n, 3.0) / n;
  const double var = r.metric("variance_fixed_cell");
  const double frac = r.metric("fraction_abs_z_le_4");
  const bool ok = var >= lo && var <= hi && frac >= 0.95 && secs <= 120.0;
  return {ok, "Var=" + num(var) + " in [" + num(lo) + "," + num(hi) + "], lags |z|<=4: " + num(100 * frac) +
                  "%, " + num(secs) + " s (limit 120)"};
}

Verdict martingale() {
  const auto r = run("martingale", set({{"martingale.gamma", "1.4142135623730951"}, {"lattice.d", "1"},
                                        {"lattice.n", "512"}, {"field.t", "6"}, {"martingale.beta", "1"},
                                        {"run.replicas", "1000"}}));
  const double g = r.metric("gmc_mean"), gs = r.metric("gmc_mean_se");
  const double d = r.metric("derivative_mean"), ds = r.metric("derivative_mean_se");
  const double z = r.metric("z_mean"), zs = r.metric("z_mean_se");
  const bool ok = within(g, 1.0, 4 * gs) && within(d, 0.0, 4 * ds) && within(z, 1.0, 4 * zs);
  return {ok, "M=" + num(g) + "+-" + num(gs) + " M'=" + num(d) + "+-" + num(ds) + " Z=" + num(z) + "+-" + num(zs)};
}

Verdict barrier_ratio() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run("spine", set({{"spine.mode", "ratio"}, {"spine.cases", "1:4:1048576;1:100:8388608;10:1:1048576"},
                                   {"spine.adaptive", "true"}}));
  const double secs = seconds_since(t0);
  bool ok = secs <= 60.0;
  std::string detail;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const double beta = r.at(i, "beta"), t = r.at(i, "t");
    const double exact = std::erf(beta / std::sqrt(2.0 * t)) / beta;
    const double mc = r.at(i, "mc_estimate"), se = r.at(i, "mc_estimate_se");
    // Round-off floor for the beta=10 case, where every path survives and SE is 0.
    const bool row_ok = std::abs(mc - exact) <= 4.0 * se + 1e-12;
    ok = ok && row_ok;
    detail += "(" + num(beta) + "," + num(t) + "): " + num(mc) + " vs " + num(exact) + "; ";
    if (t == 100.0) {
      const double asym = std::sqrt(2.0 / (std::numbers::pi * t));
      const double rel = std::abs(mc / asym - 1.0);
      ok = ok && rel <= 0.005;
      detail += "asymptote gap " + num(100 * rel) + "%; ";
    }
  }
  return {ok, detail + num(secs) + " s (limit 60)"};
}

Verdict bessel_spine() {
  const auto r = run("spine", set({{"spine.mode", "histogram"}, {"spine.beta", "1"}, {"spine.t", "1"},
                                   {"run.replicas", "100000"}, {"spine.bins", "40"}}));
  const double frac = r.metric("fraction_abs_z_le_4");
  const double m2 = r.metric("second_moment"), se = r.metric("second_moment_se");
  const double target = 1.0 * 1.0 + 3.0 * 1.0;
  const bool ok = frac >= 0.95 && within(m2, target, 4.0 * se);
  return {ok, "bins |z|<=4: " + num(100 * frac) + "%, E[Y^2]=" + num(m2) + "+-" + num(se) + " vs " + num(target)};
}

Verdict seneta() {
  const auto r = run("seneta", set({{"lattice.d", "1"}, {"lattice.n", "1024"}, {"field.t_grid", "4,8,16"},
                                    {"run.replicas", "200"}}));
  const double ref = std::sqrt(2.0 / std::numbers::pi);
  bool ok = true;
  std::string detail = "distance to " + num(ref) + ":";
  double prev = INFINITY;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const double dist = std::abs(r.at(i, "median_ratio") - ref);
    ok = ok && dist <= prev;
    prev = dist;
    detail += " t=" + num(r.at(i, "t")) + ":" + num(dist);
  }
  return {ok, detail};
}

Verdict spectrum() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run("spectrum", set({{"lattice.d", "1"}, {"lattice.n", "4096"}, {"field.t", "10"},
                                      {"spectrum.q", "0.25,0.5,0.75"}, {"run.replicas", "200"},
                                      {"spectrum.lambda_min_log2", "9"}, {"spectrum.lambda_max_log2", "5"}}));
  const double secs = seconds_since(t0);
  bool ok = secs <= 1800.0;
  std::string detail;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const double q = r.at(i, "q");
    const double xi = 2.0 * q - q * q;
    const double slope = r.at(i, "slope");
    ok = ok && within(slope, xi, 0.15);
    detail += "q=" + num(q) + ": " + num(slope) + " vs " + num(xi) + "; ";
  }
  return {ok, detail + num(secs) + " s (limit 1800)"};
}

Verdict negative_moment() {
  const auto r = run("negmoment", set({{"negmoment.q", "-1"}, {"field.t_grid", "4,8,16"}}));
  double lo = INFINITY, hi = 0.0;
  bool finite = true;
  std::string detail = "E[(sqrt(t)M)^-1]:";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const double m = r.at(i, "moment");
    finite = finite && std::isfinite(m) && m > 0.0;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    detail += " t=" + num(r.at(i, "t")) + ":" + num(m);
  }
  return {finite && hi / lo < 3.0, detail + "; max/min=" + num(hi / lo) + " (limit 3)"};
}

Verdict kahane() {
  const auto r = run("kahane", set({{"kahane.form", "square"}, {"kahane.pairs", "50"}}));
  // Two points with unit weights: E[(sum e^{X_i - 1/2})^2] = sum_ij e^{C_ij}.
  const double lhs = 2.0 * std::exp(1.0) + 2.0;
  const double rhs = 2.0 * std::exp(1.0) + 2.0 * std::exp(0.5);
  const bool exact_ok = within(r.at(0, "exact_lhs"), lhs, 1e-9) && within(r.at(0, "exact_rhs"), rhs, 1e-9);
  std::size_t holding = 0;
  for (std::size_t i = 1; i < r.rows.size(); ++i) holding += r.at(i, "holds") == 1.0;
  const bool ok = exact_ok && r.at(0, "holds") == 1.0 && lhs <= rhs && r.rows.size() == 51 && holding == 50;
  return {ok, "2-point " + num(lhs) + " <= " + num(rhs) + ", random pairs holding " + std::to_string(holding) + "/50"};
}

Verdict gff() {
  const auto c = run("gff-cov", set({{"gff.points", "100"}, {"gff.shrink", "3"}}));
  const auto k = run("conformal", set({{"run.replicas", "400"}, {"conformal.a_re", "0.3"}, {"conformal.a_im", "0"}}));
  const double diff = c.metric("heat_kernel_max_difference");
  bool shrinks = c.rows.size() >= 2;
  for (std::size_t i = 1; i < c.rows.size(); ++i) {
    shrinks = shrinks && c.at(i - 1, "sup_abs_difference") >= 3.0 * c.at(i, "sup_abs_difference");
  }
  const double n = 400.0;
  const double critical = std::sqrt(-0.5 * std::log(0.01 / 2.0)) * std::sqrt(2.0 / n);
  const double ks = k.metric("ks_statistic");
  const bool ok = diff <= 1e-8 && shrinks && ks < critical;
  return {ok, "heat kernels " + num(diff) + " (limit 1e-8), variance shift shrinks x3: " + (shrinks ? "yes" : "no") +
                  ", KS " + num(ks) + " < " + num(critical)};
}

Verdict kpz() {
  const auto seg = run("kpz", set({{"kpz.target", "segment"}, {"lattice.n", "1024"}, {"field.t", "10"}}));
  const auto can = run("kpz", set({{"kpz.target", "cantor"}, {"lattice.n", "65536"}, {"field.t", "10"}}));
  const double d_seg = 0.5, d_can = std::log(2.0) / std::log(3.0);
  const double q_seg = 1.0 - std::sqrt(1.0 - d_seg), q_can = 1.0 - std::sqrt(1.0 - d_can);
  const double m_seg = seg.metric("median_quantum_dim"), m_can = can.metric("median_quantum_dim");
  const double l_seg = seg.metric("lebesgue_dim"), l_can = can.metric("lebesgue_dim");
  const bool ok = within(m_seg, q_seg, 0.10) && within(m_can, q_can, 0.10) && within(l_seg, d_seg, 1e-9) &&
                  within(l_can, d_can, 1e-9);
  return {ok, "segment " + num(m_seg) + " vs " + num(q_seg) + ", Cantor " + num(m_can) + " vs " + num(q_can) +
                  ", Lebesgue controls " + num(l_seg) + ", " + num(l_can)};
}

Verdict determinism() {
  const std::vector<std::pair<std::string, Assignments>> small{
      {"cov-check", set({{"lattice.n", "64"}, {"run.replicas", "200"}, {"field.t", "3"}, {"cov.max_lag", "8"}})},
      {"cov-check", set({{"lattice.d", "2"}, {"lattice.n", "32"}, {"run.replicas", "100"}, {"field.t", "2"},
                         {"cov.max_lag", "4"}})},
      {"martingale", set({{"lattice.n", "64"}, {"run.replicas", "100"}, {"field.t", "3"}})},
      {"seneta", set({{"lattice.n", "128"}, {"run.replicas", "20"}, {"field.t_grid", "1,2,3"}})},
      {"negmoment", set({{"lattice.n", "128"}, {"run.replicas", "100"}, {"field.t_grid", "1,2,3"}})},
      {"spectrum", set({{"lattice.n", "512"}, {"run.replicas", "100"}, {"field.t", "4"},
                        {"spectrum.lambda_min_log2", "6"}, {"spectrum.lambda_max_log2", "2"}})},
      {"spine", set({{"spine.cases", "1:4:20000;10:1:5000"}})},
      {"spine", set({{"spine.mode", "histogram"}, {"run.replicas", "5000"}})},
      {"kahane", set({{"run.replicas", "2000"}, {"kahane.pairs", "5"}})},
      {"gff-cov", set({{"gff.points", "10"}})},
      {"liouville", set({{"lattice.n", "32"}, {"run.replicas", "10"}, {"gff.modes", "64"}})},
      {"conformal", set({{"lattice.n", "32"}, {"run.replicas", "40"}, {"field.t", "4"}})},
      {"kpz", set({{"lattice.n", "128"}, {"field.t", "5"}, {"run.replicas", "12"}})},
  };
  std::size_t identical = 0;
  std::string bad;
  for (const auto& [name, over] : small) {
    const auto base = run(name, over, 1);
    const std::string csv = gmc::to_csv(base), json = gmc::to_json(base).dump();
    bool same = true;
    for (unsigned w : {4u, 16u}) {
      const auto other = run(name, over, w);
      same = same && gmc::to_csv(other) == csv && gmc::to_json(other).dump() == json;
    }
    // Same seed and workers twice.
    same = same && gmc::to_csv(run(name, over, 1)) == csv;
    identical += same;
    if (!same) bad += " " + name;
  }
  return {identical == small.size(), std::to_string(identical) + "/" + std::to_string(small.size()) +
                                         " configurations byte-identical at 1, 4 and 16 workers" +
                                         (bad.empty() ? "" : "; differing:" + bad)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"covariance fidelity", covariance},
      {"exact martingale means", martingale},
      {"barrier-ratio identity", barrier_ratio},
      {"Bessel-3 spine", bessel_spine},
      {"Seneta-Heyde trend", seneta},
      {"power-law spectrum", spectrum},
      {"negative-moment boundedness", negative_moment},
      {"Kahane comparator", kahane},
      {"GFF internal consistency", gff},
      {"KPZ at desk scale", kpz},
      {"determinism across workers", determinism},
  };
  int passed = 0, evaluated = 0;
  std::string lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    bool ran = true;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      ran = false;
      v = {false, std::string("error: ") + e.what()};
    }
    evaluated += ran;
    passed += v.pass;
    const std::string line = std::string(v.pass ? "PASS" : "FAIL") + "  " + std::to_string(i + 1) + ". " +
                             criteria[i].first + " [" + num(seconds_since(t0)) + " s]: " + v.detail;
    std::cout << line << std::endl;
    lines += line + "\n";
  }
  lines += std::to_string(passed) + "/" + std::to_string(criteria.size()) + " criteria passed\n";
  std::cout << passed << "/" << criteria.size() << " criteria passed" << std::endl;
  // ctest hides the output of passing tests; keep a copy next to the binary.
  std::ofstream("acceptance_results.txt") << lines;
  return evaluated == static_cast<int>(criteria.size()) ? 0 : 1;
}
