#pragma once

// One-point barrier computations along a single spine t -> X_t(x).
//
// Paths are drawn under the tilted law dQ = e^{sqrt(2d) X_t - d t} dP, under
// which X_s - sqrt(2d) s is a standard Brownian motion W, so
//
//   (1/beta) E[1{tau > t} e^{sqrt(2d) X_t - d t}] = (1/beta) Q(sup W <= beta)
//
// and Y_s = beta - W_s is Brownian motion from beta.  With the bridge option the
// barrier indicator on each step (a, b) is replaced by its conditional value
// 1 - exp(-2 (beta - a)(beta - b) / dt), which removes the discrete-monitoring
// bias without changing the mean of the continuous-time estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "gmc/error.hpp"
#include "gmc/parallel.hpp"
#include "gmc/quadrature.hpp"
#include "gmc/report.hpp"
#include "gmc/rng.hpp"

namespace gmc {

struct SpineOptions {
  bool bridge = true;
  // Simulate under the tilted law (importance sampling).  The physical law is
  // usable only for small t because the exponential weight has variance e^{2dt}.
  bool tilted = true;
  // Refine the path top-down and stop where a block's crossing probability is
  // below `refine_threshold`; the product of step factors is then replaced by
  // its conditional expectation given the block ends.  Requires bridge.
  bool adaptive = false;
  double refine_threshold = 1e-12;
  // With adaptive refinement, draw the endpoint W_t stratified within each
  // chunk (one draw per equal-probability stratum).  The standard error then
  // comes from the spread of chunk means.
  bool stratify = true;
  std::size_t chunk = 4096;
  unsigned workers = 1;
};

struct SpinePath {
  double time_step = 0.0;
  std::size_t steps = 0;
  std::vector<double> brownian_values;  // X_s on the step grid, s = 0, dt, ..., t
  std::vector<double> y_values;         // beta + sqrt(2d) s - X_s
  double survival = 1.0;                // indicator, or bridge product
  double weight = 0.0;                  // f_t^beta / beta = Y_t * survival / beta
  double exponential = 1.0;             // e^{sqrt(2d) X_t - d t} (1 under the tilted law)
};

struct BarrierRatioEstimate {
  double mc_estimate = 0.0;
  double standard_error = 0.0;
  double analytic = 0.0;
  std::size_t paths = 0;
  std::size_t steps = 0;
  double mean_normals_per_path = 0.0;
};

inline double asymptotic_ratio(double t) {
  detail::require(t > 0.0, "asymptotic ratio needs t > 0");
  return std::sqrt(2.0 / (std::numbers::pi * t));
}

inline double barrier_ratio_analytic(double beta, double t) { return std::erf(beta / std::sqrt(2.0 * t)) / beta; }

inline double bessel3_density(double t, double beta, double y) {
  detail::require(t > 0.0 && beta > 0.0 && y > 0.0, "Bessel-3 density needs positive arguments");
  const double a = (y - beta) * (y - beta) / (2.0 * t);
  const double b = (y + beta) * (y + beta) / (2.0 * t);
  // e^{-a} - e^{-b} = e^{-a} (1 - e^{a - b}), a - b = -2 y beta / t.
  return (y / beta) / std::sqrt(2.0 * std::numbers::pi * t) * std::exp(-a) * -std::expm1(a - b);
}

namespace detail {

inline double bridge_factor(double beta, double a, double b, double dt) {
  if (a >= beta || b >= beta) return 0.0;
  return -std::expm1(-2.0 * (beta - a) * (beta - b) / dt);
}

inline void require_spine_args(double beta, double t, std::size_t n_steps, int d) {
  require(beta > 0.0 && std::isfinite(beta), "barrier level must be positive");
  require(t >= 0.0 && std::isfinite(t), "spine time must be finite and nonnegative");
  require(d == 1 || d == 2, "dimension must be 1 or 2");
  require(n_steps >= 1, "need at least one step");
}

}  // namespace detail

// Forward Euler path on the uniform step grid.
inline SpinePath simulate_spine_path(double beta, double t, std::size_t n_steps, int d, NormalStream& normal,
                                     const SpineOptions& options = {}) {
  detail::require_spine_args(beta, t, n_steps, d);
  const double drift = std::sqrt(2.0 * d);
  SpinePath path;
  path.steps = n_steps;
  path.time_step = t / static_cast<double>(n_steps);
  path.brownian_values.assign(n_steps + 1, 0.0);
  path.y_values.assign(n_steps + 1, beta);
  const double dt = path.time_step;
  const double sd = std::sqrt(dt);
  double w = 0.0;  // X_s - sqrt(2d) s
  double survival = 1.0;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const double s = dt * static_cast<double>(k);
    double dw = sd * normal();
    if (!options.tilted) dw -= drift * dt;  // X is driftless under P
    const double next = w + dw;
    if (survival > 0.0) {
      if (next > beta) {
        survival = 0.0;
      } else if (options.bridge && dt > 0.0) {
        survival *= detail::bridge_factor(beta, w, next, dt);
      }
    }
    w = next;
    path.brownian_values[k] = w + drift * s;
    path.y_values[k] = beta - w;
  }
  path.survival = survival;
  path.weight = path.y_values.back() * survival / beta;
  path.exponential = options.tilted ? 1.0 : std::exp(drift * path.brownian_values.back() - d * t);
  return path;
}

namespace detail {

// Survival of W on [0, t] below beta by top-down bridge refinement.  Returns
// the estimate and counts normals drawn.
inline double adaptive_survival(double beta, double t, double end, std::size_t levels, double threshold,
                                NormalStream& normal, std::size_t& draws) {
  struct Block {
    double a, b, dt;
    std::size_t level;
  };
  if (end >= beta) return 0.0;
  const double log_threshold = std::log(threshold);
  double survival = 1.0;
  Block stack[64];
  int top = 0;
  stack[top++] = Block{0.0, end, t, 0};
  while (top > 0) {
    const Block blk = stack[--top];
    const double exponent = -2.0 * (beta - blk.a) * (beta - blk.b) / blk.dt;
    if (exponent < log_threshold || blk.level == levels) {
      survival *= -std::expm1(exponent);
      if (survival == 0.0) return 0.0;
      continue;
    }
    const double mid = 0.5 * (blk.a + blk.b) + 0.5 * std::sqrt(blk.dt) * normal();
    ++draws;
    if (mid >= beta) return 0.0;
    stack[top++] = Block{mid, blk.b, 0.5 * blk.dt, blk.level + 1};
    stack[top++] = Block{blk.a, mid, 0.5 * blk.dt, blk.level + 1};
  }
  return survival;
}

}  // namespace detail

// (1/beta) E[1{tau > t} e^{sqrt(2d) X_t - d t}] by Monte Carlo.  Paths are
// split into chunks of fixed size, each with its own stream, and reduced in
// chunk order.
inline BarrierRatioEstimate barrier_ratio_expectation(double beta, double t, std::size_t n_paths, std::size_t n_steps,
                                                      int d, std::uint64_t seed, const SpineOptions& options = {}) {
  detail::require_spine_args(beta, t, n_steps, d);
  detail::require(t > 0.0, "barrier ratio needs t > 0");
  detail::require(n_paths >= 1000, "barrier ratio needs at least 1000 paths");
  detail::require(static_cast<double>(n_steps) >= 100.0 * t, "barrier ratio needs at least 100 steps per unit t");
  detail::require(!options.adaptive || (options.bridge && options.tilted),
                  "adaptive refinement needs the bridge correction under the tilted law");
  BarrierRatioEstimate out;
  out.analytic = barrier_ratio_analytic(beta, t);
  out.paths = n_paths;
  // Adaptive refinement bisects, so round the finest grid up to a power of two.
  std::size_t levels = 0;
  if (options.adaptive) {
    while ((std::size_t{1} << levels) < n_steps) ++levels;
    out.steps = std::size_t{1} << levels;
  } else {
    out.steps = n_steps;
  }
  const std::size_t chunks = (n_paths + options.chunk - 1) / options.chunk;
  const bool stratified = options.adaptive && options.stratify;
  struct Partial {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0, draws = 0;
  };
  std::vector<Partial> partial(chunks);
  parallel_for(chunks, options.workers, [&](std::size_t c) {
    NormalStream normal(seed_stream(seed, static_cast<std::uint32_t>(c), streams::kSpinePaths));
    const std::size_t lo = c * options.chunk;
    const std::size_t hi = std::min(n_paths, lo + options.chunk);
    const double strata = static_cast<double>(hi - lo);
    Partial p;
    for (std::size_t i = lo; i < hi; ++i) {
      double v = 0.0;
      if (options.adaptive) {
        double end = 0.0;
        if (stratified) {
          const double u = (static_cast<double>(i - lo) + normal.engine().uniform()) / strata;
          end = std::sqrt(2.0 * t) * boost::math::erf_inv(2.0 * u - 1.0);
        } else {
          end = std::sqrt(t) * normal();
        }
        ++p.draws;
        v = detail::adaptive_survival(beta, t, end, levels, options.refine_threshold, normal, p.draws);
      } else {
        const SpinePath path = simulate_spine_path(beta, t, n_steps, d, normal, options);
        v = path.survival * path.exponential;
        p.draws += n_steps;
      }
      v /= beta;
      p.sum += v;
      p.sum_sq += v * v;
    }
    p.count = hi - lo;
    partial[c] = p;
  });
  double sum = 0.0, sum_sq = 0.0;
  std::size_t draws = 0;
  for (const auto& p : partial) {
    sum += p.sum;
    sum_sq += p.sum_sq;
    draws += p.draws;
  }
  const double n = static_cast<double>(n_paths);
  out.mc_estimate = sum / n;
  if (stratified) {
    detail::require(chunks >= 2, "stratified estimation needs at least two chunks");
    // Chunk means are independent; Var(chunk mean) ~ sigma^2 / size.
    double spread = 0.0;
    for (const auto& p : partial) {
      const double m = p.sum / static_cast<double>(p.count);
      spread += static_cast<double>(p.count) * (m - out.mc_estimate) * (m - out.mc_estimate);
    }
    out.standard_error = std::sqrt(spread / static_cast<double>(chunks - 1) / n);
  } else {
    out.standard_error = std::sqrt(std::max(0.0, sum_sq / n - out.mc_estimate * out.mc_estimate) / (n - 1.0));
  }
  out.mean_normals_per_path = static_cast<double>(draws) / n;
  return out;
}

// Weighted histogram of Y_t under the rooted measure against the Bessel-3 law.
inline ExperimentReport spine_histogram(double beta, double t, std::size_t n_paths, std::size_t n_steps, int d,
                                        std::size_t bins, std::uint64_t seed, const SpineOptions& options = {}) {
  detail::require_spine_args(beta, t, n_steps, d);
  detail::require(bins >= 2, "histogram needs at least two bins");
  detail::require(n_paths >= 2, "histogram needs at least two paths");
  ExperimentReport report;
  report.name = "spine";
  report.columns = {"bin_center", "weighted_frequency", "frequency_se", "target_density", "z"};
  report.exact_columns = {"target_density"};
  report.metadata["beta"] = beta;
  report.metadata["t"] = t;
  report.metadata["paths"] = n_paths;
  report.metadata["steps"] = n_steps;
  report.metadata["d"] = d;
  report.metadata["bridge"] = options.bridge;
  const double y_max = beta + 6.0 * std::sqrt(std::max(t, 1e-12)) + 1.0;
  const double width = y_max / static_cast<double>(bins);

  if (t == 0.0) {
    // X_0 = 0: every path sits at beta with weight 1.
    const auto bin = std::min(bins - 1, static_cast<std::size_t>(beta / width));
    for (std::size_t b = 0; b < bins; ++b) {
      report.add_row({(b + 0.5) * width, b == bin ? 1.0 / width : 0.0, 0.0, std::nan(""), std::nan("")});
    }
    report.flags.push_back("point_mass");
    report.metrics["mean_weight"] = 1.0;
    report.metrics["second_moment"] = beta * beta;
    report.metrics["second_moment_se"] = 0.0;
    report.metrics["second_moment_target"] = beta * beta;
    return report;
  }

  const std::size_t chunks = (n_paths + options.chunk - 1) / options.chunk;
  struct Partial {
    std::vector<double> sum, sum_sq;
    double weight = 0.0, weight_sq = 0.0, m2 = 0.0, m2_sq = 0.0, survival = 0.0;
  };
  std::vector<Partial> partial(chunks);
  SpineOptions path_options = options;
  path_options.tilted = true;
  parallel_for(chunks, options.workers, [&](std::size_t c) {
    NormalStream normal(seed_stream(seed, static_cast<std::uint32_t>(c), streams::kSpinePaths));
    Partial p;
    p.sum.assign(bins, 0.0);
    p.sum_sq.assign(bins, 0.0);
    const std::size_t lo = c * options.chunk;
    const std::size_t hi = std::min(n_paths, lo + options.chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      const SpinePath path = simulate_spine_path(beta, t, n_steps, d, normal, path_options);
      const double w = path.weight;
      const double y = path.y_values.back();
      p.weight += w;
      p.weight_sq += w * w;
      p.survival += path.survival;
      p.m2 += w * y * y;
      p.m2_sq += (w * y * y) * (w * y * y);
      if (w > 0.0 && y < y_max) {
        const auto b = static_cast<std::size_t>(y / width);
        p.sum[b] += w;
        p.sum_sq[b] += w * w;
      }
    }
    partial[c] = std::move(p);
  });
  std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0);
  double weight = 0.0, weight_sq = 0.0, m2 = 0.0, m2_sq = 0.0, survival = 0.0;
  for (const auto& p : partial) {
    for (std::size_t b = 0; b < bins; ++b) {
      sum[b] += p.sum[b];
      sum_sq[b] += p.sum_sq[b];
    }
    weight += p.weight;
    weight_sq += p.weight_sq;
    m2 += p.m2;
    m2_sq += p.m2_sq;
    survival += p.survival;
  }
  const double n = static_cast<double>(n_paths);
  double sup = 0.0;
  std::size_t within = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = b * width;
    const double hi = lo + width;
    const auto over_bin = [&](auto g) {
      return quad::integrate([&](double y) { return y > 0.0 ? g(y) * bessel3_density(t, beta, y) : 0.0; }, lo, hi);
    };
    const double mass = over_bin([](double) { return 1.0; });
    const double target = mass / width;
    // Per-path contribution w 1{bin} / width.
    const double mean = sum[b] / n / width;
    const double var = (sum_sq[b] / n / (width * width) - mean * mean) / (n - 1.0);
    const double se = std::sqrt(std::max(var, 0.0));
    // z uses the spread expected under the Bessel-3 law: the tilted density of
    // Y_t is beta p(y) / y and w = y / beta, so E[w^2 1{bin}] = int (y / beta) p.
    const double null_var = (over_bin([&](double y) { return y / beta; }) - mass * mass) / (n * width * width);
    const double z = (mean - target) / std::sqrt(null_var);
    if (std::abs(z) <= 4.0) ++within;
    sup = std::max(sup, std::abs(mean - target));
    report.add_row({0.5 * (lo + hi), mean, se, target, z});
  }
  const double ess = weight_sq > 0.0 ? weight * weight / weight_sq : 0.0;
  if (ess < 100.0) report.flags.push_back("low_effective_sample_size");
  const double m2_mean = m2 / n;
  report.metrics["sup_distance"] = sup;
  report.metrics["fraction_abs_z_le_4"] = static_cast<double>(within) / static_cast<double>(bins);
  report.metrics["effective_sample_size"] = ess;
  report.metrics["mean_weight"] = weight / n;
  report.metrics["mean_weight_se"] = std::sqrt(std::max(0.0, weight_sq / n - (weight / n) * (weight / n)) / (n - 1.0));
  report.metrics["survival_fraction"] = survival / n;
  report.metrics["survival_target"] = std::erf(beta / std::sqrt(2.0 * t));
  report.metrics["second_moment"] = m2_mean;
  report.metrics["second_moment_se"] = std::sqrt(std::max(0.0, m2_sq / n - m2_mean * m2_mean) / (n - 1.0));
  report.metrics["second_moment_target"] = beta * beta + 3.0 * t;
  return report;
}

}  // namespace gmc
