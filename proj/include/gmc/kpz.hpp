#pragma once

// Euclidean and quantum (measure-based) dimensions by box counting, and the
// critical KPZ relation dim_Leb = 2q - q^2 between normalized dimensions.
//
// Coverings use grid boxes instead of balls: dyadic boxes for the full box and
// the segment, the level-n construction intervals (base 3) for the Cantor set.
// The dimension is located as the s where the growth rate in n of
// log sum_B mu(B)^s changes sign.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gmc/chaos_measures.hpp"
#include "gmc/error.hpp"
#include "gmc/field_synthesis.hpp"
#include "gmc/kernels.hpp"
#include "gmc/lattice.hpp"
#include "gmc/parallel.hpp"
#include "gmc/report.hpp"
#include "gmc/rng.hpp"

namespace gmc {

struct TargetSet {
  enum class Kind { full_box, segment, cantor, custom };

  Kind kind = Kind::full_box;
  int dimension = 1;
  // Custom sets: mask_n^d bytes, row-major, nonzero = inside.
  std::size_t mask_n = 0;
  std::vector<std::uint8_t> mask;

  static TargetSet full_box(int d) {
    detail::require(d == 1 || d == 2, "target dimension must be 1 or 2");
    return TargetSet{Kind::full_box, d, 0, {}};
  }
  // Horizontal segment y = 1/2 across the unit square.
  static TargetSet segment() { return TargetSet{Kind::segment, 2, 0, {}}; }
  // Middle-thirds Cantor set in [0, 1].
  static TargetSet cantor() { return TargetSet{Kind::cantor, 1, 0, {}}; }
  static TargetSet custom(int d, std::size_t n, std::vector<std::uint8_t> cells) {
    detail::require(d == 1 || d == 2, "mask dimension must be 1 or 2");
    detail::require(n >= 1 && cells.size() == (d == 1 ? n : n * n), "mask size does not match its header");
    detail::require(std::any_of(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }),
                    "mask selects no cell");
    return TargetSet{Kind::custom, d, n, std::move(cells)};
  }

  int base() const { return kind == Kind::cantor ? 3 : 2; }

  std::string name() const {
    switch (kind) {
      case Kind::full_box: return "full_box";
      case Kind::segment: return "segment";
      case Kind::cantor: return "cantor";
      case Kind::custom: return "custom";
    }
    return "unknown";
  }
};

namespace detail {

struct CoverBox {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
};

inline std::size_t integer_power(std::size_t base, int n) {
  std::size_t p = 1;
  for (int i = 0; i < n; ++i) p *= base;
  return p;
}

inline bool cantor_index(std::size_t j, int n) {
  for (int i = 0; i < n; ++i, j /= 3) {
    if (j % 3 == 1) return false;
  }
  return true;
}

inline bool mask_hits(const TargetSet& set, const CoverBox& box) {
  const double m = static_cast<double>(set.mask_n);
  auto range = [&](int axis) {
    const auto a = static_cast<std::size_t>(std::floor(box.lo[axis] * m));
    const auto b = static_cast<std::size_t>(std::min(m, std::ceil(box.hi[axis] * m)));
    return std::pair{a, std::max(b, a + 1)};
  };
  const auto [x0, x1] = range(0);
  if (set.dimension == 1) {
    for (std::size_t i = x0; i < x1; ++i) {
      if (set.mask[i]) return true;
    }
    return false;
  }
  const auto [y0, y1] = range(1);
  for (std::size_t j = y0; j < y1; ++j) {
    for (std::size_t i = x0; i < x1; ++i) {
      if (set.mask[j * set.mask_n + i]) return true;
    }
  }
  return false;
}

// Covering at level n in unit coordinates.
inline std::vector<CoverBox> covering(const TargetSet& set, int n) {
  require(n >= 0 && n <= 30, "covering level out of range");
  const std::size_t per_side = integer_power(static_cast<std::size_t>(set.base()), n);
  const double w = 1.0 / static_cast<double>(per_side);
  std::vector<CoverBox> out;
  auto push = [&](std::size_t i, std::size_t j) {
    CoverBox b;
    b.lo = {i * w, set.dimension == 2 ? j * w : 0.0};
    b.hi = {(i + 1) * w, set.dimension == 2 ? (j + 1) * w : 1.0};
    if (i + 1 == per_side) b.hi[0] = 1.0;
    if (set.dimension == 2 && j + 1 == per_side) b.hi[1] = 1.0;
    out.push_back(b);
  };
  switch (set.kind) {
    case TargetSet::Kind::full_box:
      for (std::size_t j = 0; j < (set.dimension == 2 ? per_side : 1); ++j) {
        for (std::size_t i = 0; i < per_side; ++i) push(i, j);
      }
      break;
    case TargetSet::Kind::segment: {
      const std::size_t row = per_side / 2;  // half-open boxes: y = 1/2 sits in the upper row
      for (std::size_t i = 0; i < per_side; ++i) push(i, row);
      break;
    }
    case TargetSet::Kind::cantor:
      for (std::size_t i = 0; i < per_side; ++i) {
        if (cantor_index(i, n)) push(i, 0);
      }
      break;
    case TargetSet::Kind::custom:
      for (std::size_t j = 0; j < (set.dimension == 2 ? per_side : 1); ++j) {
        for (std::size_t i = 0; i < per_side; ++i) {
          push(i, j);
          if (!mask_hits(set, out.back())) out.pop_back();
        }
      }
      break;
  }
  return out;
}

inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

struct DimensionValue {
  double value = 0.0;
  bool estimated = false;
};

// Box-counting slope of a custom mask over levels 1..log_base(N/2).
inline DimensionValue euclidean_dimension(const TargetSet& set) {
  switch (set.kind) {
    case TargetSet::Kind::full_box: return {1.0, false};
    case TargetSet::Kind::segment: return {0.5, false};
    case TargetSet::Kind::cantor: return {std::log(2.0) / std::log(3.0), false};
    case TargetSet::Kind::custom: break;
  }
  std::vector<double> n_axis, log_count;
  for (int n = 1; std::ldexp(1.0, n + 1) <= static_cast<double>(set.mask_n); ++n) {
    n_axis.push_back(n);
    log_count.push_back(std::log(static_cast<double>(detail::covering(set, n).size())));
  }
  if (n_axis.size() < 2) throw ResolutionError("mask too coarse for a box-counting estimate");
  const double slope = detail::ols_slope(n_axis, log_count);
  return {std::clamp(slope / (set.dimension * std::log(2.0)), 0.0, 1.0), true};
}

// Masses of the level-n covering boxes.  Each lattice weight is spread
// uniformly over its cell, so boxes that cut cells get the overlapping share.
inline std::vector<double> quantum_box_masses(const ChaosMeasure& measure, const TargetSet& set, int level) {
  const LatticeSpec& lat = measure.lattice;
  detail::require(lat.dimension == set.dimension, "target set and measure dimensions differ");
  const double box_side = lat.side * std::pow(static_cast<double>(set.base()), -level);
  if (box_side < 4.0 * lat.spacing() * (1.0 - 1e-12)) {
    throw ResolutionError("level " + std::to_string(level) + " boxes are smaller than four lattice cells");
  }
  const auto boxes = detail::covering(set, level);
  const double n = static_cast<double>(lat.points_per_side);
  const std::size_t np = lat.points_per_side;

  struct Span {
    std::size_t first = 0;
    std::vector<double> share;
  };
  auto span = [&](double lo, double hi) {
    const double a = lo * n, b = hi * n;
    Span s;
    s.first = static_cast<std::size_t>(std::floor(a));
    const auto last = std::min(np, static_cast<std::size_t>(std::ceil(b)));
    for (std::size_t i = s.first; i < last; ++i) {
      s.share.push_back(std::min(b, i + 1.0) - std::max(a, static_cast<double>(i)));
    }
    return s;
  };

  std::vector<double> masses;
  masses.reserve(boxes.size());
  for (const auto& box : boxes) {
    const Span sx = span(box.lo[0], box.hi[0]);
    double mass = 0.0;
    if (lat.dimension == 1) {
      for (std::size_t k = 0; k < sx.share.size(); ++k) mass += sx.share[k] * measure.weights[sx.first + k];
    } else {
      const Span sy = span(box.lo[1], box.hi[1]);
      for (std::size_t r = 0; r < sy.share.size(); ++r) {
        const double* row = measure.weights.data() + (sy.first + r) * np + sx.first;
        double acc = 0.0;
        for (std::size_t k = 0; k < sx.share.size(); ++k) acc += sx.share[k] * row[k];
        mass += sy.share[r] * acc;
      }
    }
    masses.push_back(mass);
  }
  return masses;
}

struct DimensionEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  bool crossed = true;
  std::vector<double> s_grid;
  std::vector<double> slopes;
  std::size_t excluded = 0;  // nonpositive box masses left out of the sums
};

inline std::vector<double> uniform_s_grid(double step = 0.01) {
  detail::require(step > 0.0 && step <= 0.05, "s grid step must be in (0, 0.05]");
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  detail::require(std::abs(count * step - 1.0) < 1e-9, "s grid step must divide 1");
  std::vector<double> grid(count + 1);
  for (std::size_t i = 0; i <= count; ++i) grid[i] = static_cast<double>(i) / count;
  return grid;
}

namespace detail {

inline void check_s_grid(const std::vector<double>& s_grid) {
  require(s_grid.size() >= 2, "s grid needs at least two points");
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    require(s_grid[i] >= 0.0 && s_grid[i] <= 1.0, "s grid must lie in [0, 1]");
    if (i > 0) {
      require(s_grid[i] > s_grid[i - 1], "s grid must increase");
      require(s_grid[i] - s_grid[i - 1] <= 0.05 + 1e-12, "s grid step must not exceed 0.05");
    }
  }
}

}  // namespace detail

// Zero-slope threshold for one realization.  Slopes within `tolerance` of 0
// count as zero so that exact Lebesgue sums cross at the grid point.
inline DimensionEstimate dimension_estimate(const std::map<int, std::vector<double>>& masses_by_level,
                                            const std::vector<double>& s_grid, double tolerance = 1e-9) {
  detail::require(masses_by_level.size() >= 3, "dimension estimate needs at least three levels");
  detail::check_s_grid(s_grid);
  DimensionEstimate out;
  out.s_grid = s_grid;
  std::vector<double> levels;
  std::vector<std::vector<double>> logs;
  for (const auto& [n, masses] : masses_by_level) {
    std::vector<double> lm;
    for (double m : masses) {
      if (m > 0.0 && std::isfinite(m)) {
        lm.push_back(std::log(m));
      } else {
        ++out.excluded;
      }
    }
    if (lm.empty()) throw DegenerateSample("level " + std::to_string(n) + " has no positive box mass");
    levels.push_back(n);
    logs.push_back(std::move(lm));
  }
  for (double s : s_grid) {
    std::vector<double> y;
    for (const auto& lm : logs) {
      double top = -std::numeric_limits<double>::infinity();
      for (double v : lm) top = std::max(top, s * v);
      double acc = 0.0;
      for (double v : lm) acc += std::exp(s * v - top);
      y.push_back(top + std::log(acc));
    }
    out.slopes.push_back(detail::ols_slope(levels, y));
  }
  const auto& sl = out.slopes;
  if (sl.front() <= tolerance) {
    out.value = s_grid.front();
    out.crossed = false;
    return out;
  }
  for (std::size_t k = 1; k < sl.size(); ++k) {
    if (std::abs(sl[k]) <= tolerance) {
      out.value = s_grid[k];
      return out;
    }
    if (sl[k] < 0.0) {
      out.value = s_grid[k - 1] + (s_grid[k] - s_grid[k - 1]) * sl[k - 1] / (sl[k - 1] - sl[k]);
      return out;
    }
  }
  out.value = s_grid.back();
  out.crossed = false;
  return out;
}

struct ReplicaDimension {
  double median = 0.0;
  double standard_error = 0.0;
  std::vector<double> values;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Median over replicas with a bootstrap standard error of the median.
inline ReplicaDimension replica_bootstrap(const std::vector<double>& values, std::uint64_t seed,
                                          std::size_t resamples = 1000) {
  detail::require(!values.empty(), "bootstrap needs at least one replica");
  ReplicaDimension out;
  out.values = values;
  out.median = detail::median_of(values);
  if (values.size() == 1) return out;
  Philox4x32 rng = seed_stream(seed, 0, streams::kBootstrap);
  std::vector<double> draws(values.size()), medians;
  double mean = 0.0;
  for (std::size_t b = 0; b < resamples; ++b) {
    for (double& d : draws) {
      const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(values.size()));
      d = values[std::min(k, values.size() - 1)];
    }
    medians.push_back(detail::median_of(draws));
    mean += medians.back();
  }
  mean /= resamples;
  double ss = 0.0;
  for (double m : medians) ss += (m - mean) * (m - mean);
  out.standard_error = std::sqrt(ss / (resamples - 1));
  return out;
}

// Root q in [0, 1] of 2q - q^2 = delta.  The normalized relation does not
// depend on d.
inline double kpz_predict(double delta, int d = 1) {
  detail::require(d == 1 || d == 2, "dimension must be 1 or 2");
  detail::require(delta >= 0.0 && delta <= 1.0, "delta must lie in [0, 1]");
  return 1.0 - std::sqrt(1.0 - delta);
}

struct KpzSpec {
  TargetSet target = TargetSet::segment();
  std::size_t points_per_side = 1024;
  double t = 10.0;
  std::size_t replicas = 100;
  std::uint64_t seed = 1;
  int min_level = 2;
  int max_level = 0;  // 0: deepest level with boxes of at least four cells
  double s_step = 0.01;
  double tolerance = 0.10;
  unsigned workers = 1;
};

inline SeedKernel default_kpz_seed(int d) { return d == 1 ? SeedKernel::triangle() : SeedKernel::disc_overlap(); }

inline int deepest_level(const TargetSet& set, std::size_t points_per_side) {
  int n = 0;
  while (static_cast<double>(points_per_side) / std::pow(static_cast<double>(set.base()), n + 1) >= 4.0 - 1e-12) ++n;
  return n;
}

inline std::map<int, std::vector<double>> box_masses_by_level(const ChaosMeasure& measure, const TargetSet& set,
                                                              int min_level, int max_level) {
  std::map<int, std::vector<double>> out;
  for (int n = min_level; n <= max_level; ++n) out[n] = quantum_box_masses(measure, set, n);
  return out;
}

// Derivative-measure quantum dimension per replica against the KPZ prediction.
// Layers finer than the lattice spacing are sampled in one white-noise layer.
inline ExperimentReport kpz_experiment(const KpzSpec& spec, const SeedKernel& seed) {
  const int d = spec.target.dimension;
  detail::require(spec.replicas >= 1, "kpz needs at least one replica");
  LatticeSpec lattice{d, spec.points_per_side, 1.0, 0.0};
  lattice.validate();
  const int max_level = spec.max_level > 0 ? spec.max_level : deepest_level(spec.target, spec.points_per_side);
  detail::require(spec.min_level >= 0 && max_level - spec.min_level >= 2, "kpz needs at least three levels");
  const auto s_grid = uniform_s_grid(spec.s_step);
  const double h = lattice.spacing();
  const double t_resolved = std::log(seed.support_radius() / h);
  std::vector<double> bounds{0.0};
  if (t_resolved > 0.0 && t_resolved < spec.t) bounds.push_back(t_resolved);
  bounds.push_back(spec.t);
  const FieldSynthesizer synth(lattice, layers_from_boundaries(seed, bounds));

  const double delta = euclidean_dimension(spec.target).value;
  const double predicted = kpz_predict(delta, d);

  const ChaosMeasure lebesgue = gmc_measure(initial_state(lattice), 0.0);
  const auto control = dimension_estimate(box_masses_by_level(lebesgue, spec.target, spec.min_level, max_level), s_grid);

  std::vector<DimensionEstimate> per(spec.replicas);
  std::vector<std::size_t> boxes(spec.replicas, 0);
  parallel_for(spec.replicas, spec.workers, [&](std::size_t r) {
    const FieldState state = synth.run(RngLineage{spec.seed, static_cast<std::uint32_t>(r)});
    const auto masses = box_masses_by_level(derivative_measure(state), spec.target, spec.min_level, max_level);
    for (const auto& [n, m] : masses) boxes[r] += m.size();
    per[r] = dimension_estimate(masses, s_grid);
  });

  ExperimentReport report;
  report.name = "kpz";
  report.columns = {"replica", "quantum_dim", "crossed", "excluded_boxes", "total_boxes"};
  report.exact_columns = {"replica", "crossed", "excluded_boxes", "total_boxes"};
  std::vector<double> values;
  std::size_t excluded = 0, total = 0, no_cross = 0;
  for (std::size_t r = 0; r < spec.replicas; ++r) {
    report.add_row({static_cast<double>(r), per[r].value, per[r].crossed ? 1.0 : 0.0,
                    static_cast<double>(per[r].excluded), static_cast<double>(boxes[r])});
    values.push_back(per[r].value);
    excluded += per[r].excluded;
    total += boxes[r];
    no_cross += !per[r].crossed;
  }
  const auto summary = replica_bootstrap(values, spec.seed);
  report.metadata = Json{{"target", spec.target.name()},
                         {"dimension", d},
                         {"points_per_side", spec.points_per_side},
                         {"t", spec.t},
                         {"seed_kernel", to_string(seed.kind())},
                         {"min_level", spec.min_level},
                         {"max_level", max_level},
                         {"base", spec.target.base()},
                         {"s_step", spec.s_step}};
  report.metrics["replicas"] = spec.replicas;
  report.metrics["delta"] = delta;
  report.metrics["predicted_quantum_dim"] = predicted;
  report.metrics["median_quantum_dim"] = summary.median;
  report.metrics["median_quantum_dim_se"] = summary.standard_error;
  report.metrics["deviation"] = summary.median - predicted;
  report.metrics["tolerance"] = spec.tolerance;
  report.metrics["within_tolerance"] = std::abs(summary.median - predicted) <= spec.tolerance;
  report.metrics["lebesgue_dim"] = control.value;
  report.metrics["lebesgue_dim_error"] = control.value - delta;
  report.metrics["nonpositive_box_fraction"] = static_cast<double>(excluded) / static_cast<double>(total);
  if (no_cross > 0) report.flags.push_back("no_crossing");
  if (excluded > 0) report.flags.push_back("nonpositive_boxes_excluded");
  return report;
}

inline ExperimentReport kpz_experiment(const KpzSpec& spec) {
  return kpz_experiment(spec, default_kpz_seed(spec.target.dimension));
}

// Mask file: "GMCK", uint32 d, uint32 N (little endian), then N^d bytes.
inline TargetSet load_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open mask file " + path);
  char magic[4];
  std::uint8_t header[8];
  if (!in.read(magic, 4) || std::string(magic, 4) != "GMCK") throw FormatError("mask file has a bad magic tag");
  if (!in.read(reinterpret_cast<char*>(header), 8)) throw FormatError("mask header is truncated");
  auto u32 = [&](int o) {
    return static_cast<std::uint32_t>(header[o]) | static_cast<std::uint32_t>(header[o + 1]) << 8 |
           static_cast<std::uint32_t>(header[o + 2]) << 16 | static_cast<std::uint32_t>(header[o + 3]) << 24;
  };
  const std::uint32_t d = u32(0), n = u32(4);
  if ((d != 1 && d != 2) || n == 0 || n > 65536) throw FormatError("mask header has an invalid shape");
  const std::size_t count = d == 1 ? n : std::size_t{n} * n;
  std::vector<std::uint8_t> cells(count);
  if (!in.read(reinterpret_cast<char*>(cells.data()), static_cast<std::streamsize>(count))) {
    throw FormatError("mask body is truncated");
  }
  try {
    return TargetSet::custom(static_cast<int>(d), n, std::move(cells));
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
}

inline void write_mask(const TargetSet& set, const std::string& path) {
  detail::require(set.kind == TargetSet::Kind::custom, "only custom sets have a mask");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write mask file " + path);
  out.write("GMCK", 4);
  auto put = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff), static_cast<char>(v >> 16 & 0xff),
                       static_cast<char>(v >> 24 & 0xff)};
    out.write(b, 4);
  };
  put(static_cast<std::uint32_t>(set.dimension));
  put(static_cast<std::uint32_t>(set.mask_n));
  out.write(reinterpret_cast<const char*>(set.mask.data()), static_cast<std::streamsize>(set.mask.size()));
}

}  // namespace gmc
