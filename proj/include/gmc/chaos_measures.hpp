#pragma once

// Lattice approximations of the chaos measures built from a field state.
// Every weight is a midpoint-rule cell mass h^d * density(x_i).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/field_synthesis.hpp"
#include "gmc/lattice.hpp"
#include "gmc/report.hpp"

namespace gmc {

enum class MeasureKind { gmc, derivative, seneta_heyde, barrier_z, barrier_r, liouville };

inline std::string to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::gmc: return "gmc";
    case MeasureKind::derivative: return "derivative";
    case MeasureKind::seneta_heyde: return "seneta_heyde";
    case MeasureKind::barrier_z: return "barrier_z";
    case MeasureKind::barrier_r: return "barrier_r";
    case MeasureKind::liouville: return "liouville";
  }
  return "unknown";
}

struct ChaosMeasure {
  LatticeSpec lattice;
  double t = 0.0;
  MeasureKind kind = MeasureKind::gmc;
  double parameter = 0.0;  // gamma for gmc, beta for the barrier pair
  std::vector<double> weights;
  std::vector<double> variance_profile;

  bool signed_weights() const {
    return kind == MeasureKind::derivative || kind == MeasureKind::barrier_z || kind == MeasureKind::liouville;
  }

  // Position of cell i along `axis` (0 = x, 1 = y).
  double center(std::size_t i, int axis) const {
    const std::size_t n = lattice.points_per_side;
    if (lattice.dimension == 1) return axis == 0 ? lattice.center(i) : 0.0;
    return lattice.center(axis == 0 ? i % n : i / n);
  }
};

namespace detail {

inline ChaosMeasure blank_measure(const FieldState& field, MeasureKind kind, double parameter) {
  ChaosMeasure m;
  m.lattice = field.lattice;
  m.t = field.t;
  m.kind = kind;
  m.parameter = parameter;
  m.weights.resize(field.values.size());
  m.variance_profile.resize(field.values.size());
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    if (!std::isfinite(field.values[i])) {
      throw CorruptField("non-finite field value at cell " + std::to_string(i));
    }
    m.variance_profile[i] = field.variance_at(i);
  }
  return m;
}

}  // namespace detail

inline ChaosMeasure gmc_measure(const FieldState& field, double gamma) {
  detail::require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be nonnegative");
  ChaosMeasure m = detail::blank_measure(field, MeasureKind::gmc, gamma);
  const double cell = field.lattice.cell_volume();
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    m.weights[i] = cell * std::exp(gamma * field.values[i] - 0.5 * gamma * gamma * m.variance_profile[i]);
  }
  return m;
}

// (sqrt(2d) V - X) exp(sqrt(2d) X - d V).
inline ChaosMeasure derivative_measure(const FieldState& field) {
  ChaosMeasure m = detail::blank_measure(field, MeasureKind::derivative, 0.0);
  const double d = field.lattice.dimension;
  const double g = std::sqrt(2.0 * d);
  const double cell = field.lattice.cell_volume();
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    const double x = field.values[i];
    const double v = m.variance_profile[i];
    m.weights[i] = cell * (g * v - x) * std::exp(g * x - d * v);
  }
  return m;
}

inline ChaosMeasure seneta_heyde_measure(const FieldState& field) {
  detail::require(field.t > 0.0, "the Seneta-Heyde measure needs t > 0");
  const double g = std::sqrt(2.0 * field.lattice.dimension);
  ChaosMeasure m = gmc_measure(field, g);
  m.kind = MeasureKind::seneta_heyde;
  m.parameter = 0.0;
  const double scale = std::sqrt(field.t);
  for (double& w : m.weights) w *= scale;
  return m;
}

// Barrier-killed pair (Z, R).  Survival is the indicator running_sup <= beta,
// or the supplied continuous-time bridge weights.
inline std::pair<ChaosMeasure, ChaosMeasure> barrier_measures(const FieldState& field, double beta,
                                                              const BridgeSurvival* bridge = nullptr) {
  detail::require(beta > 0.0 && std::isfinite(beta), "barrier level must be positive");
  detail::require(field.running_sup.size() == field.values.size(), "field carries no running supremum");
  if (bridge) {
    detail::require(bridge->weights().size() == field.values.size(), "bridge survival size mismatch");
    detail::require(bridge->beta() == beta, "bridge survival was built for another barrier");
  }
  ChaosMeasure z = detail::blank_measure(field, MeasureKind::barrier_z, beta);
  ChaosMeasure r = z;
  r.kind = MeasureKind::barrier_r;
  const double d = field.lattice.dimension;
  const double g = std::sqrt(2.0 * d);
  const double cell = field.lattice.cell_volume();
  for (std::size_t i = 0; i < z.weights.size(); ++i) {
    const double alive = bridge ? bridge->weights()[i] : (field.running_sup[i] <= beta ? 1.0 : 0.0);
    const double x = field.values[i];
    const double v = z.variance_profile[i];
    const double base = alive == 0.0 ? 0.0 : alive * cell * std::exp(g * x - d * v);
    r.weights[i] = base;
    z.weights[i] = (g * v - x + beta) * base;
  }
  return {std::move(z), std::move(r)};
}

struct RegionMass {
  double mass = 0.0;
  std::size_t cells = 0;
  bool empty() const { return cells == 0; }
};

// Sum of weights over cells whose centers lie in the half-open box.
inline RegionMass region_mass(const ChaosMeasure& measure, const Box& region) {
  const Box full = Box::full(measure.lattice);
  const int d = measure.lattice.dimension;
  const double slack = 1e-12 * measure.lattice.side;
  for (int k = 0; k < d; ++k) {
    detail::require(region.lo[k] >= full.lo[k] - slack && region.hi[k] <= full.hi[k] + slack,
                    "region must lie inside the lattice box");
  }
  RegionMass out;
  const std::size_t n = measure.lattice.points_per_side;
  // Cell centres on each axis form an arithmetic sequence; find the index range.
  auto range = [&](int axis) {
    const double h = measure.lattice.spacing();
    const double o = measure.lattice.origin;
    auto first = static_cast<long>(std::ceil((region.lo[axis] - o) / h - 0.5));
    auto last = static_cast<long>(std::ceil((region.hi[axis] - o) / h - 0.5)) - 1;
    first = std::max(0L, first);
    last = std::min(static_cast<long>(n) - 1, last);
    while (first <= last && !(measure.lattice.center(static_cast<std::size_t>(first)) >= region.lo[axis])) ++first;
    while (last >= first && !(measure.lattice.center(static_cast<std::size_t>(last)) < region.hi[axis])) --last;
    return std::pair<long, long>{first, last};
  };
  const auto [x0, x1] = range(0);
  if (d == 1) {
    for (long i = x0; i <= x1; ++i) out.mass += measure.weights[static_cast<std::size_t>(i)];
    out.cells = x1 >= x0 ? static_cast<std::size_t>(x1 - x0 + 1) : 0;
    return out;
  }
  const auto [y0, y1] = range(1);
  for (long j = y0; j <= y1; ++j) {
    for (long i = x0; i <= x1; ++i) out.mass += measure.weights[static_cast<std::size_t>(j) * n + static_cast<std::size_t>(i)];
  }
  out.cells = (x1 >= x0 && y1 >= y0) ? static_cast<std::size_t>((x1 - x0 + 1) * (y1 - y0 + 1)) : 0;
  return out;
}

inline double total_mass(const ChaosMeasure& measure, const Box& region) { return region_mass(measure, region).mass; }

inline double total_mass(const ChaosMeasure& measure) {
  double s = 0.0;
  for (double w : measure.weights) s += w;
  return s;
}

// One row per cell: index (and column/row), center, weight.
inline std::string measure_csv(const ChaosMeasure& measure) {
  std::string out;
  const bool plane = measure.lattice.dimension == 2;
  out += plane ? "cell_i,cell_j,x_center,y_center,weight\n" : "cell_i,x_center,weight\n";
  const std::size_t n = measure.lattice.points_per_side;
  for (std::size_t c = 0; c < measure.weights.size(); ++c) {
    if (plane) {
      out += std::to_string(c % n) + "," + std::to_string(c / n) + "," + format_number(measure.center(c, 0)) + "," +
             format_number(measure.center(c, 1)) + ",";
    } else {
      out += std::to_string(c) + "," + format_number(measure.center(c, 0)) + ",";
    }
    out += format_number(measure.weights[c]) + "\n";
  }
  return out;
}

inline Json measure_summary(const ChaosMeasure& measure, const std::vector<std::pair<std::string, Box>>& regions) {
  Json j;
  j["kind"] = to_string(measure.kind);
  if (measure.kind == MeasureKind::gmc) j["gamma"] = measure.parameter;
  if (measure.kind == MeasureKind::barrier_z || measure.kind == MeasureKind::barrier_r) j["beta"] = measure.parameter;
  j["t"] = measure.t;
  Json masses = Json::object();
  masses["full_box"] = number_json(total_mass(measure));
  for (const auto& [name, box] : regions) {
    const RegionMass rm = region_mass(measure, box);
    masses[name] = number_json(rm.mass);
    if (rm.empty()) j["warnings"].push_back("region " + name + " contains no cell centers");
  }
  j["total_mass"] = std::move(masses);
  return j;
}

}  // namespace gmc
