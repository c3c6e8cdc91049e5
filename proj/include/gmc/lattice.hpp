#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "gmc/error.hpp"

namespace gmc {

// Regular lattice on the box [origin, origin + side]^d, values at cell centers.
struct LatticeSpec {
  int dimension = 1;
  std::size_t points_per_side = 256;
  double side = 1.0;
  double origin = 0.0;
  // Upper bound on N^d; 2^24 cells (128 MiB per double array).
  static constexpr std::size_t kMaxCells = std::size_t{1} << 24;

  double spacing() const { return side / static_cast<double>(points_per_side); }

  std::size_t cells() const {
    return dimension == 1 ? points_per_side : points_per_side * points_per_side;
  }

  double center(std::size_t index) const {
    return origin + (static_cast<double>(index) + 0.5) * spacing();
  }

  // Cell volume h^d used as the midpoint-rule weight.
  double cell_volume() const { return std::pow(spacing(), dimension); }

  void validate() const {
    detail::require(dimension == 1 || dimension == 2, "lattice dimension must be 1 or 2");
    detail::require(points_per_side >= 16, "lattice needs at least 16 points per side");
    detail::require((points_per_side & (points_per_side - 1)) == 0,
                    "points per side must be a power of two");
    detail::require(side > 0.0 && std::isfinite(side), "lattice side must be positive");
    detail::require(cells() <= kMaxCells, "lattice exceeds the memory budget");
  }

  bool operator==(const LatticeSpec&) const = default;
};

// Axis-aligned half-open box [lo, hi) in lattice coordinates.  Coordinate 1 is
// ignored in d = 1.
struct Box {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};

  static Box interval(double a, double b) { return Box{{a, 0.0}, {b, 0.0}}; }
  static Box square(double a, double b) { return Box{{a, a}, {b, b}}; }

  static Box full(const LatticeSpec& lattice) {
    const double a = lattice.origin;
    const double b = lattice.origin + lattice.side;
    return Box{{a, a}, {b, b}};
  }

  // Box of relative size lambda scaled about the center of `outer`.
  static Box scaled_about_center(const Box& outer, double lambda) {
    Box out;
    for (int k = 0; k < 2; ++k) {
      const double mid = 0.5 * (outer.lo[k] + outer.hi[k]);
      const double half = 0.5 * lambda * (outer.hi[k] - outer.lo[k]);
      out.lo[k] = mid - half;
      out.hi[k] = mid + half;
    }
    return out;
  }

  bool contains(double x, double y = 0.0, int dimension = 1) const {
    if (x < lo[0] || x >= hi[0]) return false;
    return dimension == 1 || (y >= lo[1] && y < hi[1]);
  }

  double volume(int dimension) const {
    const double w = hi[0] - lo[0];
    return dimension == 1 ? w : w * (hi[1] - lo[1]);
  }
};

// Planar domain used by the free-field module.  Rectangles are [0,a] x [0,b];
// the unit disc is centered at the origin.
struct DomainSpec {
  enum class Kind { rectangle, unit_disc };

  Kind kind = Kind::rectangle;
  double width = 1.0;
  double height = 1.0;
  double margin = 0.1;

  static DomainSpec rectangle(double a, double b, double margin = -1.0) {
    DomainSpec d{Kind::rectangle, a, b, margin};
    if (margin < 0.0) d.margin = 0.1 * std::min(a, b);
    return d;
  }

  static DomainSpec unit_disc(double margin = 0.1) {
    return DomainSpec{Kind::unit_disc, 2.0, 2.0, margin};
  }

  bool inside(double x, double y) const {
    if (kind == Kind::rectangle) return x > 0.0 && x < width && y > 0.0 && y < height;
    return x * x + y * y < 1.0;
  }

  double boundary_distance(double x, double y) const {
    if (kind == Kind::rectangle) {
      return std::min({x, width - x, y, height - y});
    }
    return 1.0 - std::hypot(x, y);
  }

  // Working subdomain D' = {dist(x, boundary) >= margin}.
  bool in_working_subdomain(double x, double y) const {
    return inside(x, y) && boundary_distance(x, y) >= margin;
  }

  std::string name() const { return kind == Kind::rectangle ? "rectangle" : "unit_disc"; }

  bool operator==(const DomainSpec&) const = default;
};

}  // namespace gmc
