#pragma once

// Dirichlet free fields.  Rectangles [0,a] x [0,b] are sampled through the
// eigenbasis of -Delta/2; the unit disc is sampled by dense Cholesky on circle
// averages at a few hundred points.
//
// Normalisation: p_D is the heat kernel of Brownian motion (generator Delta/2)
// killed on the boundary, and X_t has covariance pi int_{e^{-2t}}^inf p_D(s,x,y) ds.
// For this cut-off Var X_t(x) - t -> ln C(x, D) - kHeatShift: the whole-plane
// part gives pi int_eps^1 p ds = (1/2) E1(r^2/2) = ln(1/r) + (ln 2 - gamma)/2 + o(1)
// off the diagonal but exactly t on it.  The shift is uniform in x.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/expint.hpp>

#include "gmc/chaos_measures.hpp"
#include "gmc/error.hpp"
#include "gmc/field_synthesis.hpp"
#include "gmc/lattice.hpp"
#include "gmc/parallel.hpp"
#include "gmc/quadrature.hpp"
#include "gmc/report.hpp"
#include "gmc/rng.hpp"

namespace gmc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr int kDefaultModes = 256;
inline constexpr double kHeatShift = 0.5 * (0.69314718055994530942 - 0.57721566490153286061);

namespace detail {

inline double gaussian_density(double z, double s) {
  return std::exp(-z * z / (2.0 * s)) / std::sqrt(2.0 * std::numbers::pi * s);
}

// Sum_n [g(u - v + 2na) - g(u + v + 2na)] from n = 0 outwards.  With
// skip_direct the n = 0 direct term g(u - v) is left out.
inline double image_series_1d(double a, double s, double u, double v, bool skip_direct = false) {
  double sum = skip_direct ? 0.0 : gaussian_density(u - v, s);
  sum -= gaussian_density(u + v, s);
  const double scale = gaussian_density(0.0, s);
  for (int n = 1; n < 100000; ++n) {
    const double shift = 2.0 * n * a;
    const double term = gaussian_density(u - v + shift, s) + gaussian_density(u - v - shift, s) -
                        gaussian_density(u + v + shift, s) - gaussian_density(u + v - shift, s);
    sum += term;
    // Every remaining image is farther than (2n - 1) a from the source.
    if (gaussian_density((2.0 * n - 1.0) * a, s) < 1e-14 * scale * 1e-3) break;
  }
  return sum;
}

inline double eigen_series_1d(double a, double s, double u, double v) {
  double sum = 0.0;
  const double k = std::numbers::pi / a;
  for (int n = 1; n < 1000000; ++n) {
    const double decay = std::exp(-0.5 * k * k * n * n * s);
    sum += decay * (2.0 / a) * std::sin(n * k * u) * std::sin(n * k * v);
    if (decay < 1e-18) break;
  }
  return sum;
}

inline bool on_boundary(const DomainSpec& d, Point p) { return !d.inside(p.x, p.y); }

inline void require_rectangle(const DomainSpec& d) {
  require(d.kind == DomainSpec::Kind::rectangle, "operation needs a rectangle domain");
  require(d.width > 0.0 && d.height > 0.0, "rectangle sides must be positive");
}

}  // namespace detail

struct HeatKernelValue {
  double value = 0.0;
  bool boundary = false;
};

// Image-series heat kernel of the rectangle.
inline HeatKernelValue dirichlet_heat_kernel(const DomainSpec& domain, double s, Point x, Point y) {
  detail::require_rectangle(domain);
  detail::require(s > 0.0 && std::isfinite(s), "heat kernel time must be positive");
  if (detail::on_boundary(domain, x) || detail::on_boundary(domain, y)) return {0.0, true};
  return {detail::image_series_1d(domain.width, s, x.x, y.x) * detail::image_series_1d(domain.height, s, x.y, y.y),
          false};
}

// Same kernel from the eigenfunction expansion.
inline HeatKernelValue dirichlet_heat_kernel_eigen(const DomainSpec& domain, double s, Point x, Point y) {
  detail::require_rectangle(domain);
  detail::require(s > 0.0 && std::isfinite(s), "heat kernel time must be positive");
  if (detail::on_boundary(domain, x) || detail::on_boundary(domain, y)) return {0.0, true};
  return {detail::eigen_series_1d(domain.width, s, x.x, y.x) * detail::eigen_series_1d(domain.height, s, x.y, y.y),
          false};
}

// Eigenpairs of -Delta/2 on the rectangle, n, m = 1..modes.
struct EigenBasis {
  double a = 1.0, b = 1.0;
  int modes = kDefaultModes;

  double eigenvalue(int n, int m) const {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    return 0.5 * pi2 * (n * n / (a * a) + m * m / (b * b));
  }
  double phi_x(int n, double x) const { return std::sqrt(2.0 / a) * std::sin(n * std::numbers::pi * x / a); }
  double phi_y(int m, double y) const { return std::sqrt(2.0 / b) * std::sin(m * std::numbers::pi * y / b); }
  double phi(int n, int m, Point p) const { return phi_x(n, p.x) * phi_y(m, p.y); }
};

inline EigenBasis eigen_basis(const DomainSpec& domain, int modes = kDefaultModes) {
  detail::require_rectangle(domain);
  detail::require(modes >= 1, "need at least one mode per axis");
  return EigenBasis{domain.width, domain.height, modes};
}

struct GffCovariance {
  double value = 0.0;
  double tail_estimate = 0.0;
  bool precision_warning() const { return tail_estimate > 1e-6; }
};

namespace detail {

// Tail bound for sum over modes outside [1, K]^2 of pi e^{-lambda eps} |phi phi| / lambda:
// with |phi phi| <= 4 / (ab) and the modes outside the square lying at
// rho >= K / max(a, b) in the scaled plane, the sum is about 2 E1(pi^2 rho^2 eps / 2).
inline double gff_tail_estimate(const EigenBasis& basis, double eps) {
  const double rho = basis.modes / std::max(basis.a, basis.b);
  const double arg = 0.5 * std::numbers::pi * std::numbers::pi * rho * rho * eps;
  if (arg <= 0.0) return std::numeric_limits<double>::infinity();
  if (arg > 700.0) return 0.0;
  return 2.0 * boost::math::expint(1, arg);
}

inline double layer_weight(double lambda, double t_lo, double t_hi) {
  // pi (e^{-lambda e^{-2 t_hi}} - e^{-lambda e^{-2 t_lo}}) / lambda; t_lo = -inf gives the full low band.
  const double hi = std::exp(-lambda * std::exp(-2.0 * t_hi));
  const double lo = std::isinf(t_lo) && t_lo < 0 ? 0.0 : std::exp(-lambda * std::exp(-2.0 * t_lo));
  return std::numbers::pi * (hi - lo) / lambda;
}

}  // namespace detail

// pi sum_{n,m <= K} e^{-lambda e^{-2t}} / lambda phi(x) phi(y).
inline GffCovariance gff_cutoff_covariance(const DomainSpec& domain, double t, Point x, Point y,
                                           int modes = kDefaultModes) {
  detail::require(modes >= 32, "gff covariance needs at least 32 modes per axis");
  detail::require(std::isfinite(t), "cut-off must be finite");
  const EigenBasis basis = eigen_basis(domain, modes);
  GffCovariance out;
  if (detail::on_boundary(domain, x) || detail::on_boundary(domain, y)) return out;
  std::vector<double> fx(modes), fy(modes);
  for (int n = 1; n <= modes; ++n) fx[n - 1] = basis.phi_x(n, x.x) * basis.phi_x(n, y.x);
  for (int m = 1; m <= modes; ++m) fy[m - 1] = basis.phi_y(m, x.y) * basis.phi_y(m, y.y);
  const double eps = std::exp(-2.0 * t);
  double sum = 0.0;
  for (int n = 1; n <= modes; ++n) {
    for (int m = 1; m <= modes; ++m) {
      const double lambda = basis.eigenvalue(n, m);
      sum += std::exp(-lambda * eps) / lambda * fx[n - 1] * fy[m - 1];
    }
  }
  out.value = std::numbers::pi * sum;
  out.tail_estimate = detail::gff_tail_estimate(basis, eps);
  return out;
}

// The same covariance by quadrature of the image-series heat kernel in s.  The
// whole-plane part of the kernel is integrated in closed form, so x = y works
// for finite t and x != y also for t = +inf (the Green function).
inline double gff_covariance_quadrature(const DomainSpec& domain, double t, Point x, Point y) {
  detail::require_rectangle(domain);
  if (detail::on_boundary(domain, x) || detail::on_boundary(domain, y)) return 0.0;
  const double r2 = (x.x - y.x) * (x.x - y.x) + (x.y - y.y) * (x.y - y.y);
  detail::require(std::isfinite(t) || r2 > 0.0, "the diagonal needs a finite cut-off");
  const double eps = std::isfinite(t) ? std::exp(-2.0 * t) : 0.0;
  const double a = domain.width, b = domain.height;
  // p = (g1 + r1)(g2 + r2) with g the direct terms; p - g1 g2 has no singularity.
  auto remainder = [&](double s) {
    const double g1 = detail::gaussian_density(x.x - y.x, s), g2 = detail::gaussian_density(x.y - y.y, s);
    const double q1 = detail::image_series_1d(a, s, x.x, y.x, true);
    const double q2 = detail::image_series_1d(b, s, x.y, y.y, true);
    return g1 * q2 + q1 * g2 + q1 * q2;
  };
  double near = quad::integrate(remainder, eps, 1.0, 16);
  // int_eps^1 e^{-r^2/2s} / (2 pi s) ds = (E1(r^2/2) - E1(r^2/2eps)) / 2 pi.
  double whole_plane;
  if (r2 == 0.0) {
    whole_plane = std::log(1.0 / eps) / (2.0 * std::numbers::pi);
  } else {
    const double hi = eps > 0.0 ? boost::math::expint(1, std::min(r2 / (2.0 * eps), 700.0)) : 0.0;
    whole_plane = (boost::math::expint(1, r2 / 2.0) - hi) / (2.0 * std::numbers::pi);
  }
  // int_1^inf p ds = sum e^{-lambda} / lambda phi phi, converging after a few modes.
  const EigenBasis basis = eigen_basis(domain, 64);
  double far = 0.0;
  for (int n = 1; n <= basis.modes; ++n) {
    for (int m = 1; m <= basis.modes; ++m) {
      const double lambda = basis.eigenvalue(n, m);
      if (lambda > 745.0) continue;
      far += std::exp(-lambda) / lambda * basis.phi(n, m, x) * basis.phi(n, m, y);
    }
  }
  return std::numbers::pi * (near + whole_plane + far);
}

struct ConformalRadius {
  double value = 0.0;
  bool near_boundary = false;
};

// Disc: 1 - |x|^2.  Rectangle: exp(lim_t [Var X_t(x) - t] + kHeatShift), from
// the quadrature representation with the whole-plane part removed exactly.
inline ConformalRadius conformal_radius(const DomainSpec& domain, Point x) {
  ConformalRadius out;
  detail::require(domain.inside(x.x, x.y), "conformal radius needs an interior point");
  out.near_boundary = domain.boundary_distance(x.x, x.y) < domain.margin;
  if (domain.kind == DomainSpec::Kind::unit_disc) {
    out.value = 1.0 - (x.x * x.x + x.y * x.y);
    return out;
  }
  // Var X_t - t = pi int_eps^inf p ds - (1/2) ln(1/eps); let eps -> 0.
  const double a = domain.width, b = domain.height;
  auto remainder = [&](double s) {
    const double g = detail::gaussian_density(0.0, s);
    const double q1 = detail::image_series_1d(a, s, x.x, x.x, true);
    const double q2 = detail::image_series_1d(b, s, x.y, x.y, true);
    return g * q2 + q1 * g + q1 * q2;
  };
  const double near = quad::integrate(remainder, 0.0, 1.0, 16);
  const EigenBasis basis = eigen_basis(domain, 64);
  double far = 0.0;
  for (int n = 1; n <= basis.modes; ++n) {
    for (int m = 1; m <= basis.modes; ++m) {
      const double lambda = basis.eigenvalue(n, m);
      if (lambda > 745.0) continue;
      const double f = basis.phi(n, m, x);
      far += std::exp(-lambda) / lambda * f * f;
    }
  }
  out.value = std::exp(std::numbers::pi * (near + far) + kHeatShift);
  return out;
}

namespace detail {

// Aitken extrapolation of v0, v1, v2; falls back to v2 when the differences
// are not geometric.
inline double aitken(double v0, double v1, double v2) {
  const double d1 = v1 - v0, d2 = v2 - v1;
  const double denom = d2 - d1;
  if (denom == 0.0 || d1 * d2 <= 0.0 || std::abs(d2) >= std::abs(d1)) return v2;
  return v2 - d2 * d2 / denom;
}

}  // namespace detail

// Conformal radius from the eigen-series variance shift on a t grid of three
// values (extrapolated).  Reports the truncation tail at the largest t.
inline ConformalRadius conformal_radius_series(const DomainSpec& domain, Point x, int modes = kDefaultModes,
                                               std::array<double, 3> t_grid = {3.0, 4.0, 5.0}) {
  detail::require(domain.inside(x.x, x.y), "conformal radius needs an interior point");
  double v[3];
  for (int k = 0; k < 3; ++k) v[k] = gff_cutoff_covariance(domain, t_grid[k], x, x, modes).value - t_grid[k];
  ConformalRadius out;
  out.value = std::exp(detail::aitken(v[0], v[1], v[2]) + kHeatShift);
  out.near_boundary = domain.boundary_distance(x.x, x.y) < domain.margin;
  return out;
}

// ---------------------------------------------------------------------------
// Rectangle sampler

// Eigen-coefficient sampler on the lattice cell centers.  Cells outside the
// rectangle carry zero.
class GffSampler {
 public:
  GffSampler(const DomainSpec& domain, const LatticeSpec& lattice, int modes = kDefaultModes)
      : domain_(domain), lattice_(lattice), basis_(eigen_basis(domain, modes)) {
    lattice.validate();
    detail::require(lattice.dimension == 2, "the GFF lives in d = 2");
    detail::require(domain.margin > 2.0 * lattice.spacing(), "interior margin must exceed two cells");
    const auto n = static_cast<Eigen::Index>(lattice.points_per_side);
    phi_x_.resize(n, modes);
    phi_y_.resize(n, modes);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = lattice.center(static_cast<std::size_t>(i));
      for (int k = 1; k <= modes; ++k) {
        phi_x_(i, k - 1) = (c > 0.0 && c < domain.width) ? basis_.phi_x(k, c) : 0.0;
        phi_y_(i, k - 1) = (c > 0.0 && c < domain.height) ? basis_.phi_y(k, c) : 0.0;
      }
    }
    lambda_.resize(modes, modes);
    for (int p = 1; p <= modes; ++p) {
      for (int q = 1; q <= modes; ++q) lambda_(p - 1, q - 1) = basis_.eigenvalue(p, q);
    }
  }

  const DomainSpec& domain() const { return domain_; }
  const LatticeSpec& lattice() const { return lattice_; }
  const EigenBasis& basis() const { return basis_; }

  // Increment X_{t_hi} - X_{t_lo}; t_lo = -inf gives X_{t_hi} itself.
  std::vector<double> increment(double t_lo, double t_hi, NormalStream& normal) const {
    detail::require(t_lo < t_hi && std::isfinite(t_hi), "increment needs t_lo < t_hi");
    const Eigen::MatrixXd coeff = weights(t_lo, t_hi).cwiseSqrt();
    Eigen::MatrixXd z(coeff.rows(), coeff.cols());
    for (Eigen::Index q = 0; q < z.cols(); ++q) {
      for (Eigen::Index p = 0; p < z.rows(); ++p) z(p, q) = normal();
    }
    // Values (i, j) = sum_pq phi_p(x_i) c_pq z_pq phi_q(y_j).
    const Eigen::MatrixXd field = phi_x_ * coeff.cwiseProduct(z) * phi_y_.transpose();
    return to_cells(field);
  }

  // Exact per-cell variance of the truncated field at cut-off t.
  std::vector<double> variance(double t) const {
    const Eigen::MatrixXd w = weights(-std::numeric_limits<double>::infinity(), t);
    const Eigen::MatrixXd v = phi_x_.cwiseAbs2() * w * phi_y_.cwiseAbs2().transpose();
    return to_cells(v);
  }

  double tail_estimate(double t) const { return detail::gff_tail_estimate(basis_, std::exp(-2.0 * t)); }

 private:
  Eigen::MatrixXd weights(double t_lo, double t_hi) const {
    return lambda_.unaryExpr([&](double l) { return detail::layer_weight(l, t_lo, t_hi); });
  }

  std::vector<double> to_cells(const Eigen::MatrixXd& m) const {
    const std::size_t n = lattice_.points_per_side;
    std::vector<double> out(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        out[j * n + i] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
    return out;
  }

  DomainSpec domain_;
  LatticeSpec lattice_;
  EigenBasis basis_;
  Eigen::MatrixXd phi_x_, phi_y_, lambda_;
};

inline std::vector<double> sample_gff_increment(const GffSampler& sampler, double t_lo, double t_hi,
                                                NormalStream& normal) {
  return sampler.increment(t_lo, t_hi, normal);
}

// Runs the field through the cut-offs t_1 < t_2 < ...; the first step draws
// X_{t_1} whole.  Layer j uses stream (master, replica, j) so trajectories are
// nested across t.
class GffSynthesizer {
 public:
  GffSynthesizer(const DomainSpec& domain, const LatticeSpec& lattice, std::vector<double> t_grid,
                 int modes = kDefaultModes)
      : sampler_(domain, lattice, modes), t_grid_(std::move(t_grid)) {
    detail::require(!t_grid_.empty(), "need at least one cut-off");
    for (std::size_t k = 0; k < t_grid_.size(); ++k) {
      detail::require(std::isfinite(t_grid_[k]) && (k == 0 || t_grid_[k] > t_grid_[k - 1]),
                      "cut-offs must be finite and increasing");
      variances_.push_back(sampler_.variance(t_grid_[k]));
    }
  }

  const GffSampler& sampler() const { return sampler_; }
  const std::vector<double>& t_grid() const { return t_grid_; }
  const std::vector<double>& variance(std::size_t k) const { return variances_.at(k); }

  void run(const RngLineage& lineage, const std::function<void(const FieldState&, std::size_t)>& visit) const {
    FieldState state = initial_state(sampler_.lattice(), lineage);
    double t_prev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < t_grid_.size(); ++k) {
      NormalStream normal(seed_stream(lineage.master_seed, lineage.replica, static_cast<std::uint32_t>(k)));
      const auto inc = sampler_.increment(t_prev, t_grid_[k], normal);
      state.t = t_grid_[k];
      const double shift = state.drift() * state.t;
      for (std::size_t i = 0; i < inc.size(); ++i) {
        state.values[i] += inc[i];
        state.running_sup[i] = std::max(state.running_sup[i], state.values[i] - shift);
      }
      state.variance = variances_[k];
      visit(state, k);
      t_prev = t_grid_[k];
    }
  }

 private:
  GffSampler sampler_;
  std::vector<double> t_grid_;
  std::vector<std::vector<double>> variances_;
};

// Per-cell conformal radius on a lattice: closed form on the disc, extrapolated
// eigen-series variance shift on rectangles.  Cells outside the domain get 0.
inline std::vector<double> conformal_radius_profile(const DomainSpec& domain, const LatticeSpec& lattice,
                                                    int modes = kDefaultModes,
                                                    std::array<double, 3> t_grid = {3.0, 4.0, 5.0}) {
  detail::require(lattice.dimension == 2, "conformal radius profile needs a planar lattice");
  const std::size_t n = lattice.points_per_side;
  std::vector<double> out(n * n, 0.0);
  if (domain.kind == DomainSpec::Kind::unit_disc) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        const double x = lattice.center(i), y = lattice.center(j);
        if (domain.inside(x, y)) out[j * n + i] = 1.0 - (x * x + y * y);
      }
    }
    return out;
  }
  GffSampler s(domain, lattice, modes);
  std::array<std::vector<double>, 3> v;
  for (int k = 0; k < 3; ++k) v[k] = s.variance(t_grid[k]);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = j * n + i;
      if (!domain.inside(lattice.center(i), lattice.center(j))) continue;
      out[c] = std::exp(detail::aitken(v[0][c] - t_grid[0], v[1][c] - t_grid[1], v[2][c] - t_grid[2]) + kHeatShift);
    }
  }
  return out;
}

namespace detail {

inline void require_lattice_in_domain(const DomainSpec& domain, const LatticeSpec& lattice) {
  const double lo = lattice.origin, hi = lattice.origin + lattice.side;
  const double tol = 1e-12 * lattice.side;
  if (domain.kind == DomainSpec::Kind::rectangle) {
    require(lo >= -tol && hi <= std::max(domain.width, domain.height) + tol,
            "lattice box does not cover the rectangle's frame");
  } else {
    require(lo >= -1.0 - tol && hi <= 1.0 + tol, "lattice box does not lie in the disc's frame [-1,1]^2");
  }
}

}  // namespace detail

// C(x, D)^2 M'(dx), cellwise.
inline ChaosMeasure liouville_measure(const ChaosMeasure& deriv, const DomainSpec& domain,
                                      const std::vector<double>& radius_profile) {
  detail::require(deriv.kind == MeasureKind::derivative, "the Liouville measure is built from a derivative measure");
  detail::require(deriv.lattice.dimension == 2, "the Liouville measure lives in d = 2");
  detail::require_lattice_in_domain(domain, deriv.lattice);
  detail::require(radius_profile.size() == deriv.weights.size(), "conformal radius profile does not match the lattice");
  ChaosMeasure out = deriv;
  out.kind = MeasureKind::liouville;
  for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] *= radius_profile[i] * radius_profile[i];
  return out;
}

inline ChaosMeasure liouville_measure(const ChaosMeasure& deriv, const DomainSpec& domain) {
  return liouville_measure(deriv, domain, conformal_radius_profile(domain, deriv.lattice));
}

// ---------------------------------------------------------------------------
// Unit disc

// ln(|1 - x conj(y)| / |x - y|).
inline double disc_green(Point x, Point y) {
  const std::complex<double> zx(x.x, x.y), zy(y.x, y.y);
  detail::require(std::abs(zx) < 1.0 && std::abs(zy) < 1.0, "disc Green function needs interior points");
  const double r = std::abs(zx - zy);
  if (r == 0.0) throw InvalidArgument("disc Green function is singular at x = y");
  return std::log(std::abs(1.0 - zx * std::conj(zy)) / r);
}

// Moebius self-map psi(z) = (z - a) / (1 - conj(a) z) of the unit disc.
struct Mobius {
  std::complex<double> a{0.0, 0.0};

  std::complex<double> operator()(std::complex<double> z) const { return (z - a) / (1.0 - std::conj(a) * z); }
  std::complex<double> inverse(std::complex<double> w) const { return (w + a) / (1.0 + std::conj(a) * w); }
  double derivative_modulus(std::complex<double> z) const {
    const double d = std::abs(1.0 - std::conj(a) * z);
    return (1.0 - std::norm(a)) / (d * d);
  }
  Point operator()(Point p) const {
    const auto w = (*this)(std::complex<double>(p.x, p.y));
    return {w.real(), w.imag()};
  }
};

// Circle averages of the disc GFF at radius e^{-t} around a point set.  For
// centers at distance >= 2 e^{-t} the covariance is G(x, y) exactly (mean-value
// property); the variance is t + ln C(x, D).
class DiscCircleSampler {
 public:
  DiscCircleSampler(std::vector<Point> points, double t) : points_(std::move(points)), t_(t) {
    detail::require(!points_.empty() && points_.size() <= 4096, "disc sampler needs 1..4096 points");
    detail::require(std::isfinite(t) && t > 0.0, "disc cut-off must be positive");
    const double eps = std::exp(-t);
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::MatrixXd cov(n, n);
    variance_.resize(points_.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Point p = points_[static_cast<std::size_t>(i)];
      const double r = std::hypot(p.x, p.y);
      detail::require(1.0 - r >= eps, "averaging circle leaves the disc at point " + std::to_string(i));
      variance_[static_cast<std::size_t>(i)] = t + std::log(1.0 - r * r);
      cov(i, i) = variance_[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < i; ++j) {
        const Point q = points_[static_cast<std::size_t>(j)];
        detail::require(std::hypot(p.x - q.x, p.y - q.y) >= 2.0 * eps * (1.0 - 1e-12),
                        "averaging circles overlap; raise t or coarsen the points");
        cov(i, j) = cov(j, i) = disc_green(p, q);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw SynthesisFailure("disc covariance is not positive definite");
    factor_ = llt.matrixL();
  }

  const std::vector<Point>& points() const { return points_; }
  const std::vector<double>& variance() const { return variance_; }
  double t() const { return t_; }

  std::vector<double> sample(NormalStream& normal) const {
    Eigen::VectorXd z(factor_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal();
    const Eigen::VectorXd x = factor_.triangularView<Eigen::Lower>() * z;
    return {x.data(), x.data() + x.size()};
  }

 private:
  std::vector<Point> points_;
  double t_;
  std::vector<double> variance_;
  Eigen::MatrixXd factor_;
};

namespace detail {

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Critical value of the two-sample KS statistic at level alpha (asymptotic).
inline double ks_critical(double alpha, std::size_t n, std::size_t m) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / static_cast<double>(n * m));
}

}  // namespace detail

struct ConformalCheckSpec {
  std::size_t replicas = 400;
  double t = 5.0;
  std::size_t points_per_side = 64;  // lattice over [-1, 1]^2
  double region_radius = 0.3;        // A = disc of this radius at the origin
  Mobius psi{};
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct ConformalCheckSample {
  std::vector<double> pulled_back;  // M^{X o psi + 2 ln|psi'|}(A)
  std::vector<double> pushed;       // M^{X}(psi(A))
};

// Both ensembles: the pulled-back field sampled at psi(x_i) for lattice cells
// x_i in A, and the field on lattice cells y_j in psi(A).  Each replica uses
// its own stream (replica index, side).
inline ConformalCheckSample conformal_masses(const ConformalCheckSpec& spec) {
  detail::require(spec.points_per_side >= 16 && spec.points_per_side <= 64,
                  "disc check runs at 16..64 points per side");
  detail::require(spec.region_radius > 0.0 && spec.region_radius < 1.0, "region radius must lie in (0, 1)");
  detail::require(std::abs(spec.psi.a) < 1.0, "Moebius parameter must lie in the disc");
  const double h = 2.0 / static_cast<double>(spec.points_per_side);
  auto center = [&](std::size_t i) { return -1.0 + (static_cast<double>(i) + 0.5) * h; };
  std::vector<Point> cells_a, images, cells_b;
  std::vector<double> jac4, radius2_a, radius2_b;
  for (std::size_t j = 0; j < spec.points_per_side; ++j) {
    for (std::size_t i = 0; i < spec.points_per_side; ++i) {
      const std::complex<double> z(center(i), center(j));
      if (std::abs(z) < spec.region_radius) {
        cells_a.push_back({z.real(), z.imag()});
        const auto w = spec.psi(z);
        images.push_back({w.real(), w.imag()});
        jac4.push_back(std::pow(spec.psi.derivative_modulus(z), 4));
        radius2_a.push_back(std::pow(1.0 - std::norm(z), 2));
      }
      if (std::abs(spec.psi.inverse(z)) < spec.region_radius) {
        cells_b.push_back({z.real(), z.imag()});
        radius2_b.push_back(std::pow(1.0 - std::norm(z), 2));
      }
    }
  }
  detail::require(!cells_a.empty() && !cells_b.empty(), "region contains no lattice cells");
  const DiscCircleSampler pulled(images, spec.t);
  const DiscCircleSampler direct(cells_b, spec.t);
  const double cell = h * h;
  // M^{X,D}: sum_i C^2 (2V - X) e^{2X - 2V} h^2, with the shift 2 ln|psi'| on
  // the pulled-back side.
  auto mass = [&](const DiscCircleSampler& s, const std::vector<double>& x, const std::vector<double>& c2,
                  const std::vector<double>* shift_jac4) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = s.variance()[i];
      const double shift = shift_jac4 ? 0.5 * std::log((*shift_jac4)[i]) : 0.0;  // 2 ln|psi'|
      const double xt = x[i] + shift;
      m += cell * c2[i] * (2.0 * v - xt) * std::exp(2.0 * xt - 2.0 * v);
    }
    return m;
  };
  ConformalCheckSample out;
  out.pulled_back.resize(spec.replicas);
  out.pushed.resize(spec.replicas);
  parallel_for(spec.replicas, spec.workers, [&](std::size_t r) {
    NormalStream n0(seed_stream(spec.seed, static_cast<std::uint32_t>(r), streams::kDiscField));
    NormalStream n1(seed_stream(spec.seed ^ 0x9e3779b97f4a7c15ull, static_cast<std::uint32_t>(r), streams::kDiscField));
    out.pulled_back[r] = mass(pulled, pulled.sample(n0), radius2_a, &jac4);
    out.pushed[r] = mass(direct, direct.sample(n1), radius2_b, nullptr);
  });
  return out;
}

inline ExperimentReport conformal_covariance_check(const ConformalCheckSpec& spec) {
  const auto masses = conformal_masses(spec);
  ExperimentReport report;
  report.name = "conformal";
  report.columns = {"replica", "pulled_back_mass", "pushed_mass"};
  report.metadata["replicas"] = spec.replicas;
  report.metadata["t"] = spec.t;
  report.metadata["points_per_side"] = spec.points_per_side;
  report.metadata["region_radius"] = spec.region_radius;
  report.metadata["mobius_a"] = {spec.psi.a.real(), spec.psi.a.imag()};
  for (std::size_t r = 0; r < spec.replicas; ++r) {
    report.add_row({static_cast<double>(r), masses.pulled_back[r], masses.pushed[r]});
  }
  const double ks = detail::ks_two_sample(masses.pulled_back, masses.pushed);
  const double critical = detail::ks_critical(0.01, spec.replicas, spec.replicas);
  report.metrics["ks_statistic"] = ks;
  report.metrics["ks_critical_1pct"] = critical;
  report.metrics["ks_below_critical"] = ks < critical;
  return report;
}

}  // namespace gmc
