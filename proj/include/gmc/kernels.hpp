#pragma once

// Seed kernels k and the star-scale covariances built from them,
//
//   K_t(x) = int_1^{e^t} k(u x) / u du = int_{|x|}^{e^t |x|} k(v) / v dv ,
//
// plus the massive-free-field seed k_m and the exact-scaling kernel g_u.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/bessel.hpp>

#include "gmc/error.hpp"
#include "gmc/fft.hpp"
#include "gmc/lattice.hpp"
#include "gmc/quadrature.hpp"

namespace gmc {

enum class SeedKind { triangle, disc_overlap, tabulated, mff, perfect };

inline std::string to_string(SeedKind kind) {
  switch (kind) {
    case SeedKind::triangle: return "triangle";
    case SeedKind::disc_overlap: return "disc_overlap";
    case SeedKind::tabulated: return "tabulated";
    case SeedKind::mff: return "mff";
    case SeedKind::perfect: return "perfect";
  }
  return "unknown";
}

// g_u(r) = ln+(2/r) for r >= u, ln(2/u) + 1 - r/u for r < u.
inline double perfect_kernel_g(double u, double r) {
  detail::require(u > 0.0 && u <= 1.0, "perfect kernel scale u must lie in (0, 1]");
  detail::require(r >= 0.0 && std::isfinite(r), "perfect kernel radius must be nonnegative");
  if (r >= u) return std::max(0.0, std::log(2.0 / r));
  return std::log(2.0 / u) + 1.0 - r / u;
}

// Spherical average of g_u(|<x, s>|) over the unit circle (d = 2 only).
inline double perfect_spherical_covariance(double u, double x, double y) {
  const double norm = std::hypot(x, y);
  if (norm == 0.0) return perfect_kernel_g(u, 0.0);
  // The integrand has kinks where norm*|cos| equals u or 2.
  auto integrand = [&](double theta) { return perfect_kernel_g(u, norm * std::abs(std::cos(theta))); };
  std::vector<double> cuts{0.0, 0.5 * std::numbers::pi};
  for (double level : {u, 2.0}) {
    if (level < norm) cuts.push_back(std::acos(level / norm));
  }
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) sum += quad::integrate(integrand, cuts[i], cuts[i + 1]);
  // Quarter period covers the full circle by symmetry.
  return sum / (0.5 * std::numbers::pi);
}

// k_m(r) = 1/2 int_0^inf exp(-m^2 r^2 / (2v) - v/2) dv.
inline double mff_seed(double mass, double r) {
  detail::require(mass > 0.0 && std::isfinite(mass), "mff mass must be positive");
  detail::require(r >= 0.0 && std::isfinite(r), "mff radius must be nonnegative");
  if (r == 0.0) return 1.0;
  const double a = 0.5 * mass * mass * r * r;
  auto integrand = [a](double v) { return v > 0.0 ? std::exp(-a / v - 0.5 * v) : 0.0; };
  // Integrand peaks at v = m r.
  const double peak = mass * r;
  return 0.5 * (quad::integrate(integrand, 0.0, peak, 4) + quad::integrate_to_infinity(integrand, peak));
}

namespace detail {

// Cumulative table of Phi(w) = int_0^w (k(v) - 1)/v dv with cubic Hermite
// interpolation, used for seeds without a closed-form antiderivative.  Nodes
// are geometric on (0, fine_limit) to follow v log v behaviour at the origin,
// then uniform with spacing `step` up to `radius`.
class LogIntegralTable {
 public:
  template <class K>
  LogIntegralTable(K&& k, double radius, double step, double slope_at_zero, double fine_limit = 0.0)
      : radius_(radius), slope0_(slope_at_zero) {
    auto f = [&](double v) { return v > 0.0 ? (k(v) - 1.0) / v : slope_at_zero; };
    if (fine_limit > 0.0) {
      first_ = fine_limit * 1e-10;
      for (double v = first_; v < fine_limit; v *= kRatio) nodes_.push_back(v);
      geometric_ = nodes_.size();
    }
    uniform_start_ = fine_limit;
    step_ = step;
    const auto uniform = static_cast<std::size_t>(std::ceil((radius - fine_limit) / step));
    for (std::size_t i = 0; i <= uniform; ++i) {
      const double v = std::min(radius, fine_limit + step * static_cast<double>(i));
      if (nodes_.empty() || v > nodes_.back()) nodes_.push_back(v);
    }
    phi_.resize(nodes_.size());
    dphi_.resize(nodes_.size());
    // Below the first node Phi is linear to O(w^2 log w).
    phi_[0] = slope_at_zero * nodes_[0];
    dphi_[0] = f(nodes_[0]);
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      phi_[i] = phi_[i - 1] + quad::integrate(f, nodes_[i - 1], nodes_[i], 1, 3);
      dphi_[i] = f(nodes_[i]);
    }
  }

  double radius() const { return radius_; }

  double phi(double w) const {
    w = std::clamp(w, 0.0, radius_);
    if (w <= nodes_[0]) return slope0_ * w;
    std::size_t i = 0;
    if (w < uniform_start_) {
      i = static_cast<std::size_t>(std::log(w / first_) / std::log(kRatio));
      i = std::min(i, geometric_ - 1);
      while (i > 0 && nodes_[i] > w) --i;
      while (i + 1 < nodes_.size() && nodes_[i + 1] <= w) ++i;
    } else {
      i = geometric_ + static_cast<std::size_t>((w - uniform_start_) / step_);
      if (geometric_ > 0 && i > 0 && nodes_[i] > w) --i;
    }
    if (i >= nodes_.size() - 1) return phi_.back();
    const double width = nodes_[i + 1] - nodes_[i];
    const double s = (w - nodes_[i]) / width;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * phi_[i] + h10 * width * dphi_[i] + h01 * phi_[i + 1] + h11 * width * dphi_[i + 1];
  }

 private:
  static constexpr double kRatio = 1.05;
  double radius_;
  double slope0_;
  double first_ = 0.0;
  double uniform_start_ = 0.0;
  double step_ = 0.0;
  std::size_t geometric_ = 0;
  std::vector<double> nodes_;
  std::vector<double> phi_;
  std::vector<double> dphi_;
};

inline double disc_overlap_value(double r) {
  if (r >= 1.0) return 0.0;
  return (2.0 / std::numbers::pi) * (std::acos(r) - r * std::sqrt(1.0 - r * r));
}

}  // namespace detail

// Radial seed kernel.  Immutable after construction; copies share the
// interpolation table.
class SeedKernel {
 public:
  // (1 - |x|)_+ : the default compact seed in d = 1.
  static SeedKernel triangle() { return SeedKernel(SeedKind::triangle, 1.0); }

  // Normalised self-convolution of the indicator of the disc of radius 1/2,
  //   k(r) = (2/pi)(acos r - r sqrt(1 - r^2)),  r <= 1,
  // positive definite in the plane; the default seed in d = 2.
  static SeedKernel disc_overlap() {
    SeedKernel k(SeedKind::disc_overlap, 1.0);
    k.table_ = std::make_shared<const detail::LogIntegralTable>(detail::disc_overlap_value, 1.0, 1.0 / 8192,
                                                                -4.0 / std::numbers::pi);
    return k;
  }

  // k_m(r) = m r K_1(m r), truncated where it drops below `epsilon`.
  static SeedKernel mff(double mass, double epsilon = 1e-12) {
    detail::require(mass > 0.0 && std::isfinite(mass), "mff mass must be positive");
    detail::require(epsilon > 0.0, "mff seeds need a positive truncation epsilon");
    SeedKernel k(SeedKind::mff, std::numeric_limits<double>::infinity());
    k.mass_ = mass;
    k.epsilon_ = epsilon;
    double lo = 0.0;
    double hi = 1.0 / mass;
    while (k.raw_mff(hi) > epsilon) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (k.raw_mff(mid) > epsilon ? lo : hi) = mid;
    }
    k.support_ = hi;
    const double m = mass;
    k.table_ = std::make_shared<const detail::LogIntegralTable>(
        [m](double v) { return v * m * boost::math::cyl_bessel_k(1, m * v); }, hi, 1.0 / (256.0 * m), 0.0,
        1.0 / (16.0 * m));
    return k;
  }

  // Piecewise-linear seed through (radius_i, value_i).  Beyond the last node the
  // seed is held at the last value.
  static SeedKernel tabulated(std::vector<double> radius, std::vector<double> value,
                              double epsilon = 0.0) {
    detail::require(radius.size() == value.size() && radius.size() >= 2,
                    "tabulated seed needs at least two (radius, value) rows");
    detail::require(radius.front() == 0.0, "tabulated seed must start at radius 0");
    detail::require(value.front() == 1.0, "tabulated seed must satisfy k(0) = 1");
    for (std::size_t i = 1; i < radius.size(); ++i) {
      detail::require(radius[i] > radius[i - 1], "tabulated radii must be strictly increasing");
    }
    for (double v : value) detail::require(std::isfinite(v), "tabulated seed values must be finite");
    SeedKernel k(SeedKind::tabulated, std::numeric_limits<double>::infinity());
    k.epsilon_ = epsilon;
    if (value.back() == 0.0) {
      std::size_t last = value.size() - 1;
      while (last > 0 && value[last - 1] == 0.0) --last;
      k.support_ = radius[last];
    }
    k.radius_ = std::move(radius);
    k.value_ = std::move(value);
    return k;
  }

  static SeedKernel perfect() { return SeedKernel(SeedKind::perfect, 2.0); }

  SeedKind kind() const { return kind_; }
  double support_radius() const { return support_; }
  double truncation_epsilon() const { return epsilon_; }
  double mass() const { return mass_; }
  double value_at_zero() const { return (*this)(0.0); }

  double operator()(double r) const {
    r = std::abs(r);
    switch (kind_) {
      case SeedKind::triangle: return std::max(0.0, 1.0 - r);
      case SeedKind::disc_overlap: return detail::disc_overlap_value(r);
      case SeedKind::mff: return r >= support_ ? 0.0 : raw_mff(r);
      case SeedKind::perfect: return perfect_kernel_g(1.0, r);
      case SeedKind::tabulated: return tabulated_value(r);
    }
    return 0.0;
  }

  // int_{w1}^{w2} k(v)/v dv for 0 < w1 <= w2.
  double log_integral(double w1, double w2) const {
    if (!(w2 > w1)) return 0.0;
    switch (kind_) {
      case SeedKind::triangle: {
        if (w1 >= 1.0) return 0.0;
        const double b = std::min(w2, 1.0);
        return std::log(b / w1) - (b - w1);
      }
      case SeedKind::disc_overlap:
      case SeedKind::mff: {
        const double cap = table_->radius();
        if (w1 >= cap) return 0.0;
        const double b = std::min(w2, cap);
        return std::log(b / w1) + table_->phi(b) - table_->phi(w1);
      }
      case SeedKind::tabulated: return tabulated_log_integral(w1, w2);
      case SeedKind::perfect:
        throw InvalidArgument("the perfect kernel is a covariance, not a star seed");
    }
    return 0.0;
  }

 private:
  SeedKernel(SeedKind kind, double support) : kind_(kind), support_(support) {}

  double raw_mff(double r) const {
    if (r == 0.0) return 1.0;
    const double x = mass_ * r;
    return x * boost::math::cyl_bessel_k(1, x);
  }

  double tabulated_value(double r) const {
    if (r >= radius_.back()) return value_.back();
    const auto it = std::upper_bound(radius_.begin(), radius_.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - radius_.begin()) - 1;
    const double s = (r - radius_[i]) / (radius_[i + 1] - radius_[i]);
    return value_[i] + s * (value_[i + 1] - value_[i]);
  }

  // Exact on each linear piece: int (c0 + c1 v)/v dv = c0 ln(b/a) + c1 (b - a).
  double tabulated_log_integral(double w1, double w2) const {
    double total = 0.0;
    auto it = std::upper_bound(radius_.begin(), radius_.end(), w1);
    std::size_t i = static_cast<std::size_t>(it - radius_.begin());
    double a = w1;
    while (a < w2) {
      if (i >= radius_.size()) {
        total += value_.back() * std::log(w2 / a);
        break;
      }
      const double b = std::min(w2, radius_[i]);
      const double slope = (value_[i] - value_[i - 1]) / (radius_[i] - radius_[i - 1]);
      const double c0 = value_[i - 1] - slope * radius_[i - 1];
      total += c0 * std::log(b / a) + slope * (b - a);
      a = b;
      ++i;
    }
    return total;
  }

  SeedKind kind_;
  double support_;
  double epsilon_ = 0.0;
  double mass_ = 0.0;
  std::vector<double> radius_;
  std::vector<double> value_;
  std::shared_ptr<const detail::LogIntegralTable> table_;
};

// Two-column text file (radius value); '#' starts a comment.
inline SeedKernel load_tabulated_seed(const std::string& path, double epsilon = 0.0) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open seed table " + path);
  std::vector<double> radius;
  std::vector<double> value;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
    std::istringstream fields(line);
    double r = 0.0;
    double v = 0.0;
    if (!(fields >> r)) continue;
    if (!(fields >> v)) throw FormatError(path + ":" + std::to_string(line_no) + ": expected two columns");
    radius.push_back(r);
    value.push_back(v);
  }
  try {
    return SeedKernel::tabulated(std::move(radius), std::move(value), epsilon);
  } catch (const InvalidArgument& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Covariance of the increment X_{t_hi} - X_{t_lo} at lag r:
//   int_{e^{t_lo} r}^{e^{t_hi} r} k(v)/v dv,  equal to (t_hi - t_lo) k(0) at r = 0.
inline double layer_covariance(const SeedKernel& seed, double t_lo, double t_hi, double r) {
  if (r == 0.0) return (t_hi - t_lo) * seed.value_at_zero();
  return seed.log_integral(std::exp(t_lo) * r, std::exp(t_hi) * r);
}

struct StarCovariance {
  SeedKernel seed = SeedKernel::triangle();
  int dimension = 1;
  int quadrature_nodes = 16;
};

// K_t(x).  Closed form for the triangle seed; adaptive quadrature in the
// log-scale variable otherwise (independent of the tabulated route used by the
// lattice sampler).
inline double star_covariance(const StarCovariance& cov, double t, std::span<const double> x) {
  detail::require(std::isfinite(t) && t >= 0.0, "star covariance needs a finite t >= 0");
  detail::require(cov.quadrature_nodes >= 16, "star covariance needs at least 16 quadrature nodes");
  detail::require(static_cast<int>(x.size()) == cov.dimension, "point dimension mismatch");
  double r2 = 0.0;
  for (double xi : x) {
    detail::require(std::isfinite(xi), "star covariance needs a finite point");
    r2 += xi * xi;
  }
  const double r = std::sqrt(r2);
  const SeedKernel& k = cov.seed;
  if (k.kind() == SeedKind::perfect) {
    const double u = std::exp(-t);
    return cov.dimension == 1 ? perfect_kernel_g(u, r) : perfect_spherical_covariance(u, x[0], x[1]);
  }
  if (r == 0.0) return t * k.value_at_zero();
  if (k.kind() == SeedKind::triangle) {
    if (r >= 1.0) return 0.0;
    const double upper = std::min(std::exp(t) * r, 1.0);
    return std::log(upper / r) - (upper - r);
  }
  // K_t(r) = int_0^t k(e^s r) ds, cut where e^s r reaches the support edge.
  double s_end = t;
  if (std::isfinite(k.support_radius())) {
    if (r >= k.support_radius()) return 0.0;
    s_end = std::min(t, std::log(k.support_radius() / r));
  }
  auto integrand = [&](double s) { return k(std::exp(s) * r); };
  return quad::integrate(integrand, 0.0, s_end, cov.quadrature_nodes);
}

inline double star_covariance(const StarCovariance& cov, double t, double x) {
  const double p[1] = {x};
  return star_covariance(cov, t, std::span<const double>(p, 1));
}

struct ValidationReport {
  double min_spectral = 0.0;
  double max_spectral = 0.0;
  double effective_support_radius = 0.0;
  double lipschitz_at_zero = 0.0;
  bool positive_definite = false;
  // All spectral mass sits at the zero frequency (a constant kernel).
  bool degenerate = false;
  bool normalized = false;
};

// Numerical diagnostics of a seed on the given lattice spacing.
inline ValidationReport validate_seed(const SeedKernel& seed, const LatticeSpec& lattice) {
  lattice.validate();
  ValidationReport report;
  const double h = lattice.spacing();
  const int d = lattice.dimension;
  report.normalized = std::abs(seed.value_at_zero() - 1.0) < 1e-12;

  // Effective support at the truncation level.
  const double eps = seed.truncation_epsilon();
  if (eps <= 0.0 || std::isfinite(seed.support_radius())) {
    report.effective_support_radius = seed.support_radius();
  }
  if (eps > 0.0) {
    double r = 0.0;
    const double step = h / 4.0;
    const double limit = std::isfinite(seed.support_radius()) ? seed.support_radius() : 1e4;
    double last_above = 0.0;
    for (r = 0.0; r <= limit; r += step) {
      if (std::abs(seed(r)) > eps) last_above = r;
    }
    report.effective_support_radius =
        last_above + step >= limit && !std::isfinite(seed.support_radius())
            ? std::numeric_limits<double>::infinity()
            : std::min(last_above + step, seed.support_radius());
  }

  double lip = 0.0;
  for (double delta : {h, h / 2, h / 4}) lip = std::max(lip, std::abs(seed(0.0) - seed(delta)) / delta);
  report.lipschitz_at_zero = lip;

  // Sample on a padded torus, periodising over images when the support is
  // finite and wrapping to the nearest image otherwise.
  const double support = std::isfinite(report.effective_support_radius)
                             ? report.effective_support_radius
                             : std::numeric_limits<double>::infinity();
  std::size_t m = 2 * lattice.points_per_side;
  if (std::isfinite(support)) {
    const auto need = static_cast<std::size_t>(2.0 * std::ceil(support / h) + 2.0);
    m = std::max(m, need);
  }
  const std::size_t cap = d == 1 ? (std::size_t{1} << 22) : 2048;
  m = fft::good_size(std::min(m, cap));
  const double period = static_cast<double>(m) * h;
  const int images = std::isfinite(support) ? static_cast<int>(std::ceil(support / period)) : 0;
  auto radial = [&](double dx, double dy) {
    if (images == 0) {
      const double wx = std::min(std::abs(dx), period - std::abs(dx));
      const double wy = std::min(std::abs(dy), period - std::abs(dy));
      return seed(std::hypot(wx, wy));
    }
    double sum = 0.0;
    for (int a = -images; a <= images; ++a) {
      for (int b = (d == 1 ? 0 : -images); b <= (d == 1 ? 0 : images); ++b) {
        const double r = std::hypot(dx + a * period, dy + b * period);
        if (r < support) sum += seed(r);
      }
    }
    return sum;
  };
  std::vector<std::size_t> shape = d == 1 ? std::vector<std::size_t>{m} : std::vector<std::size_t>{m, m};
  const std::vector<double> spectrum = fft::symmetric_spectrum(shape, [&](std::size_t i, std::size_t j) {
    return radial(static_cast<double>(i) * h, static_cast<double>(j) * h);
  }, true);
  report.min_spectral = *std::min_element(spectrum.begin(), spectrum.end());
  report.max_spectral = *std::max_element(spectrum.begin(), spectrum.end());
  double off_zero = 0.0;
  for (std::size_t i = 1; i < spectrum.size(); ++i) off_zero = std::max(off_zero, std::abs(spectrum[i]));
  report.degenerate = off_zero <= 1e-10 * std::abs(spectrum[0]);
  report.positive_definite = report.min_spectral >= -1e-10 * std::max(1.0, report.max_spectral) && !report.degenerate;
  return report;
}

}  // namespace gmc
