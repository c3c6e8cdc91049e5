#pragma once

// Moment, spectrum and ratio estimators over replica outputs, plus a Monte
// Carlo comparator for Kahane's convexity inequality.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include "gmc/error.hpp"
#include "gmc/report.hpp"
#include "gmc/rng.hpp"

namespace gmc {

inline double xi(double q, int d) { return 2.0 * d * q - d * q * q; }

struct MomentEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t used = 0;
  std::size_t nonpositive = 0;  // zero (or negative) masses left out of the mean
};

// Mean of mass^q over the positive masses with jackknife SE.
inline MomentEstimate moment_estimate(const std::vector<double>& masses, double q) {
  detail::require(masses.size() >= 100, "moment estimation needs at least 100 masses");
  detail::require(std::isfinite(q), "q must be finite");
  MomentEstimate out;
  std::vector<double> powered;
  powered.reserve(masses.size());
  for (double m : masses) {
    detail::require(!std::isnan(m), "masses must not be NaN");
    if (m > 0.0) {
      powered.push_back(q == 0.0 ? 1.0 : std::pow(m, q));
    } else {
      ++out.nonpositive;
    }
  }
  if (powered.empty()) throw DegenerateSample("every mass in the sample is zero");
  out.used = powered.size();
  const double n = static_cast<double>(powered.size());
  double sum = 0.0;
  for (double v : powered) sum += v;
  out.value = sum / n;
  if (powered.size() < 2) return out;
  // Leave-one-out means (s - v) / (n - 1); their spread gives the jackknife SE.
  double jack = 0.0;
  for (double v : powered) {
    const double loo = (sum - v) / (n - 1.0);
    jack += (loo - out.value) * (loo - out.value);
  }
  out.standard_error = std::sqrt((n - 1.0) / n * jack);
  if (std::all_of(powered.begin(), powered.end(), [&](double v) { return v == powered.front(); })) {
    out.value = powered.front();
    out.standard_error = 0.0;
  }
  return out;
}

struct SpectrumFit {
  double slope = 0.0;
  double standard_error = 0.0;
  double intercept = 0.0;
  double target = 0.0;
  bool has_target = false;  // the scaling law is proven for q < 1 only
  std::vector<double> scales;
  std::vector<double> log_moments;
  std::size_t excluded_masses = 0;
};

namespace detail {

inline std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace detail

// OLS slope of log mean(mass^q) against log lambda.  By default entry i of every
// sample is replica i, so the jackknife leaves one replica out of every scale at
// once.  With `replicas` > 0 each sample holds that many equal contiguous blocks
// (several boxes per replica) and a whole block is left out.  Samples that fit
// neither layout fall back to delta-method propagation.
inline SpectrumFit spectrum_fit(const std::map<double, std::vector<double>>& masses_by_scale, double q, int d,
                                double min_scale = 0.0, std::size_t replicas = 0) {
  detail::require(d == 1 || d == 2, "dimension must be 1 or 2");
  SpectrumFit fit;
  fit.target = xi(q, d);
  fit.has_target = q >= 0.0 && q < 1.0;
  struct Scale {
    double lambda;
    const std::vector<double>* masses;
    std::vector<double> powered;  // NaN marks an excluded mass
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::vector<Scale> scales;
  for (const auto& [lambda, masses] : masses_by_scale) {
    if (!(lambda > 0.0) || lambda < min_scale || masses.size() < 2) continue;
    Scale s{lambda, &masses, {}, 0.0, 0};
    s.powered.reserve(masses.size());
    for (double m : masses) {
      if (m > 0.0) {
        const double v = q == 0.0 ? 1.0 : std::pow(m, q);
        s.powered.push_back(v);
        s.sum += v;
        ++s.count;
      } else {
        s.powered.push_back(std::nan(""));
        ++fit.excluded_masses;
      }
    }
    if (s.count >= 2) scales.push_back(std::move(s));
  }
  if (scales.size() < 4) throw InsufficientScales("spectrum fit needs at least 4 usable scales");
  if (scales.back().lambda / scales.front().lambda < 4.0 * (1.0 - 1e-12)) {
    throw InsufficientScales("spectrum fit scales must span at least two octaves");
  }
  std::vector<double> x, y;
  for (const auto& s : scales) {
    x.push_back(std::log(s.lambda));
    y.push_back(std::log(s.sum / static_cast<double>(s.count)));
    fit.scales.push_back(s.lambda);
  }
  fit.log_moments = y;
  std::tie(fit.slope, fit.intercept) = detail::ols(x, y);

  const std::size_t n = replicas > 0 ? replicas : scales.front().powered.size();
  const bool paired = std::all_of(scales.begin(), scales.end(), [&](const Scale& s) {
    return replicas > 0 ? s.powered.size() % replicas == 0 : s.powered.size() == n;
  });
  if (paired && n >= 2) {
    double mean = 0.0;
    std::vector<double> loo_slopes(n);
    std::vector<double> yl(scales.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < scales.size(); ++k) {
        const auto& s = scales[k];
        const std::size_t block = s.powered.size() / n;
        double sum = s.sum;
        std::size_t cnt = s.count;
        for (std::size_t j = i * block; j < (i + 1) * block; ++j) {
          if (std::isnan(s.powered[j])) continue;
          sum -= s.powered[j];
          --cnt;
        }
        yl[k] = std::log(sum / static_cast<double>(cnt));
      }
      loo_slopes[i] = detail::ols(x, yl).first;
      mean += loo_slopes[i];
    }
    mean /= static_cast<double>(n);
    double jack = 0.0;
    for (double v : loo_slopes) jack += (v - mean) * (v - mean);
    fit.standard_error = std::sqrt((static_cast<double>(n) - 1.0) / static_cast<double>(n) * jack);
  } else {
    // Var(slope) = sum_k w_k^2 Var(log mean_k), w_k = (x_k - xbar) / Sxx.
    double xbar = 0.0;
    for (double v : x) xbar += v;
    xbar /= static_cast<double>(x.size());
    double sxx = 0.0;
    for (double v : x) sxx += (v - xbar) * (v - xbar);
    double var = 0.0;
    for (std::size_t k = 0; k < scales.size(); ++k) {
      const auto& s = scales[k];
      const double m = s.sum / static_cast<double>(s.count);
      double ss = 0.0;
      for (double v : s.powered) {
        if (!std::isnan(v)) ss += (v - m) * (v - m);
      }
      const double var_mean = ss / static_cast<double>(s.count - 1) / static_cast<double>(s.count);
      const double w = (x[k] - xbar) / sxx;
      var += w * w * var_mean / (m * m);
    }
    fit.standard_error = std::sqrt(var);
  }
  return fit;
}

inline ExperimentReport spectrum_report(const std::vector<std::pair<double, SpectrumFit>>& fits, int d) {
  ExperimentReport report;
  report.name = "spectrum";
  report.columns = {"q", "slope", "slope_se", "target", "deviation"};
  report.exact_columns = {"target"};
  report.metadata["d"] = d;
  bool any_untargeted = false;
  for (const auto& [q, fit] : fits) {
    report.add_row({q, fit.slope, fit.standard_error, fit.has_target ? fit.target : std::nan(""),
                    fit.has_target ? fit.slope - fit.target : std::nan("")});
    any_untargeted = any_untargeted || !fit.has_target;
  }
  if (any_untargeted) report.flags.push_back("no_target_for_q_outside_0_1");
  return report;
}

namespace detail {

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct RatioSample {
  double t = 0.0;
  std::vector<double> seneta;      // sqrt(t) M_t^{sqrt(2d)}(A), one per replica
  std::vector<double> derivative;  // M'_t(A) for the same replicas
};

inline constexpr double kSenetaConstant = 0.79788456080286535588;  // sqrt(2 / pi)

inline ExperimentReport seneta_ratio_series(const std::vector<RatioSample>& samples) {
  ExperimentReport report;
  report.name = "seneta";
  report.columns = {"t", "median_ratio", "q25", "q75", "iqr", "reference", "distance", "replicas_used", "excluded"};
  report.exact_columns = {"t", "reference", "replicas_used", "excluded"};
  report.metadata["target"] = kSenetaConstant;
  bool single = false;
  for (const auto& s : samples) {
    detail::require(s.seneta.size() == s.derivative.size(), "ratio sample sizes differ");
    std::vector<double> ratios;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < s.seneta.size(); ++i) {
      if (s.derivative[i] > 0.0) {
        ratios.push_back(s.seneta[i] / s.derivative[i]);
      } else {
        ++excluded;
      }
    }
    if (ratios.empty()) throw DegenerateSample("no replica with positive derivative mass at t=" + format_number(s.t));
    std::sort(ratios.begin(), ratios.end());
    const double med = detail::quantile_sorted(ratios, 0.5);
    double q25 = std::nan(""), q75 = std::nan("");
    if (ratios.size() >= 2) {
      q25 = detail::quantile_sorted(ratios, 0.25);
      q75 = detail::quantile_sorted(ratios, 0.75);
    } else {
      single = true;
    }
    report.add_row({s.t, med, q25, q75, q75 - q25, kSenetaConstant, std::abs(med - kSenetaConstant), static_cast<double>(ratios.size()),
                    static_cast<double>(excluded)});
  }
  if (single) report.flags.push_back("single_replica_iqr_undefined");
  // Trend over the t grid: distance nonincreasing in t.
  bool monotone = true;
  for (std::size_t r = 1; r < report.rows.size(); ++r) {
    if (report.at(r, "t") > report.at(r - 1, "t") && report.at(r, "distance") > report.at(r - 1, "distance")) {
      monotone = false;
    }
  }
  report.metrics["distance_nonincreasing"] = monotone;
  return report;
}

// ---------------------------------------------------------------------------
// Kahane comparator

struct ConvexForm {
  enum Kind { square, exp_negative } kind = square;
  double s = 1.0;

  double operator()(double x) const { return kind == square ? x * x : std::exp(-s * x); }
  std::string name() const { return kind == square ? "square" : "exp_negative(" + format_number(s) + ")"; }
};

namespace detail {

inline void check_covariance(const Eigen::MatrixXd& c, const std::string& label) {
  require(c.rows() == c.cols() && c.rows() >= 1 && c.rows() <= 8, label + " must be square with dimension 1..8");
  require(c.allFinite(), label + " must be finite");
  require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + c.cwiseAbs().maxCoeff()),
          label + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  const double top = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  require(eig.eigenvalues().minCoeff() >= -1e-12 * top, label + " must be positive semidefinite");
}

// Symmetric square root factor F with F F^T = c (c may be singular).
inline Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Two-point E[F(e^{X1 - v1/2} + e^{X2 - v2/2})] by nested quadrature.
inline double two_point_expectation(const Eigen::MatrixXd& c, const ConvexForm& f, const Eigen::VectorXd& sigma) {
  const double v1 = c(0, 0), v2 = c(1, 1);
  const double a = std::sqrt(v1);
  const double rho = a > 0.0 ? c(0, 1) / a : 0.0;
  const double b = std::sqrt(std::max(0.0, v2 - rho * rho));
  const double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto gauss = [&](double z) { return phi0 * std::exp(-0.5 * z * z); };
  // The integrand is smooth and Gaussian-damped: fixed Gauss-Legendre panels
  // converge far below 1e-12.
  using rule = boost::math::quadrature::gauss<double, 30>;
  auto panels = [](auto g) {
    double s = 0.0;
    for (int p = 0; p < 24; ++p) s += rule::integrate(g, -12.0 + p, -11.0 + p);
    return s;
  };
  return panels([&](double z1) {
    const double m1 = sigma(0) * std::exp(a * z1 - 0.5 * v1);
    const double mean2 = rho * z1 - 0.5 * v2;
    if (b == 0.0) return gauss(z1) * f(m1 + sigma(1) * std::exp(mean2));
    return gauss(z1) * panels([&](double z2) { return gauss(z2) * f(m1 + sigma(1) * std::exp(mean2 + b * z2)); });
  });
}

}  // namespace detail

// Closed form for F = square: sum_ij sigma_i sigma_j e^{C_ij}.
inline double kahane_square_exact(const Eigen::MatrixXd& c, const Eigen::VectorXd& sigma) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) s += sigma(i) * sigma(j) * std::exp(c(i, j));
  }
  return s;
}

// Both sides of E[F(sum_i sigma_i e^{X_i - Var/2})] for X ~ N(0, A) and
// X ~ N(0, B), using common normals.  The verdict holds when the A side does
// not exceed the B side by more than 4 SE of the paired difference.
inline ExperimentReport kahane_check(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b, const ConvexForm& form,
                                     std::size_t n_samples, std::uint64_t seed, std::uint32_t replica = 0,
                                     Eigen::VectorXd sigma = {}) {
  detail::check_covariance(cov_a, "cov_A");
  detail::check_covariance(cov_b, "cov_B");
  detail::require(cov_a.rows() == cov_b.rows(), "covariance dimensions differ");
  detail::require(n_samples >= 2, "need at least two samples");
  detail::require(form.kind == ConvexForm::square || form.s > 0.0, "exp_negative needs s > 0");
  const Eigen::Index n = cov_a.rows();
  const double tol = 1e-12 * (1.0 + cov_b.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (cov_a(i, j) > cov_b(i, j) + tol) {
        throw InvalidArgument("cov_A must be dominated entrywise by cov_B (entry " + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
    }
  }
  if (sigma.size() == 0) sigma = Eigen::VectorXd::Ones(n);
  detail::require(sigma.size() == n && (sigma.array() >= 0.0).all(), "weights must be nonnegative, one per point");

  const Eigen::MatrixXd fa = detail::covariance_factor(cov_a);
  const Eigen::MatrixXd fb = detail::covariance_factor(cov_b);
  const Eigen::VectorXd ha = 0.5 * cov_a.diagonal();
  const Eigen::VectorXd hb = 0.5 * cov_b.diagonal();
  NormalStream normal(seed_stream(seed, replica, streams::kKahane));
  Eigen::VectorXd z(n);
  double sa = 0.0, sa2 = 0.0, sb = 0.0, sb2 = 0.0, sd = 0.0, sd2 = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
    const double ma = sigma.dot(((fa * z) - ha).array().exp().matrix());
    const double mb = sigma.dot(((fb * z) - hb).array().exp().matrix());
    const double va = form(ma), vb = form(mb);
    sa += va;
    sa2 += va * va;
    sb += vb;
    sb2 += vb * vb;
    sd += va - vb;
    sd2 += (va - vb) * (va - vb);
  }
  const double m = static_cast<double>(n_samples);
  auto se = [&](double s, double s2) { return std::sqrt(std::max(0.0, s2 / m - (s / m) * (s / m)) / (m - 1.0)); };

  double exact_a = std::nan(""), exact_b = std::nan("");
  if (form.kind == ConvexForm::square) {
    exact_a = kahane_square_exact(cov_a, sigma);
    exact_b = kahane_square_exact(cov_b, sigma);
  } else if (n == 2) {
    exact_a = detail::two_point_expectation(cov_a, form, sigma);
    exact_b = detail::two_point_expectation(cov_b, form, sigma);
  }

  ExperimentReport report;
  report.name = "kahane";
  report.columns = {"side", "mc_mean", "mc_se", "exact"};
  report.exact_columns = {"exact"};
  report.metadata["convex_form"] = form.name();
  report.metadata["dimension"] = n;
  report.metadata["samples"] = n_samples;
  report.add_row({0.0, sa / m, se(sa, sa2), exact_a});
  report.add_row({1.0, sb / m, se(sb, sb2), exact_b});
  const double diff = sd / m;
  const double diff_se = se(sd, sd2);
  report.metrics["difference"] = diff;
  report.metrics["difference_se"] = diff_se;
  const bool holds = diff <= 4.0 * diff_se;
  report.metrics["holds"] = holds;
  if (!std::isnan(exact_a)) report.metrics["exact_holds"] = exact_a <= exact_b * (1.0 + 1e-12);
  report.flags.push_back(holds ? "holds" : "violated");
  return report;
}

// A = G G^T, B = A + H H^T with H >= 0 entrywise, so B - A is PSD and
// entrywise nonnegative.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> random_dominated_pair(int dim, NormalStream& normal,
                                                                         double scale = 0.6) {
  detail::require(dim >= 1 && dim <= 8, "dimension must be 1..8");
  Eigen::MatrixXd g(dim, dim), h(dim, dim);
  const double s = scale / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      g(i, j) = s * normal();
      h(i, j) = s * std::abs(normal());
    }
  }
  Eigen::MatrixXd a = g * g.transpose();
  Eigen::MatrixXd b = a + h * h.transpose();
  return {a, b};
}

}  // namespace gmc
