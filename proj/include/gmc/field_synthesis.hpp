#pragma once

// Layered synthesis of the cut-off field X_t on a lattice.  The scale axis
// [0, t_max] is cut into layers; the increment over [t_lo, t_hi] is a
// stationary Gaussian field with covariance
//
//   C(r) = int_{e^{t_lo} r}^{e^{t_hi} r} k(v)/v dv ,
//
// independent across layers, so partial sums reproduce K_{s ^ t}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "gmc/error.hpp"
#include "gmc/fft.hpp"
#include "gmc/kernels.hpp"
#include "gmc/lattice.hpp"
#include "gmc/report.hpp"
#include "gmc/rng.hpp"

namespace gmc {

struct ScaleLayer {
  std::size_t index = 0;  // 0-based position in the plan; selects the random stream
  double t_lo = 0.0;
  double t_hi = 0.0;
  SeedKernel seed = SeedKernel::triangle();

  double width() const { return t_hi - t_lo; }
  double support_radius() const { return seed.support_radius() * std::exp(-t_lo); }
  double covariance(double r) const { return layer_covariance(seed, t_lo, t_hi, r); }
};

// Layers from an explicit increasing list of boundaries b_0 = 0 < b_1 < ...
inline std::vector<ScaleLayer> layers_from_boundaries(const SeedKernel& seed,
                                                      const std::vector<double>& boundaries) {
  detail::require(seed.kind() != SeedKind::perfect, "the perfect kernel cannot drive layered synthesis");
  detail::require(boundaries.size() >= 2 && boundaries.front() == 0.0, "layer boundaries must start at 0");
  std::vector<ScaleLayer> layers;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    detail::require(boundaries[i + 1] > boundaries[i], "layer boundaries must increase strictly");
    layers.push_back(ScaleLayer{i, boundaries[i], boundaries[i + 1], seed});
  }
  return layers;
}

inline std::vector<ScaleLayer> plan_layers(const SeedKernel& seed, double t_max, int layers_per_unit_t) {
  detail::require(std::isfinite(t_max) && t_max >= 0.25, "t_max must be at least 0.25");
  detail::require(layers_per_unit_t >= 1, "layers_per_unit_t must be positive");
  const auto count = static_cast<std::size_t>(std::ceil(t_max * layers_per_unit_t - 1e-9));
  std::vector<double> boundaries(count + 1);
  for (std::size_t i = 0; i <= count; ++i) boundaries[i] = t_max * static_cast<double>(i) / count;
  boundaries.back() = t_max;
  return layers_from_boundaries(seed, boundaries);
}

enum class SamplerMethod { white_noise, circulant, cholesky };

inline std::string to_string(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::white_noise: return "white_noise";
    case SamplerMethod::circulant: return "circulant";
    case SamplerMethod::cholesky: return "cholesky";
  }
  return "unknown";
}

struct SamplerOptions {
  bool force_cholesky = false;
  std::size_t max_cholesky_cells = 4096;
  double negative_tolerance = 1e-8;
  double nugget = 1e-12;
};

// Sampler for one layer on one lattice.  Holds the square-root spectrum (or
// Cholesky factor) and is read-only once built.
class LayerSampler {
 public:
  LayerSampler(const ScaleLayer& layer, const LatticeSpec& lattice, SamplerOptions options = {})
      : layer_(layer), lattice_(lattice) {
    lattice.validate();
    const double h = lattice.spacing();
    const std::size_t n = lattice.points_per_side;
    const double radius = layer.support_radius();
    if (options.force_cholesky) {
      build_cholesky(options);
      return;
    }
    if (radius <= h) {
      method_ = SamplerMethod::white_noise;
      white_scale_ = std::sqrt(layer.covariance(0.0));
      return;
    }
    std::size_t m = 0;
    if (std::isfinite(radius)) {
      m = fft::good_size(n + static_cast<std::size_t>(std::ceil(radius / h)) + 1);
    } else {
      m = fft::good_size(2 * n);
      exact_ = false;
    }
    torus_ = m;
    build_circulant(m, radius);
    if (min_eigenvalue_ < -options.negative_tolerance * max_eigenvalue_) build_cholesky(options);
  }

  SamplerMethod method() const { return method_; }
  std::size_t torus_size() const { return torus_; }
  // False when the seed tail had to be wrapped (infinite support).
  bool exact() const { return exact_; }
  double min_eigenvalue() const { return min_eigenvalue_; }
  double max_eigenvalue() const { return max_eigenvalue_; }
  const ScaleLayer& layer() const { return layer_; }

  std::vector<double> sample(std::uint64_t master_seed, std::uint32_t replica) const {
    NormalStream normal(seed_stream(master_seed, replica, static_cast<std::uint32_t>(layer_.index)));
    std::vector<double> out(lattice_.cells());
    sample_into(normal, out);
    return out;
  }

  void sample_into(NormalStream& normal, std::span<double> out) const {
    detail::require(out.size() == lattice_.cells(), "increment buffer has the wrong size");
    switch (method_) {
      case SamplerMethod::white_noise:
        for (double& v : out) v = white_scale_ * normal();
        return;
      case SamplerMethod::cholesky: {
        Eigen::VectorXd z(static_cast<Eigen::Index>(out.size()));
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal();
        Eigen::Map<Eigen::VectorXd>(out.data(), z.size()) = cholesky_.matrixL() * z;
        return;
      }
      case SamplerMethod::circulant: sample_circulant(normal, out); return;
    }
  }

 private:
  std::vector<std::size_t> torus_dims() const {
    return lattice_.dimension == 1 ? std::vector<std::size_t>{torus_} : std::vector<std::size_t>{torus_, torus_};
  }

  // Periodised covariance sum_a C(k h + a P); exact on the box once P >= L + R.
  void build_circulant(std::size_t m, double radius) {
    const double h = lattice_.spacing();
    const double period = static_cast<double>(m) * h;
    const int images = std::isfinite(radius) ? static_cast<int>(std::ceil(radius / period)) : 0;
    const int d = lattice_.dimension;
    auto periodic = [&](double dx, double dy) {
      if (images == 0) return layer_.covariance(std::hypot(dx, dy));
      double sum = 0.0;
      for (int a = -images; a <= images; ++a) {
        for (int b = (d == 1 ? 0 : -images); b <= (d == 1 ? 0 : images); ++b) {
          const double r = std::hypot(dx + a * period, dy + b * period);
          if (r < radius) sum += layer_.covariance(r);
        }
      }
      return sum;
    };
    // Values depend on (min(i, m-i), min(j, m-j)) only; tabulate the quarter.
    const std::size_t half = m / 2 + 1;
    std::vector<double> quarter(d == 1 ? half : half * half);
    for (std::size_t i = 0; i < half; ++i) {
      if (d == 1) {
        quarter[i] = periodic(static_cast<double>(i) * h, 0.0);
        continue;
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = periodic(static_cast<double>(i) * h, static_cast<double>(j) * h);
        quarter[i * half + j] = v;
        quarter[j * half + i] = v;
      }
    }
    const std::vector<double> spectrum = fft::symmetric_spectrum(torus_dims(), [&](std::size_t i, std::size_t j) {
      return d == 1 ? quarter[i] : quarter[i * half + j];
    });
    min_eigenvalue_ = *std::min_element(spectrum.begin(), spectrum.end());
    max_eigenvalue_ = *std::max_element(spectrum.begin(), spectrum.end());
    const double total = d == 1 ? static_cast<double>(m) : static_cast<double>(m) * static_cast<double>(m);
    amplitude_.resize(spectrum.size());
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      amplitude_[k] = std::sqrt(std::max(spectrum[k], 0.0)) / total;
    }
    method_ = SamplerMethod::circulant;
  }

  // X = F^{-1}(sqrt(lambda) F w) / M^d for white w on the torus, restricted to the box.
  void sample_circulant(NormalStream& normal, std::span<double> out) const {
    fft::Shape shape{torus_dims()};
    auto real = fft::make_real(shape.real_size());
    auto spec = fft::make_complex(shape.complex_size());
    for (std::size_t i = 0; i < shape.real_size(); ++i) real[i] = normal();
    const auto& plan = fft::plans(shape);
    plan.forward(real.get(), spec.get());
    for (std::size_t k = 0; k < amplitude_.size(); ++k) {
      spec[k][0] *= amplitude_[k];
      spec[k][1] *= amplitude_[k];
    }
    plan.backward(spec.get(), real.get());
    const std::size_t n = lattice_.points_per_side;
    if (lattice_.dimension == 1) {
      std::copy(real.get(), real.get() + n, out.begin());
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(real.get() + i * torus_, real.get() + i * torus_ + n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
      }
    }
  }

  void build_cholesky(const SamplerOptions& options) {
    const std::size_t cells = lattice_.cells();
    if (cells > options.max_cholesky_cells) {
      throw SynthesisFailure("layer " + std::to_string(layer_.index) +
                             ": circulant embedding is indefinite and the lattice is too large for Cholesky");
    }
    const std::size_t n = lattice_.points_per_side;
    const double h = lattice_.spacing();
    auto coord = [&](std::size_t c, int axis) {
      const std::size_t i = lattice_.dimension == 1 ? c : (axis == 0 ? c / n : c % n);
      return static_cast<double>(lattice_.dimension == 1 && axis == 1 ? 0 : i) * h;
    };
    Eigen::MatrixXd cov(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(cells));
    for (std::size_t a = 0; a < cells; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        const double r = std::hypot(coord(a, 0) - coord(b, 0), coord(a, 1) - coord(b, 1));
        const double v = layer_.covariance(r);
        cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
        cov(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
      }
    }
    cov.diagonal().array() += options.nugget;
    cholesky_.compute(cov);
    if (cholesky_.info() != Eigen::Success) {
      throw SynthesisFailure("layer " + std::to_string(layer_.index) + " [" + format_number(layer_.t_lo) + ", " +
                             format_number(layer_.t_hi) + "]: Cholesky factorisation failed");
    }
    method_ = SamplerMethod::cholesky;
  }

  ScaleLayer layer_;
  LatticeSpec lattice_;
  SamplerMethod method_ = SamplerMethod::white_noise;
  std::size_t torus_ = 0;
  bool exact_ = true;
  double white_scale_ = 0.0;
  double min_eigenvalue_ = 0.0;
  double max_eigenvalue_ = 0.0;
  std::vector<double> amplitude_;
  Eigen::LLT<Eigen::MatrixXd> cholesky_;
};

struct RngLineage {
  std::uint64_t master_seed = 0;
  std::uint32_t replica = 0;
  bool operator==(const RngLineage&) const = default;
};

struct FieldState {
  LatticeSpec lattice;
  double t = 0.0;
  std::vector<double> values;
  // sup over completed layer boundaries of X_s - sqrt(2d) s; -inf before the first.
  std::vector<double> running_sup;
  // Per-cell E[X_t^2]; empty means the star-kernel value t.
  std::vector<double> variance;
  RngLineage lineage;

  double variance_at(std::size_t i) const { return variance.empty() ? t : variance[i]; }
  double drift() const { return std::sqrt(2.0 * lattice.dimension); }
};

inline FieldState initial_state(const LatticeSpec& lattice, RngLineage lineage = {}) {
  lattice.validate();
  FieldState s;
  s.lattice = lattice;
  s.values.assign(lattice.cells(), 0.0);
  s.running_sup.assign(lattice.cells(), -std::numeric_limits<double>::infinity());
  s.lineage = lineage;
  return s;
}

inline void advance_in_place(FieldState& state, std::span<const double> increment, const ScaleLayer& layer) {
  if (std::abs(layer.t_lo - state.t) > 1e-12 * std::max(1.0, state.t)) {
    throw SequencingError("layer " + std::to_string(layer.index) + " starts at t=" + format_number(layer.t_lo) +
                          " but the field is at t=" + format_number(state.t));
  }
  detail::require(increment.size() == state.values.size(), "increment size does not match the lattice");
  state.t = layer.t_hi;
  const double shift = state.drift() * state.t;
  for (std::size_t i = 0; i < increment.size(); ++i) {
    state.values[i] += increment[i];
    state.running_sup[i] = std::max(state.running_sup[i], state.values[i] - shift);
  }
}

inline FieldState advance(FieldState state, std::span<const double> increment, const ScaleLayer& layer) {
  advance_in_place(state, increment, layer);
  return state;
}

// Continuous-time survival weight P(sup_s X_s - sqrt(2d) s <= beta | layer
// endpoints), accumulated as a product of Brownian-bridge factors.
class BridgeSurvival {
 public:
  BridgeSurvival(std::size_t cells, double beta) : beta_(beta), weight_(cells, 1.0) {
    detail::require(beta > 0.0, "barrier level must be positive");
  }

  double beta() const { return beta_; }
  const std::vector<double>& weights() const { return weight_; }

  // `before` and `after` bracket one layer on the same replica.
  void update(const FieldState& before, const FieldState& after) {
    detail::require(before.values.size() == weight_.size() && after.values.size() == weight_.size(),
                    "bridge survival size mismatch");
    const double drift = after.drift();
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      if (weight_[i] == 0.0) continue;
      const double a = before.values[i] - drift * before.t;
      const double b = after.values[i] - drift * after.t;
      const double dv = after.variance_at(i) - before.variance_at(i);
      if (a >= beta_ || b >= beta_) {
        weight_[i] = 0.0;
      } else if (dv > 0.0) {
        weight_[i] *= -std::expm1(-2.0 * (beta_ - a) * (beta_ - b) / dv);
      }
    }
  }

 private:
  double beta_;
  std::vector<double> weight_;
};

// Prebuilt samplers for every layer of a plan on one lattice.
class FieldSynthesizer {
 public:
  FieldSynthesizer(const LatticeSpec& lattice, std::vector<ScaleLayer> layers, SamplerOptions options = {})
      : lattice_(lattice), layers_(std::move(layers)) {
    detail::require(!layers_.empty(), "synthesis needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0 && layers_[i].t_lo != layers_[i - 1].t_hi) throw SequencingError("layers are not contiguous");
      samplers_.push_back(std::make_shared<const LayerSampler>(layers_[i], lattice, options));
    }
  }

  const LatticeSpec& lattice() const { return lattice_; }
  const std::vector<ScaleLayer>& layers() const { return layers_; }
  const LayerSampler& sampler(std::size_t j) const { return *samplers_.at(j); }
  double t_max() const { return layers_.back().t_hi; }

  // Runs the replica through every layer; `visit(state, layer, increment)` is
  // called after each advance.
  template <class Visit>
  FieldState run(RngLineage lineage, Visit&& visit) const {
    FieldState state = initial_state(lattice_, lineage);
    std::vector<double> increment(lattice_.cells());
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      NormalStream normal(seed_stream(lineage.master_seed, lineage.replica, static_cast<std::uint32_t>(layers_[j].index)));
      samplers_[j]->sample_into(normal, increment);
      advance_in_place(state, increment, layers_[j]);
      visit(static_cast<const FieldState&>(state), layers_[j], static_cast<const std::vector<double>&>(increment));
    }
    return state;
  }

  FieldState run(RngLineage lineage) const {
    return run(lineage, [](const FieldState&, const ScaleLayer&, const std::vector<double>&) {});
  }

 private:
  LatticeSpec lattice_;
  std::vector<ScaleLayer> layers_;
  std::vector<std::shared_ptr<const LayerSampler>> samplers_;
};

// Streaming accumulator for products X(x0) X(x0 + lag) over replicas.
class CovarianceAccumulator {
 public:
  struct Lag {
    long dx = 0;
    long dy = 0;
  };

  CovarianceAccumulator(const LatticeSpec& lattice, std::vector<Lag> lags, std::size_t base_x, std::size_t base_y = 0)
      : lattice_(lattice), lags_(std::move(lags)), base_x_(base_x), base_y_(base_y),
        sum_(lags_.size(), 0.0), sum_sq_(lags_.size(), 0.0) {
    for (const auto& l : lags_) {
      detail::require(index(l) < lattice.cells(), "lag leaves the lattice");
    }
  }

  void add(const FieldState& state) {
    detail::require(state.lattice == lattice_, "state lattice differs from the accumulator lattice");
    const double x0 = state.values[index(Lag{0, 0})];
    for (std::size_t k = 0; k < lags_.size(); ++k) {
      const double p = x0 * state.values[index(lags_[k])];
      sum_[k] += p;
      sum_sq_[k] += p * p;
    }
    ++count_;
  }

  std::size_t count() const { return count_; }
  const LatticeSpec& lattice() const { return lattice_; }
  const std::vector<Lag>& lags() const { return lags_; }
  double mean(std::size_t k) const { return sum_[k] / static_cast<double>(count_); }
  double standard_error(std::size_t k) const {
    const double n = static_cast<double>(count_);
    const double var = (sum_sq_[k] - sum_[k] * sum_[k] / n) / (n - 1.0);
    return std::sqrt(std::max(var, 0.0) / n);
  }

 private:
  std::size_t index(const Lag& l) const {
    const long n = static_cast<long>(lattice_.points_per_side);
    const long x = static_cast<long>(base_x_) + l.dx;
    const long y = static_cast<long>(base_y_) + l.dy;
    if (x < 0 || x >= n || y < 0 || (lattice_.dimension == 2 && y >= n)) return lattice_.cells();
    return lattice_.dimension == 1 ? static_cast<std::size_t>(x) : static_cast<std::size_t>(y * n + x);
  }

  LatticeSpec lattice_;
  std::vector<Lag> lags_;
  std::size_t base_x_;
  std::size_t base_y_;
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
  std::size_t count_ = 0;
};

// Lag table of empirical covariance against K_t from the independent
// quadrature route.
inline ExperimentReport empirical_cov_report(const CovarianceAccumulator& acc, const StarCovariance& cov, double t) {
  detail::require(acc.count() >= 100, "covariance report needs at least 100 replicas");
  ExperimentReport report;
  report.name = "cov-check";
  report.columns = {"lag_x", "lag_y", "distance", "empirical", "empirical_se", "target", "z"};
  report.exact_columns = {"target"};
  const double h = acc.lattice().spacing();
  std::size_t within = 0;
  for (std::size_t k = 0; k < acc.lags().size(); ++k) {
    const auto& l = acc.lags()[k];
    const double p[2] = {static_cast<double>(l.dx) * h, static_cast<double>(l.dy) * h};
    const double target = star_covariance(cov, t, std::span<const double>(p, static_cast<std::size_t>(cov.dimension)));
    const double se = acc.standard_error(k);
    const double z = se > 0.0 ? (acc.mean(k) - target) / se : 0.0;
    if (std::abs(z) <= 4.0) ++within;
    report.add_row({static_cast<double>(l.dx), static_cast<double>(l.dy), std::hypot(p[0], p[1]), acc.mean(k), se,
                    target, z});
  }
  report.metrics["replicas"] = acc.count();
  report.metrics["t"] = t;
  report.metrics["fraction_abs_z_le_4"] = static_cast<double>(within) / static_cast<double>(report.rows.size());
  return report;
}

inline ExperimentReport empirical_cov_report(const std::vector<FieldState>& replicas,
                                             const std::vector<CovarianceAccumulator::Lag>& lags,
                                             const StarCovariance& cov) {
  detail::require(replicas.size() >= 100, "covariance report needs at least 100 replicas");
  const LatticeSpec& lattice = replicas.front().lattice;
  const std::size_t base = lattice.points_per_side / 4;
  CovarianceAccumulator acc(lattice, lags, base, lattice.dimension == 2 ? base : 0);
  for (const auto& s : replicas) {
    detail::require(s.t == replicas.front().t, "replicas must share a common t");
    acc.add(s);
  }
  return empirical_cov_report(acc, cov, replicas.front().t);
}

}  // namespace gmc
