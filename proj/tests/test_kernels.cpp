#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include <catch_amalgamated.hpp>

#include "gmc/kernels.hpp"
#include "oracles.hpp"

using Catch::Approx;
using gmc::SeedKernel;
using gmc::StarCovariance;

namespace {

std::vector<SeedKernel> normalized_seeds() {
  return {SeedKernel::triangle(), SeedKernel::disc_overlap(), SeedKernel::mff(1.0),
          SeedKernel::tabulated({0.0, 0.5, 1.0}, {1.0, 0.4, 0.0})};
}

}  // namespace

TEST_CASE("star covariance reference values", "[kernels]") {
  StarCovariance tri{SeedKernel::triangle(), 1};
  CHECK(gmc::star_covariance(tri, 1.0, 0.0) == 1.0);
  CHECK(gmc::star_covariance(tri, std::log(2.0), 0.5) == Approx(std::log(2.0) - 0.5).margin(1e-12));
  CHECK(gmc::star_covariance(tri, 5.0, 2.0) == 0.0);
}

TEST_CASE("star covariance equals t on the diagonal", "[kernels]") {
  for (const auto& seed : normalized_seeds()) {
    for (int d : {1, 2}) {
      StarCovariance cov{seed, d};
      const double zero[2] = {0.0, 0.0};
      for (double t : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        CHECK(gmc::star_covariance(cov, t, std::span<const double>(zero, d)) == Approx(t).margin(1e-12));
      }
    }
  }
}

TEST_CASE("star covariance increases with t and decreases with distance", "[kernels]") {
  for (const auto& seed : normalized_seeds()) {
    StarCovariance cov{seed, 1};
    for (double x : {0.01, 0.1, 0.3, 0.7, 1.5}) {
      double prev = 0.0;
      for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        const double k = gmc::star_covariance(cov, t, x);
        CHECK(prev <= k + 1e-9);
        prev = k;
      }
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double x : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
      const double k = gmc::star_covariance(cov, 6.0, x);
      CHECK(k <= prev + 1e-9);
      prev = k;
    }
  }
}

TEST_CASE("star covariance rejects bad input", "[kernels]") {
  StarCovariance tri{SeedKernel::triangle(), 1};
  CHECK_THROWS_AS(gmc::star_covariance(tri, std::nan(""), 0.1), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::star_covariance(tri, 1.0, std::numeric_limits<double>::infinity()), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::star_covariance(tri, -1.0, 0.1), gmc::InvalidArgument);
  StarCovariance coarse{SeedKernel::triangle(), 1, 8};
  CHECK_THROWS_AS(gmc::star_covariance(coarse, 1.0, 0.1), gmc::InvalidArgument);
}

TEST_CASE("quadrature route agrees with the closed form for the triangle", "[kernels]") {
  // The tabulated seed with nodes (0,1),(1,0) is the triangle but goes through
  // the generic quadrature branch.
  StarCovariance generic{SeedKernel::tabulated({0.0, 1.0, 2.0}, {1.0, 0.0, 0.0}), 1};
  StarCovariance closed{SeedKernel::triangle(), 1};
  for (double t : {0.5, 2.0, 7.0}) {
    for (double x : {0.001, 0.03, 0.2, 0.6, 0.99}) {
      CHECK(gmc::star_covariance(generic, t, x) == Approx(gmc::star_covariance(closed, t, x)).margin(1e-10));
    }
  }
}

TEST_CASE("layer covariances telescope to the star covariance", "[kernels]") {
  for (const auto& seed : normalized_seeds()) {
    StarCovariance cov{seed, 2};
    for (double r : {0.001, 0.02, 0.15, 0.5, 0.9}) {
      const double p[2] = {r, 0.0};
      const double direct = gmc::star_covariance(cov, 6.0, std::span<const double>(p, 2));
      const double split = gmc::layer_covariance(seed, 0.0, 2.5, r) + gmc::layer_covariance(seed, 2.5, 6.0, r);
      CHECK(split == Approx(direct).margin(1e-9));
    }
    CHECK(gmc::layer_covariance(seed, 1.0, 1.25, 0.0) == Approx(0.25).margin(1e-15));
  }
}

TEST_CASE("mff seed against the Bessel series", "[kernels]") {
  CHECK(gmc::mff_seed(1.0, 0.0) == 1.0);
  CHECK(gmc::mff_seed(1.0, 1.0) == Approx(0.60191).margin(5e-6));
  CHECK(gmc::mff_seed(1.0, 5.0) == Approx(0.02022).margin(5e-6));
  const auto seed = SeedKernel::mff(1.0);
  for (double r : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const double ref = r * oracle::bessel_k1_series(r);
    CHECK(std::abs(gmc::mff_seed(1.0, r) / ref - 1.0) <= 1e-6);
    CHECK(std::abs(seed(r) / ref - 1.0) <= 1e-6);
    CHECK(std::abs(oracle::bessel_k1_integral(r) / oracle::bessel_k1_series(r) - 1.0) <= 1e-9);
  }
  for (double m : {0.5, 2.0}) {
    CHECK(std::abs(gmc::mff_seed(m, 0.7) / (m * 0.7 * oracle::bessel_k1_series(m * 0.7)) - 1.0) <= 1e-6);
  }
  CHECK_THROWS_AS(gmc::mff_seed(0.0, 1.0), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::mff_seed(-1.0, 1.0), gmc::InvalidArgument);
  CHECK_THROWS_AS(SeedKernel::mff(0.0), gmc::InvalidArgument);
}

TEST_CASE("mff truncation radius", "[kernels]") {
  const auto seed = SeedKernel::mff(1.0, 1e-12);
  const double r = seed.support_radius();
  CHECK(std::isfinite(r));
  CHECK(r * oracle::bessel_k1_integral(r) == Approx(1e-12).epsilon(1e-6));
  CHECK(seed(r * 1.0001) == 0.0);
}

TEST_CASE("perfect kernel values", "[kernels]") {
  CHECK(gmc::perfect_kernel_g(1.0, 2.0) == 0.0);
  CHECK(gmc::perfect_kernel_g(0.5, 0.0) == Approx(std::log(4.0) + 1.0).margin(1e-14));
  CHECK(gmc::perfect_kernel_g(0.1, 0.2) == Approx(std::log(10.0)).margin(1e-14));
  CHECK(gmc::perfect_kernel_g(1.0, 5.0) == 0.0);
  for (double u : {1.0, 0.3, 1e-3}) {
    const double delta = 1e-8 * u;
    CHECK(std::abs(gmc::perfect_kernel_g(u, u - delta) - gmc::perfect_kernel_g(u, u + delta)) <= 3.0 * delta / u);
  }
  CHECK_THROWS_AS(gmc::perfect_kernel_g(0.0, 1.0), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::perfect_kernel_g(1.5, 1.0), gmc::InvalidArgument);
}

TEST_CASE("perfect spherical covariance", "[kernels]") {
  // At the origin it is g_u(0); far away it vanishes.
  CHECK(gmc::perfect_spherical_covariance(0.25, 0.0, 0.0) == Approx(std::log(8.0) + 1.0));
  CHECK(gmc::perfect_spherical_covariance(0.25, 0.0, 3.0) > 0.0);
  const double direct = oracle::simpson(
      [](double th) { return gmc::perfect_kernel_g(0.2, 0.7 * std::abs(std::cos(th))); }, 0.0, 2 * std::numbers::pi,
      200000);
  CHECK(gmc::perfect_spherical_covariance(0.2, 0.7, 0.0) == Approx(direct / (2 * std::numbers::pi)).margin(1e-7));
  CHECK(gmc::perfect_spherical_covariance(0.2, 0.0, 0.7) ==
        Approx(gmc::perfect_spherical_covariance(0.2, 0.7, 0.0)).margin(1e-12));
}

TEST_CASE("seed evaluation is symmetric and normalized", "[kernels]") {
  for (const auto& seed : normalized_seeds()) {
    CHECK(seed.value_at_zero() == 1.0);
    for (double r : {0.1, 0.4, 0.9}) CHECK(seed(r) == seed(-r));
  }
  CHECK(SeedKernel::triangle()(0.25) == 0.75);
  CHECK(SeedKernel::triangle()(1.5) == 0.0);
}

TEST_CASE("seed validation diagnostics", "[kernels]") {
  const gmc::LatticeSpec line{1, 256, 1.0, 0.0};
  const auto tri = gmc::validate_seed(SeedKernel::triangle(), line);
  CHECK(tri.min_spectral >= -1e-10);
  CHECK(tri.positive_definite);
  CHECK(tri.normalized);
  CHECK(tri.effective_support_radius == 1.0);
  CHECK(tri.lipschitz_at_zero == Approx(1.0));

  const gmc::LatticeSpec plane{2, 64, 1.0, 0.0};
  const auto mff = gmc::validate_seed(SeedKernel::mff(1.0, 1e-12), plane);
  CHECK(std::isfinite(mff.effective_support_radius));
  CHECK(mff.effective_support_radius < 40.0);
  CHECK(mff.positive_definite);

  const auto disc = gmc::validate_seed(SeedKernel::disc_overlap(), plane);
  CHECK(disc.positive_definite);

  const auto constant = gmc::validate_seed(SeedKernel::tabulated({0.0, 1.0}, {1.0, 1.0}), line);
  CHECK(constant.degenerate);
  CHECK_FALSE(constant.positive_definite);
}

TEST_CASE("tabulated seed files", "[kernels]") {
  const std::string good = "seed_good.txt";
  {
    std::ofstream out(good);
    out << "# radius value\n0 1\n0.5 0.5\n1 0\n";
  }
  const auto seed = gmc::load_tabulated_seed(good);
  CHECK(seed(0.25) == Approx(0.75));
  CHECK(seed.support_radius() == 1.0);
  std::remove(good.c_str());

  const std::string bad = "seed_bad.txt";
  {
    std::ofstream out(bad);
    out << "0 0.9\n1 0\n";
  }
  CHECK_THROWS_AS(gmc::load_tabulated_seed(bad), gmc::FormatError);
  {
    std::ofstream out(bad);
    out << "0 1\n0.5\n";
  }
  CHECK_THROWS_AS(gmc::load_tabulated_seed(bad), gmc::FormatError);
  {
    std::ofstream out(bad);
    out << "0 1\n0.5 0.5\n0.4 0\n";
  }
  CHECK_THROWS_AS(gmc::load_tabulated_seed(bad), gmc::FormatError);
  std::remove(bad.c_str());
  CHECK_THROWS_AS(gmc::load_tabulated_seed("does/not/exist.txt"), gmc::FormatError);
}
