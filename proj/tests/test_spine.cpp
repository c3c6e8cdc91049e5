#include <cmath>
#include <numbers>

#include <catch_amalgamated.hpp>

#include "gmc/spine.hpp"
#include "oracles.hpp"

using Catch::Approx;

TEST_CASE("closed-form spine quantities", "[spine]") {
  CHECK(gmc::barrier_ratio_analytic(1.0, 4.0) == Approx(0.38292).margin(5e-6));
  CHECK(gmc::barrier_ratio_analytic(10.0, 1.0) == Approx(0.1).epsilon(1e-12));
  CHECK(gmc::barrier_ratio_analytic(1.0, 100.0) == Approx(0.07966).margin(1e-4));
  CHECK(gmc::asymptotic_ratio(2.0 / std::numbers::pi) == Approx(1.0).epsilon(1e-14));
  CHECK(gmc::asymptotic_ratio(100.0) == Approx(0.079788).margin(5e-7));
  CHECK(gmc::asymptotic_ratio(4.0) == Approx(0.398942).margin(5e-7));
  CHECK_THROWS_AS(gmc::asymptotic_ratio(0.0), gmc::InvalidArgument);
}

TEST_CASE("Bessel-3 transition density", "[spine]") {
  const double expected = (1.0 - std::exp(-2.0)) / std::sqrt(2.0 * std::numbers::pi);
  CHECK(gmc::bessel3_density(1.0, 1.0, 1.0) == Approx(expected).epsilon(1e-14));
  CHECK(expected == Approx(0.34496).margin(1e-5));
  CHECK(gmc::bessel3_density(1.0, 1.0, 1e-9) < 1e-16);
  for (double t : {0.1, 1.0, 7.0}) {
    for (double beta : {0.2, 1.0, 5.0}) {
      const double mass = oracle::simpson([&](double y) { return y > 0 ? gmc::bessel3_density(t, beta, y) : 0.0; },
                                          0.0, beta + 20.0 * std::sqrt(t), 200000);
      CHECK(mass == Approx(1.0).margin(1e-8));
      const double m2 = oracle::simpson(
          [&](double y) { return y > 0 ? y * y * gmc::bessel3_density(t, beta, y) : 0.0; }, 0.0,
          beta + 20.0 * std::sqrt(t), 200000);
      CHECK(m2 == Approx(beta * beta + 3.0 * t).epsilon(1e-8));
    }
  }
  CHECK_THROWS_AS(gmc::bessel3_density(0.0, 1.0, 1.0), gmc::InvalidArgument);
}

TEST_CASE("single spine path invariants", "[spine]") {
  gmc::NormalStream normal(gmc::seed_stream(5, 0, gmc::streams::kSpinePaths));
  gmc::SpineOptions indicator;
  indicator.bridge = false;
  int killed = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = gmc::simulate_spine_path(1.0, 4.0, 400, 1, normal, indicator);
    REQUIRE(p.y_values.front() == 1.0);
    REQUIRE(p.brownian_values.size() == 401);
    REQUIRE(p.weight >= 0.0);
    bool crossed = false;
    for (double y : p.y_values) crossed = crossed || y < 0.0;
    REQUIRE((p.weight == 0.0) == crossed);
    for (std::size_t k = 0; k <= p.steps; ++k) {
      REQUIRE(p.y_values[k] == Approx(1.0 + std::sqrt(2.0) * k * p.time_step - p.brownian_values[k]).margin(1e-12));
    }
    killed += crossed;
  }
  CHECK(killed > 0);
  CHECK_THROWS_AS(gmc::simulate_spine_path(-1.0, 1.0, 10, 1, normal), gmc::InvalidArgument);
}

TEST_CASE("barrier ratio preconditions", "[spine]") {
  CHECK_THROWS_AS(gmc::barrier_ratio_expectation(1.0, 4.0, 999, 400, 1, 1), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::barrier_ratio_expectation(1.0, 4.0, 1000, 399, 1, 1), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::barrier_ratio_expectation(1.0, 0.0, 1000, 400, 1, 1), gmc::InvalidArgument);
}

TEST_CASE("bridge estimators match the reflection principle", "[spine]") {
  gmc::SpineOptions fine;
  const auto a = gmc::barrier_ratio_expectation(1.0, 4.0, 20000, 400, 1, 3, fine);
  CHECK(std::abs(a.mc_estimate - a.analytic) <= 4.0 * a.standard_error);

  gmc::SpineOptions adaptive;
  adaptive.adaptive = true;
  const auto b = gmc::barrier_ratio_expectation(1.0, 4.0, 100000, 400, 1, 3, adaptive);
  CHECK(b.steps == 512);
  CHECK(std::abs(b.mc_estimate - b.analytic) <= 4.0 * b.standard_error);
  CHECK(b.mean_normals_per_path < 100.0);

  adaptive.stratify = false;
  const auto iid = gmc::barrier_ratio_expectation(1.0, 4.0, 20000, 400, 1, 4, adaptive);
  CHECK(std::abs(iid.mc_estimate - iid.analytic) <= 4.0 * iid.standard_error);
  adaptive.stratify = true;

  // Never refining leaves only the endpoint factor, the exact conditional survival.
  gmc::SpineOptions endpoint = adaptive;
  endpoint.refine_threshold = 1.0;
  const auto e = gmc::barrier_ratio_expectation(1.0, 4.0, 20000, 400, 1, 3, endpoint);
  CHECK(e.mean_normals_per_path == 1.0);
  CHECK(e.mc_estimate == Approx(e.analytic).epsilon(1e-4));

  const auto c = gmc::barrier_ratio_expectation(10.0, 1.0, 20000, 100, 1, 3, adaptive);
  CHECK(std::abs(c.mc_estimate - c.analytic) <= 4.0 * c.standard_error + 1e-12);

  // The physical law gives the same mean, with a much larger error at moderate t.
  gmc::SpineOptions physical;
  physical.tilted = false;
  const auto p = gmc::barrier_ratio_expectation(1.0, 1.0, 50000, 100, 1, 3, physical);
  CHECK(std::abs(p.mc_estimate - p.analytic) <= 4.0 * p.standard_error);
  CHECK(p.standard_error > a.standard_error);
}

TEST_CASE("chunked reduction is worker invariant", "[spine]") {
  gmc::SpineOptions one, three;
  one.adaptive = three.adaptive = true;
  one.chunk = three.chunk = 1000;
  three.workers = 3;
  const auto a = gmc::barrier_ratio_expectation(1.0, 4.0, 10000, 400, 1, 11, one);
  const auto b = gmc::barrier_ratio_expectation(1.0, 4.0, 10000, 400, 1, 11, three);
  CHECK(a.mc_estimate == b.mc_estimate);
  CHECK(a.standard_error == b.standard_error);
}

TEST_CASE("step-grid monitoring bias is one-sided and shrinks with refinement", "[spine]") {
  gmc::SpineOptions plain;
  plain.bridge = false;
  double coarse_total = 0.0, fine_total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto coarse = gmc::barrier_ratio_expectation(1.0, 1.0, 20000, 100, 1, seed, plain);
    const auto fine = gmc::barrier_ratio_expectation(1.0, 1.0, 20000, 200, 1, seed, plain);
    CHECK(coarse.mc_estimate > coarse.analytic);
    coarse_total += coarse.mc_estimate - coarse.analytic;
    fine_total += fine.mc_estimate - fine.analytic;
  }
  CHECK(fine_total < coarse_total);
}

TEST_CASE("rooted spine follows the Bessel-3 law", "[spine]") {
  const auto r = gmc::spine_histogram(1.0, 1.0, 100000, 200, 1, 40, 7);
  CHECK(r.metric("fraction_abs_z_le_4") >= 0.95);
  const double m2 = r.metric("second_moment");
  CHECK(std::abs(m2 - 4.0) <= 4.0 * r.metric("second_moment_se"));
  CHECK(std::abs(r.metric("mean_weight") - 1.0) <= 4.0 * r.metric("mean_weight_se"));
  CHECK(r.metric("survival_target") == Approx(std::erf(1.0 / std::sqrt(2.0))));
  CHECK(r.metric("effective_sample_size") > 100.0);
  CHECK_FALSE(r.has_flag("low_effective_sample_size"));

  const auto few = gmc::spine_histogram(1.0, 1.0, 50, 200, 1, 10, 7);
  CHECK(few.has_flag("low_effective_sample_size"));

  const auto point = gmc::spine_histogram(2.0, 0.0, 10, 1, 1, 10, 7);
  CHECK(point.has_flag("point_mass"));
}
