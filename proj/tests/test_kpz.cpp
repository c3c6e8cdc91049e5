#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include <catch_amalgamated.hpp>

#include "gmc/kpz.hpp"

using Catch::Approx;

namespace {

gmc::ChaosMeasure lebesgue(int d, std::size_t n) {
  return gmc::gmc_measure(gmc::initial_state(gmc::LatticeSpec{d, n, 1.0, 0.0}), 0.0);
}

gmc::TargetSet row_mask(std::size_t n) {
  std::vector<std::uint8_t> cells(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) cells[(n / 3) * n + i] = 1;
  return gmc::TargetSet::custom(2, n, cells);
}

}  // namespace

TEST_CASE("Euclidean dimensions of the built-in sets", "[kpz]") {
  CHECK(gmc::euclidean_dimension(gmc::TargetSet::full_box(2)).value == 1.0);
  CHECK(gmc::euclidean_dimension(gmc::TargetSet::full_box(1)).value == 1.0);
  CHECK(gmc::euclidean_dimension(gmc::TargetSet::segment()).value == 0.5);
  CHECK(gmc::euclidean_dimension(gmc::TargetSet::cantor()).value == Approx(0.63093).margin(5e-6));
  CHECK_FALSE(gmc::euclidean_dimension(gmc::TargetSet::cantor()).estimated);

  const auto line = gmc::euclidean_dimension(row_mask(256));
  CHECK(line.estimated);
  CHECK(line.value == Approx(0.5).margin(1e-12));
  const auto full = gmc::euclidean_dimension(gmc::TargetSet::custom(2, 64, std::vector<std::uint8_t>(64 * 64, 1)));
  CHECK(full.value == Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(gmc::TargetSet::custom(2, 4, std::vector<std::uint8_t>(16, 0)), gmc::InvalidArgument);
}

TEST_CASE("box masses of the Lebesgue measure", "[kpz]") {
  const auto leb2 = lebesgue(2, 256);
  for (int n = 0; n <= 6; ++n) {
    const auto full = gmc::quantum_box_masses(leb2, gmc::TargetSet::full_box(2), n);
    REQUIRE(full.size() == std::size_t{1} << (2 * n));
    for (double m : full) REQUIRE(m == Approx(std::ldexp(1.0, -2 * n)).epsilon(1e-13));
    const auto seg = gmc::quantum_box_masses(leb2, gmc::TargetSet::segment(), n);
    REQUIRE(seg.size() == std::size_t{1} << n);
    for (double m : seg) REQUIRE(m == Approx(std::ldexp(1.0, -2 * n)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(gmc::quantum_box_masses(leb2, gmc::TargetSet::full_box(2), 7), gmc::ResolutionError);

  // Triadic intervals cut dyadic cells; shares of split cells keep the masses exact.
  const auto leb1 = lebesgue(1, 4096);
  for (int n = 1; n <= 6; ++n) {
    const auto c = gmc::quantum_box_masses(leb1, gmc::TargetSet::cantor(), n);
    REQUIRE(c.size() == std::size_t{1} << n);
    for (double m : c) REQUIRE(m == Approx(std::pow(3.0, -n)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gmc::quantum_box_masses(leb1, gmc::TargetSet::cantor(), 7), gmc::ResolutionError);
  CHECK_THROWS_AS(gmc::quantum_box_masses(leb1, gmc::TargetSet::segment(), 2), gmc::InvalidArgument);
}

TEST_CASE("derivative-measure box masses partition the total mass", "[kpz]") {
  const gmc::LatticeSpec lat{2, 64, 1.0, 0.0};
  const gmc::FieldSynthesizer synth(lat, gmc::plan_layers(gmc::SeedKernel::disc_overlap(), 3.0, 1));
  const auto m = gmc::derivative_measure(synth.run({5, 0}));
  const double total = gmc::total_mass(m);
  double scale = 0.0;
  for (double w : m.weights) scale += std::abs(w);
  for (int n = 0; n <= 4; ++n) {
    double sum = 0.0;
    for (double b : gmc::quantum_box_masses(m, gmc::TargetSet::full_box(2), n)) sum += b;
    CHECK(std::abs(sum - total) <= 1e-13 * scale);
  }
}

TEST_CASE("dimension estimate on analytic box sums", "[kpz]") {
  const auto grid = gmc::uniform_s_grid(0.01);
  REQUIRE(grid.size() == 101);
  std::map<int, std::vector<double>> full, seg, cantor;
  for (int n = 2; n <= 7; ++n) {
    full[n] = std::vector<double>(std::size_t{1} << (2 * n), std::ldexp(1.0, -2 * n));
    seg[n] = std::vector<double>(std::size_t{1} << n, std::ldexp(1.0, -2 * n));
    cantor[n] = std::vector<double>(std::size_t{1} << n, std::pow(3.0, -n));
  }
  const auto f = gmc::dimension_estimate(full, grid);
  CHECK(f.value == 1.0);
  CHECK(f.crossed);
  CHECK(f.standard_error == 0.0);
  // Slope at s is n (2 - 2s) ln 2 per level.
  for (std::size_t k = 0; k < grid.size(); ++k) {
    REQUIRE(f.slopes[k] == Approx((2.0 - 2.0 * grid[k]) * std::log(2.0)).margin(1e-10));
  }
  CHECK(gmc::dimension_estimate(seg, grid).value == Approx(0.5).margin(1e-12));
  // ln2/ln3 is off-grid; the slope is linear in s so interpolation is exact.
  CHECK(gmc::dimension_estimate(cantor, grid).value == Approx(std::log(2.0) / std::log(3.0)).margin(1e-12));
  CHECK(gmc::dimension_estimate(cantor, gmc::uniform_s_grid(0.05)).value ==
        Approx(std::log(2.0) / std::log(3.0)).margin(1e-12));

  // Masses that never shrink: the sums grow for every s.
  std::map<int, std::vector<double>> flat;
  for (int n = 1; n <= 4; ++n) flat[n] = std::vector<double>(std::size_t{1} << n, 1.0);
  const auto none = gmc::dimension_estimate(flat, grid);
  CHECK_FALSE(none.crossed);
  CHECK(none.value == 1.0);

  auto with_negative = seg;
  with_negative[3][0] = -1e-3;
  CHECK(gmc::dimension_estimate(with_negative, grid).excluded == 1);

  std::map<int, std::vector<double>> two{{1, {0.5, 0.5}}, {2, {0.25}}};
  CHECK_THROWS_AS(gmc::dimension_estimate(two, grid), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::dimension_estimate(seg, {0.0, 0.1, 0.2}), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::uniform_s_grid(0.1), gmc::InvalidArgument);
}

TEST_CASE("Lebesgue dimensions through the lattice pipeline", "[kpz]") {
  const auto grid = gmc::uniform_s_grid(0.01);
  const auto leb2 = lebesgue(2, 256);
  CHECK(gmc::dimension_estimate(gmc::box_masses_by_level(leb2, gmc::TargetSet::segment(), 2, 6), grid).value ==
        Approx(0.5).margin(1e-12));
  CHECK(gmc::dimension_estimate(gmc::box_masses_by_level(leb2, gmc::TargetSet::full_box(2), 2, 6), grid).value ==
        1.0);
  const auto leb1 = lebesgue(1, 4096);
  CHECK(gmc::dimension_estimate(gmc::box_masses_by_level(leb1, gmc::TargetSet::cantor(), 1, 6), grid).value ==
        Approx(std::log(2.0) / std::log(3.0)).margin(1e-12));
  CHECK(gmc::deepest_level(gmc::TargetSet::cantor(), 4096) == 6);
  CHECK(gmc::deepest_level(gmc::TargetSet::segment(), 1024) == 8);
}

TEST_CASE("KPZ inversion", "[kpz]") {
  CHECK(gmc::kpz_predict(0.0, 2) == 0.0);
  CHECK(gmc::kpz_predict(1.0, 2) == 1.0);
  CHECK(gmc::kpz_predict(0.5, 2) == Approx(0.29289).margin(5e-6));
  CHECK(gmc::kpz_predict(std::log(2.0) / std::log(3.0), 1) == Approx(0.392488).margin(5e-7));
  for (int i = 0; i <= 100; ++i) {
    const double q = i / 100.0;
    REQUIRE(std::abs(gmc::kpz_predict(2 * q - q * q, 1) - q) <= 1e-12);
  }
  for (int i = 0; i <= 100; ++i) {
    const double delta = i / 100.0;
    const double q = gmc::kpz_predict(delta, 2);
    REQUIRE(std::abs(2 * q - q * q - delta) <= 1e-12);
  }
  CHECK_THROWS_AS(gmc::kpz_predict(-0.01, 1), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::kpz_predict(1.01, 1), gmc::InvalidArgument);
}

TEST_CASE("replica bootstrap of the median", "[kpz]") {
  const auto c = gmc::replica_bootstrap(std::vector<double>(20, 0.3), 1);
  CHECK(c.median == 0.3);
  CHECK(c.standard_error == Approx(0.0).margin(1e-14));
  std::vector<double> v;
  for (int i = 0; i < 101; ++i) v.push_back(i / 100.0);
  const auto a = gmc::replica_bootstrap(v, 7);
  const auto b = gmc::replica_bootstrap(v, 7);
  CHECK(a.median == 0.5);
  CHECK(a.standard_error == b.standard_error);
  // The median of U(0,1) has sd about 1/(2 sqrt(n)).
  CHECK(a.standard_error == Approx(0.5 / std::sqrt(101.0)).epsilon(0.35));
}

TEST_CASE("small KPZ runs: nesting and worker invariance", "[kpz]") {
  gmc::KpzSpec spec;
  spec.points_per_side = 128;
  spec.t = 5.0;
  spec.replicas = 12;
  spec.target = gmc::TargetSet::segment();
  const auto seg = gmc::kpz_experiment(spec);
  spec.workers = 3;
  const auto seg3 = gmc::kpz_experiment(spec);
  CHECK(gmc::to_csv(seg) == gmc::to_csv(seg3));
  CHECK(seg.metric("lebesgue_dim") == Approx(0.5).margin(1e-12));
  CHECK(seg.metric("predicted_quantum_dim") == Approx(1 - std::sqrt(0.5)));

  spec.target = gmc::TargetSet::full_box(2);
  const auto full = gmc::kpz_experiment(spec);
  CHECK(full.metric("median_quantum_dim") == 1.0);
  CHECK(seg.metric("median_quantum_dim") <=
        full.metric("median_quantum_dim") + 2.0 * seg.metric("median_quantum_dim_se"));

  spec.min_level = 4;
  CHECK_THROWS_AS(gmc::kpz_experiment(spec), gmc::InvalidArgument);
}

TEST_CASE("mask files", "[kpz]") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "gmc_mask_test.bin").string();
  const auto set = row_mask(32);
  gmc::write_mask(set, path);
  const auto back = gmc::load_mask(path);
  CHECK(back.dimension == 2);
  CHECK(back.mask_n == 32);
  CHECK(back.mask == set.mask);
  CHECK(std::filesystem::file_size(path) == 12 + 32 * 32);

  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(gmc::load_mask(path), gmc::FormatError);
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "GMCX12345678";
  }
  CHECK_THROWS_AS(gmc::load_mask(path), gmc::FormatError);
  CHECK_THROWS_AS(gmc::load_mask((dir / "gmc_no_such_mask.bin").string()), gmc::FormatError);
  std::filesystem::remove(path);
}
