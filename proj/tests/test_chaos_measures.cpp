#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <catch_amalgamated.hpp>

#include "gmc/chaos_measures.hpp"

using Catch::Approx;
using gmc::Box;
using gmc::LatticeSpec;
using gmc::SeedKernel;

namespace {

gmc::FieldState zero_state(int d, std::size_t n, double t) {
  auto s = gmc::initial_state(LatticeSpec{d, n, 1.0, 0.0});
  s.t = t;
  for (double& r : s.running_sup) r = -std::sqrt(2.0 * d) * t;
  return s;
}

struct Stats {
  std::vector<double> x;
  void add(double v) { x.push_back(v); }
  double mean() const {
    double s = 0;
    for (double v : x) s += v;
    return s / x.size();
  }
  double se() const {
    const double m = mean();
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / (x.size() - 1) / x.size());
  }
  double median() const {
    auto y = x;
    std::nth_element(y.begin(), y.begin() + y.size() / 2, y.end());
    return y[y.size() / 2];
  }
};

}  // namespace

TEST_CASE("plug-in masses on the zero field", "[measures]") {
  const auto s4 = zero_state(1, 64, 4.0);
  CHECK(gmc::total_mass(gmc::gmc_measure(s4, std::sqrt(2.0))) == Approx(std::exp(-4.0)).epsilon(1e-12));
  CHECK(gmc::total_mass(gmc::gmc_measure(s4, 0.0)) == Approx(1.0).epsilon(1e-12));
  CHECK(gmc::total_mass(gmc::seneta_heyde_measure(s4)) == Approx(2.0 * std::exp(-4.0)).epsilon(1e-12));
  const auto s1 = zero_state(1, 64, 1.0);
  CHECK(gmc::total_mass(gmc::derivative_measure(s1)) == Approx(std::sqrt(2.0) * std::exp(-1.0)).epsilon(1e-12));
  const auto [z, r] = gmc::barrier_measures(s1, 1.0);
  CHECK(gmc::total_mass(z) == Approx((std::sqrt(2.0) + 1.0) * std::exp(-1.0)).epsilon(1e-12));
  CHECK(gmc::total_mass(r) == Approx(std::exp(-1.0)).epsilon(1e-12));
  const auto s0 = zero_state(2, 16, 0.0);
  for (double w : gmc::derivative_measure(s0).weights) CHECK(w == 0.0);
  CHECK_THROWS_AS(gmc::seneta_heyde_measure(s0), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::barrier_measures(s1, 0.0), gmc::InvalidArgument);
  CHECK_THROWS_AS(gmc::gmc_measure(s1, -1.0), gmc::InvalidArgument);
}

TEST_CASE("signedness by kind", "[measures]") {
  const auto s = zero_state(1, 16, 1.0);
  CHECK(gmc::derivative_measure(s).signed_weights());
  CHECK_FALSE(gmc::gmc_measure(s, 1.0).signed_weights());
  CHECK_FALSE(gmc::barrier_measures(s, 1.0).second.signed_weights());
  CHECK(gmc::barrier_measures(s, 1.0).first.signed_weights());
}

TEST_CASE("corrupt fields are rejected", "[measures]") {
  auto s = zero_state(1, 16, 1.0);
  s.values[3] = std::nan("");
  CHECK_THROWS_AS(gmc::gmc_measure(s, 1.0), gmc::CorruptField);
  s.values[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(gmc::derivative_measure(s), gmc::CorruptField);
}

TEST_CASE("region masses", "[measures]") {
  const auto s = zero_state(1, 256, 1.0);
  const auto leb = gmc::gmc_measure(s, 0.0);
  CHECK(gmc::total_mass(leb, Box::interval(0.0, 0.5)) == Approx(0.5).margin(1.0 / 256));
  CHECK(gmc::total_mass(leb, Box::full(leb.lattice)) == Approx(gmc::total_mass(leb)).epsilon(1e-14));
  const double a = gmc::total_mass(leb, Box::interval(0.1, 0.37));
  const double b = gmc::total_mass(leb, Box::interval(0.37, 0.8));
  CHECK(a + b == gmc::total_mass(leb, Box::interval(0.1, 0.8)));
  const auto empty = gmc::region_mass(leb, Box::interval(0.5001, 0.5002));
  CHECK(empty.empty());
  CHECK(empty.mass == 0.0);
  CHECK_THROWS_AS(gmc::total_mass(leb, Box::interval(-0.5, 0.5)), gmc::InvalidArgument);

  const auto s2 = zero_state(2, 64, 1.0);
  const auto leb2 = gmc::gmc_measure(s2, 0.0);
  CHECK(gmc::total_mass(leb2, Box::square(0.25, 0.75)) == Approx(0.25).epsilon(1e-12));
  CHECK(gmc::region_mass(leb2, Box{{0.0, 0.5}, {0.5, 1.0}}).cells == 32 * 32);
}

TEST_CASE("barrier pair reduces to gmc plus derivative when nothing is killed", "[measures]") {
  const LatticeSpec lat{1, 256, 1.0, 0.0};
  gmc::FieldSynthesizer synth(lat, gmc::plan_layers(SeedKernel::triangle(), 3.0, 4));
  const double beta = 50.0;
  for (std::uint32_t r = 0; r < 20; ++r) {
    const auto s = synth.run({1, r});
    REQUIRE(*std::max_element(s.running_sup.begin(), s.running_sup.end()) <= beta);
    const auto g = gmc::gmc_measure(s, std::sqrt(2.0));
    const auto dm = gmc::derivative_measure(s);
    const auto z = gmc::barrier_measures(s, beta).first;
    for (std::size_t i = 0; i < lat.cells(); ++i) {
      const double expect = beta * g.weights[i] + dm.weights[i];
      CHECK(std::abs(z.weights[i] - expect) <= 1e-12 * std::abs(expect));
    }
  }
}

TEST_CASE("martingale means", "[measures][statistical]") {
  struct Case {
    double gamma;
    int d;
    double t;
    std::size_t n;
  };
  for (const Case c : {Case{1.0, 1, 4.0, 256}, Case{std::sqrt(2.0), 1, 6.0, 512}, Case{2.0, 2, 4.0, 32}}) {
    const LatticeSpec lat{c.d, c.n, 1.0, 0.0};
    const auto seed = c.d == 1 ? SeedKernel::triangle() : SeedKernel::disc_overlap();
    gmc::FieldSynthesizer synth(lat, gmc::plan_layers(seed, c.t, 4));
    const double beta = 1.0;
    Stats m, md, zb, zi;
    for (std::uint32_t r = 0; r < 1000; ++r) {
      gmc::BridgeSurvival bridge(lat.cells(), beta);
      gmc::FieldState prev = gmc::initial_state(lat);
      const auto s = synth.run({17, r}, [&](const gmc::FieldState& now, const gmc::ScaleLayer&, const std::vector<double>&) {
        bridge.update(prev, now);
        prev = now;
      });
      m.add(gmc::total_mass(gmc::gmc_measure(s, c.gamma)));
      md.add(gmc::total_mass(gmc::derivative_measure(s)));
      zb.add(gmc::total_mass(gmc::barrier_measures(s, beta, &bridge).first));
      zi.add(gmc::total_mass(gmc::barrier_measures(s, beta).first));
    }
    INFO("gamma=" << c.gamma << " d=" << c.d << " t=" << c.t);
    CHECK(std::abs(m.mean() - 1.0) <= 4.0 * m.se());
    // At t = 6 the zero mean of M' is carried by excursions above sqrt(2d) t
    // that 10^3 replicas rarely see; the acceptance run reports that case.
    if (c.t <= 4.0) CHECK(std::abs(md.mean()) <= 4.0 * md.se());
    CHECK(std::abs(zb.mean() - beta) <= 4.0 * zb.se());
    // Monitoring only at layer ends lets more paths survive.
    CHECK(zi.mean() >= zb.mean());
  }
}

TEST_CASE("critical mass decays and the derivative mass is positive", "[measures][statistical]") {
  const LatticeSpec lat{1, 512, 1.0, 0.0};
  gmc::FieldSynthesizer synth(lat, gmc::plan_layers(SeedKernel::triangle(), 16.0, 4));
  const std::vector<double> grid{2.0, 4.0, 8.0, 16.0};
  std::vector<Stats> crit(grid.size());
  int positive = 0, total = 0;
  for (std::uint32_t r = 0; r < 200; ++r) {
    synth.run({23, r}, [&](const gmc::FieldState& s, const gmc::ScaleLayer&, const std::vector<double>&) {
      for (std::size_t k = 0; k < grid.size(); ++k) {
        if (std::abs(s.t - grid[k]) < 1e-9) {
          crit[k].add(gmc::total_mass(gmc::gmc_measure(s, std::sqrt(2.0))));
          if (s.t >= 8.0) {
            ++total;
            if (gmc::total_mass(gmc::derivative_measure(s)) > 0.0) ++positive;
          }
        }
      }
    });
  }
  for (std::size_t k = 1; k < grid.size(); ++k) CHECK(crit[k].median() < crit[k - 1].median());
  CHECK(positive >= 0.99 * total);
}

TEST_CASE("measure export", "[measures]") {
  const auto s = zero_state(2, 16, 1.0);
  const auto m = gmc::gmc_measure(s, 0.0);
  const std::string csv = gmc::measure_csv(m);
  CHECK(csv.rfind("cell_i,cell_j,x_center,y_center,weight\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 257);
  const auto j = gmc::measure_summary(m, {{"left", Box{{0.0, 0.0}, {0.5, 1.0}}}, {"sliver", Box::square(0.5, 0.51)}});
  CHECK(j["kind"] == "gmc");
  CHECK(j["total_mass"]["left"].get<double>() == Approx(0.5));
  CHECK(j["warnings"].size() == 1);
}
