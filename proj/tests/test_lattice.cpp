#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "brwlab/lattice.hpp"

using namespace brwlab;

namespace {

StepMeasure fair_pm1() {
  StepMeasure s;
  s.lattice_step = 1.0;
  s.atoms = {{-1, 0.5}, {1, 0.5}};
  return s;
}

}  // namespace

TEST_CASE("convolution with fair +-1 step") {
  auto d0 = LatticeDistribution::point_mass(1.0, 0);
  auto d1 = propagate(d0, fair_pm1());
  CHECK(d1.mass_at(-1) == Catch::Approx(0.5));
  CHECK(d1.mass_at(1) == Catch::Approx(0.5));
  CHECK(d1.mass_at(0) == 0.0);

  auto d2 = propagate(d1, fair_pm1());
  CHECK(d2.mass_at(-2) == Catch::Approx(0.25));
  CHECK(d2.mass_at(0) == Catch::Approx(0.5));
  CHECK(d2.mass_at(2) == Catch::Approx(0.25));
  CHECK(d2.total_mass() == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("identity step leaves distributions unchanged") {
  StepMeasure id;
  id.lattice_step = 1.0;
  id.atoms = {{0, 1.0}};
  LatticeDistribution d(1.0, -3, {0.25, 0.0, 0.5, 0.1, 0.15});
  auto e = propagate(d, id);
  d.for_each([&](std::int64_t i, double m) { CHECK(e.mass_at(i) == Catch::Approx(m)); });
  CHECK(e.total_mass() == Catch::Approx(d.total_mass()));
}

TEST_CASE("lattice mismatch is rejected") {
  StepMeasure s;
  s.lattice_step = 0.5;
  s.atoms = {{0, 1.0}};
  auto d0 = LatticeDistribution::point_mass(1.0, 0);
  REQUIRE_THROWS_AS(propagate(d0, s), Error);
}

TEST_CASE("killed step at the barrier") {
  auto d0 = LatticeDistribution::point_mass(1.0, 0);
  auto r = killed_propagate(d0, fair_pm1(), 0);
  CHECK(r.survivor.mass_at(1) == Catch::Approx(0.5));
  CHECK(r.survivor.mass_at(-1) == 0.0);
  CHECK(r.killed_mass == Catch::Approx(0.5));
  CHECK(r.killed_overshoot_expectation == Catch::Approx(0.5));  // overshoot 1 with mass 1/2
}

TEST_CASE("high barrier kills nothing") {
  auto d0 = LatticeDistribution::point_mass(1.0, 0);
  auto r = killed_propagate(d0, fair_pm1(), 5);
  CHECK(r.killed_mass == 0.0);
  CHECK(r.killed_overshoot_expectation == 0.0);
  CHECK(r.survivor.total_mass() == Catch::Approx(1.0));
}

TEST_CASE("overshoot accounting for a two-step down jump") {
  const std::int64_t y = 3;
  const double m = 0.37, q = 0.25;
  LatticeDistribution d(1.0, -y, {m});
  StepMeasure s;
  s.lattice_step = 1.0;
  s.atoms = {{-2, q}, {2, 1.0 - q}};
  auto r = killed_propagate(d, s, y);
  CHECK(r.killed_mass == Catch::Approx(m * q));
  CHECK(r.killed_overshoot_expectation == Catch::Approx(2.0 * m * q));
}

TEST_CASE("mass conservation through killed propagation") {
  auto d = LatticeDistribution::point_mass(1.0, 0);
  double killed_total = 0.0;
  for (int n = 0; n < 200; ++n) {
    auto r = killed_propagate(d, fair_pm1(), 0);
    killed_total += r.killed_mass;
    d = r.survivor;
  }
  CHECK(d.total_mass() + killed_total == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tv distance") {
  LatticeDistribution a(1.0, 0, {0.5, 0.5});
  LatticeDistribution b(1.0, 0, {0.25, 0.75});
  CHECK(a.tv_distance(b) == Catch::Approx(0.25));
  CHECK(a.tv_distance(a) == 0.0);
}
