// Randomized property checks with hand-rolled generators: each case draws
// many structurally random inputs and asserts the exact invariants the
// deterministic suites pin at fixed points.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "brwlab/conditioned.hpp"
#include "brwlab/env.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/renewal.hpp"

using namespace brwlab;

namespace {

/// Random mean-zero unit-mass target on {-1} + a few positive sites, so the
/// recipe stays skip-free downward and always has an anchor site.
std::vector<std::pair<std::int64_t, double>> random_target(RngStream& rng) {
  const int n_up = 1 + int(rng.next_u64() % 3);
  std::vector<std::int64_t> ups;
  for (int i = 0; i < n_up; ++i) {
    std::int64_t d = 1 + std::int64_t(rng.next_u64() % 4);
    bool dup = false;
    for (auto u : ups) dup = dup || u == d;
    if (!dup) ups.push_back(d);
  }
  // masses: down mass m at -1, up masses u_i at d_i with sum(u_i d_i) = m.
  std::vector<double> raw(ups.size());
  double weighted = 0.0;
  for (auto& r : raw) r = 0.2 + 0.8 * rng.u01();
  for (std::size_t i = 0; i < ups.size(); ++i) weighted += raw[i] * double(ups[i]);
  // Choose down mass m in (0,1) and scale ups so that total mass is 1:
  //   m + s * sum(raw) = 1,  s * weighted = m.
  const double sum_raw = [&] {
    double s = 0.0;
    for (double r : raw) s += r;
    return s;
  }();
  const double s = 1.0 / (weighted + sum_raw);
  const double m = s * weighted;
  std::vector<std::pair<std::int64_t, double>> target{{-1, m}};
  for (std::size_t i = 0; i < ups.size(); ++i) target.emplace_back(ups[i], s * raw[i]);
  return target;
}

}  // namespace

TEST_CASE("random boundary recipes satisfy the construction contract") {
  RngStream rng(2468, 0);
  for (int rep = 0; rep < 200; ++rep) {
    auto target = random_target(rng);
    PointProcessLaw law;
    try {
      law = boundary_recipe(1.0, target);
    } catch (const Error& e) {
      // No anchor site (every mean count < 1) is a legitimate rejection.
      REQUIRE(e.code() == errc::bad_config);
      continue;
    }
    EnvironmentLaw env;
    env.lattice_step = 1.0;
    env.states.emplace_back(1.0, law);
    validate_environment(env, 1e-9);
    auto rep_check = boundary_check(env, 1e-10);
    INFO("rep=" << rep);
    REQUIRE(rep_check.pass);
    auto mu = step_measure(law);
    for (const auto& [d, mass] : target) {
      INFO("site " << d);
      CHECK(mu.total_mass() == Catch::Approx(1.0).margin(1e-12));
      bool found = false;
      for (const auto& [md, mm] : mu.atoms)
        if (md == d) {
          found = true;
          CHECK(mm == Catch::Approx(mass).margin(1e-12));
        }
      CHECK(found);
    }
  }
}

TEST_CASE("random convolutions conserve mass and support bounds") {
  RngStream rng(1357, 0);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t support = 1 + rng.next_u64() % 12;
    std::vector<double> masses(support);
    double total = 0.0;
    for (auto& m : masses) {
      m = rng.u01();
      total += m;
    }
    for (auto& m : masses) m /= (total * (1.0 + rng.u01()));  // sub-probability
    LatticeDistribution dist(1.0, std::int64_t(rng.next_u64() % 21) - 10, std::move(masses));
    StepMeasure step;
    step.lattice_step = 1.0;
    double smass = 0.0;
    for (std::int64_t d = -2; d <= 2; ++d) {
      double m = rng.u01();
      step.atoms.emplace_back(d, m);
      smass += m;
    }
    for (auto& [d, m] : step.atoms) m /= smass;
    auto out = propagate(dist, step);
    CHECK(out.total_mass() == Catch::Approx(dist.total_mass()).epsilon(1e-13));
    CHECK(out.min_index() >= dist.min_index() + step.min_jump());
    CHECK(out.max_index() <= dist.max_index() + step.max_jump());

    const std::int64_t barrier = std::int64_t(rng.next_u64() % 6);
    auto killed = killed_propagate(dist, step, barrier);
    CHECK(killed.survivor.total_mass() + killed.killed_mass ==
          Catch::Approx(out.total_mass()).epsilon(1e-12));
    CHECK(killed.killed_overshoot_expectation >= 0.0);
    CHECK(killed.survivor.min_index() >= -barrier);
  }
}

TEST_CASE("random paths decompose into valid ladder structures") {
  RngStream rng(8642, 0);
  for (int rep = 0; rep < 400; ++rep) {
    const std::size_t len = 2 + rng.next_u64() % 40;
    std::vector<std::int64_t> path(len, 0);
    for (std::size_t i = 1; i < len; ++i)
      path[i] = path[i - 1] + std::int64_t(rng.next_u64() % 5) - 2;
    auto lad = ladder_decompose(path);
    REQUIRE(lad.descending_epochs.front() == 0);
    REQUIRE(lad.ascending_epochs.front() == 0);
    for (std::size_t i = 1; i < lad.descending_epochs.size(); ++i) {
      CHECK(lad.descending_epochs[i] > lad.descending_epochs[i - 1]);
      const std::int64_t prev = i >= 2 ? lad.descending_heights[i - 2] : path[0];
      CHECK(lad.descending_heights[i - 1] < prev);
      // A descending epoch is a strict running minimum.
      for (std::size_t j = 0; j < lad.descending_epochs[i]; ++j)
        CHECK(path[j] > lad.descending_heights[i - 1]);
    }
    for (std::size_t i = 1; i < lad.ascending_epochs.size(); ++i) {
      CHECK(lad.ascending_epochs[i] > lad.ascending_epochs[i - 1]);
      const std::int64_t prev = i >= 2 ? lad.ascending_heights[i - 2] : path[0];
      CHECK(lad.ascending_heights[i - 1] >= prev);
    }
  }
}

TEST_CASE("kernel rows sum to one at random states of random environments") {
  RngStream rng(11235, 0);
  for (int rep = 0; rep < 25; ++rep) {
    auto t1 = random_target(rng);
    auto t2 = random_target(rng);
    PointProcessLaw l1, l2;
    try {
      l1 = boundary_recipe(1.0, t1);
      l2 = boundary_recipe(1.0, t2);
    } catch (const Error&) {
      continue;
    }
    EnvironmentLaw env;
    env.lattice_step = 1.0;
    env.states.emplace_back(0.5, l1);
    env.states.emplace_back(0.5, l2);
    HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, rng.next_u64())), 1e-11);
    for (int probe = 0; probe < 20; ++probe) {
      const std::int64_t beta = std::int64_t(rng.next_u64() % 3);
      const std::uint64_t n = rng.next_u64() % 12;
      const std::int64_t x = std::int64_t(rng.next_u64() % 14) - beta;
      auto row = kernel_row(u, n, x, beta);
      CHECK(row.pre_normalization_deviation <= 1e-10);
      for (const auto& [y, w] : row.targets) {
        CHECK(y >= -beta);
        CHECK(w > 0.0);
      }
    }
  }
}

TEST_CASE("harmonic values are monotone in the barrier shift at random shifts") {
  RngStream rng(999, 0);
  auto env = envs::two_state_heavy_down();
  WalkPath walk{EnvironmentPath(env, 77)};
  for (int rep = 0; rep < 10; ++rep) {
    auto shifted = walk.shifted(rng.next_u64() % 32);
    double prev = 0.0;
    for (std::int64_t y = 0; y <= 6; ++y) {
      auto h = harmonic_u(shifted, y, 5e-2, 1u << 21);
      CHECK(h.value + h.error_bound >= prev);
      CHECK(h.value >= double(y));
      prev = h.value - h.error_bound;
    }
  }
}
