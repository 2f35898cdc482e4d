#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "brwlab/branching.hpp"

using namespace brwlab;

TEST_CASE("deterministic offspring evolve exactly") {
  PointProcessLaw two_at_ln2;
  two_at_ln2.lattice_step = std::log(2.0);
  two_at_ln2.outcomes.push_back({1.0, {1, 1}});

  PopulationState pop(std::vector<std::int64_t>{}, 0);
  RngStream rng(1, 0);
  pop.evolve(two_at_ln2, rng);
  REQUIRE(pop.total() == 2);
  CHECK(pop.classes().begin()->first.first == 1);

  PointProcessLaw still;
  still.lattice_step = 1.0;
  still.outcomes.push_back({1.0, {0}});
  PopulationState k(std::vector<std::int64_t>{}, 3);
  k.insert(3, 41);  // 42 particles at x = 3
  RngStream rng2(2, 0);
  k.evolve(still, rng2);
  CHECK(k.total() == 42);
  CHECK(k.min_position() == 3);
}

TEST_CASE("children counts are conserved across outcomes") {
  // Every outcome of this law has exactly two children, so totals double.
  PointProcessLaw law;
  law.lattice_step = 1.0;
  law.outcomes.push_back({0.5, {1, -1}});
  law.outcomes.push_back({0.5, {0, 0}});
  PopulationState pop(std::vector<std::int64_t>{}, 0);
  RngStream rng(3, 0);
  for (int g = 1; g <= 6; ++g) {
    pop.evolve(law, rng);
    CHECK(pop.total() == (1ull << g));
  }
}

TEST_CASE("population cap aborts loudly") {
  auto env = envs::homogeneous_pm1();
  PopulationState pop(std::vector<std::int64_t>{}, 0);
  RngStream rng(4, 0);
  bool hit = false;
  try {
    for (int g = 0; g < 64; ++g) pop.evolve(env.states[0].second, rng, 50);
  } catch (const Error& e) {
    hit = e.code() == errc::population_cap_exceeded;
  }
  CHECK(hit);
}

TEST_CASE("initial martingale values") {
  auto env = envs::two_state_diff_step();
  WalkPath walk{EnvironmentPath(env, 5)};
  HarmonicCache<WalkPath> u(walk, 1e-10);
  PopulationState pop(std::vector<std::int64_t>{0, 2}, 0);
  auto row = martingales(pop, u);
  CHECK(row.w == 1.0);
  CHECK(row.d == 0.0);
  REQUIRE(row.d_beta.size() == 2);
  CHECK(row.d_beta[0] == Catch::Approx(u(0, 0)));
  CHECK(row.d_beta[1] == Catch::Approx(u(0, 2)));
  CHECK(row.d_beta[1] >= row.d_beta[0]);  // nondecreasing in beta
}

TEST_CASE("one particle after the two-at-ln2 law") {
  PointProcessLaw two_at_ln2;
  two_at_ln2.lattice_step = std::log(2.0);
  two_at_ln2.outcomes.push_back({1.0, {1, 1}});
  EnvironmentLaw env;
  env.lattice_step = std::log(2.0);
  env.states.emplace_back(1.0, two_at_ln2);
  // Not a boundary law in mean, but W/D sums are still defined.
  PopulationState pop(std::vector<std::int64_t>{}, 0);
  RngStream rng(6, 0);
  pop.evolve(two_at_ln2, rng);
  KahanSum w, d;
  for (const auto& [key, c] : pop.classes()) {
    const double x = double(key.first) * env.lattice_step;
    w.add(double(c) * std::exp(-x));
    d.add(double(c) * x * std::exp(-x));
  }
  CHECK(w.value() == Catch::Approx(1.0));
  CHECK(d.value() == Catch::Approx(std::log(2.0)));
}

TEST_CASE("one-step martingale residuals on enumerable populations") {
  for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step(),
                          envs::two_state_diff_step()}) {
    EnvironmentPath path(env, 17);
    HarmonicCache<WalkPath> u(WalkPath(path), 1e-11);
    for (std::int64_t beta : {0, 2}) {
      std::vector<SmallParticle> particles{{0, true}, {2, true}, {1, true}};
      for (std::uint64_t n : {0ull, 1ull, 3ull}) {
        auto r = one_step_martingale_check<WalkPath>(particles, u, path.state(n), n, beta);
        INFO("beta=" << beta << " n=" << n);
        CHECK(r.w <= 1e-8);
        CHECK(r.d <= 1e-8);
        CHECK(r.d_beta <= 1e-8);
      }
    }
  }
}

TEST_CASE("particles below the barrier contribute zero to both sides") {
  auto env = envs::homogeneous_pm1();
  EnvironmentPath path(env, 17);
  HarmonicCache<WalkPath> u(WalkPath(path), 1e-11);
  std::vector<SmallParticle> dead{{-3, false}};
  auto r = one_step_martingale_check<WalkPath>(dead, u, path.state(0), 0, 0);
  CHECK(r.d_beta == 0.0);
}

TEST_CASE("additive martingale has unit mean at the first generation") {
  auto env = envs::two_state_same_step();
  RngStream master(99, 0);
  std::vector<double> w1;
  for (int t = 0; t < 20000; ++t) {
    RngStream rng = master.substream(t);
    EnvironmentPath path(env, rng.next_u64());
    PopulationState pop(std::vector<std::int64_t>{}, 0);
    pop.evolve(path.state(0), rng);
    KahanSum w;
    for (const auto& [key, c] : pop.classes())
      w.add(double(c) * std::exp(-double(key.first)));
    w1.push_back(w.value());
  }
  auto ci = mean_ci(w1, 4.0);
  CHECK(ci.lo <= 1.0);
  CHECK(ci.hi >= 1.0);
}

TEST_CASE("W decays and the minimum position climbs") {
  auto env = envs::homogeneous_pm1();
  RngStream master(123, 0);
  std::vector<double> w5, w25;
  std::vector<double> min5, min25;
  for (int t = 0; t < 120; ++t) {
    RngStream rng = master.substream(t);
    auto traj = simulate_brw(env, rng.next_u64(), {}, 25, rng, 1ull << 40);
    REQUIRE_FALSE(traj.capped);
    w5.push_back(traj.rows[5].w);
    w25.push_back(traj.rows[25].w);
    min5.push_back(double(traj.rows[5].min_position));
    min25.push_back(double(traj.rows[25].min_position));
  }
  CHECK(median_inplace(w25) < median_inplace(w5));
  CHECK(median_inplace(min25) >= median_inplace(min5));
}

TEST_CASE("truncated martingale tracks D + beta W for large beta") {
  auto probe = connection_probe(envs::homogeneous_pm1(), 10, 60, 40, 2718, 1ull << 40);
  INFO("median ratio=" << probe.median_ratio << " excluded=" << probe.excluded_fraction);
  CHECK(probe.trials_used >= 40);
  CHECK(probe.median_ratio >= 0.9);
  CHECK(probe.median_ratio <= 1.1);
}

TEST_CASE("huge beta excludes no trials") {
  auto probe = connection_probe(envs::homogeneous_pm1(), 40, 20, 12, 3141, 1ull << 40);
  CHECK(probe.excluded_fraction == 0.0);
}
