#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "brwlab/tanaka.hpp"

using namespace brwlab;

TEST_CASE("prospective minimum on documented paths") {
  {
    std::vector<std::int64_t> p{0, 1, 2, 3, 4, 5};
    auto r = prospective_minimum(p);
    CHECK(r.found);
    CHECK(r.nu == 1);
    CHECK_FALSE(r.censored);
    std::vector<std::int64_t> q{0, 1};
    auto r2 = prospective_minimum(q);
    CHECK(r2.nu == 1);
    CHECK(r2.censored);  // no post-observation
  }
  {
    std::vector<std::int64_t> p{0, 2, 1, 3, 4, 5};
    auto r = prospective_minimum(p, /*window=*/4);
    CHECK(r.nu == 2);
    CHECK(r.censored);  // only 3 observations after nu
    auto r2 = prospective_minimum(p, /*window=*/3);
    CHECK_FALSE(r2.censored);
  }
  {
    // A late dip rejects the early candidate.
    std::vector<std::int64_t> p{0, 2, 1, 3, 0, 5, 6, 7};
    auto r = prospective_minimum(p);
    CHECK(r.nu == 4);
  }
}

TEST_CASE("series identity for the conditioned chain") {
  for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step()}) {
    auto G = [](std::int64_t x) { return x <= 2 ? 1.0 : 0.0; };
    auto res = conditioned_series_check(env, 0, -10, 2, G, 20000, 1024, 9001);
    INFO("mc=" << res.mc_estimate << " +- " << res.mc_stderr << " exact=" << res.exact_integral
               << " tail=" << res.tail);
    CHECK(std::fabs(res.mc_estimate - res.exact_integral) <= 3.0 * res.mc_stderr + res.tail);
    CHECK(res.exact_integral > 0.0);
  }
}

TEST_CASE("series identity with a barrier and interval test function") {
  auto env = envs::homogeneous_pm1();
  auto G = [](std::int64_t x) { return (x >= -2 && x <= 0) ? 1.0 : 0.0; };
  auto res = conditioned_series_check(env, 2, -2, 0, G, 20000, 1024, 42);
  CHECK(std::fabs(res.mc_estimate - res.exact_integral) <= 3.0 * res.mc_stderr + res.tail);
}

TEST_CASE("series identity vanishes for G = 0") {
  auto env = envs::homogeneous_pm1();
  auto res = conditioned_series_check(env, 0, 0, 0, [](std::int64_t) { return 0.0; }, 200, 64, 7);
  CHECK(res.mc_estimate == 0.0);
  CHECK(res.exact_integral == 0.0);
}

TEST_CASE("dual-route identity for the first prospective minimum") {
  for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step(),
                          envs::two_state_diff_step()}) {
    HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, 31)), 1e-11);
    for (std::uint64_t k = 1; k <= 4; ++k) {
      auto res = tanaka_identity_check(u, k);
      INFO("k=" << k << " max_residual=" << res.max_residual);
      CHECK(res.max_residual <= 1e-8);
      // Parity can empty odd k for +-1 steps; mass must exist at k = 1, 2.
      if (k <= 2) CHECK_FALSE(res.per_x.empty());
    }
  }
}

TEST_CASE("unreachable heights carry no mass on either route") {
  HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(envs::homogeneous_pm1(), 31)), 1e-11);
  auto res = tanaka_identity_check(u, 2);
  // k = 2 with +-1 steps cannot end at odd heights.
  for (const auto& [x, lr] : res.per_x) CHECK(x % 2 == 0);
}

TEST_CASE("excursion heights follow the first ascending ladder height") {
  for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step()}) {
    std::vector<std::pair<std::uint64_t, std::int64_t>> probes{{1, 1}, {2, 0}};
    auto rep = excursion_law_test(env, 20000, 512, 555, probes);
    INFO("chi p=" << rep.chi_square.p_value << " unresolved=" << rep.unresolved_weight
                  << " exact unresolved=" << rep.exact_unresolved);
    CHECK(rep.chi_square.p_value > 0.01);
    CHECK(std::fabs(rep.unresolved_weight - rep.exact_unresolved) <= 0.02);
    for (const auto& [kx, est_exact] : rep.joint_checks) {
      INFO("k=" << kx.first << " x=" << kx.second << " est=" << est_exact.first
                << " exact=" << est_exact.second);
      CHECK(std::fabs(est_exact.first - est_exact.second) <= 0.02);
    }
  }
}

TEST_CASE("fair-walk excursion joint probes match hand values") {
  auto env = envs::homogeneous_pm1();
  std::vector<std::pair<std::uint64_t, std::int64_t>> probes{{1, 1}, {2, 0}, {1, 0}};
  auto rep = excursion_law_test(env, 20000, 512, 77, probes);
  // mu(Gamma_1 = 1, S = 1) = 1/2; mu(Gamma_1 = 2, S = 0) = 1/4; (1, 0) impossible.
  CHECK(rep.joint_checks[0].second.second == Catch::Approx(0.5));
  CHECK(rep.joint_checks[1].second.second == Catch::Approx(0.25));
  CHECK(rep.joint_checks[2].second.second == 0.0);
}

TEST_CASE("excursion/post-excursion independence holds where kernels are shift-invariant") {
  int idx = 0;
  for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step()}) {
    auto rep = tanaka_independence_test(env, 101 + idx, 30000, 256, 2000 + idx);
    INFO("p=" << rep.perm.p_value << " used=" << rep.used
              << " discarded=" << rep.discarded_fraction);
    CHECK(rep.perm.p_value > 0.005);
    CHECK(rep.used >= 10000);
    ++idx;
  }
}

TEST_CASE("independence test detects injected dependence") {
  auto rep = tanaka_independence_test(envs::homogeneous_pm1(), 101, 5000, 256, 77,
                                      499, /*inject_dependence=*/true);
  CHECK(rep.perm.p_value <= 1.0 / 500.0 + 1e-12);
}

TEST_CASE("concatenated excursions reproduce the conditioned marginal") {
  auto env = envs::homogeneous_pm1();
  auto rep = excursion_reconstruction_test(env, 8000, 16, 1024, 31337);
  INFO("two-sample p=" << rep.p_value);
  CHECK(rep.p_value > 1e-3);
}

TEST_CASE("divergence probe separates the documented test functions") {
  auto env = envs::homogeneous_pm1();
  std::vector<std::uint64_t> horizons{4096, 16384, 65536};
  auto grow = divergence_probe(
      env, 0, [](double x) { return std::pow(1.0 + std::max(x, 0.0), -2.0); }, 300, horizons, 5);
  INFO("grow ratio=" << grow.growth_ratio);
  CHECK(grow.grows);
  CHECK_FALSE(grow.plateaus);

  auto flat = divergence_probe(
      env, 0, [](double x) { return std::pow(1.0 + std::max(x, 0.0), -3.0); }, 300, horizons, 6);
  INFO("flat ratio=" << flat.growth_ratio);
  CHECK(flat.plateaus);
  CHECK_FALSE(flat.grows);

  std::vector<std::uint64_t> small_h{64, 256};
  auto zero = divergence_probe(env, 0, [](double) { return 0.0; }, 50, small_h, 7);
  for (double s : zero.median_partial_sums) CHECK(s == 0.0);
}
