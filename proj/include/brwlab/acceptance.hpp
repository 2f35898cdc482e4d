#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "brwlab/branching.hpp"
#include "brwlab/conditioned.hpp"
#include "brwlab/criterion.hpp"
#include "brwlab/env.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/renewal.hpp"
#include "brwlab/report_io.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"
#include "brwlab/tanaka.hpp"

namespace brwlab {

struct AcceptanceResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace acceptance_detail {

class Checker {
 public:
  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  template <class T>
  void require_le(T value, T bound, const std::string& what) {
    std::ostringstream os;
    os << what << " = " << value << " (<= " << bound << ")";
    require(value <= bound, os.str());
    worst_ = std::max(worst_, static_cast<double>(value));
  }
  bool pass() const { return pass_; }
  const std::string& failures() const { return failures_; }
  double worst() const { return worst_; }

 private:
  bool pass_ = true;
  std::string failures_;
  double worst_ = 0.0;
};

inline StepMeasure fair_pm1_step() {
  StepMeasure s;
  s.lattice_step = 1.0;
  s.atoms = {{-1, 0.5}, {1, 0.5}};
  return s;
}

inline std::vector<EnvironmentLaw> primary_envs() {
  return {envs::homogeneous_pm1(), envs::two_state_same_step(), envs::two_state_diff_step()};
}

}  // namespace acceptance_detail

/// The acceptance suite; every tolerance is pinned here, in code. Statistical
/// criteria use Bonferroni-corrected significance within each criterion's
/// family of p-values (base level 0.01).
inline std::vector<AcceptanceResult> run_acceptance(std::uint64_t seed = 20240001,
                                                    unsigned threads = 1,
                                                    std::ostream* log = nullptr) {
  using acceptance_detail::Checker;
  std::vector<AcceptanceResult> results;
  auto run = [&](int id, const std::string& name, const std::function<void(Checker&)>& body) {
    Checker ck;
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
      body(ck);
    } catch (const Error& e) {
      error = std::string(e.code_name()) + ": " + e.what();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    AcceptanceResult r;
    r.id = id;
    r.name = name;
    r.pass = ck.pass() && error.empty();
    r.detail = error.empty() ? (ck.pass() ? "ok" : ck.failures()) : error;
    r.seconds = secs;
    results.push_back(r);
    if (log)
      (*log) << (r.pass ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << "  ("
             << r.detail << ", " << r.seconds << " s)\n";
  };

  // 1. Boundary validation.
  run(1, "boundary validation", [&](Checker& ck) {
    ck.require(boundary_check(envs::homogeneous_pm1(), 1e-9).pass,
               "shipped +-1 recipe fails boundary_check at 1e-9");
    auto rep = boundary_check(envs::nonboundary_pm1(), 1e-9);
    const double expected = std::fabs(1.0 - (std::exp(-1.0) + std::exp(1.0)));
    ck.require(!rep.pass, "deterministic (+1,-1) law must fail");
    ck.require(std::fabs(rep.per_state[0].mass_residual - expected) < 1e-12,
               "reported mass residual is not |1 - (e^-1 + e)|");
  });

  // 2. Harmonic oracle on the fair walk.
  run(2, "harmonic oracle U(y) = y + 1", [&](Checker& ck) {
    HomogeneousWalk walk(acceptance_detail::fair_pm1_step());
    for (std::int64_t y = 0; y <= 10; ++y) {
      auto h = harmonic_u(walk, y, 1e-8);
      ck.require_le(std::fabs(h.value - double(y + 1)), 1e-6, "harmonic deviation");
      ck.require(h.error_bound <= 1e-8, "certified bound exceeds the tolerance");
    }
  });

  // 3. Harmonic fixed point on the three environments.
  run(3, "harmonic fixed point", [&](Checker& ck) {
    for (const auto& env : acceptance_detail::primary_envs()) {
      WalkPath walk{EnvironmentPath(env, seed)};
      for (std::int64_t y : {0, 1, 2, 5})
        for (std::int64_t beta : {0, 2})
          ck.require_le(harmonic_residual(walk, y + beta, 1e-8), 3e-8, "harmonic residual");
    }
  });

  // 4. Many-to-one identity.
  run(4, "many-to-one identity", [&](Checker& ck) {
    using Fn = std::function<double(std::span<const double>)>;
    Fn f_const = [](std::span<const double>) { return 1.0; };
    Fn f_pos = [](std::span<const double> xs) {
      return xs.empty() ? 1.0 : (xs.front() >= 0.0 ? 1.0 : 0.0);
    };
    Fn f_max = [](std::span<const double> xs) {
      double m = 0.0;
      for (double x : xs) m = std::max(m, x);
      return m;
    };
    for (const auto& env : acceptance_detail::primary_envs()) {
      EnvironmentPath path(env, seed + 1);
      for (std::uint64_t n : {1ull, 2ull, 3ull})
        for (const auto& f : {f_const, f_pos, f_max}) {
          auto r = many_to_one_check(path, n, f);
          ck.require_le(std::fabs(r.lhs - r.rhs), 1e-12 * std::max(1.0, std::fabs(r.lhs)),
                        "many-to-one gap");
        }
    }
  });

  // 5. Conditioned-walk dual route.
  run(5, "conditioned dual route", [&](Checker& ck) {
    for (const auto& env : acceptance_detail::primary_envs()) {
      HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, seed + 2)), 1e-11);
      for (std::int64_t beta : {0, 2}) {
        for (std::uint64_t n = 1; n <= 10; ++n) {
          auto direct = conditioned_marginal(u, n, beta);
          auto chained = conditioned_marginal_chained(u, n, beta);
          ck.require_le(direct.tv_distance(chained), 1e-8, "dual-route TV");
        }
        double worst_row = 0.0;
        for (std::uint64_t n = 0; n < 10; ++n)
          for (std::int64_t x = -beta; x <= 10; ++x)
            worst_row = std::max(worst_row,
                                 kernel_row(u, n, x, beta).pre_normalization_deviation);
        ck.require_le(worst_row, 1e-10, "kernel row pre-normalization deviation");
      }
    }
  });

  // 6. Renewal oracles and the R- harmonic identity.
  run(6, "renewal oracles", [&](Checker& ck) {
    // Brute-force ladder enumeration over every +-1 path of depth 16.
    {
      std::vector<std::int64_t> path(17, 0);
      bool descents_unit = true;
      double first_asc_at_1 = 0.0;
      const double w = std::pow(0.5, 16);
      std::function<void(int)> rec = [&](int n) {
        if (n == 16) {
          auto lad = ladder_decompose(path);
          for (std::size_t i = 0; i < lad.descending_heights.size(); ++i) {
            const std::int64_t prev = i == 0 ? 0 : lad.descending_heights[i - 1];
            if (lad.descending_heights[i] != prev - 1) descents_unit = false;
          }
          if (!lad.ascending_heights.empty() && lad.ascending_heights[0] == 1)
            first_asc_at_1 += w;
          return;
        }
        path[std::size_t(n) + 1] = path[std::size_t(n)] + 1;
        rec(n + 1);
        path[std::size_t(n) + 1] = path[std::size_t(n)] - 1;
        rec(n + 1);
      };
      rec(0);
      ck.require(descents_unit, "enumeration: strict descents must be unit steps");
      ck.require(std::fabs(first_asc_at_1 - 0.5) < 1e-12,
                 "enumeration: ascending height 1 must have mass 1/2");
    }
    auto table = renewal_functions(acceptance_detail::fair_pm1_step(), 600);
    ck.require(table.exact(), "fair-walk table must be exact");
    for (std::int64_t x = 0; x <= 600; ++x) {
      ck.require_le(std::fabs(table.r_minus[std::size_t(x)] - double(x + 1)), 1e-9, "R- oracle");
      if (x >= 1)
        ck.require_le(std::fabs(table.r_plus[std::size_t(x)] - double(2 * x - 1)), 1e-9,
                      "R oracle");
    }
    for (double r : harmonic_identity_rminus(acceptance_detail::fair_pm1_step(), table, 500))
      ck.require_le(r, 1e-9, "R- identity residual (fair walk)");
    auto asym = annealed_step(envs::two_state_diff_step());
    auto table2 = renewal_functions(asym, 600);
    ck.require(table2.exact_minus, "asymmetric skip-free table must have exact R-");
    for (double r : harmonic_identity_rminus(asym, table2, 500))
      ck.require_le(r, 1e-9, "R- identity residual (asymmetric walk)");
  });

  // 7. Series identity of the conditioned chain.
  run(7, "conditioned-series renewal identity", [&](Checker& ck) {
    const std::size_t trials = 100000;
    const std::uint64_t horizon = 2048;
    int which = 0;
    for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step()}) {
      auto g1 = [](std::int64_t x) { return x <= 2 ? 1.0 : 0.0; };
      auto r1 = conditioned_series_check(env, 0, -8, 2, g1, trials, horizon, seed + 7 + which);
      ck.require_le(std::fabs(r1.mc_estimate - r1.exact_integral),
                    3.0 * r1.mc_stderr + r1.tail, "series identity (beta = 0)");
      auto g2 = [](std::int64_t x) { return (x >= -2 && x <= 0) ? 1.0 : 0.0; };
      auto r2 = conditioned_series_check(env, 2, -2, 0, g2, trials, horizon, seed + 17 + which);
      ck.require_le(std::fabs(r2.mc_estimate - r2.exact_integral),
                    3.0 * r2.mc_stderr + r2.tail, "series identity (beta = 2)");
      ++which;
    }
  });

  // 8. Tanaka decomposition.
  run(8, "Tanaka decomposition", [&](Checker& ck) {
    for (const auto& env : acceptance_detail::primary_envs()) {
      HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, seed + 8)), 1e-11);
      for (std::uint64_t k = 1; k <= 4; ++k)
        ck.require_le(tanaka_identity_check(u, k).max_residual, 1e-8,
                      "prospective-minimum dual route");
    }
    // Independence and excursion-law checks; 4 p-values in this family.
    const double alpha = 0.01 / 4.0;
    int which = 0;
    for (const auto& env : {envs::homogeneous_pm1(), envs::two_state_same_step()}) {
      auto rep = tanaka_independence_test(env, seed + 80 + which, 220000, 256, seed + 81 + which,
                                          3999);
      ck.require(rep.used >= 100000, "need 1e5 uncensored excursions");
      ck.require(rep.perm.p_value > alpha, "independence rejected: p = " +
                                               std::to_string(rep.perm.p_value));
      auto exc = excursion_law_test(env, 100000, 512, seed + 82 + which);
      ck.require(exc.chi_square.p_value > alpha,
                 "excursion law rejected: p = " + std::to_string(exc.chi_square.p_value));
      ++which;
    }
  });

  // 9. One-step martingale identities.
  run(9, "one-step martingale checks", [&](Checker& ck) {
    for (const auto& env : acceptance_detail::primary_envs()) {
      EnvironmentPath path(env, seed + 9);
      HarmonicCache<WalkPath> u(WalkPath(path), 1e-11);
      std::vector<SmallParticle> pops[] = {{{0, true}},
                                           {{0, true}, {2, true}},
                                           {{1, true}, {3, true}, {0, true}}};
      for (auto& particles : pops)
        for (std::int64_t beta : {0, 2})
          for (std::uint64_t n : {0ull, 2ull}) {
            auto r = one_step_martingale_check<WalkPath>(particles, u, path.state(n), n, beta);
            ck.require_le(r.w, 1e-8, "W one-step residual");
            ck.require_le(r.d, 1e-8, "D one-step residual");
            ck.require_le(r.d_beta, 1e-8, "D^(beta) one-step residual");
          }
    }
  });

  // 10. Spinal decomposition.
  run(10, "spinal decomposition", [&](Checker& ck) {
    TreeFunctional f1 = [](const TreeView&) { return 1.0; };
    TreeFunctional f2 = [](const TreeView& t) {
      double w = 0.0;
      if (t.gen2.empty())
        for (auto x : t.gen1) w += std::exp(-double(x));
      else
        for (const auto& g : t.gen2)
          for (auto x : g) w += std::exp(-double(x));
      return w;
    };
    TreeFunctional f3 = [](const TreeView& t) {
      return (t.gen1.size() >= 2 && t.gen1[0] == 1) ? 1.0 : 0.0;
    };
    const double alpha = 0.01 / 3.0;  // three statistical p-values below
    int which = 0;
    for (const auto& env : acceptance_detail::primary_envs()) {
      EnvironmentPath path(env, seed + 10);
      HarmonicCache<WalkPath> u(WalkPath(path), 1e-11);
      for (std::int64_t beta : {0, 2}) {
        for (std::uint64_t n : {1ull, 2ull})
          for (const auto& f : {f1, f2, f3}) {
            auto r = change_of_measure_check(u, path, beta, 0, n, f);
            ck.require_le(std::fabs(r.lhs - r.rhs), 1e-8, "change-of-measure gap");
          }
        for (std::uint64_t n : {1ull, 2ull})
          ck.require_le(spine_posterior_check(u, path, beta, 0, n), 1e-8, "spine posterior");
        for (std::uint64_t n : {1ull, 2ull, 4ull})
          ck.require_le(spine_law_check(u, path, beta, 0, n, true).tv_distance, 1e-8,
                        "spine law TV");
      }
      auto stat = spine_law_check(u, path, 0, 0, 20, false, 100000, seed + 100 + which);
      ck.require(stat.chi_square.p_value > alpha,
                 "spine law rejected: p = " + std::to_string(stat.chi_square.p_value));
      ++which;
    }
  });

  // 11. Moment criterion.
  run(11, "moment criterion", [&](Checker& ck) {
    auto zero = moment_criterion(envs::single_child_at_zero());
    ck.require(zero.y_log2.value == 0.0 && zero.z_log.value == 0.0 && zero.nondegenerate,
               "single child at 0 must give zero moments");
    for (const auto& env : acceptance_detail::primary_envs()) {
      auto rep = moment_criterion(env);
      double oracle = 0.0;
      for (auto it = env.states.rbegin(); it != env.states.rend(); ++it) {
        for (auto oit = it->second.outcomes.rbegin(); oit != it->second.outcomes.rend(); ++oit) {
          double y = 0.0, z = 0.0;
          for (auto cit = oit->children.rbegin(); cit != oit->children.rend(); ++cit) {
            const double x = double(*cit) * it->second.lattice_step;
            y += std::exp(-x);
            if (x >= 0.0) z += x * std::exp(-x);
          }
          const double ly = y > 1.0 ? std::log(y) : 0.0;
          const double lz = z > 1.0 ? std::log(z) : 0.0;
          oracle += it->first * oit->prob * (y * ly * ly + z * lz);
        }
      }
      ck.require_le(std::fabs((rep.y_log2.value + rep.z_log.value) - oracle), 1e-12,
                    "finite-law moment vs reversed-order oracle");
      ck.require(rep.nondegenerate, "finite laws must classify nondegenerate");
    }
    auto c1 = moment_criterion(envs::tail_polylog(3.0));
    ck.require(!c1.nondegenerate && c1.flag == DegeneracyCase::case_i,
               "gamma = 3 tail must flag case (i)");
    auto c2 = moment_criterion(envs::tail_polylog(2.0));
    ck.require(!c2.nondegenerate && c2.flag == DegeneracyCase::case_ii,
               "gamma = 2 tail must flag case (ii)");
  });

  // 12. Qualitative limit probes.
  run(12, "qualitative probes", [&](Checker& ck) {
    // W_n halves between n = 5 and n = 45 (median over 200 trials).
    {
      RngStream master(seed + 12, 0);
      std::vector<double> w5, w45;
      auto rows = parallel_map<std::pair<double, double>>(200, threads, [&](std::size_t t) {
        RngStream rng = master.substream(t);
        auto traj = simulate_brw(envs::homogeneous_pm1(), rng.next_u64(), {}, 45, rng, 1ull << 40);
        return std::make_pair(traj.rows[5].w, traj.rows[45].w);
      });
      for (auto& [a, b] : rows) {
        w5.push_back(a);
        w45.push_back(b);
      }
      const double m5 = median_inplace(w5), m45 = median_inplace(w45);
      ck.require(m45 <= 0.5 * m5, "W_45 median must be at most half of W_5 median");
    }
    // D_n positive-limit fraction.
    {
      std::vector<std::uint64_t> cps{10, 40};
      auto probe = d_infinity_probe(envs::homogeneous_pm1(), 500, cps, seed + 13, 1e-3, 1ull << 40);
      ck.require(probe.positive_fraction.lo > 0.0,
                 "positive-limit fraction CI must exclude zero");
    }
    // Divergence dichotomy probe (documented heuristic thresholds).
    {
      std::vector<std::uint64_t> horizons{4096, 16384, 65536};
      auto grow = divergence_probe(
          envs::homogeneous_pm1(), 0,
          [](double x) { return std::pow(1.0 + std::max(x, 0.0), -2.0); }, 300, horizons,
          seed + 14);
      ck.require(grow.grows, "quadratic-decay series must grow");
      auto flat = divergence_probe(
          envs::homogeneous_pm1(), 0,
          [](double x) { return std::pow(1.0 + std::max(x, 0.0), -3.0); }, 300, horizons,
          seed + 15);
      ck.require(flat.plateaus, "cubic-decay series must plateau");
    }
  });

  // 13. Reproducibility.
  run(13, "reproducibility", [&](Checker& ck) {
    auto pipeline = [&](unsigned nthreads) {
      auto rows = parallel_map<std::string>(64, nthreads, [&](std::size_t t) {
        RngStream rng(seed + 16, t);
        EnvironmentPath path(envs::two_state_diff_step(), rng.next_u64());
        HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
        auto zeta = sample_conditioned_path(u, 0, 64, rng);
        std::ostringstream os;
        os.precision(17);
        os << t;
        for (auto x : zeta) os << "," << x;
        return os.str();
      });
      CsvWriter csv({"trial", "path"});
      for (auto& r : rows) csv.write_row({r});
      return csv.str();
    };
    const std::string a = pipeline(1);
    const std::string b = pipeline(1);
    const std::string c = pipeline(8);
    ck.require(fnv1a64(a) == fnv1a64(b), "same-seed reruns must hash identically");
    ck.require(fnv1a64(a) == fnv1a64(c), "thread counts must not change output bytes");
  });

  return results;
}

}  // namespace brwlab
