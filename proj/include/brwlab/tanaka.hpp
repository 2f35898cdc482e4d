#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "brwlab/conditioned.hpp"
#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/renewal.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// Prospective minimum.
// ---------------------------------------------------------------------------

struct ProspectiveMinimum {
  std::size_t nu = 0;     // first index whose observed suffix never goes below it
  bool found = false;
  bool censored = true;   // confirmation window/rise not met within the path
};

/// First m >= 1 with zeta_{m+k} >= zeta_m for all observed k. Within a finite
/// window this is the first index attaining the running minimum of
/// zeta_1..zeta_end. `window` post-observations and a rise of `min_rise`
/// lattice units are required to clear the censoring flag.
inline ProspectiveMinimum prospective_minimum(std::span<const std::int64_t> zeta,
                                              std::size_t window = 1, std::int64_t min_rise = 0) {
  ProspectiveMinimum out;
  if (zeta.size() < 2) return out;
  std::size_t arg = 1;
  for (std::size_t m = 2; m < zeta.size(); ++m)
    if (zeta[m] < zeta[arg]) arg = m;
  out.nu = arg;
  out.found = true;
  const std::size_t post = zeta.size() - 1 - arg;
  std::int64_t rise = 0;
  for (std::size_t j = arg + 1; j < zeta.size(); ++j) rise = std::max(rise, zeta[j] - zeta[arg]);
  out.censored = post < window || rise < min_rise;
  return out;
}

// ---------------------------------------------------------------------------
// Series identity of the conditioned chain (expectation vs renewal integral).
// ---------------------------------------------------------------------------

struct ConditionedSeriesResult {
  double mc_estimate = 0.0;
  double mc_stderr = 0.0;
  double exact_integral = 0.0;    // integral of G against script-R^{(beta)}
  double partial_integral = 0.0;  // the same series truncated at the MC horizon
  double tail = 0.0;              // exact_integral - partial_integral (+ table error)
  std::size_t trials = 0;
};

/// Monte Carlo estimate of E[sum_n G(zeta_n) U(xi,beta) / U(theta^n xi,
/// zeta_n + beta)] against the closed renewal integral. The estimator is run
/// to a fixed horizon, whose truncation bias equals the exactly computable
/// difference between the full and partial integrals.
inline ConditionedSeriesResult conditioned_series_check(
    const EnvironmentLaw& env, std::int64_t beta, std::int64_t g_lo, std::int64_t g_hi,
    const std::function<double(std::int64_t)>& g, std::size_t trials, std::uint64_t horizon,
    std::uint64_t master_seed) {
  if (trials == 0) fail(errc::too_few_samples, "conditioned_series_check: zero trials");
  auto G = [&](std::int64_t x) { return (x < g_lo || x > g_hi) ? 0.0 : g(x); };
  const StepMeasure annealed = annealed_step(env);
  const std::int64_t x_max = g_hi + beta + 4 + annealed.max_jump();
  RenewalTable table = renewal_functions(annealed, std::max<std::int64_t>(x_max, 8));

  ConditionedSeriesResult res;
  res.trials = trials;
  res.exact_integral = renewal_integral(table, beta, G);
  auto occ = occupation_identity_check(annealed, table, beta, G, horizon);
  res.partial_integral = occ.lhs;
  res.tail = std::max(0.0, res.exact_integral - res.partial_integral) + 2.0 * table.error_plus;

  std::vector<double> per_trial(trials, 0.0);
  RngStream master(master_seed, 0x7A11);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(t);
    EnvironmentPath path(env, trial_rng.next_u64());
    HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
    auto zeta = sample_conditioned_path(u, beta, horizon, trial_rng);
    const double u0 = u(0, beta);
    KahanSum acc;
    for (std::uint64_t n = 1; n <= horizon; ++n) {
      const double gv = G(zeta[n]);
      if (gv != 0.0) acc.add(gv * u0 / u(n, zeta[n] + beta));
    }
    per_trial[t] = acc.value();
  }
  auto ci = mean_ci(per_trial, 1.0);
  res.mc_estimate = ci.mean;
  res.mc_stderr = ci.stderr_;
  return res;
}

// ---------------------------------------------------------------------------
// Dual-route identity for the first prospective minimum law.
// ---------------------------------------------------------------------------

struct TanakaIdentityResult {
  double max_residual = 0.0;
  std::map<std::int64_t, std::pair<double, double>> per_x;  // x -> (chain route, walk route)
};

/// U(xi,0) P(nu = k, zeta_nu = x) against U(theta^k xi, 0) P(S_k = x below
/// all earlier S_j). The left side is enumerated through the conditioned
/// kernel with the never-descend factor; the right side enumerates tilted
/// walk paths directly.
template <class Walk>
TanakaIdentityResult tanaka_identity_check(HarmonicCache<Walk>& u, std::uint64_t k,
                                           std::uint64_t enumeration_cap = 2000000) {
  if (k == 0 || k > 8) fail(errc::bad_config, "tanaka_identity_check: need 1 <= k <= 8");
  TanakaIdentityResult res;
  std::uint64_t nodes = 0;
  auto bump = [&]() {
    if (++nodes > enumeration_cap)
      fail(errc::enumeration_too_large, "tanaka_identity_check: enumeration cap exceeded");
  };

  // Chain route: P_xi-chain paths with zeta_k strictly below zeta_1..zeta_{k-1};
  // min_prev = min(zeta_1..zeta_{step-1}), the start zeta_0 excluded.
  constexpr std::int64_t kNoMin = INT64_MAX;
  std::map<std::int64_t, double> chain_prob;
  std::function<void(std::uint64_t, std::int64_t, std::int64_t, double)> rec_chain =
      [&](std::uint64_t step, std::int64_t pos, std::int64_t min_prev, double prob) {
        if (step == k) {
          if (pos < min_prev) chain_prob[pos] += prob;
          return;
        }
        auto row = kernel_row(u, step, pos, 0);
        const std::int64_t next_min =
            step == 0 ? kNoMin : std::min(min_prev, pos);
        for (const auto& [y, w] : row.targets) {
          bump();
          rec_chain(step + 1, y, next_min, prob * w);
        }
      };
  rec_chain(0, 0, kNoMin, 1.0);

  const double u_00 = u(0, 0);
  for (const auto& [x, p] : chain_prob) {
    const double h = u(k, 0) / u(k, x);  // never-descend factor H(theta^k xi, x, x)
    res.per_x[x].first = u_00 * p * h;
  }

  // Walk route: tilted paths with S_k = x >= 0 strictly below S_1..S_{k-1}.
  std::map<std::int64_t, double> walk_prob;
  std::function<void(std::uint64_t, std::int64_t, std::int64_t, double)> rec_walk =
      [&](std::uint64_t step, std::int64_t pos, std::int64_t min_prev, double prob) {
        if (step == k) {
          if (pos >= 0 && pos < min_prev) walk_prob[pos] += prob;
          return;
        }
        const StepMeasure& mu = u.walk().step(step);
        const std::int64_t next_min = step == 0 ? kNoMin : std::min(min_prev, pos);
        for (const auto& [d, m] : mu.atoms) {
          bump();
          rec_walk(step + 1, pos + d, next_min, prob * m);
        }
      };
  rec_walk(0, 0, kNoMin, 1.0);
  for (const auto& [x, p] : walk_prob) res.per_x[x].second = u(k, 0) * p;

  for (const auto& [x, lr] : res.per_x)
    res.max_residual = std::max(res.max_residual, std::fabs(lr.first - lr.second));
  return res;
}

// ---------------------------------------------------------------------------
// Annealed excursion law via the resolved-minimum estimator.
// ---------------------------------------------------------------------------

/// Per-path excursion data at a finite horizon. The first index attaining the
/// running minimum is the only candidate for nu; its conditional probability
/// of being nu given the observed window is the never-descend probability.
struct ResolvedExcursion {
  std::size_t candidate = 0;       // first argmin of zeta_1..zeta_N
  std::int64_t height = 0;         // zeta at the candidate
  double resolve_probability = 0;  // P(nu = candidate | path) = H
};

template <class Walk>
ResolvedExcursion resolve_excursion(HarmonicCache<Walk>& u, std::span<const std::int64_t> zeta) {
  ResolvedExcursion out;
  if (zeta.size() < 2) fail(errc::bad_config, "resolve_excursion: path too short");
  std::size_t arg = 1;
  for (std::size_t m = 2; m < zeta.size(); ++m)
    if (zeta[m] < zeta[arg]) arg = m;
  out.candidate = arg;
  out.height = zeta[arg];
  const std::uint64_t n_obs = zeta.size() - 1;
  out.resolve_probability = u(n_obs, zeta[n_obs] - out.height) / u(n_obs, zeta[n_obs]);
  return out;
}

struct ExcursionLawReport {
  TestReport chi_square;
  double unresolved_weight = 0.0;   // estimator mass not resolved at the horizon
  double exact_unresolved = 0.0;    // matching exact mass P(Gamma_1 > N)
  double u0_estimate = 0.0;         // estimate of E[U(xi, 0)]
  double u0_stderr = 0.0;
  std::size_t trials = 0;
  std::vector<std::pair<std::pair<std::uint64_t, std::int64_t>, std::pair<double, double>>>
      joint_checks;  // ((k, x), (estimate, exact)); first-epoch joint law probes
};

/// Tests that the height of the first prospective minimum, reweighted by
/// U(xi,0)/E U(xi,0), matches the first weak ascending ladder height of the
/// annealed walk. Both sides are truncated at the same horizon: the exact
/// side by a first-passage DP, the sampled side by the resolved-minimum
/// estimator, so the comparison carries no censoring bias.
inline ExcursionLawReport excursion_law_test(const EnvironmentLaw& env, std::size_t trials,
                                             std::uint64_t horizon, std::uint64_t master_seed,
                                             std::span<const std::pair<std::uint64_t, std::int64_t>>
                                                 joint_probes = {}) {
  if (trials == 0) fail(errc::too_few_uncensored, "excursion_law_test: zero trials");
  ExcursionLawReport rep;
  rep.trials = trials;

  const StepMeasure annealed = annealed_step(env);
  // The estimator resolves first passages within the chain horizon, so the
  // exact side must carry the same truncation.
  LadderLaw target = ascending_first_passage_dp(annealed, horizon);

  WeightedHistogram hist;
  const std::int64_t unresolved_cell = -1000;  // heights are >= 0
  KahanSum unresolved_w, total_w;
  std::vector<double> u0_samples(trials, 0.0);
  std::vector<std::vector<double>> joint_samples(joint_probes.size(),
                                                 std::vector<double>(trials, 0.0));

  RngStream master(master_seed, 0xE5C);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(t);
    EnvironmentPath path(env, trial_rng.next_u64());
    HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
    auto zeta = sample_conditioned_path(u, 0, horizon, trial_rng);
    const double w_env = u(0, 0);
    u0_samples[t] = w_env;
    auto exc = resolve_excursion(u, zeta);
    hist.add(exc.height, w_env * exc.resolve_probability);
    unresolved_w.add(w_env * (1.0 - exc.resolve_probability));
    total_w.add(w_env);
    for (std::size_t j = 0; j < joint_probes.size(); ++j) {
      const auto& [k, x] = joint_probes[j];
      joint_samples[j][t] =
          (exc.candidate == k && exc.height == x) ? w_env * exc.resolve_probability : 0.0;
    }
  }
  hist.add(unresolved_cell, unresolved_w.value());

  std::map<std::int64_t, double> exact;
  for (const auto& [h, p] : target.pmf) exact[h] = p;
  exact[unresolved_cell] = 1.0 - target.resolved_mass;

  auto u0 = mean_ci(u0_samples, 1.0);
  rep.u0_estimate = u0.mean;
  rep.u0_stderr = u0.stderr_;
  rep.unresolved_weight = unresolved_w.value() / total_w.value();
  rep.exact_unresolved = 1.0 - target.resolved_mass;
  rep.chi_square = chi_square_vs_exact(hist, exact, "excursion_height_vs_ladder");

  // Joint (epoch, height) probes against the k-step first-passage law.
  for (std::size_t j = 0; j < joint_probes.size(); ++j) {
    const auto& [k, x] = joint_probes[j];
    // mu^infinity(Gamma_1 = k, S_{Gamma_1} = x) via exhaustive annealed paths.
    double exact_joint = 0.0;
    std::function<void(std::uint64_t, std::int64_t, double)> rec = [&](std::uint64_t step,
                                                                       std::int64_t pos,
                                                                       double prob) {
      if (step == k) {
        if (pos == x) exact_joint += prob;
        return;
      }
      for (const auto& [d, m] : annealed.atoms) {
        const std::int64_t next = pos + d;
        const bool is_last = step + 1 == k;
        if (!is_last && next >= 0) continue;  // Gamma_1 would be earlier
        if (is_last && next < 0) continue;
        rec(step + 1, next, prob * m);
      }
    };
    rec(0, 0, 1.0);
    auto ci = mean_ci(joint_samples[j], 1.0);
    // Normalize by the environment-weight mean (self-normalized importance).
    rep.joint_checks.push_back({{k, x}, {ci.mean / u0.mean, exact_joint}});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Quenched independence of the excursion from the post-minimum path.
// ---------------------------------------------------------------------------

struct IndependenceReport {
  TestReport perm;
  double discarded_fraction = 0.0;
  std::size_t used = 0;
};

/// Samples excursions of the chain conditioned on the excursion ending at
/// height 0 (the first return to 0 is then provably the prospective minimum,
/// so no censoring correction is needed) and permutation-tests the epoch
/// against the first two post-minimum increments.
inline IndependenceReport tanaka_independence_test(const EnvironmentLaw& env,
                                                   std::uint64_t env_seed, std::size_t trials,
                                                   std::uint64_t horizon, std::uint64_t rng_seed,
                                                   std::size_t permutations = 1999,
                                                   bool inject_dependence = false) {
  EnvironmentPath path(env, env_seed);
  HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);

  std::vector<double> nu_feature, post1, post2;
  RngStream master(rng_seed, 0x1D);
  std::size_t discarded = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(t);
    auto zeta = sample_conditioned_path(u, 0, horizon, trial_rng);
    std::size_t hit = 0;
    for (std::size_t m = 1; m + 2 < zeta.size(); ++m)
      if (zeta[m] == 0) {
        hit = m;
        break;
      }
    if (hit == 0) {
      ++discarded;
      continue;
    }
    nu_feature.push_back(static_cast<double>(hit));
    post1.push_back(static_cast<double>(zeta[hit + 1]));
    post2.push_back(static_cast<double>(zeta[hit + 2]));
  }
  IndependenceReport rep;
  rep.discarded_fraction = static_cast<double>(discarded) / static_cast<double>(trials);
  rep.used = nu_feature.size();
  if (rep.used < 100)
    fail(errc::too_few_uncensored, "tanaka_independence_test: too few resolved excursions");
  std::vector<std::vector<double>> pre{nu_feature};
  std::vector<std::vector<double>> post{post1, post2};
  if (inject_dependence) post.push_back(nu_feature);  // power sanity check
  rep.perm = permutation_independence(pre, post, permutations, RngStream(rng_seed, 0x9E),
                                      "tanaka_independence");
  return rep;
}

// ---------------------------------------------------------------------------
// Excursion reconstruction: i.i.d. excursions concatenate to the chain.
// ---------------------------------------------------------------------------

/// Builds the empirical law of zeta_N two ways: direct sampling, and
/// concatenation of independently drawn excursions (each accepted with its
/// resolve probability). Valid two-sample comparison under the annealed law.
inline TestReport excursion_reconstruction_test(const EnvironmentLaw& env, std::size_t trials,
                                                std::uint64_t n_test, std::uint64_t horizon,
                                                std::uint64_t master_seed) {
  WeightedHistogram direct, rebuilt;
  RngStream master(master_seed, 0xC0);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(2 * t);
    EnvironmentPath path(env, trial_rng.next_u64());
    HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
    auto zeta = sample_conditioned_path(u, 0, n_test, trial_rng);
    direct.add(zeta[n_test]);
  }
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(2 * t + 1);
    std::int64_t base = 0;
    std::uint64_t filled = 0;
    std::int64_t value_at_n = 0;
    bool done = false;
    while (!done) {
      // Draw one excursion accepted with its resolve probability.
      for (;;) {
        EnvironmentPath path(env, trial_rng.next_u64());
        HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
        auto zeta = sample_conditioned_path(u, 0, horizon, trial_rng);
        auto exc = resolve_excursion(u, zeta);
        if (trial_rng.u01() > exc.resolve_probability) continue;
        // Accepted: excursion is zeta_1..zeta_{candidate}.
        for (std::size_t j = 1; j <= exc.candidate && !done; ++j) {
          ++filled;
          if (filled == n_test) {
            value_at_n = base + zeta[j];
            done = true;
          }
        }
        base += exc.height;
        break;
      }
    }
    rebuilt.add(value_at_n);
  }
  return chi_square_two_sample(direct, rebuilt, "excursion_reconstruction");
}

// ---------------------------------------------------------------------------
// Divergence probe for non-increasing series along the conditioned chain.
// ---------------------------------------------------------------------------

struct DivergenceProbe {
  std::vector<std::uint64_t> horizons;
  std::vector<double> median_partial_sums;  // across trials, at each horizon
  double growth_ratio = 0.0;                // last median / first median
  bool grows = false;
  bool plateaus = false;
};

/// Empirical partial sums of U(xi,beta) F(zeta_n) along sampled conditioned
/// paths. Growth/plateau classification is a documented heuristic on the
/// median trajectory; the underlying statement is an a.s. dichotomy.
inline DivergenceProbe divergence_probe(const EnvironmentLaw& env, std::int64_t beta,
                                        const std::function<double(double)>& F_real,
                                        std::size_t trials, std::span<const std::uint64_t> horizons,
                                        std::uint64_t master_seed, double growth_threshold = 1.25,
                                        double plateau_threshold = 1.18) {
  if (horizons.empty()) fail(errc::bad_config, "divergence_probe: no horizons");
  DivergenceProbe probe;
  probe.horizons.assign(horizons.begin(), horizons.end());
  const std::uint64_t n_max = *std::max_element(horizons.begin(), horizons.end());
  std::vector<std::vector<double>> sums(horizons.size(), std::vector<double>(trials, 0.0));
  RngStream master(master_seed, 0xD1);
  const double delta = env.lattice_step;
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream trial_rng = master.substream(t);
    EnvironmentPath path(env, trial_rng.next_u64());
    HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
    auto zeta = sample_conditioned_path(u, beta, n_max, trial_rng);
    const double u0 = u(0, beta);
    KahanSum acc;
    std::size_t hi = 0;
    for (std::uint64_t n = 1; n <= n_max; ++n) {
      acc.add(u0 * F_real(static_cast<double>(zeta[n]) * delta));
      while (hi < probe.horizons.size() && probe.horizons[hi] == n) {
        sums[hi][t] = acc.value();
        ++hi;
      }
    }
    for (; hi < probe.horizons.size(); ++hi) sums[hi][t] = acc.value();
  }
  for (auto& v : sums) probe.median_partial_sums.push_back(median_inplace(v));
  const double first = probe.median_partial_sums.front();
  const double last = probe.median_partial_sums.back();
  probe.growth_ratio = first > 0.0 ? last / first : 0.0;
  probe.grows = probe.growth_ratio >= growth_threshold;
  probe.plateaus = first > 0.0 && probe.growth_ratio <= plateau_threshold;
  return probe;
}

}  // namespace brwlab
