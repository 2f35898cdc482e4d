#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "brwlab/errors.hpp"
#include "brwlab/lattice.hpp"
#include "brwlab/rng.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// Ladder structure of a realized walk path.
// ---------------------------------------------------------------------------

struct LadderAnalysis {
  std::vector<std::size_t> descending_epochs;   // strict records, starts at 0
  std::vector<std::int64_t> descending_heights; // S_{gamma_k}, k >= 1
  std::vector<std::size_t> ascending_epochs;    // weak records, starts at 0
  std::vector<std::int64_t> ascending_heights;  // S_{Gamma_k}, k >= 1
  bool descending_censored = false;  // a further epoch may lie past the window
  bool ascending_censored = false;
};

inline LadderAnalysis ladder_decompose(std::span<const std::int64_t> path) {
  if (path.empty()) fail(errc::bad_config, "ladder_decompose: empty path");
  LadderAnalysis out;
  out.descending_epochs.push_back(0);
  out.ascending_epochs.push_back(0);
  std::int64_t desc_level = path[0];
  std::int64_t asc_level = path[0];
  for (std::size_t n = 1; n < path.size(); ++n) {
    if (path[n] < desc_level) {
      out.descending_epochs.push_back(n);
      out.descending_heights.push_back(path[n]);
      desc_level = path[n];
    }
    if (path[n] >= asc_level) {
      out.ascending_epochs.push_back(n);
      out.ascending_heights.push_back(path[n]);
      asc_level = path[n];
    }
  }
  out.descending_censored = out.descending_epochs.back() + 1 < path.size();
  out.ascending_censored = out.ascending_epochs.back() + 1 < path.size();
  return out;
}

// ---------------------------------------------------------------------------
// First ladder height laws of a homogeneous (annealed) walk.
// ---------------------------------------------------------------------------

/// Law of the first ladder height in lattice units. `resolved_mass` < 1 marks
/// a truncated first-passage DP; the defect bounds the pmf error site-wise.
struct LadderLaw {
  std::map<std::int64_t, double> pmf;
  double resolved_mass = 0.0;
  bool exact = false;
  double error_bound = 0.0;
};

/// Law of -S_{gamma_1} (strict descending). Skip-free-down walks land one
/// step below the barrier surely, so the law is exactly delta_1; otherwise a
/// killed DP resolves all passages up to `horizon`.
inline LadderLaw descending_ladder_law(const StepMeasure& mu, std::uint64_t horizon = 4096) {
  LadderLaw law;
  if (mu.min_jump() >= 0) fail(errc::bad_config, "descending_ladder_law: walk never descends");
  if (mu.min_jump() == -1) {
    law.pmf[1] = 1.0;
    law.resolved_mass = 1.0;
    law.exact = true;
    law.error_bound = 0.0;
    return law;
  }
  LatticeDistribution dist = LatticeDistribution::point_mass(mu.lattice_step, 0);
  KahanSum resolved;
  std::map<std::int64_t, KahanSum> hits;
  for (std::uint64_t n = 0; n < horizon; ++n) {
    LatticeDistribution next = propagate(dist, mu);
    std::vector<double> keep(next.support_size(), 0.0);
    const std::int64_t lo = next.min_index();
    next.for_each([&](std::int64_t i, double m) {
      if (i < 0) {
        hits[-i].add(m);
        resolved.add(m);
      } else {
        keep[static_cast<std::size_t>(i - lo)] = m;
      }
    });
    dist = LatticeDistribution(mu.lattice_step, lo, std::move(keep));
    if (dist.empty()) break;
  }
  for (auto& [h, s] : hits) law.pmf[h] = s.value();
  law.resolved_mass = resolved.value();
  law.exact = false;
  law.error_bound = 1.0 - law.resolved_mass;
  return law;
}

/// First-passage law of the walk into [0, inf) resolved within `horizon`
/// steps: the pmf of (S_{Gamma_1}; Gamma_1 <= horizon), plus the unresolved
/// mass. Always runs the DP (the excursion tests compare against exactly
/// this truncation).
inline LadderLaw ascending_first_passage_dp(const StepMeasure& mu, std::uint64_t horizon) {
  LadderLaw law;
  if (mu.max_jump() <= 0) fail(errc::bad_config, "ascending_first_passage_dp: walk never ascends");
  // First step resolves non-negative jumps immediately; afterwards evolve the
  // strictly negative remainder and catch re-entries into [0, inf).
  std::map<std::int64_t, KahanSum> hits;
  KahanSum resolved;
  std::vector<double> neg;
  std::int64_t lo = mu.min_jump();
  neg.assign(static_cast<std::size_t>(-lo), 0.0);
  for (const auto& [d, m] : mu.atoms) {
    if (d >= 0) {
      hits[d].add(m);
      resolved.add(m);
    } else {
      neg[static_cast<std::size_t>(d - lo)] += m;
    }
  }
  LatticeDistribution dist(mu.lattice_step, lo, std::move(neg));
  for (std::uint64_t n = 1; n < horizon && !dist.empty(); ++n) {
    LatticeDistribution next = propagate(dist, mu);
    std::vector<double> keep(next.support_size(), 0.0);
    const std::int64_t klo = next.min_index();
    next.for_each([&](std::int64_t i, double m) {
      if (i >= 0) {
        hits[i].add(m);
        resolved.add(m);
      } else {
        keep[static_cast<std::size_t>(i - klo)] = m;
      }
    });
    dist = LatticeDistribution(mu.lattice_step, klo, std::move(keep));
  }
  for (auto& [h, s] : hits) law.pmf[h] = s.value();
  law.resolved_mass = resolved.value();
  law.exact = false;
  law.error_bound = 1.0 - law.resolved_mass;
  return law;
}

/// Law of S_{Gamma_1} (weak ascending). For skip-free-up walks re-entry from
/// below lands exactly at 0, so the full law is {1: mu(+1), 0: 1 - mu(+1)};
/// otherwise the truncated DP with its resolution defect.
inline LadderLaw ascending_ladder_law(const StepMeasure& mu, std::uint64_t horizon = 4096) {
  if (mu.max_jump() <= 0) fail(errc::bad_config, "ascending_ladder_law: walk never ascends");
  if (mu.max_jump() == 1) {
    LadderLaw law;
    double up = 0.0;
    for (const auto& [d, m] : mu.atoms)
      if (d == 1) up = m;
    law.pmf[1] = up;
    law.pmf[0] = 1.0 - up;
    law.resolved_mass = 1.0;
    law.exact = true;
    law.error_bound = 0.0;
    return law;
  }
  return ascending_first_passage_dp(mu, horizon);
}

// ---------------------------------------------------------------------------
// Renewal functions and measures.
// ---------------------------------------------------------------------------

/// Renewal data on the lattice grid 0..x_max:
///   r_minus[x]   = R^-(x), the descending ladder renewal function;
///   rho_minus[x] = its measure increments (includes the atom at 0);
///   rho_script[x]= sum_{n>=1} P(S_{Gamma_n} = x), the occupation measure of
///                  weak ascending ladder points excluding the start;
///   r_plus[x]    = R(x) with the convention R(0) = 1.
struct RenewalTable {
  double lattice_step = 1.0;
  std::int64_t x_max = 0;
  std::vector<double> r_minus;
  std::vector<double> rho_minus;
  std::vector<double> r_plus;
  std::vector<double> rho_script;
  bool exact_minus = false;
  bool exact_plus = false;
  double error_minus = 0.0;
  double error_plus = 0.0;
  bool exact() const { return exact_minus && exact_plus; }
};

namespace detail {

/// rho = sum_{n>=0} nu^{*n} on 0..x_max for a ladder-increment law nu
/// (possibly with an atom at 0 of mass < 1).
inline std::vector<double> renewal_measure(const std::map<std::int64_t, double>& nu,
                                           std::int64_t x_max) {
  double at0 = 0.0;
  auto it0 = nu.find(0);
  if (it0 != nu.end()) at0 = it0->second;
  if (at0 >= 1.0) fail(errc::bad_config, "renewal_measure: increment law concentrated at 0");
  std::vector<double> rho(static_cast<std::size_t>(x_max + 1), 0.0);
  rho[0] = 1.0 / (1.0 - at0);
  for (std::int64_t x = 1; x <= x_max; ++x) {
    KahanSum acc;
    for (const auto& [h, p] : nu) {
      if (h <= 0 || h > x) continue;
      acc.add(p * rho[static_cast<std::size_t>(x - h)]);
    }
    rho[static_cast<std::size_t>(x)] = acc.value() / (1.0 - at0);
  }
  return rho;
}

}  // namespace detail

enum class RenewalMethod { exact, monte_carlo };

/// Builds the renewal tables from the annealed step measure. The exact
/// method chains the first-ladder-height law through a renewal DP; tables
/// inherit the ladder laws' resolution error. The Monte Carlo method draws
/// ladder increments by simulation and carries a CLT error bar.
inline RenewalTable renewal_functions(const StepMeasure& annealed, std::int64_t x_max,
                                      RenewalMethod method = RenewalMethod::exact,
                                      std::uint64_t budget = 200000, RngStream rng = RngStream(),
                                      std::uint64_t ladder_horizon = 4096) {
  RenewalTable t;
  t.lattice_step = annealed.lattice_step;
  t.x_max = x_max;
  LadderLaw down, up;
  if (method == RenewalMethod::exact) {
    down = descending_ladder_law(annealed, ladder_horizon);
    up = ascending_ladder_law(annealed, ladder_horizon);
    t.exact_minus = down.exact;
    t.exact_plus = up.exact;
    t.error_minus = down.error_bound;
    t.error_plus = up.error_bound;
    if (down.resolved_mass > 0.0)
      for (auto& [h, p] : down.pmf) p /= down.resolved_mass;
    if (up.resolved_mass > 0.0)
      for (auto& [h, p] : up.pmf) p /= up.resolved_mass;
  } else {
    // Empirical ladder increments from simulated first passages.
    std::uint64_t resolved_down = 0, resolved_up = 0, censored = 0;
    std::vector<double> probs;
    for (const auto& [d, m] : annealed.atoms) probs.push_back(m);
    const std::uint64_t max_steps = 4096;
    for (std::uint64_t trial = 0; trial < budget; ++trial) {
      std::int64_t s = 0;
      bool down_done = false, up_done = false;
      for (std::uint64_t n = 0; n < max_steps && !(down_done && up_done); ++n) {
        std::size_t pick = rng.discrete(probs);
        s += annealed.atoms[pick].first;
        if (!down_done && s < 0) {
          down.pmf[-s] += 1.0;
          ++resolved_down;
          down_done = true;
        }
        if (!up_done && s >= 0) {
          // first weak ascending epoch: first n >= 1 with S_n >= 0
          up.pmf[s] += 1.0;
          ++resolved_up;
          up_done = true;
        }
      }
      if (!(down_done && up_done)) ++censored;
    }
    if (resolved_down == 0 || resolved_up == 0)
      fail(errc::budget_exceeded, "renewal_functions: no resolved ladder increments");
    for (auto& [h, c] : down.pmf) c /= static_cast<double>(resolved_down);
    for (auto& [h, c] : up.pmf) c /= static_cast<double>(resolved_up);
    t.exact_minus = false;
    t.exact_plus = false;
    t.error_minus = t.error_plus =
        3.0 / std::sqrt(static_cast<double>(std::min(resolved_down, resolved_up))) +
        static_cast<double>(censored) / static_cast<double>(budget);
  }

  t.rho_minus = detail::renewal_measure(down.pmf, x_max);
  std::vector<double> rho_plus_full = detail::renewal_measure(up.pmf, x_max);
  t.rho_script = rho_plus_full;
  t.rho_script[0] -= 1.0;  // drop the n = 0 atom: ladder sums start at n = 1

  t.r_minus.resize(static_cast<std::size_t>(x_max + 1));
  KahanSum racc;
  for (std::int64_t x = 0; x <= x_max; ++x) {
    racc.add(t.rho_minus[static_cast<std::size_t>(x)]);
    t.r_minus[static_cast<std::size_t>(x)] = racc.value();
  }
  t.r_plus.resize(static_cast<std::size_t>(x_max + 1));
  t.r_plus[0] = 1.0;
  KahanSum pacc;
  for (std::int64_t x = 1; x <= x_max; ++x) {
    pacc.add(t.rho_script[static_cast<std::size_t>(x - 1)]);
    t.r_plus[static_cast<std::size_t>(x)] = pacc.value();
  }
  return t;
}

/// Full weak-ascending renewal measure (with the time-0 atom): equals the
/// occupation measure of the walk killed below 0.
inline double rho_up(const RenewalTable& t, std::int64_t j) {
  if (j < 0 || j > t.x_max) return 0.0;
  return t.rho_script[static_cast<std::size_t>(j)] + (j == 0 ? 1.0 : 0.0);
}

/// Occupation measure of the walk killed below -beta, for counting from
/// n >= 1: sum_{n>=1} P(S_n = x, min_{k<=n} S_k >= -beta). Splitting a path
/// at the first time its minimum -z is attained gives a strict-descending
/// ladder path to -z followed by a path above -z, hence the convolution of
/// the two ladder renewal measures:
///   Occ_beta({x}) = sum_{z=0..beta} rho_minus({z}) rho_up({x+z}) - 1{x=0}.
/// At beta = 0 this reduces to the classical duality with the ascending
/// ladder measure.
inline double occupation_increment(const RenewalTable& t, std::int64_t beta, std::int64_t x) {
  if (x < -beta) return 0.0;
  if (x + beta > t.x_max) fail(errc::grid_too_small, "occupation_increment: beyond the table");
  KahanSum acc;
  for (std::int64_t z = 0; z <= beta && z <= t.x_max; ++z)
    acc.add(t.rho_minus[static_cast<std::size_t>(z)] * rho_up(t, x + z));
  return acc.value() - (x == 0 ? 1.0 : 0.0);
}

/// Integral of f against the killed-walk occupation measure Occ_beta; at
/// beta = 0 this is the integral against script-R.
inline double renewal_integral(const RenewalTable& t, std::int64_t beta,
                               const std::function<double(std::int64_t)>& f) {
  KahanSum acc;
  for (std::int64_t x = -beta; x + beta <= t.x_max; ++x) {
    const double fv = f(x);
    if (fv != 0.0) acc.add(fv * occupation_increment(t, beta, x));
  }
  return acc.value();
}

/// Residuals of the one-step harmonic identity satisfied by R^-:
/// |E[R^-(x + X) 1{x + X >= 0}] - R^-(x)| over the grid.
inline std::vector<double> harmonic_identity_rminus(const StepMeasure& annealed,
                                                    const RenewalTable& t,
                                                    std::int64_t x_hi) {
  if (x_hi + annealed.max_jump() > t.x_max)
    fail(errc::grid_too_small, "harmonic_identity_rminus: table too short for the grid");
  std::vector<double> residuals;
  residuals.reserve(static_cast<std::size_t>(x_hi + 1));
  for (std::int64_t x = 0; x <= x_hi; ++x) {
    KahanSum acc;
    for (const auto& [d, m] : annealed.atoms) {
      const std::int64_t y = x + d;
      if (y < 0) continue;
      acc.add(m * t.r_minus[static_cast<std::size_t>(y)]);
    }
    residuals.push_back(std::fabs(acc.value() - t.r_minus[static_cast<std::size_t>(x)]));
  }
  return residuals;
}

struct OccupationCheck {
  double lhs = 0.0;    // sum_{n=1..N} E[f(S_n); min_{k<=n} S_k >= -beta]
  double rhs = 0.0;    // integral of f against script-R^{(beta)}
  double bound = 0.0;  // tail estimate for the truncated series
  bool matured = false;  // series reached its n^{-3/2} decay regime
};

/// Occupation identity: the time series of killed expectations against the
/// ladder occupation measure. Once the series has matured (nonzero terms in
/// the trailing window) the truncation bound extrapolates the n^{-3/2} decay
/// of the killed local terms; before that the remainder is bounded a priori
/// by the full occupation mass of |f|'s support.
inline OccupationCheck occupation_identity_check(const StepMeasure& annealed,
                                                 const RenewalTable& table, std::int64_t beta,
                                                 const std::function<double(std::int64_t)>& f,
                                                 std::uint64_t horizon) {
  OccupationCheck out;
  LatticeDistribution dist = LatticeDistribution::point_mass(annealed.lattice_step, 0);
  KahanSum series;
  double last_terms = 0.0;
  for (std::uint64_t n = 1; n <= horizon; ++n) {
    auto killed = killed_propagate(dist, annealed, beta);
    dist = std::move(killed.survivor);
    KahanSum term;
    dist.for_each([&](std::int64_t i, double m) {
      double v = f(i);
      if (v != 0.0) term.add(v * m);
    });
    series.add(term.value());
    if (n + 8 > horizon) last_terms = std::max(last_terms, std::fabs(term.value()));
  }
  out.lhs = series.value();
  out.rhs = renewal_integral(table, beta, f);
  out.matured = last_terms > 0.0;
  const double table_err = 2.0 * (table.error_plus + table.error_minus);
  if (out.matured) {
    out.bound = 4.0 * static_cast<double>(horizon) * last_terms + table_err;
  } else {
    const double apriori =
        renewal_integral(table, beta, [&](std::int64_t x) { return std::fabs(f(x)); });
    out.bound = apriori + table_err;
  }
  return out;
}

}  // namespace brwlab
