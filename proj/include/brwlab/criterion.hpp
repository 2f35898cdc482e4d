#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brwlab/branching.hpp"
#include "brwlab/conditioned.hpp"
#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

struct MomentStatus {
  bool finite = true;
  double value = 0.0;              // exact for finite laws; NaN for unevaluated finite tails
  double divergence_exponent = 0;  // log-power of the divergent series terms, when infinite
};

enum class DegeneracyCase { none, case_i, case_ii, case_iii };

struct CriterionReport {
  MomentStatus y_log2;  // E[Y log_+^2 Y]
  MomentStatus y_log1;  // E[Y log_+ Y]
  MomentStatus z_log;   // E[Z log_+ Z]
  bool nondegenerate = true;
  DegeneracyCase flag = DegeneracyCase::none;
  std::string note;
};

/// Degeneracy moment criterion. Finite laws are summed exactly (order
/// independent via compensated accumulation); count_polylog tails are
/// classified by series comparison against sum 1/(k log k): the tail terms of
/// E[Y log^m Y] scale like k^-1 (log k)^{m - gamma}, so the moment diverges
/// exactly when m - gamma >= -1.
inline CriterionReport moment_criterion(const EnvironmentLaw& env) {
  CriterionReport rep;
  KahanSum y2, y1, z1;
  bool tail_present = false;
  for (const auto& [sp, state] : env.states) {
    for (const auto& o : state.outcomes) {
      KahanSum ys, zs;
      for (std::int64_t d : o.children) {
        const double x = static_cast<double>(d) * state.lattice_step;
        ys.add(std::exp(-x));
        if (x >= 0.0) zs.add(x * std::exp(-x));
      }
      const double y = ys.value();
      const double z = zs.value();
      const double ly = y > 1.0 ? std::log(y) : 0.0;
      const double lz = z > 1.0 ? std::log(z) : 0.0;
      y2.add(sp * o.prob * y * ly * ly);
      y1.add(sp * o.prob * y * ly);
      z1.add(sp * o.prob * z * lz);
    }
    if (state.tail) {
      detail::require_supported_tail(*state.tail);
      tail_present = true;
      const double g = state.tail->gamma;
      // Y_k = k (log k)^{-gamma}; Z_k = Y_k * gamma loglog k.
      if (2.0 - g >= -1.0) {
        rep.y_log2.finite = false;
        rep.y_log2.divergence_exponent = 2.0 - g;
      }
      if (1.0 - g >= -1.0) {
        rep.y_log1.finite = false;
        rep.y_log1.divergence_exponent = 1.0 - g;
      }
      if (1.0 - g >= -1.0) {  // Z log Z terms ~ k^-1 (log k)^{1-gamma} loglog k
        rep.z_log.finite = false;
        rep.z_log.divergence_exponent = 1.0 - g;
      }
    }
  }
  rep.y_log2.value = rep.y_log2.finite ? y2.value() : std::numeric_limits<double>::infinity();
  rep.y_log1.value = rep.y_log1.finite ? y1.value() : std::numeric_limits<double>::infinity();
  rep.z_log.value = rep.z_log.finite ? z1.value() : std::numeric_limits<double>::infinity();
  if (tail_present) {
    if (rep.y_log2.finite) rep.y_log2.value = std::nan("");  // finite tail values not evaluated
    if (rep.y_log1.finite) rep.y_log1.value = std::nan("");
    if (rep.z_log.finite) rep.z_log.value = std::nan("");
  }
  rep.nondegenerate = rep.y_log2.finite && rep.z_log.finite;
  if (!rep.y_log1.finite) rep.flag = DegeneracyCase::case_ii;
  else if (!rep.y_log2.finite) rep.flag = DegeneracyCase::case_i;
  else if (!rep.z_log.finite) rep.flag = DegeneracyCase::case_iii;
  rep.note =
      "finite-state environments make the quenched and annealed classification coincide";
  return rep;
}

/// One-step harmonic ratio of a realized offspring configuration:
/// sum_children U(theta^{n+1} xi, x + dv + beta) e^{-dv} 1{x + dv >= -beta}
/// / U(theta^n xi, x + beta).
template <class Walk>
double offspring_harmonic_ratio(HarmonicCache<Walk>& u, const PointProcessLaw& state,
                                std::uint64_t n, std::int64_t x, std::int64_t beta,
                                std::size_t outcome_index) {
  if (x < -beta) fail(errc::bad_config, "offspring_harmonic_ratio: position below the barrier");
  const double delta = state.lattice_step;
  const auto& o = state.outcomes.at(outcome_index);
  KahanSum acc;
  for (std::int64_t d : o.children) {
    const std::int64_t child = x + d;
    if (child < -beta) continue;
    acc.add(u(n + 1, child + beta) * std::exp(-static_cast<double>(d) * delta));
  }
  return acc.value() / u(n, x + beta);
}

/// |E_outcomes[offspring_harmonic_ratio] - 1|: the harmonic property
/// expressed through the offspring average.
template <class Walk>
double offspring_harmonic_ratio_mean_residual(HarmonicCache<Walk>& u,
                                              const PointProcessLaw& state, std::uint64_t n,
                                              std::int64_t x, std::int64_t beta) {
  KahanSum acc;
  for (std::size_t oi = 0; oi < state.outcomes.size(); ++oi)
    acc.add(state.outcomes[oi].prob * offspring_harmonic_ratio(u, state, n, x, beta, oi));
  if (state.tail) {
    detail::require_supported_tail(*state.tail);
    // Tail outcomes carry k children at real d_k > 0, all above the barrier
    // for x >= -beta. Tail environments are skip-free downward, so the
    // harmonic function is linear, U(y) = y + step, and the outcome series
    // closes: sum_k p_k k e^{-d_k} (a + d_k) / a with a = U(x + beta).
    const double a = u(n, x + beta);
    const double s0 = detail::polylog_tail_moment(*state.tail, 1.0, 0);
    const double s1 = detail::polylog_tail_moment(*state.tail, 1.0, 1);
    acc.add((a * s0 + s1) / a);
  }
  return std::fabs(acc.value() - 1.0);
}

// ---------------------------------------------------------------------------
// Series probes behind the L1-convergence / degeneracy dichotomy.
// ---------------------------------------------------------------------------

enum class SeriesVariant { l1, degenerate };

struct SeriesProbe {
  std::vector<std::uint64_t> horizons;
  std::vector<double> median_partial_sums;
  double growth_ratio = 0.0;
  bool grows = false;
  bool plateaus = false;
  bool approximate_walk = false;  // tail environments ride a lattice-projected walk
};

namespace detail {

/// Lattice projection of a tail state's tilted step measure: finite outcomes
/// enter exactly, tail mass is binned to the nearest lattice site (closed
/// range sums), and the +-1 atoms are adjusted to restore unit mass and zero
/// mean exactly. Used only by diagnostic probes on tail environments.
inline StepMeasure lattice_projected_step(const PointProcessLaw& state) {
  if (!state.tail) fail(errc::bad_config, "lattice_projected_step: no tail present");
  require_supported_tail(*state.tail);
  const TailFamily& tf = *state.tail;
  const double delta = state.lattice_step;
  std::map<std::int64_t, double> mass;
  for (const auto& o : state.outcomes)
    for (std::int64_t d : o.children)
      mass[d] += o.prob * std::exp(-static_cast<double>(d) * delta);
  auto k_at = [&](double j) {  // first k with displacement >= j (d_k increasing)
    const double v = std::exp(std::exp(j / tf.gamma));
    return std::max<std::int64_t>(tf.k_min, static_cast<std::int64_t>(std::ceil(v)));
  };
  for (std::int64_t j = 0;; ++j) {
    const std::int64_t lo = j == 0 ? tf.k_min : k_at(static_cast<double>(j) - 0.5);
    const std::int64_t hi = k_at(static_cast<double>(j) + 0.5);
    if (hi > lo) {
      const double m = polylog_tail_moment_from(tf, 1.0, 0, lo) -
                       polylog_tail_moment_from(tf, 1.0, 0, hi);
      if (m > 0.0) mass[j] += m;
    }
    if (polylog_tail_moment_from(tf, 1.0, 0, hi) < 1e-14) break;
    if (j > 64) break;
  }
  KahanSum total, mean;
  for (const auto& [d, m] : mass) {
    total.add(m);
    mean.add(static_cast<double>(d) * m);
  }
  const double excess_mass = 1.0 - total.value();
  const double excess_mean = -mean.value();
  mass[-1] += 0.5 * (excess_mass - excess_mean);
  mass[1] += 0.5 * (excess_mass + excess_mean);
  StepMeasure mu;
  mu.lattice_step = delta;
  for (const auto& [d, m] : mass) {
    if (m <= 0.0) fail(errc::bad_config, "lattice_projected_step: projection infeasible");
    mu.atoms.emplace_back(d, m);
  }
  mu.sort_atoms();
  return mu;
}

}  // namespace detail

namespace detail {

/// Prefix-tabulated tail series sum_{k >= a} p_k k e^{-d_k} d_k^m for fast
/// repeated lower limits; falls back to the closed form beyond the table.
class TailSeriesTable {
 public:
  TailSeriesTable() = default;
  TailSeriesTable(const TailFamily& tf, int m, std::int64_t table_max = 8192)
      : tf_(tf), m_(m), table_max_(table_max) {
    table_.assign(static_cast<std::size_t>(table_max_ - tf.k_min + 2), 0.0);
    table_.back() = polylog_tail_moment_from(tf, 1.0, m, table_max_ + 1);
    for (std::int64_t k = table_max_; k >= tf.k_min; --k) {
      const double kd = static_cast<double>(k);
      const double dk = tf.displacement(k);
      double term = tf.prob_weight(k) * kd * std::exp(-dk);
      if (m > 0) term *= std::pow(dk, m);
      table_[static_cast<std::size_t>(k - tf.k_min)] =
          table_[static_cast<std::size_t>(k - tf.k_min + 1)] + term;
    }
  }

  double from(std::int64_t k) const {
    if (k <= tf_.k_min) return table_.front();
    if (k <= table_max_ + 1) return table_[static_cast<std::size_t>(k - tf_.k_min)];
    return polylog_tail_moment_from(tf_, 1.0, m_, k);
  }

 private:
  TailFamily tf_;
  int m_ = 0;
  std::int64_t table_max_ = 0;
  std::vector<double> table_;
};

/// One series term: the exact outcome expectation at chain position x, time
/// n. Finite outcomes are enumerated; count_polylog tail mass enters through
/// the closed polylog series past the (monotone) cutoff.
template <class Walk>
double convergence_series_term(HarmonicCache<Walk>& u, const PointProcessLaw& state, std::uint64_t n,
                        std::int64_t x, std::int64_t beta, SeriesVariant variant, double c,
                        double delta, const TailSeriesTable* s0_tab = nullptr,
                        const TailSeriesTable* s1_tab = nullptr) {
  const double u_here = u(n, x + beta);
  const double scale = u_here * std::exp(-static_cast<double>(x) * delta);
  KahanSum inner;
  for (std::size_t oi = 0; oi < state.outcomes.size(); ++oi) {
    const double tx = offspring_harmonic_ratio(u, state, n, x, beta, oi);
    if (variant == SeriesVariant::l1) {
      inner.add(state.outcomes[oi].prob * tx * std::min(scale * tx, 1.0));
    } else if (scale * tx >= c) {
      inner.add(state.outcomes[oi].prob * tx);
    }
  }
  if (state.tail && variant == SeriesVariant::degenerate) {
    const TailFamily& tf = *state.tail;
    auto tx_tail = [&](double k) {
      const double dk = tf.displacement(static_cast<std::int64_t>(k));
      return k * std::exp(-dk) * (u_here + dk) / u_here;
    };
    std::int64_t lo = tf.k_min, hi_k = tf.k_min;
    if (scale * tx_tail(static_cast<double>(lo)) < c) {
      while (scale * tx_tail(static_cast<double>(hi_k)) < c && hi_k < (1LL << 40)) hi_k *= 2;
      while (lo + 1 < hi_k) {
        const std::int64_t mid = lo + (hi_k - lo) / 2;
        if (scale * tx_tail(static_cast<double>(mid)) < c) lo = mid;
        else hi_k = mid;
      }
    }
    const double s0 = s0_tab ? s0_tab->from(hi_k) : polylog_tail_moment_from(tf, 1.0, 0, hi_k);
    const double s1 = s1_tab ? s1_tab->from(hi_k) : polylog_tail_moment_from(tf, 1.0, 1, hi_k);
    inner.add((u_here * s0 + s1) / u_here);
  }
  return inner.value();
}

}  // namespace detail

/// Partial sums, along sampled conditioned paths, of the expected spine
/// offspring contribution: the l1 variant weights tilde_X by its capped mass
/// (finite expectation iff the moment criterion holds), the degenerate
/// variant keeps only configurations beyond the cutoff c. Inner expectations
/// are exact over outcomes. Tail environments ride a lattice-projected
/// approximation of their walk (flagged in the report); their series terms
/// stay exact.
inline SeriesProbe convergence_series_probe(const EnvironmentLaw& env, std::int64_t beta,
                                       std::size_t trials, std::span<const std::uint64_t> horizons,
                                       SeriesVariant variant, double c, std::uint64_t master_seed,
                                       double growth_threshold = 1.35,
                                       double plateau_threshold = 1.15) {
  if (horizons.empty()) fail(errc::bad_config, "convergence_series_probe: no horizons");
  if (c < 1.0) fail(errc::bad_config, "convergence_series_probe: need c >= 1");
  SeriesProbe probe;
  probe.horizons.assign(horizons.begin(), horizons.end());
  const std::uint64_t n_max = *std::max_element(horizons.begin(), horizons.end());
  const double delta = env.lattice_step;

  bool has_tail = false;
  for (const auto& [p, s] : env.states) has_tail = has_tail || s.has_tail();
  if (has_tail && variant == SeriesVariant::l1)
    fail(errc::unsupported_tail, "convergence_series_probe: l1 variant supports finite laws only");
  probe.approximate_walk = has_tail;

  std::vector<std::vector<double>> sums(horizons.size(), std::vector<double>(trials, 0.0));
  RngStream master(master_seed, 0x41);

  detail::TailSeriesTable s0_tab, s1_tab;
  if (has_tail) {
    if (env.states.size() != 1)
      fail(errc::unsupported_tail, "convergence_series_probe: tail environments must be homogeneous");
    s0_tab = detail::TailSeriesTable(*env.states[0].second.tail, 0);
    s1_tab = detail::TailSeriesTable(*env.states[0].second.tail, 1);
  }

  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng = master.substream(t);
    KahanSum acc;
    std::size_t hi = 0;
    auto record = [&](std::uint64_t n) {
      while (hi < probe.horizons.size() && probe.horizons[hi] == n) {
        sums[hi][t] = acc.value();
        ++hi;
      }
    };
    if (!has_tail) {
      EnvironmentPath path(env, rng.next_u64());
      HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
      auto zeta = sample_conditioned_path(u, beta, n_max, rng);
      const double u_start = u(0, beta);
      for (std::uint64_t n = 1; n <= n_max; ++n) {
        acc.add(u_start *
                detail::convergence_series_term(u, path.state(n), n, zeta[n], beta, variant, c, delta));
        record(n);
      }
    } else {
      HomogeneousWalk walk(detail::lattice_projected_step(env.states[0].second));
      HarmonicCache<HomogeneousWalk> u(walk, 1e-10);
      auto zeta = sample_conditioned_path(u, beta, n_max, rng);
      const double u_start = u(0, beta);
      for (std::uint64_t n = 1; n <= n_max; ++n) {
        acc.add(u_start * detail::convergence_series_term(u, env.states[0].second, n, zeta[n], beta,
                                                   variant, c, delta, &s0_tab, &s1_tab));
        record(n);
      }
    }
    for (; hi < probe.horizons.size(); ++hi) sums[hi][t] = acc.value();
  }
  for (auto& v : sums) probe.median_partial_sums.push_back(median_inplace(v));
  const double first = probe.median_partial_sums.front();
  const double last = probe.median_partial_sums.back();
  probe.growth_ratio = first > 0.0 ? last / first : (last > 0.0 ? 1e300 : 1.0);
  probe.grows = first > 0.0 && probe.growth_ratio >= growth_threshold;
  probe.plateaus = first >= 0.0 && probe.growth_ratio <= plateau_threshold;
  return probe;
}

// ---------------------------------------------------------------------------
// Long-horizon derivative martingale diagnostics.
// ---------------------------------------------------------------------------

struct DInfinityProbe {
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> median_abs_change;  // |D_{n_{j+1}} - D_{n_j}| medians
  ProportionCI positive_fraction;         // fraction of trials with D_horizon > eps
  double capped_fraction = 0.0;
  std::vector<double> median_d;           // median D_n at checkpoints
};

/// Per-trial D_n trajectories. For non-degenerate environments the fraction
/// of trials with D_horizon above eps should exclude zero; degenerate
/// directions only get descriptive medians (the a.s. statement is not
/// finitely falsifiable).
inline DInfinityProbe d_infinity_probe(const EnvironmentLaw& env, std::size_t trials,
                                       std::span<const std::uint64_t> checkpoints,
                                       std::uint64_t master_seed, double eps = 1e-3,
                                       std::uint64_t cap = 10000000) {
  if (checkpoints.empty()) fail(errc::bad_config, "d_infinity_probe: no checkpoints");
  DInfinityProbe probe;
  probe.checkpoints.assign(checkpoints.begin(), checkpoints.end());
  const std::uint64_t horizon = *std::max_element(checkpoints.begin(), checkpoints.end());
  const double delta = env.lattice_step;

  bool has_tail = false;
  for (const auto& [p, s] : env.states) has_tail = has_tail || s.has_tail();

  std::vector<std::vector<double>> d_at(checkpoints.size(), std::vector<double>());
  std::size_t capped = 0, positive = 0, completed = 0;
  RngStream master(master_seed, 0xD1F);
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng = master.substream(t);
    std::vector<double> ds(checkpoints.size(), std::nan(""));
    bool ok = true;
    if (!has_tail) {
      auto traj = simulate_brw(env, rng.next_u64(), {}, horizon, rng, cap, /*absorb_cap=*/true);
      if (traj.capped) ok = false;
      if (ok)
        for (std::size_t j = 0; j < probe.checkpoints.size(); ++j)
          ds[j] = traj.rows[probe.checkpoints[j]].d;
    } else {
      // Particle-vector simulation for tail laws (real positions).
      EnvironmentPath path(env, rng.next_u64());
      std::vector<double> particles{0.0};
      std::size_t cp = 0;
      for (std::uint64_t n = 0; n < horizon && ok; ++n) {
        const PointProcessLaw& state = path.state(n);
        std::vector<double> next;
        next.reserve(particles.size() * 2);
        const double tail_prob =
            state.tail ? detail::polylog_tail_prob(*state.tail) : 0.0;
        for (double x : particles) {
          double uu = rng.u01();
          if (uu < tail_prob) {
            // Sample k from p_k ~ k^-2 by inverse cdf walk (truncated high).
            double target = rng.u01() * tail_prob / state.tail->weight;
            double cdf = 0.0;
            std::int64_t k = state.tail->k_min;
            while (k < 100000) {
              cdf += 1.0 / (static_cast<double>(k) * static_cast<double>(k));
              if (cdf >= target) break;
              ++k;
            }
            const double d = state.tail->displacement(k);
            for (std::int64_t i = 0; i < k; ++i) next.push_back(x + d);
          } else {
            double acc = tail_prob;
            std::size_t oi = state.outcomes.size() - 1;
            for (std::size_t o = 0; o < state.outcomes.size(); ++o) {
              acc += state.outcomes[o].prob;
              if (uu < acc) {
                oi = o;
                break;
              }
            }
            for (std::int64_t d : state.outcomes[oi].children)
              next.push_back(x + static_cast<double>(d) * delta);
          }
          if (next.size() > cap) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
        particles = std::move(next);
        while (cp < probe.checkpoints.size() && probe.checkpoints[cp] == n + 1) {
          KahanSum d;
          for (double x : particles) d.add(x * std::exp(-x));
          ds[cp++] = d.value();
        }
      }
      if (ok)
        for (; cp < probe.checkpoints.size(); ++cp) ds[cp] = ds[cp > 0 ? cp - 1 : 0];
    }
    if (!ok) {
      ++capped;
      continue;
    }
    ++completed;
    for (std::size_t j = 0; j < ds.size(); ++j) d_at[j].push_back(ds[j]);
    if (ds.back() > eps) ++positive;
  }
  probe.capped_fraction = static_cast<double>(capped) / static_cast<double>(trials);
  for (std::size_t j = 0; j < d_at.size(); ++j) {
    std::vector<double> copy = d_at[j];
    probe.median_d.push_back(median_inplace(copy));
    if (j + 1 < d_at.size()) {
      std::vector<double> diffs;
      for (std::size_t t = 0; t < d_at[j].size(); ++t)
        diffs.push_back(std::fabs(d_at[j + 1][t] - d_at[j][t]));
      probe.median_abs_change.push_back(median_inplace(diffs));
    }
  }
  probe.positive_fraction =
      wilson_ci(static_cast<double>(positive), static_cast<double>(completed));
  return probe;
}

}  // namespace brwlab
