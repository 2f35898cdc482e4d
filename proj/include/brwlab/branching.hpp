#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

/// Generation histogram of the branching population. Particles at one
/// position with the same barrier stratum are exchangeable (offspring laws
/// depend only on the environment state), so position x barrier-stratum
/// counts are a sufficient statistic. The stratum records how many of the
/// ascending barriers beta_1 < beta_2 < ... the ancestral minimum has
/// violated; violations always form a prefix of that list.
class PopulationState {
 public:
  /// Empty population (used by the spinal construction, which inserts
  /// sibling particles step by step).
  explicit PopulationState(std::vector<std::int64_t> beta_set) : betas_(std::move(beta_set)) {
    if (!std::is_sorted(betas_.begin(), betas_.end()))
      fail(errc::bad_config, "PopulationState: beta set must be ascending");
  }

  PopulationState(std::vector<std::int64_t> beta_set, std::int64_t start_position)
      : PopulationState(std::move(beta_set)) {
    counts_[{start_position, stratum_of(start_position)}] = 1;
  }

  /// Adds particles at the current generation; the stratum is derived from
  /// the insertion position (callers guarantee the ancestral prefix obeys
  /// the barriers).
  void insert(std::int64_t position, std::uint64_t count = 1) {
    counts_[{position, stratum_of(position)}] += count;
  }

  std::uint64_t generation() const { return generation_; }
  const std::vector<std::int64_t>& betas() const { return betas_; }
  const std::map<std::pair<std::int64_t, std::size_t>, std::uint64_t>& classes() const {
    return counts_;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [key, c] : counts_) t += c;
    return t;
  }

  std::int64_t min_position() const {
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    for (const auto& [key, c] : counts_)
      if (c > 0) m = std::min(m, key.first);
    return m;
  }

  /// Number of barriers beta_j with position < -beta_j (a prefix count).
  std::size_t stratum_of(std::int64_t position) const {
    std::size_t m = 0;
    while (m < betas_.size() && position < -betas_[m]) ++m;
    return m;
  }

  /// Counts at position x whose ancestral path stayed >= -beta_j.
  std::uint64_t surviving_count(std::int64_t x, std::size_t beta_index) const {
    std::uint64_t t = 0;
    for (std::size_t m = 0; m <= beta_index; ++m) {
      auto it = counts_.find({x, m});
      if (it != counts_.end()) t += it->second;
    }
    return t;
  }

  /// One generation of branching under `state`; exact in distribution via
  /// per-class multinomials. Children counts above `cap` or u64 overflow
  /// abort loudly.
  void evolve(const PointProcessLaw& state, RngStream& rng, std::uint64_t cap = 10000000) {
    if (state.has_tail())
      fail(errc::unsupported_tail, "PopulationState::evolve: lattice laws only");
    std::vector<double> probs;
    probs.reserve(state.outcomes.size());
    for (const auto& o : state.outcomes) probs.push_back(o.prob);
    std::map<std::pair<std::int64_t, std::size_t>, std::uint64_t> next;
    std::uint64_t total = 0;
    for (const auto& [key, count] : counts_) {
      if (count == 0) continue;
      const auto [x, m] = key;
      auto picks = rng.multinomial(count, probs);
      for (std::size_t oi = 0; oi < picks.size(); ++oi) {
        if (picks[oi] == 0) continue;
        for (std::int64_t d : state.outcomes[oi].children) {
          const std::int64_t child = x + d;
          const std::size_t child_m = std::max(m, stratum_of(child));
          std::uint64_t& slot = next[{child, child_m}];
          if (slot > std::numeric_limits<std::uint64_t>::max() - picks[oi])
            fail(errc::count_overflow, "PopulationState::evolve: count overflow");
          slot += picks[oi];
          total += picks[oi];
          if (total > cap)
            fail(errc::population_cap_exceeded, "PopulationState::evolve: population cap",
                 {{"cap", static_cast<double>(cap)}});
        }
      }
    }
    counts_ = std::move(next);
    ++generation_;
  }

 private:
  std::vector<std::int64_t> betas_;
  std::map<std::pair<std::int64_t, std::size_t>, std::uint64_t> counts_;
  std::uint64_t generation_ = 0;
};

/// One generation's martingale values.
struct MartingaleRow {
  std::uint64_t n = 0;
  double w = 0.0;                  // additive martingale
  double d = 0.0;                  // derivative martingale
  std::vector<double> d_beta;      // truncated versions, one per barrier
  std::int64_t min_position = 0;
};

/// W_n, D_n and the harmonic-weighted barrier-killed D_n^{(beta)} of the
/// current population.
template <class Walk>
MartingaleRow martingales(const PopulationState& pop, HarmonicCache<Walk>& u) {
  MartingaleRow row;
  row.n = pop.generation();
  const double delta = u.walk().lattice_step();
  KahanSum w, d;
  std::vector<KahanSum> db(pop.betas().size());
  for (const auto& [key, count] : pop.classes()) {
    if (count == 0) continue;
    const auto [xi, m] = key;
    const double x = static_cast<double>(xi) * delta;
    const double cnt = static_cast<double>(count);
    const double e = std::exp(-x);
    w.add(cnt * e);
    d.add(cnt * x * e);
    for (std::size_t j = m; j < pop.betas().size(); ++j)
      db[j].add(cnt * e * u(pop.generation(), xi + pop.betas()[j]));
  }
  row.w = w.value();
  row.d = d.value();
  for (auto& s : db) row.d_beta.push_back(s.value());
  row.min_position = pop.min_position();
  return row;
}

// ---------------------------------------------------------------------------
// One-step conditional expectation checks (exact enumeration).
// ---------------------------------------------------------------------------

/// A small explicit population: positions plus per-beta survival flags.
struct SmallParticle {
  std::int64_t position = 0;
  bool surviving = true;  // ancestral min >= -beta so far
};

struct OneStepResiduals {
  double w = 0.0;
  double d = 0.0;
  double d_beta = 0.0;
};

/// Exact one-step conditional expectations of W, D and D^{(beta)} for a
/// population small enough to enumerate, compared against the current
/// values. These are the martingale computations the change of measure rests
/// on.
template <class Walk>
OneStepResiduals one_step_martingale_check(std::span<const SmallParticle> particles,
                                           HarmonicCache<Walk>& u, const PointProcessLaw& state,
                                           std::uint64_t n, std::int64_t beta,
                                           std::uint64_t enumeration_cap = 100000) {
  if (state.has_tail()) fail(errc::unsupported_tail, "one_step_martingale_check: finite laws only");
  std::uint64_t nodes = 0;
  const double delta = state.lattice_step;
  KahanSum w_now, d_now, db_now, w_next, d_next, db_next;
  for (const auto& p : particles) {
    const double x = static_cast<double>(p.position) * delta;
    const double e = std::exp(-x);
    w_now.add(e);
    d_now.add(x * e);
    if (p.surviving) db_now.add(e * u(n, p.position + beta));
    for (const auto& o : state.outcomes) {
      if (++nodes > enumeration_cap)
        fail(errc::enumeration_too_large, "one_step_martingale_check: cap exceeded");
      for (std::int64_t dv : o.children) {
        const std::int64_t ci = p.position + dv;
        const double cx = static_cast<double>(ci) * delta;
        const double ce = std::exp(-cx);
        w_next.add(o.prob * ce);
        d_next.add(o.prob * cx * ce);
        if (p.surviving && ci >= -beta) db_next.add(o.prob * ce * u(n + 1, ci + beta));
      }
    }
  }
  OneStepResiduals r;
  r.w = std::fabs(w_next.value() - w_now.value());
  r.d = std::fabs(d_next.value() - d_now.value());
  r.d_beta = std::fabs(db_next.value() - db_now.value());
  return r;
}

// ---------------------------------------------------------------------------
// Trajectory simulation and the D^(beta) ~ D + beta W connection probe.
// ---------------------------------------------------------------------------

struct BrwTrajectory {
  std::vector<MartingaleRow> rows;
  bool min_stayed_above = true;  // no particle path went below -beta_max
  bool capped = false;
};

/// `absorb_cap` lets Monte Carlo probes record capped trials instead of
/// aborting; the default keeps the cap a hard error.
inline BrwTrajectory simulate_brw(const EnvironmentLaw& env, std::uint64_t seed,
                                  std::span<const std::int64_t> beta_set, std::uint64_t horizon,
                                  RngStream rng, std::uint64_t cap = 10000000,
                                  bool absorb_cap = false) {
  EnvironmentPath path(env, seed);
  HarmonicCache<WalkPath> u(WalkPath(path), 1e-10);
  PopulationState pop(std::vector<std::int64_t>(beta_set.begin(), beta_set.end()), 0);
  BrwTrajectory traj;
  traj.rows.push_back(martingales(pop, u));
  for (std::uint64_t n = 0; n < horizon; ++n) {
    try {
      pop.evolve(path.state(n), rng, cap);
    } catch (const Error& e) {
      if (absorb_cap && e.code() == errc::population_cap_exceeded) {
        traj.capped = true;
        break;
      }
      throw;
    }
    traj.rows.push_back(martingales(pop, u));
    if (!beta_set.empty()) {
      for (const auto& [key, count] : pop.classes())
        if (count > 0 && key.second == beta_set.size()) traj.min_stayed_above = false;
    }
  }
  return traj;
}

struct ConnectionProbe {
  double median_ratio = 0.0;     // D^{(beta)} / (D + beta W) at the last horizon
  double excluded_fraction = 0.0;  // trials whose minimum breached -beta
  std::size_t trials_used = 0;
};

/// On trials whose realized minimum stays above -beta, the truncated
/// martingale tracks D + beta W once positions are far from the barrier.
inline ConnectionProbe connection_probe(const EnvironmentLaw& env, std::int64_t beta,
                                        std::size_t trials, std::uint64_t horizon,
                                        std::uint64_t master_seed, std::uint64_t cap = 100000000) {
  std::vector<double> ratios;
  std::size_t excluded = 0;
  RngStream master(master_seed, 0xB12);
  const double delta = env.lattice_step;
  std::vector<std::int64_t> betas{beta};
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng = master.substream(t);
    auto traj = simulate_brw(env, rng.next_u64(), betas, horizon, rng, cap, /*absorb_cap=*/true);
    if (traj.capped || !traj.min_stayed_above) {
      ++excluded;
      continue;
    }
    const auto& last = traj.rows.back();
    const double denom = last.d + static_cast<double>(beta) * delta * last.w;
    if (denom <= 0.0) {
      ++excluded;
      continue;
    }
    ratios.push_back(last.d_beta[0] / denom);
  }
  ConnectionProbe probe;
  probe.trials_used = ratios.size();
  probe.excluded_fraction = static_cast<double>(excluded) / static_cast<double>(trials);
  if (!ratios.empty()) probe.median_ratio = median_inplace(ratios);
  return probe;
}

}  // namespace brwlab
