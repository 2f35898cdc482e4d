#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "brwlab/branching.hpp"
#include "brwlab/conditioned.hpp"
#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"
#include "brwlab/harmonic.hpp"

namespace brwlab {

/// Offspring law of the spine particle: outcome weights tilted by the summed
/// harmonic weights of the surviving children. The normalizer must equal
/// U(theta^n xi, x + beta) e^{-x} (the one-step martingale identity); its
/// relative deviation is checked, then the weights are renormalized.
struct SizeBiasedLaw {
  std::vector<double> outcome_probs;
  double normalizer_deviation = 0.0;
};

template <class Walk>
SizeBiasedLaw size_biased_offspring_law(HarmonicCache<Walk>& u, const PointProcessLaw& state,
                                        std::uint64_t n, std::int64_t x, std::int64_t beta,
                                        double tol = 1e-9) {
  if (state.has_tail()) fail(errc::unsupported_tail, "size_biased_offspring_law: finite laws only");
  if (x < -beta) fail(errc::bad_config, "size_biased_offspring_law: spine below the barrier");
  const double delta = state.lattice_step;
  SizeBiasedLaw law;
  law.outcome_probs.reserve(state.outcomes.size());
  // Weights carry e^{-V(child)} relative to e^{-x} (displacement scale), so
  // far-from-barrier positions cannot underflow.
  KahanSum total;
  for (const auto& o : state.outcomes) {
    KahanSum inner;
    for (std::int64_t d : o.children) {
      const std::int64_t child = x + d;
      if (child < -beta) continue;
      inner.add(u(n + 1, child + beta) * std::exp(-static_cast<double>(d) * delta));
    }
    const double w = o.prob * inner.value();
    law.outcome_probs.push_back(w);
    total.add(w);
  }
  const double expected = u(n, x + beta);
  law.normalizer_deviation = std::fabs(total.value() - expected) / expected;
  if (law.normalizer_deviation > 10.0 * tol)
    fail(errc::normalizer_mismatch, "size_biased_offspring_law: harmonic normalizer mismatch",
         {{"sum", total.value()}, {"expected", expected}});
  for (double& w : law.outcome_probs) w /= total.value();
  return law;
}

/// Spine trajectory with per-step bookkeeping.
struct SpineRecord {
  std::vector<std::int64_t> positions;              // V(w_0..w_n)
  std::vector<double> selection_probs;              // chosen-child probabilities
  std::vector<std::vector<std::int64_t>> siblings;  // non-spine child displacements per step
};

struct SpinalTree {
  SpineRecord spine;
  PopulationState population;  // all non-spine particles
  std::vector<double> d_beta_rows;  // D_n^{(beta)} of the full tree per generation
};

/// One spine step: draw the size-biased outcome, then select the spine child
/// with probability proportional to its harmonic weight.
template <class Walk>
std::pair<std::size_t, std::int64_t> spine_step(HarmonicCache<Walk>& u,
                                                const PointProcessLaw& state, std::uint64_t n,
                                                std::int64_t x, std::int64_t beta, RngStream& rng,
                                                double* selection_prob = nullptr,
                                                std::vector<std::int64_t>* siblings = nullptr) {
  auto law = size_biased_offspring_law(u, state, n, x, beta);
  const std::size_t oi = rng.discrete(law.outcome_probs);
  const auto& children = state.outcomes[oi].children;
  const double delta = state.lattice_step;
  std::vector<double> sel(children.size(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < children.size(); ++c) {
    const std::int64_t pos = x + children[c];
    if (pos < -beta) continue;
    sel[c] = u(n + 1, pos + beta) * std::exp(-static_cast<double>(children[c]) * delta);
    total += sel[c];
  }
  for (double& s : sel) s /= total;
  const std::size_t pick = rng.discrete(sel);
  if (selection_prob) *selection_prob = sel[pick];
  if (siblings) {
    siblings->clear();
    for (std::size_t c = 0; c < children.size(); ++c)
      if (c != pick) siblings->push_back(children[c]);
  }
  return {oi, x + children[pick]};
}

/// Full spinal construction: the spine reproduces size-biased, its siblings
/// seed ordinary branching populations. Returns the spine record plus the
/// non-spine population, with D^{(beta)} of the whole tree per generation.
template <class Walk>
SpinalTree sample_spinal_tree(HarmonicCache<Walk>& u, const EnvironmentPath& env,
                              std::int64_t beta, std::int64_t a, std::uint64_t n, RngStream& rng,
                              std::uint64_t cap = 10000000) {
  if (a < -beta) fail(errc::bad_config, "sample_spinal_tree: start below the barrier");
  std::vector<std::int64_t> betas{beta};
  SpinalTree tree{SpineRecord{}, PopulationState(betas), {}};
  tree.spine.positions.push_back(a);
  const double delta = env.lattice_step();
  std::int64_t x = a;
  for (std::uint64_t k = 0; k < n; ++k) {
    double sel = 0.0;
    std::vector<std::int64_t> sibs;
    auto [oi, next] = spine_step(u, env.state(k), k, x, beta, rng, &sel, &sibs);
    (void)oi;
    tree.population.evolve(env.state(k), rng, cap);
    for (std::int64_t d : sibs) tree.population.insert(x + d);
    KahanSum dsum;
    dsum.add(u(k + 1, next + beta) * std::exp(-static_cast<double>(next) * delta));
    for (const auto& [key, count] : tree.population.classes()) {
      if (count == 0 || key.second > 0) continue;  // stratum 0 = stayed above -beta
      dsum.add(static_cast<double>(count) * u(k + 1, key.first + beta) *
               std::exp(-static_cast<double>(key.first) * delta));
    }
    tree.d_beta_rows.push_back(dsum.value());
    tree.spine.positions.push_back(next);
    tree.spine.selection_probs.push_back(sel);
    tree.spine.siblings.push_back(std::move(sibs));
    x = next;
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Exhaustive verification of the change of measure at small depth.
// ---------------------------------------------------------------------------

/// Unmarked view of an enumerated tree of depth <= 2.
struct TreeView {
  std::int64_t root = 0;
  std::vector<std::int64_t> gen1;
  std::vector<std::vector<std::int64_t>> gen2;  // aligned with gen1; empty at depth 1
};

using TreeFunctional = std::function<double(const TreeView&)>;

namespace detail {

/// Selection weights of the spine child inside one outcome.
template <class Walk>
std::vector<double> spine_selection_weights(HarmonicCache<Walk>& u, const Outcome& o,
                                            std::uint64_t n, std::int64_t x, std::int64_t beta,
                                            double delta) {
  std::vector<double> sel(o.children.size(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < o.children.size(); ++c) {
    const std::int64_t pos = x + o.children[c];
    if (pos < -beta) continue;
    sel[c] = u(n + 1, pos + beta) * std::exp(-static_cast<double>(o.children[c]) * delta);
    total += sel[c];
  }
  for (double& s : sel) s /= total;
  return sel;
}

}  // namespace detail

struct ChangeOfMeasureResult {
  double lhs = 0.0;  // spinal-construction expectation of f (marked tree projected)
  double rhs = 0.0;  // E_P[f * D_n^{(beta)}] / (U(xi, a+beta) e^{-a})
};

/// Exhaustively verifies dQ/dP|_{F_n} = D_n^{(beta)} / (U(xi,a+beta) e^{-a})
/// at depth n <= 2 by enumerating the plain branching law on one side and the
/// spinal construction (size-biased spine offspring, harmonic spine
/// selection) on the other.
template <class Walk>
ChangeOfMeasureResult change_of_measure_check(HarmonicCache<Walk>& u, const EnvironmentPath& env,
                                              std::int64_t beta, std::int64_t a, std::uint64_t n,
                                              const TreeFunctional& f) {
  if (n == 0 || n > 2) fail(errc::bad_config, "change_of_measure_check: depth must be 1 or 2");
  if (a < -beta) fail(errc::bad_config, "change_of_measure_check: start below the barrier");
  const double delta = env.lattice_step();
  const PointProcessLaw& s0 = env.state(0);
  if (s0.has_tail()) fail(errc::unsupported_tail, "change_of_measure_check: finite laws only");
  const double d0 = u(0, a + beta) * std::exp(-static_cast<double>(a) * delta);

  ChangeOfMeasureResult res;
  KahanSum lhs, rhs;

  // Plain side.
  for (std::size_t o0 = 0; o0 < s0.outcomes.size(); ++o0) {
    TreeView t;
    t.root = a;
    for (std::int64_t d : s0.outcomes[o0].children) t.gen1.push_back(a + d);
    if (n == 1) {
      KahanSum dn;
      for (std::int64_t pos : t.gen1)
        if (pos >= -beta)
          dn.add(u(1, pos + beta) * std::exp(-static_cast<double>(pos) * delta));
      rhs.add(s0.outcomes[o0].prob * f(t) * dn.value() / d0);
      continue;
    }
    const PointProcessLaw& s1 = env.state(1);
    const std::size_t width = t.gen1.size();
    std::vector<std::size_t> pick(width, 0);
    for (;;) {
      t.gen2.assign(width, {});
      double prob = s0.outcomes[o0].prob;
      for (std::size_t j = 0; j < width; ++j) {
        prob *= s1.outcomes[pick[j]].prob;
        for (std::int64_t d : s1.outcomes[pick[j]].children) t.gen2[j].push_back(t.gen1[j] + d);
      }
      KahanSum dn;
      for (std::size_t j = 0; j < width; ++j) {
        if (t.gen1[j] < -beta) continue;
        for (std::int64_t pos : t.gen2[j])
          if (pos >= -beta)
            dn.add(u(2, pos + beta) * std::exp(-static_cast<double>(pos) * delta));
      }
      rhs.add(prob * f(t) * dn.value() / d0);
      std::size_t j = 0;
      while (j < width && ++pick[j] == s1.outcomes.size()) pick[j++] = 0;
      if (j == width) break;
    }
  }

  // Spinal side.
  auto sb0 = size_biased_offspring_law(u, s0, 0, a, beta);
  for (std::size_t o0 = 0; o0 < s0.outcomes.size(); ++o0) {
    if (sb0.outcome_probs[o0] == 0.0) continue;
    TreeView t;
    t.root = a;
    for (std::int64_t d : s0.outcomes[o0].children) t.gen1.push_back(a + d);
    if (n == 1) {
      lhs.add(sb0.outcome_probs[o0] * f(t));
      continue;
    }
    const PointProcessLaw& s1 = env.state(1);
    auto sel = detail::spine_selection_weights(u, s0.outcomes[o0], 0, a, beta, delta);
    const std::size_t width = t.gen1.size();
    for (std::size_t v = 0; v < width; ++v) {
      if (sel[v] == 0.0) continue;
      auto sb1 = size_biased_offspring_law(u, s1, 1, t.gen1[v], beta);
      std::vector<std::size_t> pick(width, 0);
      for (;;) {
        t.gen2.assign(width, {});
        double prob = sb0.outcome_probs[o0] * sel[v];
        for (std::size_t j = 0; j < width; ++j) {
          prob *= (j == v) ? sb1.outcome_probs[pick[j]] : s1.outcomes[pick[j]].prob;
          for (std::int64_t d : s1.outcomes[pick[j]].children) t.gen2[j].push_back(t.gen1[j] + d);
        }
        if (prob != 0.0) lhs.add(prob * f(t));
        std::size_t j = 0;
        while (j < width && ++pick[j] == s1.outcomes.size()) pick[j++] = 0;
        if (j == width) break;
      }
    }
  }
  res.lhs = lhs.value();
  res.rhs = rhs.value();
  return res;
}

/// Verifies the conditional spine identity: given the unmarked tree, the
/// spine sits at vertex v with probability U(theta^n xi, V(v)+beta) e^{-V(v)}
/// 1{path above the barrier} / D_n^{(beta)}. Depth <= 2; configurations are
/// keyed by their ordered outcome indices.
template <class Walk>
double spine_posterior_check(HarmonicCache<Walk>& u, const EnvironmentPath& env, std::int64_t beta,
                             std::int64_t a, std::uint64_t n) {
  if (n == 0 || n > 2) fail(errc::bad_config, "spine_posterior_check: depth must be 1 or 2");
  const double delta = env.lattice_step();
  const PointProcessLaw& s0 = env.state(0);
  auto sb0 = size_biased_offspring_law(u, s0, 0, a, beta);

  // config key -> vertex slot -> accumulated spinal probability
  std::map<std::vector<std::size_t>, std::map<std::size_t, double>> joint;

  if (n == 1) {
    for (std::size_t o0 = 0; o0 < s0.outcomes.size(); ++o0) {
      if (sb0.outcome_probs[o0] == 0.0) continue;
      auto sel = detail::spine_selection_weights(u, s0.outcomes[o0], 0, a, beta, delta);
      for (std::size_t v = 0; v < sel.size(); ++v)
        if (sel[v] > 0.0) joint[{o0}][v] += sb0.outcome_probs[o0] * sel[v];
    }
  } else {
    const PointProcessLaw& s1 = env.state(1);
    for (std::size_t o0 = 0; o0 < s0.outcomes.size(); ++o0) {
      if (sb0.outcome_probs[o0] == 0.0) continue;
      std::vector<std::int64_t> gen1;
      for (std::int64_t d : s0.outcomes[o0].children) gen1.push_back(a + d);
      auto sel0 = detail::spine_selection_weights(u, s0.outcomes[o0], 0, a, beta, delta);
      const std::size_t width = gen1.size();
      for (std::size_t v = 0; v < width; ++v) {
        if (sel0[v] == 0.0) continue;
        auto sb1 = size_biased_offspring_law(u, s1, 1, gen1[v], beta);
        std::vector<std::size_t> pick(width, 0);
        for (;;) {
          double prob = sb0.outcome_probs[o0] * sel0[v];
          for (std::size_t j = 0; j < width; ++j)
            prob *= (j == v) ? sb1.outcome_probs[pick[j]] : s1.outcomes[pick[j]].prob;
          if (prob > 0.0) {
            auto sel1 = detail::spine_selection_weights(u, s1.outcomes[pick[v]], 1, gen1[v], beta,
                                                        delta);
            std::vector<std::size_t> key{o0};
            key.insert(key.end(), pick.begin(), pick.end());
            // Flattened gen-2 vertex slots: (j, c) -> offset.
            std::size_t offset = 0;
            for (std::size_t j = 0; j < v; ++j) offset += s1.outcomes[pick[j]].children.size();
            for (std::size_t c = 0; c < sel1.size(); ++c)
              if (sel1[c] > 0.0) joint[key][offset + c] += prob * sel1[c];
          }
          std::size_t j = 0;
          while (j < width && ++pick[j] == s1.outcomes.size()) pick[j++] = 0;
          if (j == width) break;
        }
      }
    }
  }

  double max_residual = 0.0;
  for (const auto& [key, slots] : joint) {
    // Rebuild the configuration's depth-n particle positions and D_n.
    const std::size_t o0 = key[0];
    std::vector<std::int64_t> gen1;
    for (std::int64_t d : s0.outcomes[o0].children) gen1.push_back(a + d);
    std::vector<std::int64_t> leaves;
    std::vector<bool> alive;
    if (n == 1) {
      leaves = gen1;
      for (std::int64_t pos : leaves) alive.push_back(pos >= -beta);
    } else {
      const PointProcessLaw& s1 = env.state(1);
      for (std::size_t j = 0; j < gen1.size(); ++j) {
        for (std::int64_t d : s1.outcomes[key[1 + j]].children) {
          leaves.push_back(gen1[j] + d);
          alive.push_back(gen1[j] >= -beta && gen1[j] + d >= -beta);
        }
      }
    }
    KahanSum dn;
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (alive[i])
        dn.add(u(n, leaves[i] + beta) * std::exp(-static_cast<double>(leaves[i]) * delta));
    double total = 0.0;
    for (const auto& [slot, p] : slots) total += p;
    for (const auto& [slot, p] : slots) {
      const double constructed = p / total;
      const double formula =
          alive[slot]
              ? u(n, leaves[slot] + beta) * std::exp(-static_cast<double>(leaves[slot]) * delta) /
                    dn.value()
              : 0.0;
      max_residual = std::max(max_residual, std::fabs(constructed - formula));
    }
  }
  return max_residual;
}

struct SpineLawReport {
  double tv_distance = 0.0;  // exact mode
  TestReport chi_square;     // statistical mode
  bool exact_mode = true;
};

/// The spine position marginal must match the conditioned-walk marginal.
/// Exact mode enumerates the spine chain; statistical mode samples it.
template <class Walk>
SpineLawReport spine_law_check(HarmonicCache<Walk>& u, const EnvironmentPath& env,
                               std::int64_t beta, std::int64_t a, std::uint64_t n, bool exact_mode,
                               std::size_t samples = 100000, std::uint64_t seed = 1) {
  SpineLawReport rep;
  rep.exact_mode = exact_mode;
  auto target = conditioned_marginal(u, n, beta, a);
  const double delta = env.lattice_step();
  if (exact_mode) {
    if (n > 4) fail(errc::bad_config, "spine_law_check: exact mode capped at depth 4");
    std::map<std::int64_t, double> cur{{a, 1.0}};
    for (std::uint64_t k = 0; k < n; ++k) {
      const PointProcessLaw& s = env.state(k);
      std::map<std::int64_t, double> next;
      for (const auto& [x, m] : cur) {
        auto sb = size_biased_offspring_law(u, s, k, x, beta);
        for (std::size_t oi = 0; oi < s.outcomes.size(); ++oi) {
          if (sb.outcome_probs[oi] == 0.0) continue;
          auto sel = detail::spine_selection_weights(u, s.outcomes[oi], k, x, beta, delta);
          for (std::size_t c = 0; c < sel.size(); ++c)
            if (sel[c] > 0.0)
              next[x + s.outcomes[oi].children[c]] += m * sb.outcome_probs[oi] * sel[c];
        }
      }
      cur = std::move(next);
    }
    KahanSum tv;
    std::int64_t lo = std::min(target.min_index(), cur.begin()->first);
    std::int64_t hi = std::max(target.max_index(), cur.rbegin()->first);
    for (std::int64_t x = lo; x <= hi; ++x) {
      auto it = cur.find(x);
      const double p = it == cur.end() ? 0.0 : it->second;
      tv.add(std::fabs(p - target.mass_at(x)));
    }
    rep.tv_distance = 0.5 * tv.value();
  } else {
    WeightedHistogram hist;
    RngStream master(seed, 0x5B1);
    for (std::size_t t = 0; t < samples; ++t) {
      RngStream rng = master.substream(t);
      std::int64_t x = a;
      for (std::uint64_t k = 0; k < n; ++k) x = spine_step(u, env.state(k), k, x, beta, rng).second;
      hist.add(x);
    }
    std::map<std::int64_t, double> law;
    target.for_each([&](std::int64_t i, double m) { law[i] = m; });
    rep.chi_square = chi_square_vs_exact(hist, law, "spine_vs_conditioned");
  }
  return rep;
}

}  // namespace brwlab
