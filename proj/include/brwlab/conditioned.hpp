#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "brwlab/errors.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/lattice.hpp"
#include "brwlab/rng.hpp"

namespace brwlab {

/// One row of the h-transformed transition kernel: the law of the next
/// position of the walk conditioned to stay above -beta, given position x at
/// time n. Probabilities are renormalized after the harmonic-property check;
/// the pre-normalization deviation is kept as a diagnostic.
struct ConditionedKernelRow {
  std::uint64_t time = 0;
  std::int64_t from = 0;
  std::int64_t beta = 0;
  std::vector<std::pair<std::int64_t, double>> targets;  // (position index, probability)
  double pre_normalization_deviation = 0.0;
};

template <class Walk>
ConditionedKernelRow kernel_row(HarmonicCache<Walk>& u, std::uint64_t n, std::int64_t x,
                                std::int64_t beta, double row_tol = 1e-8) {
  if (beta < 0) fail(errc::bad_config, "kernel_row: beta must be >= 0");
  if (x < -beta) fail(errc::bad_config, "kernel_row: source below the barrier");
  const StepMeasure& mu = u.walk().step(n);
  const double u_here = u(n, x + beta);
  ConditionedKernelRow row;
  row.time = n;
  row.from = x;
  row.beta = beta;
  KahanSum total;
  for (const auto& [d, m] : mu.atoms) {
    const std::int64_t y = x + d;
    if (y < -beta) continue;
    const double w = u(n + 1, y + beta) * m / u_here;
    if (w <= 0.0) continue;
    row.targets.emplace_back(y, w);
    total.add(w);
  }
  row.pre_normalization_deviation = std::fabs(total.value() - 1.0);
  if (row.pre_normalization_deviation > row_tol)
    fail(errc::contract_violation, "kernel_row: harmonic property violated beyond tolerance",
         {{"row_sum", total.value()}, {"deviation", row.pre_normalization_deviation}});
  for (auto& [y, w] : row.targets) w /= total.value();
  return row;
}

/// Direct marginal of the conditioned walk at time n started from a:
/// E[U(theta^n xi, S_n + beta); tau_beta > n, S_n = x] / U(xi, a + beta),
/// computed by exact killed DP plus harmonic weights.
template <class Walk>
LatticeDistribution conditioned_marginal(HarmonicCache<Walk>& u, std::uint64_t n, std::int64_t beta,
                                         std::int64_t a = 0, std::int64_t position_ceiling = 10000) {
  if (beta < 0 || a < -beta) fail(errc::bad_config, "conditioned_marginal: bad start/barrier");
  const double delta = u.walk().lattice_step();
  LatticeDistribution dist = LatticeDistribution::point_mass(delta, a);
  for (std::uint64_t k = 0; k < n; ++k) {
    auto killed = killed_propagate(dist, u.walk().step(k), beta);
    dist = std::move(killed.survivor);
    if (dist.max_index() > position_ceiling)
      fail(errc::budget_exceeded, "conditioned_marginal: position ceiling reached",
           {{"ceiling", static_cast<double>(position_ceiling)}});
  }
  const double u0 = u(0, a + beta);
  std::vector<double> weighted(dist.support_size(), 0.0);
  std::int64_t lo = dist.min_index();
  dist.for_each([&](std::int64_t i, double m) {
    weighted[static_cast<std::size_t>(i - lo)] = m * u(n, i + beta) / u0;
  });
  return LatticeDistribution(delta, lo, std::move(weighted));
}

/// Same marginal via n chained kernel rows; the dual route of the h-transform
/// definition.
template <class Walk>
LatticeDistribution conditioned_marginal_chained(HarmonicCache<Walk>& u, std::uint64_t n,
                                                 std::int64_t beta, std::int64_t a = 0,
                                                 std::int64_t position_ceiling = 10000,
                                                 double row_tol = 1e-8) {
  const double delta = u.walk().lattice_step();
  std::map<std::int64_t, double> cur{{a, 1.0}};
  for (std::uint64_t k = 0; k < n; ++k) {
    std::map<std::int64_t, double> next;
    for (const auto& [x, m] : cur) {
      auto row = kernel_row(u, k, x, beta, row_tol);
      for (const auto& [y, w] : row.targets) next[y] += m * w;
    }
    cur = std::move(next);
    if (!cur.empty() && cur.rbegin()->first > position_ceiling)
      fail(errc::budget_exceeded, "conditioned_marginal_chained: position ceiling reached");
  }
  if (cur.empty()) return LatticeDistribution(delta, 0, {});
  const std::int64_t lo = cur.begin()->first;
  const std::int64_t hi = cur.rbegin()->first;
  std::vector<double> masses(static_cast<std::size_t>(hi - lo + 1), 0.0);
  for (const auto& [x, m] : cur) masses[static_cast<std::size_t>(x - lo)] = m;
  return LatticeDistribution(delta, lo, std::move(masses));
}

/// Markov-chain sampler through kernel rows; rows are cached per (time,
/// position) so long trajectories stay cheap.
template <class Walk>
class ConditionedSampler {
 public:
  ConditionedSampler(HarmonicCache<Walk>& u, std::int64_t beta, double row_tol = 1e-8)
      : u_(u), beta_(beta), row_tol_(row_tol) {}

  /// Path (zeta_0 = a, ..., zeta_n).
  std::vector<std::int64_t> sample_path(std::uint64_t n, RngStream& rng, std::int64_t a = 0,
                                        std::int64_t position_ceiling = 1 << 20) {
    std::vector<std::int64_t> path;
    path.reserve(n + 1);
    std::int64_t x = a;
    path.push_back(x);
    for (std::uint64_t k = 0; k < n; ++k) {
      const ConditionedKernelRow& row = row_at(k, x);
      double uu = rng.u01();
      double acc = 0.0;
      std::int64_t y = row.targets.back().first;
      for (const auto& [ty, w] : row.targets) {
        acc += w;
        if (uu < acc) {
          y = ty;
          break;
        }
      }
      x = y;
      if (x > position_ceiling)
        fail(errc::budget_exceeded, "ConditionedSampler: position ceiling reached");
      path.push_back(x);
    }
    return path;
  }

  const ConditionedKernelRow& row_at(std::uint64_t n, std::int64_t x) {
    const auto key = std::make_pair(n, x);
    auto it = rows_.find(key);
    if (it == rows_.end()) it = rows_.emplace(key, kernel_row(u_, n, x, beta_, row_tol_)).first;
    return it->second;
  }

  std::int64_t beta() const { return beta_; }

 private:
  HarmonicCache<Walk>& u_;
  std::int64_t beta_;
  double row_tol_;
  std::map<std::pair<std::uint64_t, std::int64_t>, ConditionedKernelRow> rows_;
};

/// Allocation-free single step of the conditioned chain; relative harmonic
/// weights make renormalization unnecessary for sampling. The hot path for
/// long Monte Carlo trajectories.
template <class Walk>
std::int64_t conditioned_step(HarmonicCache<Walk>& u, const StepMeasure& mu, std::uint64_t n,
                              std::int64_t x, std::int64_t beta, RngStream& rng) {
  double w[32];
  std::int64_t y[32];
  std::size_t m = 0;
  double total = 0.0;
  for (const auto& [d, mass] : mu.atoms) {
    const std::int64_t target = x + d;
    if (target < -beta) continue;
    if (m >= 32) fail(errc::bad_config, "conditioned_step: too many step atoms");
    w[m] = u(n + 1, target + beta) * mass;
    y[m] = target;
    total += w[m];
    ++m;
  }
  if (m == 0) fail(errc::contract_violation, "conditioned_step: no admissible targets");
  double uu = rng.u01() * total;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    uu -= w[i];
    if (uu < 0.0) return y[i];
  }
  return y[m - 1];
}

/// Full trajectory via conditioned_step.
template <class Walk>
std::vector<std::int64_t> sample_conditioned_path(HarmonicCache<Walk>& u, std::int64_t beta,
                                                  std::uint64_t n, RngStream& rng,
                                                  std::int64_t a = 0) {
  std::vector<std::int64_t> path(n + 1);
  path[0] = a;
  std::int64_t x = a;
  for (std::uint64_t k = 0; k < n; ++k) {
    x = conditioned_step(u, u.walk().step(k), k, x, beta, rng);
    path[k + 1] = x;
  }
  return path;
}

/// Probability that the conditioned chain started at x (time shift n) never
/// enters (-inf, z): U(theta^n xi, x - z) / U(theta^n xi, x + beta).
template <class Walk>
double never_descend_probability(HarmonicCache<Walk>& u, std::int64_t x, std::int64_t z,
                                 std::int64_t beta = 0, std::uint64_t shift = 0) {
  if (z < -beta || x < z) fail(errc::bad_config, "never_descend_probability: need x >= z >= -beta");
  return u(shift, x - z) / u(shift, x + beta);
}

}  // namespace brwlab
