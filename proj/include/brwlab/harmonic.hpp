#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"
#include "brwlab/lattice.hpp"

namespace brwlab {

/// Walk given by one fixed step measure; exposes the same interface as
/// WalkPath so pure random-walk checks can bypass point processes entirely.
class HomogeneousWalk {
 public:
  explicit HomogeneousWalk(StepMeasure mu) : mu_(std::move(mu)) {}
  double lattice_step() const { return mu_.lattice_step; }
  const StepMeasure& step(std::uint64_t) const { return mu_; }
  HomogeneousWalk shifted(std::uint64_t) const { return *this; }
  std::int64_t min_jump() const { return mu_.min_jump(); }
  std::int64_t max_jump() const { return mu_.max_jump(); }

 private:
  StepMeasure mu_;
};

/// The associated walk of a realized environment: step n carries the tilted
/// displacement measure of state n.
class WalkPath {
 public:
  explicit WalkPath(EnvironmentPath path) : path_(std::move(path)) { scan_jumps(); }

  double lattice_step() const { return path_.lattice_step(); }
  const StepMeasure& step(std::uint64_t n) const { return path_.step(n); }
  WalkPath shifted(std::uint64_t k) const { return WalkPath(path_.shifted(k), min_jump_, max_jump_); }
  std::int64_t min_jump() const { return min_jump_; }
  std::int64_t max_jump() const { return max_jump_; }
  const EnvironmentPath& env() const { return path_; }

 private:
  WalkPath(EnvironmentPath path, std::int64_t mn, std::int64_t mx)
      : path_(std::move(path)), min_jump_(mn), max_jump_(mx) {}
  void scan_jumps() {
    min_jump_ = 0;
    max_jump_ = 0;
    for (const auto& [p, state] : path_.law().states) {
      (void)p;
      StepMeasure mu = step_measure(state);
      min_jump_ = std::min(min_jump_, mu.min_jump());
      max_jump_ = std::max(max_jump_, mu.max_jump());
    }
  }

  EnvironmentPath path_;
  std::int64_t min_jump_ = 0;
  std::int64_t max_jump_ = 0;
};

struct HarmonicValue {
  double value = 0.0;           // certified estimate of U
  double error_bound = 0.0;     // rigorous half-width of the bracket reached
  double y = 0.0;               // barrier shift, real units
  std::uint64_t horizon = 0;    // DP steps taken
  double surviving_mass = 0.0;  // P(tau_y > horizon)
  double overshoot_expectation = 0.0;  // accumulated E[-(y+S_tau); tau <= horizon]
};

/// Quenched harmonic function U(xi, y) = -E_xi[S_{tau_y}] = y + E[overshoot].
///
/// The DP accumulates killed overshoot mass exactly. The single future kill
/// overshoots by between one lattice step and the largest down jump, so
///   U - U_n  in  [m_min * P(tau_y > n), m_max * P(tau_y > n)],
/// a two-sided bracket certified per realization; for skip-free-down walks it
/// has zero width at every horizon. The one-sided rule
/// m_max * P(tau_y > n) <= tol also stops the iteration. Each call
/// cross-checks the direct expectation E[(y+S_n); tau_y > n] against
/// y + accumulated overshoot (optional stopping at mean-zero steps).
template <class Walk>
HarmonicValue harmonic_u(const Walk& walk, std::int64_t y_index, double tol = 1e-10,
                         std::uint64_t max_horizon = (1ULL << 22)) {
  if (y_index < 0) fail(errc::bad_config, "harmonic_u: barrier shift must be >= 0");
  const double delta = walk.lattice_step();
  const std::int64_t down = -walk.min_jump();
  if (down <= 0) fail(errc::bad_config, "harmonic_u: walk has no downward jumps");
  const double m_min = delta;
  const double m_max = static_cast<double>(down) * delta;

  LatticeDistribution survivor = LatticeDistribution::point_mass(delta, 0);
  KahanSum overshoot;
  double surviving = 1.0;
  HarmonicValue out;
  out.y = static_cast<double>(y_index) * delta;

  std::uint64_t n = 0;
  for (;;) {
    const double half_width = 0.5 * (m_max - m_min) * surviving;
    if (half_width <= tol || m_max * surviving <= tol) {
      out.value = out.y + overshoot.value() + 0.5 * (m_min + m_max) * surviving;
      out.error_bound = half_width;
      out.horizon = n;
      out.surviving_mass = surviving;
      out.overshoot_expectation = overshoot.value();
      KahanSum direct;
      survivor.for_each([&](std::int64_t i, double m) {
        direct.add((out.y + static_cast<double>(i) * delta) * m);
      });
      const double via_overshoot = out.y + overshoot.value();
      if (std::fabs(direct.value() - via_overshoot) >
          1e-10 * std::max(1.0, std::fabs(via_overshoot)))
        fail(errc::contract_violation, "harmonic_u: direct and overshoot routes disagree",
             {{"direct", direct.value()}, {"overshoot_route", via_overshoot}});
      return out;
    }
    if (n >= max_horizon)
      fail(errc::horizon_exceeded, "harmonic_u: horizon exhausted before certification",
           {{"best_value", out.y + overshoot.value() + 0.5 * (m_min + m_max) * surviving},
            {"best_bound", half_width},
            {"surviving_mass", surviving}});
    auto killed = killed_propagate(survivor, walk.step(n), y_index);
    overshoot.add(killed.killed_overshoot_expectation);
    surviving -= killed.killed_mass;
    survivor = std::move(killed.survivor);
    ++n;
  }
}

/// |U(xi,y) - E_xi[U(theta xi, y+S_1); tau_y > 1]|, both sides computed at
/// tolerance tol/10; the quenched harmonic property makes this ~0.
template <class Walk>
double harmonic_residual(const Walk& walk, std::int64_t y_index, double tol = 1e-8,
                         std::uint64_t max_horizon = (1ULL << 22)) {
  const double inner_tol = tol / 10.0;
  const double lhs = harmonic_u(walk, y_index, inner_tol, max_horizon).value;
  const Walk next = walk.shifted(1);
  KahanSum rhs;
  for (const auto& [d, m] : walk.step(0).atoms) {
    const std::int64_t y2 = y_index + d;
    if (y2 < 0) continue;
    rhs.add(m * harmonic_u(next, y2, inner_tol, max_horizon).value);
  }
  return std::fabs(lhs - rhs.value());
}

/// Memoizing view of U over (time shift, barrier shift); above `ceiling` it
/// uses the overshoot bracket U(y) = y + midpoint directly (the same bound the
/// DP certifies, with the same width), recording that budget.
template <class Walk>
class HarmonicCache {
 public:
  HarmonicCache(Walk base, double tol = 1e-10, std::uint64_t max_horizon = (1ULL << 22),
                std::int64_t ceiling = 1 << 14)
      : base_(std::move(base)), tol_(tol), max_horizon_(max_horizon), ceiling_(ceiling) {
    const double delta = base_.lattice_step();
    m_min_ = delta;
    m_max_ = static_cast<double>(-base_.min_jump()) * delta;
    // Skip-free downward: every kill overshoots by exactly one step, so
    // U(theta^n xi, y) = y + delta identically (the DP certifies this with a
    // zero-width bracket at horizon 0).
    closed_form_ = base_.min_jump() == -1;
  }

  double operator()(std::uint64_t shift, std::int64_t y_index) {
    if (y_index < 0) return 0.0;
    if (closed_form_)
      return static_cast<double>(y_index) * base_.lattice_step() + m_min_;
    if (y_index > ceiling_)
      return static_cast<double>(y_index) * base_.lattice_step() + 0.5 * (m_min_ + m_max_);
    const auto key = std::make_pair(shift, y_index);
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    const double v = harmonic_u(base_.shifted(shift), y_index, tol_, max_horizon_).value;
    values_.emplace(key, v);
    return v;
  }

  /// Worst-case error of any value served (DP tolerance or bracket width).
  double budget() const { return std::max(tol_, 0.5 * (m_max_ - m_min_)); }
  double tol() const { return tol_; }
  const Walk& walk() const { return base_; }

 private:
  Walk base_;
  double tol_;
  std::uint64_t max_horizon_;
  std::int64_t ceiling_;
  double m_min_ = 0.0;
  double m_max_ = 0.0;
  bool closed_form_ = false;
  std::map<std::pair<std::uint64_t, std::int64_t>, double> values_;
};

// ---------------------------------------------------------------------------
// Many-to-one identity at small depth by two exhaustive routes.
// ---------------------------------------------------------------------------

struct ManyToOneResult {
  double lhs = 0.0;  // particle-sum expectation, tree recursion
  double rhs = 0.0;  // e^{S_n - a}-weighted path expectation
};

/// f receives the absolute positions (V(u_1), ..., V(u_n)).
inline ManyToOneResult many_to_one_check(const EnvironmentPath& path, std::uint64_t n,
                                         const std::function<double(std::span<const double>)>& f,
                                         double a = 0.0, std::uint64_t enumeration_cap = 4000000) {
  ManyToOneResult res;
  const double delta = path.lattice_step();
  std::uint64_t nodes = 0;
  auto bump = [&]() {
    if (++nodes > enumeration_cap)
      fail(errc::enumeration_too_large, "many_to_one_check: enumeration cap exceeded");
  };

  // Tree route: linearity of expectation applied particle by particle.
  std::vector<double> prefix;
  std::function<double(std::uint64_t, double)> tree = [&](std::uint64_t depth, double pos) -> double {
    if (depth == n) return f(prefix);
    const PointProcessLaw& state = path.state(depth);
    if (state.has_tail()) fail(errc::unsupported_tail, "many_to_one_check: finite laws only");
    KahanSum acc;
    for (const auto& o : state.outcomes) {
      KahanSum children_sum;
      for (std::int64_t d : o.children) {
        bump();
        const double child_pos = pos + static_cast<double>(d) * delta;
        prefix.push_back(child_pos);
        children_sum.add(tree(depth + 1, child_pos));
        prefix.pop_back();
      }
      acc.add(o.prob * children_sum.value());
    }
    return acc.value();
  };
  res.lhs = tree(0, a);

  // Walk route: exhaustive paths under the tilted steps, reweighted by
  // e^{S_n - a}.
  std::function<double(std::uint64_t, double)> walk = [&](std::uint64_t depth, double pos) -> double {
    if (depth == n) return std::exp(pos - a) * f(prefix);
    const StepMeasure& mu = path.step(depth);
    KahanSum acc;
    for (const auto& [d, m] : mu.atoms) {
      bump();
      const double next = pos + static_cast<double>(d) * delta;
      prefix.push_back(next);
      acc.add(m * walk(depth + 1, next));
      prefix.pop_back();
    }
    return acc.value();
  };
  prefix.clear();
  res.rhs = walk(0, a);
  return res;
}

}  // namespace brwlab
