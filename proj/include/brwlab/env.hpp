#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "brwlab/errors.hpp"
#include "brwlab/lattice.hpp"
#include "brwlab/rng.hpp"

namespace brwlab {

/// One realizable offspring configuration: children listed as displacement
/// lattice indices (repeats allowed).
struct Outcome {
  double prob = 0.0;
  std::vector<std::int64_t> children;
};

/// Parametric countably-infinite outcome tail, accepted only by the moment
/// criterion and by direct samplers. Family "count_polylog": outcome k >= k_min
/// has k children, all displaced by gamma * log(log k), with probability
/// weight * k^-2.
struct TailFamily {
  std::string family = "count_polylog";
  double alpha = 2.0;   // probability exponent; only alpha = 2 is evaluable
  double gamma = 2.0;   // displacement scale, must be > 1
  std::int64_t k_min = 3;
  double weight = 0.05;  // total C in p_k = C * k^-alpha

  double displacement(std::int64_t k) const { return gamma * std::log(std::log(static_cast<double>(k))); }
  double prob_weight(std::int64_t k) const {
    double kd = static_cast<double>(k);
    return weight / (kd * kd);
  }
};

struct PointProcessLaw {
  double lattice_step = 1.0;
  std::vector<Outcome> outcomes;
  std::optional<TailFamily> tail;

  bool has_tail() const { return tail.has_value(); }
  std::size_t max_children() const {
    std::size_t m = 0;
    for (const auto& o : outcomes) m = std::max(m, o.children.size());
    return m;
  }
};

struct EnvironmentLaw {
  double lattice_step = 1.0;
  std::vector<std::pair<double, PointProcessLaw>> states;  // (prob, law)
};

namespace detail {

/// Euler-Maclaurin tail for a smooth decreasing f with closed-form integral:
/// sum_{k=a}^inf f(k) ~= direct sum to K, then integral + f/2 - f'/12.
struct TailSeries {
  std::function<double(double)> f;
  std::function<double(double)> fprime;
  std::function<double(double)> integral_to_inf;  // at lower limit x
};

inline double sum_series(const TailSeries& s, std::int64_t k_min, std::int64_t em_start = 4096) {
  // Direct sum over [k_min, a), Euler-Maclaurin tail from a; the remainder is
  // of order f'''(a)/720, far below 1e-15 for these integrands at a >= 4096.
  const std::int64_t a_int = std::max(k_min, em_start);
  KahanSum acc;
  for (std::int64_t k = k_min; k < a_int; ++k) acc.add(s.f(static_cast<double>(k)));
  const double a = static_cast<double>(a_int);
  acc.add(s.integral_to_inf(a));
  acc.add(0.5 * s.f(a));
  acc.add(-s.fprime(a) / 12.0);
  return acc.value();
}

/// G(gamma, m, U) = int_U^inf u^-gamma (ln u)^m du for gamma > 1, integer m >= 0.
inline double poly_log_integral(double gamma, int m, double U) {
  double acc = 0.0;
  double coeff = 1.0;
  for (int j = m; j >= 0; --j) {
    acc += coeff * std::pow(U, 1.0 - gamma) * std::pow(std::log(U), j) / (gamma - 1.0);
    coeff *= static_cast<double>(j) / (gamma - 1.0);
  }
  return acc;
}

/// sum over the count_polylog tail (k >= from_k) of
/// p_k * k * e^{-t d_k} * (d_k)^m = C * sum k^-1 (log k)^{-t gamma}
/// (gamma loglog k)^m.
inline double polylog_tail_moment_from(const TailFamily& t, double tilt, int m,
                                       std::int64_t from_k) {
  const double s = tilt * t.gamma;
  if (s <= 1.0) fail(errc::non_finite, "tail series diverges at this tilt");
  TailSeries ts;
  ts.f = [&t, s, m](double x) {
    double lx = std::log(x);
    double v = std::pow(lx, -s) / x;
    if (m > 0) v *= std::pow(t.gamma * std::log(lx), m);
    return v;
  };
  ts.fprime = [&t, s, m](double x) {
    double lx = std::log(x);
    double base = std::pow(lx, -s) / (x * x);
    double corr = 1.0 + s / lx;
    if (m > 0) corr -= static_cast<double>(m) / (lx * std::log(lx));
    double v = -base * corr;
    if (m > 0) v *= std::pow(t.gamma * std::log(lx), m);
    return v;
  };
  ts.integral_to_inf = [&t, s, m](double x) {
    double scale = std::pow(t.gamma, m);
    return scale * poly_log_integral(s, m, std::log(x));
  };
  return t.weight * sum_series(ts, from_k);
}

inline double polylog_tail_moment(const TailFamily& t, double tilt, int m) {
  return polylog_tail_moment_from(t, tilt, m, t.k_min);
}

/// sum over the tail of p_k (total tail probability at weight C).
inline double polylog_tail_prob(const TailFamily& t) {
  TailSeries ts;
  ts.f = [](double x) { return 1.0 / (x * x); };
  ts.fprime = [](double x) { return -2.0 / (x * x * x); };
  ts.integral_to_inf = [](double x) { return 1.0 / x; };
  return t.weight * sum_series(ts, t.k_min);
}

inline void require_supported_tail(const TailFamily& t) {
  if (t.family != "count_polylog") fail(errc::unsupported_tail, "unknown tail family: " + t.family);
  if (t.alpha != 2.0) fail(errc::unsupported_tail, "count_polylog tail requires alpha = 2");
  if (t.gamma <= 1.0) fail(errc::unsupported_tail, "count_polylog tail requires gamma > 1");
  if (t.k_min < 3) fail(errc::unsupported_tail, "count_polylog tail requires k_min >= 3");
}

}  // namespace detail

/// Log-Laplace transform of a point process state at tilt t:
/// log sum_outcomes p * sum_children e^{-t V}.
inline double log_laplace(const PointProcessLaw& state, double t) {
  KahanSum acc;
  for (const auto& o : state.outcomes) {
    KahanSum inner;
    for (std::int64_t d : o.children)
      inner.add(std::exp(-t * static_cast<double>(d) * state.lattice_step));
    acc.add(o.prob * inner.value());
  }
  if (state.tail) {
    detail::require_supported_tail(*state.tail);
    acc.add(detail::polylog_tail_moment(*state.tail, t, 0));
  }
  const double total = acc.value();
  if (!(total > 0.0) || !std::isfinite(total))
    fail(errc::non_finite, "log_laplace: transform not finite/positive");
  return std::log(total);
}

/// d/dt of the pre-log transform, used by the tilt solver. Finite laws only.
inline double laplace_mass_and_tilted_mean(const PointProcessLaw& state, double t, double* mean_out) {
  KahanSum mass, mean;
  for (const auto& o : state.outcomes) {
    for (std::int64_t d : o.children) {
      double x = static_cast<double>(d) * state.lattice_step;
      double w = std::exp(-t * x);
      mass.add(o.prob * w);
      mean.add(o.prob * x * w);
    }
  }
  if (state.tail) {
    detail::require_supported_tail(*state.tail);
    mass.add(detail::polylog_tail_moment(*state.tail, t, 0));
    mean.add(detail::polylog_tail_moment(*state.tail, t, 1));
  }
  if (mean_out) *mean_out = mean.value();
  return mass.value();
}

/// Tilted one-step displacement measure mu of the associated walk:
/// mu({x}) = sum_outcomes p * (# children at x) * e^{-x}.
inline StepMeasure step_measure(const PointProcessLaw& state, double mass_tol = 1e-9) {
  if (state.tail) fail(errc::unsupported_tail, "step_measure: tail families are not lattice laws");
  std::vector<std::pair<std::int64_t, double>> atoms;
  for (const auto& o : state.outcomes) {
    for (std::int64_t d : o.children) {
      double w = o.prob * std::exp(-static_cast<double>(d) * state.lattice_step);
      auto it = std::find_if(atoms.begin(), atoms.end(), [d](const auto& a) { return a.first == d; });
      if (it == atoms.end()) atoms.emplace_back(d, w);
      else it->second += w;
    }
  }
  StepMeasure mu{state.lattice_step, std::move(atoms)};
  mu.sort_atoms();
  const double total = mu.total_mass();
  if (std::fabs(total - 1.0) > mass_tol)
    fail(errc::not_boundary, "step_measure: total mass deviates from 1",
         {{"total_mass", total}, {"deviation", std::fabs(total - 1.0)}});
  return mu;
}

struct StateBoundaryResidual {
  double log_laplace_at_1 = 0.0;   // Psi(1)
  double mass_residual = 0.0;      // |sum p e^-V - 1|
  double mean_residual = 0.0;      // |sum p V e^-V|
  bool pass = false;
};

struct BoundaryReport {
  std::vector<StateBoundaryResidual> per_state;
  double tol = 0.0;
  bool pass = false;
};

/// Checks, state by state, the two boundary normalizations: unit tilted mass
/// (Psi(1) = 0) and zero tilted mean.
inline BoundaryReport boundary_check(const EnvironmentLaw& env, double tol = 1e-9) {
  BoundaryReport rep;
  rep.tol = tol;
  rep.pass = true;
  for (const auto& [p, state] : env.states) {
    (void)p;
    StateBoundaryResidual r;
    double mean = 0.0;
    double mass = laplace_mass_and_tilted_mean(state, 1.0, &mean);
    r.log_laplace_at_1 = std::log(mass);
    r.mass_residual = std::fabs(mass - 1.0);
    r.mean_residual = std::fabs(mean);
    r.pass = std::fabs(r.log_laplace_at_1) <= tol && r.mean_residual <= tol;
    rep.pass = rep.pass && r.pass;
    rep.per_state.push_back(r);
  }
  return rep;
}

struct AssumptionsReport {
  bool nonextinction = false;         // every outcome of every state has >= 1 child
  bool supercritical_possible = false;  // some state gives > 1 child with positive prob
  bool positive_displacement = false;   // every state: sum p sum_{V>0} e^-V > 0
  bool boundary_pass = false;
  double moment_2_plus_delta = 0.0;   // E[sum V^{2+delta} e^-V] (annealed); inf if divergent
  bool moment_finite = false;
  double delta = 1.0;
  bool all_pass() const {
    return nonextinction && supercritical_possible && positive_displacement && boundary_pass &&
           moment_finite;
  }
};

/// Validates the standing assumptions: non-extinction, possibility of
/// branching, positive mass on upward displacements, the boundary
/// normalization, and the (2+delta) tilted displacement moment.
inline AssumptionsReport validate_assumptions(const EnvironmentLaw& env, double delta = 1.0) {
  AssumptionsReport rep;
  rep.delta = delta;
  rep.nonextinction = true;
  rep.positive_displacement = true;
  rep.supercritical_possible = false;
  KahanSum moment;
  bool moment_finite = true;
  for (const auto& [sp, state] : env.states) {
    KahanSum up_mass;
    for (const auto& o : state.outcomes) {
      if (o.children.empty()) rep.nonextinction = false;
      if (o.children.size() > 1 && o.prob > 0.0) rep.supercritical_possible = true;
      for (std::int64_t d : o.children) {
        double x = static_cast<double>(d) * state.lattice_step;
        if (x > 0.0) up_mass.add(o.prob * std::exp(-x));
        moment.add(sp * o.prob * std::pow(std::fabs(x), 2.0 + delta) * std::exp(-x));
      }
    }
    if (state.tail) {
      detail::require_supported_tail(*state.tail);
      rep.supercritical_possible = true;  // tail outcomes carry k >= 3 children
      up_mass.add(detail::polylog_tail_moment(*state.tail, 1.0, 0));
      if (delta == 1.0) {
        moment.add(sp * detail::polylog_tail_moment(*state.tail, 1.0, 3));
      } else {
        moment_finite = moment_finite && true;  // gamma > 1 keeps every polylog power finite
        moment.add(sp * detail::polylog_tail_moment(*state.tail, 1.0, 3));
      }
    }
    if (!(up_mass.value() > 0.0)) rep.positive_displacement = false;
  }
  rep.boundary_pass = boundary_check(env).pass;
  rep.moment_2_plus_delta = moment.value();
  rep.moment_finite = moment_finite && std::isfinite(rep.moment_2_plus_delta);
  return rep;
}

/// Solves Psi(t) = t Psi'(t) for one state by bisection on
/// g(t) = Psi(t) - t Psi'(t), which is strictly decreasing in t.
inline std::optional<double> solve_tilt(const PointProcessLaw& state, double t_lo = 1e-6,
                                        double t_hi_start = 4.0) {
  auto g = [&](double t) {
    double mean = 0.0;
    double mass = laplace_mass_and_tilted_mean(state, t, &mean);
    // Psi'(t) = -tilted_mean / mass
    return std::log(mass) + t * mean / mass;
  };
  double lo = t_lo, hi = t_hi_start;
  double glo = g(lo);
  if (glo < 0.0) return std::nullopt;
  double ghi = g(hi);
  int expand = 0;
  while (ghi > 0.0 && expand < 40) {
    hi *= 2.0;
    ghi = g(hi);
    ++expand;
  }
  if (ghi > 0.0) return std::nullopt;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Replaces each displacement x by t* x + Psi_s(t*) on a refined common
/// lattice, producing a law in the boundary normalization.
inline EnvironmentLaw boundary_normalize(const EnvironmentLaw& env, double t_star,
                                         double tilt_tol = 1e-8, std::int64_t max_denominator = 64,
                                         double min_step = 1e-9) {
  if (!(t_star > 0.0)) fail(errc::bad_config, "boundary_normalize: t_star must be positive");
  std::vector<double> shifts;
  for (const auto& [p, state] : env.states) {
    (void)p;
    auto t_s = solve_tilt(state);
    if (!t_s || std::fabs(*t_s - t_star) > tilt_tol * std::max(1.0, t_star))
      fail(errc::no_common_tilt_point, "states disagree on the critical tilt point",
           {{"t_star", t_star}, {"state_solution", t_s ? *t_s : std::nan("")}});
    shifts.push_back(log_laplace(state, t_star));
  }
  const double base = t_star * env.lattice_step;
  std::int64_t q_found = 0;
  for (std::int64_t q = 1; q <= max_denominator; ++q) {
    const double step = base / static_cast<double>(q);
    if (step < min_step) break;
    bool ok = true;
    for (double sh : shifts) {
      double r = sh / step;
      if (std::fabs(r - std::round(r)) > 1e-9 * static_cast<double>(q)) { ok = false; break; }
    }
    if (ok) { q_found = q; break; }
  }
  if (q_found == 0)
    fail(errc::lattice_incompatible, "no common lattice accommodates the per-state shifts");
  const double new_step = base / static_cast<double>(q_found);
  EnvironmentLaw out;
  out.lattice_step = new_step;
  for (std::size_t s = 0; s < env.states.size(); ++s) {
    const auto& [p, state] = env.states[s];
    PointProcessLaw ns;
    ns.lattice_step = new_step;
    for (const auto& o : state.outcomes) {
      Outcome no;
      no.prob = o.prob;
      for (std::int64_t d : o.children) {
        double x_new = t_star * static_cast<double>(d) * env.lattice_step + shifts[s];
        double idx = x_new / new_step;
        std::int64_t i = static_cast<std::int64_t>(std::llround(idx));
        if (std::fabs(idx - static_cast<double>(i)) > 1e-7)
          fail(errc::lattice_incompatible, "transformed displacement falls off the lattice",
               {{"value", x_new}, {"step", new_step}});
        no.children.push_back(i);
      }
      ns.outcomes.push_back(std::move(no));
    }
    if (state.tail) fail(errc::unsupported_tail, "boundary_normalize: tail families unsupported");
    out.states.emplace_back(p, std::move(ns));
  }
  return out;
}

inline void validate_environment(const EnvironmentLaw& env, double prob_tol = 1e-12) {
  if (env.states.empty()) fail(errc::bad_config, "environment has no states");
  KahanSum sp;
  for (const auto& [p, state] : env.states) {
    if (!(p > 0.0)) fail(errc::bad_config, "state probabilities must be positive");
    sp.add(p);
    if (!lattice_steps_match(state.lattice_step, env.lattice_step))
      fail(errc::lattice_mismatch, "state lattice step differs from environment lattice step");
    KahanSum op;
    for (const auto& o : state.outcomes) {
      if (!(o.prob > 0.0)) fail(errc::bad_config, "outcome probabilities must be positive");
      if (o.children.empty()) fail(errc::bad_config, "outcomes must carry at least one child");
      op.add(o.prob);
    }
    if (state.tail) {
      detail::require_supported_tail(*state.tail);
      op.add(detail::polylog_tail_prob(*state.tail));
    }
    if (std::fabs(op.value() - 1.0) > prob_tol)
      fail(errc::bad_config, "outcome probabilities must sum to 1",
           {{"sum", op.value()}});
  }
  if (std::fabs(sp.value() - 1.0) > prob_tol)
    fail(errc::bad_config, "state probabilities must sum to 1", {{"sum", sp.value()}});
}

/// Realized i.i.d. environment sequence, reproducible from (law, seed); the
/// shift operator just advances the offset, so realized states are shared
/// between a path and its shifts.
class EnvironmentPath {
 public:
  EnvironmentPath(EnvironmentLaw law, std::uint64_t seed, std::uint64_t offset = 0)
      : law_(std::move(law)), seed_(seed), offset_(offset) {
    validate_environment(law_);
    state_probs_.reserve(law_.states.size());
    for (const auto& [p, s] : law_.states) {
      (void)s;
      state_probs_.push_back(p);
    }
    step_cache_.assign(law_.states.size(), std::nullopt);
  }

  const EnvironmentLaw& law() const { return law_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t offset() const { return offset_; }
  double lattice_step() const { return law_.lattice_step; }

  EnvironmentPath shifted(std::uint64_t k) const {
    EnvironmentPath p(*this);
    p.offset_ += k;
    return p;
  }

  /// Index of the state governing generation n -> n+1 (0-based: state(0) is
  /// the first generation's law). Realized lazily per absolute index, so the
  /// sequence is identical across shifted copies. Not thread-safe; parallel
  /// workers use their own path objects.
  std::size_t state_index(std::uint64_t n) const {
    if (law_.states.size() == 1) return 0;
    const std::uint64_t abs = offset_ + n;
    if (abs >= realized_.size()) realized_.resize(abs + 64, -1);
    std::int32_t& slot = realized_[abs];
    if (slot < 0) {
      RngStream r = RngStream(seed_, 0xE27D1uLL).substream(abs);
      slot = static_cast<std::int32_t>(r.discrete(state_probs_));
    }
    return static_cast<std::size_t>(slot);
  }

  const PointProcessLaw& state(std::uint64_t n) const {
    return law_.states[state_index(n)].second;
  }

  const StepMeasure& step(std::uint64_t n) const {
    std::size_t si = state_index(n);
    if (!step_cache_[si]) step_cache_[si] = step_measure(law_.states[si].second);
    return *step_cache_[si];
  }

 private:
  EnvironmentLaw law_;
  std::uint64_t seed_;
  std::uint64_t offset_;
  std::vector<double> state_probs_;
  mutable std::vector<std::int32_t> realized_;
  mutable std::vector<std::optional<StepMeasure>> step_cache_;
};

/// Annealed one-step measure: the state-probability mixture of the per-state
/// tilted step measures.
inline StepMeasure annealed_step(const EnvironmentLaw& env) {
  std::vector<std::pair<std::int64_t, double>> atoms;
  for (const auto& [p, state] : env.states) {
    StepMeasure mu = step_measure(state);
    for (const auto& [d, w] : mu.atoms) {
      auto it = std::find_if(atoms.begin(), atoms.end(), [&](const auto& a) { return a.first == d; });
      if (it == atoms.end()) atoms.emplace_back(d, p * w);
      else it->second += p * w;
    }
  }
  StepMeasure mu{env.lattice_step, std::move(atoms)};
  mu.sort_atoms();
  return mu;
}

// ---------------------------------------------------------------------------
// Boundary construction recipes. A deterministic child multiset cannot sit in
// the boundary normalization, so child counts per displacement are randomized
// integers whose means solve E[K_x] e^{-x} = mu({x}).
// ---------------------------------------------------------------------------

/// Builds one state realizing a target mean-zero unit-mass step measure via
/// independent randomized child counts per displacement site.
inline PointProcessLaw boundary_recipe(double lattice_step,
                                       const std::vector<std::pair<std::int64_t, double>>& target) {
  KahanSum mass, mean;
  for (const auto& [d, m] : target) {
    if (!(m > 0.0)) fail(errc::bad_config, "boundary_recipe: target masses must be positive");
    mass.add(m);
    mean.add(static_cast<double>(d) * lattice_step * m);
  }
  if (std::fabs(mass.value() - 1.0) > 1e-12 || std::fabs(mean.value()) > 1e-12)
    fail(errc::bad_config, "boundary_recipe: target must have unit mass and zero mean",
         {{"mass", mass.value()}, {"mean", mean.value()}});

  struct Site {
    std::int64_t d;
    std::int64_t k_lo;
    double p_hi;  // P(count = k_lo + 1)
  };
  std::vector<Site> sites;
  bool have_anchor = false;
  for (const auto& [d, m] : target) {
    const double ek = m * std::exp(static_cast<double>(d) * lattice_step);  // E[K_d]
    Site s;
    s.d = d;
    s.k_lo = static_cast<std::int64_t>(std::floor(ek));
    s.p_hi = ek - std::floor(ek);
    if (s.k_lo >= 1) have_anchor = true;
    sites.push_back(s);
  }
  if (!have_anchor)
    fail(errc::bad_config, "boundary_recipe: no site guarantees a child in every outcome");

  PointProcessLaw law;
  law.lattice_step = lattice_step;
  std::vector<std::size_t> choice(sites.size(), 0);
  for (;;) {
    Outcome o;
    o.prob = 1.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const std::int64_t count = sites[i].k_lo + static_cast<std::int64_t>(choice[i]);
      o.prob *= (choice[i] == 0) ? (1.0 - sites[i].p_hi) : sites[i].p_hi;
      for (std::int64_t c = 0; c < count; ++c) o.children.push_back(sites[i].d);
    }
    if (o.prob > 0.0) {
      if (o.children.empty())
        fail(errc::bad_config, "boundary_recipe: outcome without children");
      std::sort(o.children.begin(), o.children.end());
      law.outcomes.push_back(std::move(o));
    }
    std::size_t i = 0;
    while (i < sites.size()) {
      if (choice[i] == 0 && sites[i].p_hi > 0.0) {
        choice[i] = 1;
        break;
      }
      choice[i] = 0;
      ++i;
    }
    if (i == sites.size()) break;
  }
  return law;
}

namespace envs {

/// Fair +-1 target: E[K_+1] = e/2 via counts in {1,2}, E[K_-1] = 1/(2e) via
/// counts in {0,1}.
inline PointProcessLaw pm1_state() {
  return boundary_recipe(1.0, {{1, 0.5}, {-1, 0.5}});
}

/// Same step measure as pm1_state but with correlated child counts, so the
/// branching law differs while the associated walk is unchanged.
inline PointProcessLaw pm1_state_correlated() {
  const double e = std::exp(1.0);
  const double d = 1.0 / (2.0 * e);
  const double c = e / 2.0 - 1.0 / (2.0 * e) - 1.0;
  const double a = 1.0 - d - c;
  PointProcessLaw law;
  law.lattice_step = 1.0;
  law.outcomes.push_back({a, {1}});
  law.outcomes.push_back({c, {1, 1}});
  law.outcomes.push_back({d, {-1, 1, 1}});
  return law;
}

/// Target {+2: 1/3, -1: 2/3}; still skip-free downward.
inline PointProcessLaw up2_state() {
  return boundary_recipe(1.0, {{2, 1.0 / 3.0}, {-1, 2.0 / 3.0}});
}

/// Target {+1: 2/3, -2: 1/3}; skip-free upward, two-step down jumps.
inline PointProcessLaw down2_state() {
  return boundary_recipe(1.0, {{1, 2.0 / 3.0}, {-2, 1.0 / 3.0}});
}

inline EnvironmentLaw homogeneous_pm1() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  env.states.emplace_back(1.0, pm1_state());
  return env;
}

/// Two states sharing the fair +-1 step measure but with different offspring
/// laws.
inline EnvironmentLaw two_state_same_step() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  env.states.emplace_back(0.5, pm1_state());
  env.states.emplace_back(0.5, pm1_state_correlated());
  return env;
}

/// Two states with different step measures; both skip-free downward, so the
/// harmonic function is certified exactly.
inline EnvironmentLaw two_state_diff_step() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  env.states.emplace_back(0.5, pm1_state());
  env.states.emplace_back(0.5, up2_state());
  return env;
}

/// Two states, one with down jumps of size 2: the harmonic function is only
/// bracket-certified here, which exercises the general stopping rule.
inline EnvironmentLaw two_state_heavy_down() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  env.states.emplace_back(0.5, pm1_state());
  env.states.emplace_back(0.5, down2_state());
  return env;
}

/// Deterministic children at +1 and -1: fails the boundary check with tilted
/// mass e^-1 + e.
inline EnvironmentLaw nonboundary_pm1() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  PointProcessLaw law;
  law.lattice_step = 1.0;
  law.outcomes.push_back({1.0, {-1, 1}});
  env.states.emplace_back(1.0, law);
  return env;
}

inline EnvironmentLaw single_child_at_zero() {
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  PointProcessLaw law;
  law.lattice_step = 1.0;
  law.outcomes.push_back({1.0, {0}});
  env.states.emplace_back(1.0, law);
  return env;
}

/// Boundary environment whose single state mixes the count_polylog tail with
/// three compensating single-child atoms at -1, 0, +1 solved so that the
/// tilted mass is 1 and the tilted mean 0.
inline EnvironmentLaw tail_polylog(double gamma, double tail_weight = 0.05) {
  TailFamily tf;
  tf.gamma = gamma;
  tf.weight = tail_weight;
  detail::require_supported_tail(tf);
  const double T1 = detail::polylog_tail_prob(tf) / tf.weight;
  const double A1 = detail::polylog_tail_moment(tf, 1.0, 0) / tf.weight;
  const double B1 = detail::polylog_tail_moment(tf, 1.0, 1) / tf.weight;
  const double C = tf.weight;
  const double e = std::exp(1.0);
  // Unknowns q1 (child at -1), q2 (child at 0), q3 (child at +1):
  //   probabilities: T1 C + q1 + q2 + q3 = 1
  //   tilted mass:   A1 C + q1 e + q2 + q3/e = 1
  //   tilted mean:   B1 C - q1 e + q3/e = 0
  const double denom = (1.0 - 1.0 / e) * (1.0 - 1.0 / e);
  const double q3 = C * (A1 + B1 * (1.0 - 1.0 / e) - T1) / denom;
  const double q1 = q3 / (e * e) + B1 * C / e;
  const double q2 = 1.0 - T1 * C - q1 - q3;
  if (!(q1 > 0.0 && q2 > 0.0 && q3 > 0.0))
    fail(errc::bad_config, "tail_polylog: compensator atoms infeasible at this weight",
         {{"q1", q1}, {"q2", q2}, {"q3", q3}});
  PointProcessLaw law;
  law.lattice_step = 1.0;
  law.outcomes.push_back({q1, {-1}});
  law.outcomes.push_back({q2, {0}});
  law.outcomes.push_back({q3, {1}});
  law.tail = tf;
  EnvironmentLaw env;
  env.lattice_step = 1.0;
  env.states.emplace_back(1.0, law);
  return env;
}

}  // namespace envs

}  // namespace brwlab
