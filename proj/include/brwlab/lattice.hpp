#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "brwlab/errors.hpp"

namespace brwlab {

/// Compensated (Kahan) accumulator; keeps rounding below 1e-10 over the
/// horizon lengths the DP engines run at.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline bool lattice_steps_match(double a, double b) {
  return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

/// One-step displacement measure of the associated walk on the lattice.
/// Atoms are (index, mass) with positions index * lattice_step.
struct StepMeasure {
  double lattice_step = 1.0;
  std::vector<std::pair<std::int64_t, double>> atoms;  // sorted by index

  double total_mass() const {
    KahanSum s;
    for (const auto& [d, m] : atoms) s.add(m);
    return s.value();
  }
  double mean() const {
    KahanSum s;
    for (const auto& [d, m] : atoms) s.add(static_cast<double>(d) * lattice_step * m);
    return s.value();
  }
  std::int64_t min_jump() const {
    return atoms.empty() ? 0 : atoms.front().first;
  }
  std::int64_t max_jump() const {
    return atoms.empty() ? 0 : atoms.back().first;
  }
  void sort_atoms() {
    std::sort(atoms.begin(), atoms.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
};

/// Exact sub-probability mass function on the lattice; dense storage over a
/// contiguous index window [min_index, min_index + size).
class LatticeDistribution {
 public:
  LatticeDistribution() = default;
  LatticeDistribution(double lattice_step, std::int64_t min_index, std::vector<double> masses)
      : step_(lattice_step), min_index_(min_index), masses_(std::move(masses)) {
    trim();
  }

  static LatticeDistribution point_mass(double lattice_step, std::int64_t index, double mass = 1.0) {
    return LatticeDistribution(lattice_step, index, {mass});
  }

  double lattice_step() const { return step_; }
  std::int64_t min_index() const { return min_index_; }
  std::int64_t max_index() const { return min_index_ + static_cast<std::int64_t>(masses_.size()) - 1; }
  bool empty() const { return masses_.empty(); }
  std::size_t support_size() const { return masses_.size(); }

  double mass_at(std::int64_t index) const {
    if (index < min_index_ || index > max_index()) return 0.0;
    return masses_[static_cast<std::size_t>(index - min_index_)];
  }

  const std::vector<double>& raw() const { return masses_; }

  double total_mass() const {
    KahanSum s;
    for (double m : masses_) s.add(m);
    return s.value();
  }

  double mean() const {
    KahanSum s;
    for (std::size_t i = 0; i < masses_.size(); ++i)
      s.add((static_cast<double>(min_index_) + static_cast<double>(i)) * step_ * masses_[i]);
    return s.value();
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t i = 0; i < masses_.size(); ++i)
      if (masses_[i] != 0.0) fn(min_index_ + static_cast<std::int64_t>(i), masses_[i]);
  }

  /// Total variation distance; requires matching lattices.
  double tv_distance(const LatticeDistribution& other) const {
    if (!lattice_steps_match(step_, other.step_))
      fail(errc::lattice_mismatch, "tv_distance: lattice steps differ");
    std::int64_t lo = std::min(min_index_, other.min_index_);
    std::int64_t hi = std::max(max_index(), other.max_index());
    KahanSum s;
    for (std::int64_t i = lo; i <= hi; ++i) s.add(std::fabs(mass_at(i) - other.mass_at(i)));
    return 0.5 * s.value();
  }

 private:
  void trim() {
    std::size_t lo = 0;
    while (lo < masses_.size() && masses_[lo] == 0.0) ++lo;
    std::size_t hi = masses_.size();
    while (hi > lo && masses_[hi - 1] == 0.0) --hi;
    if (lo > 0 || hi < masses_.size()) {
      masses_ = std::vector<double>(masses_.begin() + static_cast<std::ptrdiff_t>(lo),
                                    masses_.begin() + static_cast<std::ptrdiff_t>(hi));
      min_index_ += static_cast<std::int64_t>(lo);
    }
  }

  double step_ = 1.0;
  std::int64_t min_index_ = 0;
  std::vector<double> masses_;
};

/// Exact discrete convolution: law of S_{n+1} from the law of S_n.
inline LatticeDistribution propagate(const LatticeDistribution& dist, const StepMeasure& step) {
  if (!lattice_steps_match(dist.lattice_step(), step.lattice_step))
    fail(errc::lattice_mismatch, "propagate: lattice steps differ");
  if (dist.empty() || step.atoms.empty()) return LatticeDistribution(dist.lattice_step(), 0, {});
  const std::int64_t lo = dist.min_index() + step.min_jump();
  const std::int64_t hi = dist.max_index() + step.max_jump();
  std::vector<double> out(static_cast<std::size_t>(hi - lo + 1), 0.0);
  dist.for_each([&](std::int64_t i, double m) {
    for (const auto& [d, w] : step.atoms) out[static_cast<std::size_t>(i + d - lo)] += m * w;
  });
  return LatticeDistribution(dist.lattice_step(), lo, std::move(out));
}

struct KilledStep {
  LatticeDistribution survivor;
  double killed_overshoot_expectation = 0.0;  // sum of -(y + x) * mass over killed sites
  double killed_mass = 0.0;
};

/// One convolution step followed by removal of the mass that crossed below
/// -y. Overshoot bookkeeping feeds the harmonic-function error control.
inline KilledStep killed_propagate(const LatticeDistribution& dist, const StepMeasure& step,
                                   std::int64_t barrier_y) {
  if (!lattice_steps_match(dist.lattice_step(), step.lattice_step))
    fail(errc::lattice_mismatch, "killed_propagate: lattice steps differ");
  KilledStep r;
  if (dist.empty() || step.atoms.empty()) {
    r.survivor = LatticeDistribution(dist.lattice_step(), 0, {});
    return r;
  }
  const std::int64_t lo = dist.min_index() + step.min_jump();
  const std::int64_t hi = dist.max_index() + step.max_jump();
  std::vector<double> out(static_cast<std::size_t>(hi - lo + 1), 0.0);
  dist.for_each([&](std::int64_t i, double m) {
    for (const auto& [d, w] : step.atoms) out[static_cast<std::size_t>(i + d - lo)] += m * w;
  });
  KahanSum killed, overshoot;
  const double delta = dist.lattice_step();
  const std::int64_t cut = -barrier_y;  // kill indices strictly below cut
  for (std::int64_t i = lo; i < cut && i <= hi; ++i) {
    double& m = out[static_cast<std::size_t>(i - lo)];
    if (m != 0.0) {
      killed.add(m);
      overshoot.add(-(static_cast<double>(barrier_y + i)) * delta * m);
      m = 0.0;
    }
  }
  r.survivor = LatticeDistribution(dist.lattice_step(), lo, std::move(out));
  r.killed_overshoot_expectation = overshoot.value();
  r.killed_mass = killed.value();
  return r;
}

}  // namespace brwlab
