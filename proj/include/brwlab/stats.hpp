#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "brwlab/errors.hpp"
#include "brwlab/lattice.hpp"
#include "brwlab/rng.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// Incomplete gamma (for chi-square tail probabilities).
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_p_series(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Upper regularized incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) fail(errc::bad_config, "gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_contfrac(a, x);
}

/// P(Chi2_df >= stat).
inline double chi_square_pvalue(double stat, double df) {
  if (df <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * stat);
}

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  double n_effective = 0.0;
  std::size_t cells = 0;
  std::string correction;
};

/// Weighted histogram over lattice cells.
class WeightedHistogram {
 public:
  void add(std::int64_t cell, double weight = 1.0) {
    auto& e = cells_[cell];
    e.first += weight;
    e.second += weight * weight;
    ++n_;
  }
  const std::map<std::int64_t, std::pair<double, double>>& cells() const { return cells_; }
  double total_weight() const {
    double s = 0.0;
    for (const auto& [c, w] : cells_) s += w.first;
    return s;
  }
  double sum_weight_sq() const {
    double s = 0.0;
    for (const auto& [c, w] : cells_) s += w.second;
    return s;
  }
  std::size_t samples() const { return n_; }

 private:
  std::map<std::int64_t, std::pair<double, double>> cells_;
  std::size_t n_ = 0;
};

/// One-sample chi-square of a (possibly weighted) histogram against an exact
/// law given as (cell -> probability). Adjacent cells are pooled until every
/// expected count reaches 5. Effective sample size follows Kish when weights
/// vary.
inline TestReport chi_square_vs_exact(const WeightedHistogram& hist,
                                      const std::map<std::int64_t, double>& exact,
                                      const std::string& name = "chi_square_vs_exact") {
  if (exact.empty()) fail(errc::degenerate_binning, "chi_square_vs_exact: empty exact law");
  double wsum = hist.total_weight();
  double wsq = hist.sum_weight_sq();
  if (!(wsum > 0.0)) fail(errc::too_few_samples, "chi_square_vs_exact: empty histogram");
  const double n_eff = wsum * wsum / std::max(wsq, 1e-300);

  // Union of cells, ordered; histogram weight rescaled to n_eff.
  std::map<std::int64_t, std::pair<double, double>> merged;  // cell -> (observed, expected)
  for (const auto& [c, p] : exact) merged[c] = {0.0, p * n_eff};
  for (const auto& [c, w] : hist.cells()) merged[c].first += w.first * (n_eff / wsum);

  // Pool adjacent cells until expected >= 5.
  std::vector<std::pair<double, double>> pooled;
  double obs_acc = 0.0, exp_acc = 0.0;
  for (const auto& [c, oe] : merged) {
    obs_acc += oe.first;
    exp_acc += oe.second;
    if (exp_acc >= 5.0) {
      pooled.emplace_back(obs_acc, exp_acc);
      obs_acc = exp_acc = 0.0;
    }
  }
  if (obs_acc > 0.0 || exp_acc > 0.0) {
    if (!pooled.empty()) {
      pooled.back().first += obs_acc;
      pooled.back().second += exp_acc;
    } else {
      pooled.emplace_back(obs_acc, exp_acc);
    }
  }
  if (pooled.size() < 2) fail(errc::degenerate_binning, "chi_square_vs_exact: fewer than 2 cells after pooling");

  double stat = 0.0;
  for (const auto& [o, e] : pooled) {
    if (e <= 0.0) {
      if (o > 0.0) stat = std::numeric_limits<double>::infinity();
      continue;
    }
    stat += (o - e) * (o - e) / e;
  }
  TestReport rep;
  rep.name = name;
  rep.statistic = stat;
  rep.dof = static_cast<double>(pooled.size() - 1);
  rep.p_value = std::isinf(stat) ? 0.0 : chi_square_pvalue(stat, rep.dof);
  rep.n_effective = n_eff;
  rep.cells = pooled.size();
  return rep;
}

/// Two-sample chi-square with pooled expected counts.
inline TestReport chi_square_two_sample(const WeightedHistogram& a, const WeightedHistogram& b,
                                        const std::string& name = "chi_square_two_sample") {
  double na = a.total_weight(), nb = b.total_weight();
  if (!(na > 0.0) || !(nb > 0.0)) fail(errc::too_few_samples, "chi_square_two_sample: empty histogram");
  std::map<std::int64_t, std::pair<double, double>> merged;
  for (const auto& [c, w] : a.cells()) merged[c].first += w.first;
  for (const auto& [c, w] : b.cells()) merged[c].second += w.first;

  std::vector<std::pair<double, double>> pooled;
  double oa = 0.0, ob = 0.0;
  for (const auto& [c, w] : merged) {
    oa += w.first;
    ob += w.second;
    double expected_min = std::min((oa + ob) * na / (na + nb), (oa + ob) * nb / (na + nb));
    if (expected_min >= 5.0) {
      pooled.emplace_back(oa, ob);
      oa = ob = 0.0;
    }
  }
  if (oa > 0.0 || ob > 0.0) {
    if (!pooled.empty()) {
      pooled.back().first += oa;
      pooled.back().second += ob;
    } else {
      pooled.emplace_back(oa, ob);
    }
  }
  if (pooled.size() < 2) fail(errc::degenerate_binning, "chi_square_two_sample: fewer than 2 cells after pooling");
  double stat = 0.0;
  for (const auto& [ca, cb] : pooled) {
    double tot = ca + cb;
    double ea = tot * na / (na + nb);
    double eb = tot * nb / (na + nb);
    stat += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
  }
  TestReport rep;
  rep.name = name;
  rep.statistic = stat;
  rep.dof = static_cast<double>(pooled.size() - 1);
  rep.p_value = chi_square_pvalue(stat, rep.dof);
  rep.n_effective = na * nb / (na + nb);
  rep.cells = pooled.size();
  return rep;
}

// ---------------------------------------------------------------------------
// Permutation independence test.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> ranks_average_ties(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;  // constant feature
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Permutation test of independence between two feature groups. The statistic
/// is the maximum absolute rank correlation over feature pairs; the null
/// distribution comes from permuting the pairing of group b against group a.
inline TestReport permutation_independence(const std::vector<std::vector<double>>& features_a,
                                           const std::vector<std::vector<double>>& features_b,
                                           std::size_t permutations, RngStream rng,
                                           const std::string& name = "permutation_independence") {
  if (features_a.empty() || features_b.empty())
    fail(errc::bad_config, "permutation_independence: empty feature group");
  const std::size_t n = features_a.front().size();
  for (const auto& f : features_a)
    if (f.size() != n) fail(errc::bad_config, "permutation_independence: ragged features");
  for (const auto& f : features_b)
    if (f.size() != n) fail(errc::bad_config, "permutation_independence: ragged features");
  if (n < 100) fail(errc::too_few_samples, "permutation_independence: need >= 100 pairs");

  std::vector<std::vector<double>> ra, rb;
  for (const auto& f : features_a) ra.push_back(detail::ranks_average_ties(f));
  for (const auto& f : features_b) rb.push_back(detail::ranks_average_ties(f));

  auto max_abs_corr = [&](const std::vector<std::size_t>& perm) {
    double best = 0.0;
    std::vector<double> permuted(n);
    for (const auto& fb : rb) {
      for (std::size_t i = 0; i < n; ++i) permuted[i] = fb[perm[i]];
      for (const auto& fa : ra) best = std::max(best, std::fabs(detail::pearson(fa, permuted)));
    }
    return best;
  };

  std::vector<std::size_t> ident(n);
  std::iota(ident.begin(), ident.end(), 0);
  const double observed = max_abs_corr(ident);

  std::vector<std::size_t> perm = ident;
  std::size_t ge = 0;
  for (std::size_t b = 0; b < permutations; ++b) {
    for (std::size_t i = n - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(perm[i], perm[j]);
    }
    if (max_abs_corr(perm) >= observed - 1e-15) ++ge;
  }
  TestReport rep;
  rep.name = name;
  rep.statistic = observed;
  rep.dof = static_cast<double>(n);
  rep.p_value = (1.0 + static_cast<double>(ge)) / (1.0 + static_cast<double>(permutations));
  rep.n_effective = static_cast<double>(n);
  rep.cells = features_a.size() * features_b.size();
  return rep;
}

/// Wilson score interval for a binomial proportion.
struct ProportionCI {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline ProportionCI wilson_ci(double successes, double n, double z = 2.5758293035489004) {
  ProportionCI ci;
  if (n <= 0.0) return ci;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  ci.estimate = p;
  ci.lo = std::max(0.0, center - half);
  ci.hi = std::min(1.0, center + half);
  return ci;
}

struct MeanCI {
  double mean = 0.0;
  double stderr_ = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

inline MeanCI mean_ci(std::span<const double> xs, double z = 3.0) {
  MeanCI ci;
  ci.n = xs.size();
  if (xs.empty()) return ci;
  KahanSum s;
  for (double x : xs) s.add(x);
  ci.mean = s.value() / static_cast<double>(xs.size());
  KahanSum v;
  for (double x : xs) v.add((x - ci.mean) * (x - ci.mean));
  const double var = xs.size() > 1 ? v.value() / static_cast<double>(xs.size() - 1) : 0.0;
  ci.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  ci.lo = ci.mean - z * ci.stderr_;
  ci.hi = ci.mean + z * ci.stderr_;
  return ci;
}

inline double median_inplace(std::vector<double>& xs) {
  if (xs.empty()) return std::nan("");
  std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  double hi = xs[mid];
  if (xs.size() % 2 == 1) return hi;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid) - 1, xs.end());
  return 0.5 * (hi + xs[mid - 1]);
}

}  // namespace brwlab
