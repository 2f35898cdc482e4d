#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "brwlab/errors.hpp"

namespace brwlab {

/// Counter-based random stream. Output i of stream s under master seed m is
/// mix(key(m, s) + GOLDEN * i) where mix is the splitmix64 finalizer, so any
/// (seed, stream, counter) triple can be evaluated without shared state and
/// trial-indexed substreams need no coordination.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : seed_(master_seed), stream_(stream_index), counter_(0) {
    key_ = mix(mix(master_seed + kGolden) ^ mix(stream_index * 0xA24BAED4963EE407ULL + 0x9FB21C651E98DF25ULL));
  }

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_index() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  RngStream substream(std::uint64_t index) const {
    return RngStream(key_, index);
  }

  std::uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  /// Uniform double in [0,1) with 53 random bits.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return u01() < p; }

  /// Index into a probability vector (must sum to ~1); linear CDF scan.
  std::size_t discrete(std::span<const double> probs) {
    double u = u01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

  /// Exact binomial draw. Inversion for small mean, transformed rejection
  /// (Hormann's BTRS constants) for np >= 10.
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (p > 0.5) return n - binomial(n, 1.0 - p);
    const double np = static_cast<double>(n) * p;
    if (np < 10.0) return binomial_inversion(n, p);
    return binomial_btrs(n, p);
  }

  /// Exact multinomial via sequential conditional binomials.
  std::vector<std::uint64_t> multinomial(std::uint64_t n, std::span<const double> probs) {
    std::vector<std::uint64_t> out(probs.size(), 0);
    double remaining_p = 1.0;
    std::uint64_t remaining_n = n;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      if (remaining_n == 0 || remaining_p <= 0.0) break;
      double cond = probs[i] / remaining_p;
      if (cond > 1.0) cond = 1.0;
      const std::uint64_t draw = binomial(remaining_n, cond);
      out[i] = draw;
      remaining_n -= draw;
      remaining_p -= probs[i];
    }
    if (!probs.empty()) out.back() += remaining_n;
    return out;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t binomial_inversion(std::uint64_t n, double p) {
    const double q = 1.0 - p;
    const double r = p / q;
    double f = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cdf = f;
    const double u = u01();
    std::uint64_t k = 0;
    while (u > cdf && k < n) {
      f *= r * static_cast<double>(n - k) / static_cast<double>(k + 1);
      ++k;
      cdf += f;
      if (f <= 0.0) break;
    }
    return k;
  }

  static double log_pmf_binomial(double n, double k, double p) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
           k * std::log(p) + (n - k) * std::log1p(-p);
  }

  std::uint64_t binomial_btrs(std::uint64_t n_u, double p) {
    const double n = static_cast<double>(n_u);
    const double stddev = std::sqrt(n * p * (1.0 - p));
    const double b = 1.15 + 2.53 * stddev;
    const double a = -0.0873 + 0.0248 * b + 0.01 * p;
    const double c = n * p + 0.5;
    const double v_r = 0.92 - 4.2 / b;
    const double alpha = (2.83 + 5.1 / b) * stddev;
    const double m = std::floor((n + 1.0) * p);
    const double log_pmf_m = log_pmf_binomial(n, m, p);
    for (;;) {
      const double u = u01() - 0.5;
      const double v = u01();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + c);
      if (kf < 0.0 || kf > n) continue;
      if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
      const double lhs = std::log(v * alpha / (a / (us * us) + b));
      if (lhs <= log_pmf_binomial(n, kf, p) - log_pmf_m) return static_cast<std::uint64_t>(kf);
    }
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace brwlab
