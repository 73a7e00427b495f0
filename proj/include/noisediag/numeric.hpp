#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "noisediag/error.hpp"

namespace noisediag {

namespace detail {

inline constexpr std::size_t pairwise_block = 128;

template <class Term>
double pairwise_reduce_range(std::size_t begin, std::size_t end, const Term& term) {
  const std::size_t n = end - begin;
  if (n <= pairwise_block) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = begin + n / 2;
  return pairwise_reduce_range(begin, mid, term) + pairwise_reduce_range(mid, end, term);
}

} // namespace detail

/// Sum of term(0) ... term(n-1) by pairwise (cascade) summation in index
/// order. The result depends only on n and the terms, never on threading.
template <class Term>
double pairwise_reduce(std::size_t n, const Term& term) {
  return n == 0 ? 0.0 : detail::pairwise_reduce_range(0, n, term);
}

inline double pairwise_sum(std::span<const double> values) {
  return pairwise_reduce(values.size(), [&](std::size_t i) { return values[i]; });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return pairwise_reduce(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double norm2(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

inline double mean(std::span<const double> values) {
  if (values.empty()) throw insufficient_data_error("mean of an empty sequence");
  return pairwise_sum(values) / static_cast<double>(values.size());
}

/// Population standard deviation (divisor n), two-pass.
inline double population_stddev(std::span<const double> values) {
  const double m = mean(values);
  const double ss = pairwise_reduce(values.size(), [&](std::size_t i) {
    const double dv = values[i] - m;
    return dv * dv;
  });
  return std::sqrt(ss / static_cast<double>(values.size()));
}

/// Quantile with linear interpolation between order statistics: position
/// q*(n-1) in the sorted sample (numpy's default "linear" method).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw insufficient_data_error("quantile of an empty sequence");
  if (!(q >= 0.0 && q <= 1.0)) throw config_error("quantile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> values, double q) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, q);
}

inline double median(std::span<const double> values) { return quantile(values, 0.5); }

/// Mean, 10th and 90th percentile of a sample.
struct Distribution {
  double mean = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

inline Distribution summarize(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {mean(values), quantile_sorted(sorted, 0.10), quantile_sorted(sorted, 0.90)};
}

} // namespace noisediag
