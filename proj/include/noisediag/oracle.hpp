#pragma once

// Brute-force reference implementations used to cross-check the production
// metrics. Nothing here calls into the FFT, eigen-solver or fast-counting
// code it is meant to check; every routine is a direct transcription of the
// metric definition with plain loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "noisediag/error.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag::oracle {

inline constexpr std::size_t max_dft_size = 64;

/// |DFT|^2 of an H x W slice by direct summation, bins (kh, kw) with
/// kh in [0, H) and kw in [0, W/2], row-major.
inline std::vector<double> oracle_dft2(std::span<const double> slice, std::size_t height, std::size_t width) {
  if (height > max_dft_size || width > max_dft_size) throw config_error("oracle_dft2 is limited to 64 x 64");
  if (slice.size() != height * width) throw shape_error("oracle_dft2: slice size mismatch");
  const std::size_t half = width / 2 + 1;
  std::vector<double> power(height * half);
  for (std::size_t kh = 0; kh < height; ++kh) {
    for (std::size_t kw = 0; kw < half; ++kw) {
      long double re = 0.0L, im = 0.0L;
      for (std::size_t h = 0; h < height; ++h) {
        for (std::size_t w = 0; w < width; ++w) {
          // reduce the phase exactly in integers before converting to an angle
          const long double turns = static_cast<long double>((kh * h) % height) / height +
                                    static_cast<long double>((kw * w) % width) / width;
          const long double angle = -2.0L * std::numbers::pi_v<long double> * turns;
          re += slice[h * width + w] * std::cos(angle);
          im += slice[h * width + w] * std::sin(angle);
        }
      }
      power[kh * half + kw] = static_cast<double>(re * re + im * im);
    }
  }
  return power;
}

/// |DFT|^2 of a real series by direct summation, bins k in [0, T/2].
inline std::vector<double> oracle_dft1(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n > max_dft_size) throw config_error("oracle_dft1 is limited to length 64");
  std::vector<double> power(n / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      const long double angle =
          -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * t) % n) / n;
      re += series[t] * std::cos(angle);
      im += series[t] * std::sin(angle);
    }
    power[k] = static_cast<double>(re * re + im * im);
  }
  return power;
}

/// Spatial power averaged over (c, t), from oracle_dft2.
inline std::vector<double> oracle_spatial_power(const LatentTensor& x) {
  const Shape& s = x.shape();
  const std::size_t half = s.width / 2 + 1;
  std::vector<double> avg(s.height * half, 0.0);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t t = 0; t < s.frames; ++t) {
      const auto p = oracle_dft2(x.slice(c, t), s.height, s.width);
      for (std::size_t b = 0; b < avg.size(); ++b) avg[b] += p[b];
    }
  for (double& v : avg) v /= static_cast<double>(s.channels * s.frames);
  return avg;
}

/// Temporal power averaged over (c, h, w), from oracle_dft1.
inline std::vector<double> oracle_temporal_power(const LatentTensor& x) {
  const Shape& s = x.shape();
  std::vector<double> avg(s.frames / 2 + 1, 0.0);
  std::vector<double> series(s.frames);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t h = 0; h < s.height; ++h)
      for (std::size_t w = 0; w < s.width; ++w) {
        for (std::size_t t = 0; t < s.frames; ++t) series[t] = x(c, t, h, w);
        const auto p = oracle_dft1(series);
        for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += p[k];
      }
  for (double& v : avg) v /= static_cast<double>(s.channels * s.height * s.width);
  return avg;
}

inline double oracle_sp_hf(const LatentTensor& x, double rho) {
  const Shape& s = x.shape();
  const auto power = oracle_spatial_power(x);
  const std::size_t half = s.width / 2 + 1;
  double high = 0.0, total = 0.0;
  for (std::size_t kh = 0; kh < s.height; ++kh)
    for (std::size_t kw = 0; kw < half; ++kw) {
      const double fold = static_cast<double>(kh <= s.height - kh ? kh : s.height - kh);
      const double r = std::hypot(fold / (s.height / 2.0), kw / (s.width / 2.0));
      total += power[kh * half + kw];
      if (r >= rho) high += power[kh * half + kw];
    }
  if (total == 0.0) throw degenerate_input_error("oracle_sp_hf: zero power");
  return high / total;
}

inline double oracle_t_hf(const LatentTensor& x, double rho_t) {
  const auto power = oracle_temporal_power(x);
  const std::size_t last = power.size() - 1;  // K - 1
  double high = 0.0, total = 0.0;
  for (std::size_t k = 1; k < power.size(); ++k) {
    total += power[k];
    if (static_cast<double>(k) / static_cast<double>(last) >= rho_t) high += power[k];
  }
  if (total == 0.0) throw degenerate_input_error("oracle_t_hf: no non-DC power");
  return high / total;
}

inline double oracle_t_diff_rel(const LatentTensor& x) {
  const Shape& s = x.shape();
  double diff_sq = 0.0, sq = 0.0;
  std::size_t n_diff = 0;
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t h = 0; h < s.height; ++h)
        for (std::size_t w = 0; w < s.width; ++w) {
          sq += x(c, t, h, w) * x(c, t, h, w);
          if (t + 1 < s.frames) {
            const double d = x(c, t + 1, h, w) - x(c, t, h, w);
            diff_sq += d * d;
            ++n_diff;
          }
        }
  return std::sqrt(diff_sq / n_diff) / std::sqrt(sq / x.size());
}

// ---------------------------------------------------------------------------
// Displacement geometry

using Rows = std::vector<std::vector<double>>;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a[i][j] * a[i][j];
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

/// Eigenvalues (descending) of the Gram matrix rows * rows^T.
inline std::vector<double> oracle_gram_eig(const Rows& rows) {
  if (rows.size() > 16) throw config_error("oracle_gram_eig is limited to 16 rows");
  const std::size_t s = rows.size();
  std::vector<std::vector<double>> gram(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      for (std::size_t k = 0; k < rows[i].size(); ++k) gram[i][j] += rows[i][k] * rows[j][k];
  return jacobi_eigenvalues(std::move(gram));
}

inline double oracle_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double oracle_dir_stab(const Rows& rows) {
  const std::size_t s = rows.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < rows[i].size(); ++k) d += rows[i][k] * rows[j][k];
      sum += d / (oracle_norm(rows[i]) * oracle_norm(rows[j]));
    }
  return 2.0 * sum / (s * (s - 1.0));
}

inline double oracle_cv_dnorm(const Rows& rows) {
  double m = 0.0;
  for (const auto& r : rows) m += oracle_norm(r);
  m /= rows.size();
  double var = 0.0;
  for (const auto& r : rows) var += (oracle_norm(r) - m) * (oracle_norm(r) - m);
  return std::sqrt(var / rows.size()) / m;
}

/// Top eigenvalue share after centering; eigenvalues below 1e-12 of the top
/// are left out of the denominator.
inline double oracle_evr1(const Rows& rows) {
  const std::size_t s = rows.size(), dim = rows.front().size();
  Rows centered = rows;
  for (std::size_t k = 0; k < dim; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < s; ++i) m += rows[i][k];
    m /= s;
    for (std::size_t i = 0; i < s; ++i) centered[i][k] -= m;
  }
  const auto eig = oracle_gram_eig(centered);
  double total = 0.0;
  for (double e : eig)
    if (e > 1e-12 * eig.front()) total += e;
  return eig.front() / total;
}

// ---------------------------------------------------------------------------
// Sign-flip permutation

/// Exact sign-flip p-value by visiting all 2^N patterns and recomputing each
/// statistic from scratch. `one_sided_greater` switches from |mean| to mean.
/// Ties within 1e-10 * sum|d| count as at least as extreme.
inline double oracle_exact_signflip(std::span<const double> deltas, bool one_sided_greater = false) {
  const std::size_t n = deltas.size();
  if (n > 20) throw config_error("oracle_exact_signflip is limited to N <= 20");
  double observed = 0.0, abs_sum = 0.0;
  for (double d : deltas) {
    observed += d;
    abs_sum += std::abs(d);
  }
  observed /= static_cast<double>(n);
  const double tol = 1e-10 * abs_sum / static_cast<double>(n);
  std::uint64_t hits = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += (mask >> i & 1) ? -deltas[i] : deltas[i];
    m /= static_cast<double>(n);
    const bool extreme = one_sided_greater ? m >= observed - tol : std::abs(m) >= std::abs(observed) - tol;
    if (extreme) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace noisediag::oracle
