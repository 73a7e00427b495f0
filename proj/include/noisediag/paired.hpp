#pragma once

// Prompt-level paired comparison of two arms: seed averaging, percentile
// bootstrap CI of the mean paired difference, and a sign-flip permutation
// test of zero mean difference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "noisediag/error.hpp"
#include "noisediag/numeric.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/rng.hpp"
#include "noisediag/scores.hpp"

namespace noisediag {

struct PairedSample {
  std::string prompt_id;
  double baseline = 0.0;
  double treatment = 0.0;
  double delta = 0.0;  // treatment - baseline
};

/// Per-prompt seed means of `metric` for both arms, sorted by prompt_id.
/// Throws table_error listing prompts that appear in only one arm.
inline std::vector<PairedSample> seed_average(const ScoreTable& scores, const std::string& metric,
                                              const std::string& baseline_arm, const std::string& treatment_arm) {
  // prompt -> seed -> value; std::map keeps seeds in a fixed order for the sum
  std::map<std::string, std::map<std::string, double>> base, treat;
  for (const auto& row : scores.rows()) {
    if (row.metric_name != metric) continue;
    if (row.arm == baseline_arm) base[row.prompt_id][row.seed_id] = row.value;
    else if (row.arm == treatment_arm) treat[row.prompt_id][row.seed_id] = row.value;
  }
  if (base.empty()) throw table_error("no '" + metric + "' scores for baseline arm '" + baseline_arm + "'");
  if (treat.empty()) throw table_error("no '" + metric + "' scores for treatment arm '" + treatment_arm + "'");

  std::string missing;
  for (const auto& [p, _] : base)
    if (!treat.count(p)) missing += "\n  " + p + " (missing from " + treatment_arm + ")";
  for (const auto& [p, _] : treat)
    if (!base.count(p)) missing += "\n  " + p + " (missing from " + baseline_arm + ")";
  if (!missing.empty()) throw table_error("prompts present in only one arm:" + missing);

  auto seed_mean = [](const std::map<std::string, double>& seeds) {
    std::vector<double> v;
    for (const auto& [s, x] : seeds) v.push_back(x);
    return mean(v);
  };
  std::vector<PairedSample> out;
  for (const auto& [prompt, seeds] : base) {
    const double b = seed_mean(seeds);
    const double t = seed_mean(treat.at(prompt));
    out.push_back({prompt, b, t, t - b});
  }
  return out;
}

inline std::vector<double> deltas_of(std::span<const PairedSample> samples) {
  std::vector<double> d;
  d.reserve(samples.size());
  for (const auto& s : samples) d.push_back(s.delta);
  return d;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  std::size_t n_resamples = 10000;
  double level = 0.95;
  std::uint64_t rng_seed = 12345;
  std::size_t jobs = 1;
};

struct BootstrapResult {
  double mean_delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double resample_mean = 0.0;  // mean of the resample means
  std::size_t n_resamples = 0;
  double level = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Resamples are drawn in blocks of this many; block b always uses substream b.
inline constexpr std::size_t bootstrap_block = 256;

inline std::vector<double> bootstrap_means(std::span<const double> deltas, const BootstrapOptions& opt) {
  const std::size_t n = deltas.size();
  std::vector<double> means(opt.n_resamples);
  const std::size_t blocks = (opt.n_resamples + bootstrap_block - 1) / bootstrap_block;
  parallel_for(blocks, opt.jobs, [&](std::size_t b) {
    Rng rng = Rng::substream(opt.rng_seed, Stream::bootstrap, b);
    const std::size_t end = std::min(opt.n_resamples, (b + 1) * bootstrap_block);
    for (std::size_t r = b * bootstrap_block; r < end; ++r) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += deltas[rng.bounded(n)];
      means[r] = sum / static_cast<double>(n);
    }
  });
  return means;
}

/// Percentile bootstrap CI for the mean of `deltas`.
inline BootstrapResult bootstrap_ci(std::span<const double> deltas, const BootstrapOptions& opt = {}) {
  if (deltas.size() < 2)
    throw insufficient_data_error("bootstrap CI needs at least 2 paired differences, got " +
                                  std::to_string(deltas.size()));
  if (opt.n_resamples < 100) throw config_error("bootstrap needs at least 100 resamples");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw config_error("CI level must lie in (0, 1)");
  auto means = bootstrap_means(deltas, opt);
  BootstrapResult out;
  out.mean_delta = mean(deltas);
  out.resample_mean = mean(means);
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - opt.level) / 2.0;
  out.ci_low = quantile_sorted(means, tail);
  out.ci_high = quantile_sorted(means, 1.0 - tail);
  out.n_resamples = opt.n_resamples;
  out.level = opt.level;
  out.rng_seed = opt.rng_seed;
  return out;
}

// ---------------------------------------------------------------------------
// Sign-flip permutation test

enum class Sidedness { two_sided, greater, less };

inline std::string sidedness_name(Sidedness s) {
  switch (s) {
    case Sidedness::two_sided: return "two-sided";
    case Sidedness::greater: return "greater";
    case Sidedness::less: return "less";
  }
  return "?";
}

inline Sidedness parse_sidedness(const std::string& s) {
  if (s == "two-sided" || s == "two_sided") return Sidedness::two_sided;
  if (s == "greater") return Sidedness::greater;
  if (s == "less") return Sidedness::less;
  throw config_error("unknown sidedness '" + s + "' (expected two-sided, greater or less)");
}

struct SignFlipOptions {
  std::size_t n_permutations = 100000;
  std::uint64_t rng_seed = 12345;
  Sidedness sidedness = Sidedness::two_sided;
  std::size_t exact_cutoff = 20;  // enumerate all 2^N patterns when N <= cutoff
  std::size_t jobs = 1;
};

struct SignFlipResult {
  double p_value = 1.0;
  bool exact = false;
  std::size_t n_permutations = 0;  // patterns evaluated (2^N when exact)
  double observed_mean = 0.0;
  Sidedness sidedness = Sidedness::two_sided;
  std::uint64_t rng_seed = 0;
};

/// Two sums closer than this count as tied ("at least as extreme"). It absorbs
/// the rounding of summing the same terms in a different order.
inline double sign_flip_tie_tolerance(std::span<const double> deltas) {
  double abs_sum = 0.0;
  for (double d : deltas) abs_sum += std::abs(d);
  return 1e-10 * abs_sum;
}

namespace paired_detail {

inline std::vector<double> subset_sums(std::span<const double> part) {
  const std::size_t count = std::size_t{1} << part.size();
  std::vector<double> sums(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) s += (mask >> i & 1) ? -part[i] : part[i];
    sums[mask] = s;
  }
  std::sort(sums.begin(), sums.end());
  return sums;
}

inline std::size_t count_at_least(const std::vector<double>& sorted, double x) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), x));
}

inline std::size_t count_at_most(const std::vector<double>& sorted, double x) {
  return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}

// Exact count of sign patterns at least as extreme as the observed sum, by
// meet-in-the-middle over the two halves of the deltas.
inline std::uint64_t exact_extreme_count(std::span<const double> deltas, double observed_sum, double tol,
                                         Sidedness side) {
  const std::size_t half = deltas.size() / 2;
  const auto left = subset_sums(deltas.first(half));
  const auto right = subset_sums(deltas.subspan(half));
  std::uint64_t count = 0;
  if (side == Sidedness::two_sided) {
    const double a = std::abs(observed_sum) - tol;
    if (a <= 0.0) return static_cast<std::uint64_t>(left.size()) * right.size();
    for (double l : left) count += count_at_least(right, a - l) + count_at_most(right, -a - l);
  } else if (side == Sidedness::greater) {
    for (double l : left) count += count_at_least(right, observed_sum - tol - l);
  } else {
    for (double l : left) count += count_at_most(right, observed_sum + tol - l);
  }
  return count;
}

inline bool at_least_as_extreme(double sum, double observed_sum, double tol, Sidedness side) {
  switch (side) {
    case Sidedness::two_sided: return std::abs(sum) >= std::abs(observed_sum) - tol;
    case Sidedness::greater: return sum >= observed_sum - tol;
    case Sidedness::less: return sum <= observed_sum + tol;
  }
  return false;
}

} // namespace paired_detail

inline constexpr std::size_t sign_flip_block = 1024;

/// Sign-flip test of zero mean. Two-sided uses |mean| as the statistic. Exact
/// enumeration for N <= exact_cutoff; otherwise Monte Carlo with the add-one
/// estimate p = (1 + hits) / (n + 1).
inline SignFlipResult sign_flip_test(std::span<const double> deltas, const SignFlipOptions& opt = {}) {
  if (deltas.empty()) throw insufficient_data_error("sign-flip test needs at least one paired difference");
  const std::size_t n = deltas.size();
  double observed_sum = 0.0;
  for (double d : deltas) observed_sum += d;
  const double tol = sign_flip_tie_tolerance(deltas);

  SignFlipResult out;
  out.observed_mean = observed_sum / static_cast<double>(n);
  out.sidedness = opt.sidedness;
  out.rng_seed = opt.rng_seed;

  if (n <= opt.exact_cutoff && n < 63) {
    const std::uint64_t total = std::uint64_t{1} << n;
    const std::uint64_t hits = paired_detail::exact_extreme_count(deltas, observed_sum, tol, opt.sidedness);
    out.exact = true;
    out.n_permutations = static_cast<std::size_t>(total);
    out.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return out;
  }

  if (opt.n_permutations < 1) throw config_error("Monte-Carlo sign-flip test needs at least 1 permutation");
  const std::size_t blocks = (opt.n_permutations + sign_flip_block - 1) / sign_flip_block;
  std::vector<std::uint64_t> block_hits(blocks, 0);
  parallel_for(blocks, opt.jobs, [&](std::size_t b) {
    Rng rng = Rng::substream(opt.rng_seed, Stream::sign_flip, b);
    const std::size_t end = std::min(opt.n_permutations, (b + 1) * sign_flip_block);
    std::uint64_t hits = 0;
    for (std::size_t r = b * sign_flip_block; r < end; ++r) {
      double sum = 0.0;
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 64 == 0) bits = rng.next_u64();
        sum += (bits & 1) ? -deltas[i] : deltas[i];
        bits >>= 1;
      }
      hits += paired_detail::at_least_as_extreme(sum, observed_sum, tol, opt.sidedness) ? 1 : 0;
    }
    block_hits[b] = hits;
  });
  std::uint64_t hits = 0;
  for (auto h : block_hits) hits += h;
  out.exact = false;
  out.n_permutations = opt.n_permutations;
  out.p_value = static_cast<double>(1 + hits) / static_cast<double>(opt.n_permutations + 1);
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct PairedConfig {
  std::size_t n_bootstrap = 10000;
  std::size_t n_permutations = 100000;
  double ci_level = 0.95;
  std::uint64_t rng_seed = 12345;
  Sidedness sidedness = Sidedness::two_sided;
  std::size_t exact_cutoff = 20;
  std::size_t jobs = 1;
};

struct PairedTestResult {
  std::string metric;
  std::string baseline_arm;
  std::string treatment_arm;
  std::size_t n_prompts = 0;
  double baseline_mean = 0.0;   // mean over prompts of seed-averaged scores
  double treatment_mean = 0.0;
  double mean_delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_level = 0.95;
  std::size_t n_bootstrap = 0;
  double p_value = 1.0;
  std::size_t n_permutations = 0;
  bool permutation_exact = false;
  Sidedness sidedness = Sidedness::two_sided;
  std::uint64_t rng_seed = 0;
};

struct PairedReport {
  PairedTestResult result;
  std::vector<PairedSample> samples;
};

/// Tests the statistics already reduced to per-prompt pairs.
inline PairedReport paired_test(std::vector<PairedSample> samples, const std::string& metric,
                                const std::string& baseline_arm, const std::string& treatment_arm,
                                const PairedConfig& config = {}) {
  const auto deltas = deltas_of(samples);
  const auto boot = bootstrap_ci(deltas, {config.n_bootstrap, config.ci_level, config.rng_seed, config.jobs});
  const auto flip = sign_flip_test(
      deltas, {config.n_permutations, config.rng_seed, config.sidedness, config.exact_cutoff, config.jobs});

  std::vector<double> b, t;
  for (const auto& s : samples) {
    b.push_back(s.baseline);
    t.push_back(s.treatment);
  }
  PairedTestResult r;
  r.metric = metric;
  r.baseline_arm = baseline_arm;
  r.treatment_arm = treatment_arm;
  r.n_prompts = samples.size();
  r.baseline_mean = mean(b);
  r.treatment_mean = mean(t);
  r.mean_delta = boot.mean_delta;
  r.ci_low = boot.ci_low;
  r.ci_high = boot.ci_high;
  r.ci_level = config.ci_level;
  r.n_bootstrap = boot.n_resamples;
  r.p_value = flip.p_value;
  r.n_permutations = flip.n_permutations;
  r.permutation_exact = flip.exact;
  r.sidedness = config.sidedness;
  r.rng_seed = config.rng_seed;
  return {r, std::move(samples)};
}

inline PairedReport paired_report(const ScoreTable& scores, const std::string& metric,
                                  const std::string& baseline_arm, const std::string& treatment_arm,
                                  const PairedConfig& config = {}) {
  return paired_test(seed_average(scores, metric, baseline_arm, treatment_arm), metric, baseline_arm, treatment_arm,
                     config);
}

} // namespace noisediag
