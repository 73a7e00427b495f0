#pragma once

// Spatial / temporal high-frequency power ratios and temporal-difference
// statistics of a (C, T, H, W) tensor.
//
// Both ratios are taken over the raw half spectrum returned by a real FFT:
// each retained bin counts once, with no doubling of interior bins that have
// a conjugate partner.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "noisediag/dataset.hpp"
#include "noisediag/error.hpp"
#include "noisediag/fft.hpp"
#include "noisediag/numeric.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag {

inline constexpr double default_spatial_threshold = 0.25;
inline constexpr double default_temporal_threshold = 0.25;

/// Normalized radial frequency of rFFT2 bin (fh, fw) for an H x W slice.
/// Height indices fold around H/2; width indices are already one-sided.
inline double radial_frequency(std::size_t fh, std::size_t fw, std::size_t height, std::size_t width) {
  const double folded = static_cast<double>(std::min(fh, height - fh));
  const double a = folded / (static_cast<double>(height) / 2.0);
  const double b = static_cast<double>(fw) / (static_cast<double>(width) / 2.0);
  return std::sqrt(a * a + b * b);
}

/// Normalized temporal frequency k/(K-1) of a length-T series, K = floor(T/2)+1.
inline double temporal_frequency(std::size_t k, std::size_t frames) {
  return static_cast<double>(k) / static_cast<double>(frames / 2);
}

/// Spatial power |rFFT2|^2 averaged over every (c, t) slice.
struct SpatialSpectrum {
  std::size_t height = 0;
  std::size_t half_width = 0;  // W/2 + 1 retained columns
  std::size_t width = 0;
  std::vector<double> power;   // height x half_width

  double at(std::size_t fh, std::size_t fw) const { return power[fh * half_width + fw]; }
};

/// Temporal power |rFFT|^2 along T, averaged over every (c, h, w).
struct TemporalSpectrum {
  std::size_t frames = 0;
  std::vector<double> power;   // K = T/2 + 1 bins
};

namespace spectral_detail {

// Sum over the full two-sided spectrum reconstructed from half-spectrum
// power: interior columns stand for two bins, DC and (even) Nyquist for one.
inline double hermitian_total(std::span<const double> half_power, std::size_t rows, std::size_t n,
                              std::size_t half, std::size_t stride_col) {
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < half; ++k) {
      const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
      total += (single ? 1.0 : 2.0) * half_power[r * stride_col + k];
    }
  }
  return total;
}

inline void check_parseval(double spectral_total, double signal_energy, std::size_t n, const char* what) {
  const double expected = static_cast<double>(n) * signal_energy;
  const double scale = std::max(std::abs(expected), 1e-300);
  if (std::abs(spectral_total - expected) > 1e-9 * scale)
    throw internal_error(std::string("Parseval self-test failed for ") + what);
}

} // namespace spectral_detail

inline SpatialSpectrum spatial_power_spectrum(const LatentTensor& x) {
  const Shape& s = x.shape();
  const std::size_t count = s.channels * s.frames;
  const std::size_t half = s.width / 2 + 1;
  const std::size_t bins = s.height * half;
  const auto spectrum = fft::rfft2_slices(x.values(), count, s.height, s.width);

#ifndef NDEBUG
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> slice_power(bins);
    for (std::size_t b = 0; b < bins; ++b) slice_power[b] = std::norm(spectrum[i * bins + b]);
    const double total = spectral_detail::hermitian_total(slice_power, s.height, s.width, half, half);
    spectral_detail::check_parseval(total, squared_norm(x.values().subspan(i * s.slice_size(), s.slice_size())),
                                    s.slice_size(), "rFFT2");
  }
#endif

  SpatialSpectrum out{s.height, half, s.width, std::vector<double>(bins)};
  for (std::size_t b = 0; b < bins; ++b) {
    out.power[b] = pairwise_reduce(count, [&](std::size_t i) { return std::norm(spectrum[i * bins + b]); }) /
                   static_cast<double>(count);
  }
  return out;
}

inline TemporalSpectrum temporal_power_spectrum(const LatentTensor& x) {
  const Shape& s = x.shape();
  const std::size_t inner = s.slice_size();
  const std::size_t k_bins = s.frames / 2 + 1;
  const auto spectrum = fft::rfft_axis(x.values(), s.channels, s.frames, inner);

#ifndef NDEBUG
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t p = 0; p < inner; ++p) {
      std::vector<double> series_power(k_bins);
      double energy = 0.0;
      for (std::size_t k = 0; k < k_bins; ++k) series_power[k] = std::norm(spectrum[(c * k_bins + k) * inner + p]);
      for (std::size_t t = 0; t < s.frames; ++t) energy += x.values()[(c * s.frames + t) * inner + p] * x.values()[(c * s.frames + t) * inner + p];
      const double total = spectral_detail::hermitian_total(series_power, 1, s.frames, k_bins, k_bins);
      spectral_detail::check_parseval(total, energy, s.frames, "temporal rFFT");
    }
  }
#endif

  const std::size_t series = s.channels * inner;
  TemporalSpectrum out{s.frames, std::vector<double>(k_bins)};
  for (std::size_t k = 0; k < k_bins; ++k) {
    out.power[k] = pairwise_reduce(series, [&](std::size_t i) {
                     const std::size_t c = i / inner, p = i % inner;
                     return std::norm(spectrum[(c * k_bins + k) * inner + p]);
                   }) /
                   static_cast<double>(series);
  }
  return out;
}

/// Share of spatial half-spectrum power at normalized radius >= rho.
inline double sp_hf_from_spectrum(const SpatialSpectrum& spec, double rho) {
  const double total = pairwise_sum(spec.power);
  if (!(total > 0.0)) throw degenerate_input_error("sp_hf: tensor has zero spectral power (all-zero input)");
  const double high = pairwise_reduce(spec.power.size(), [&](std::size_t b) {
    const std::size_t fh = b / spec.half_width, fw = b % spec.half_width;
    return radial_frequency(fh, fw, spec.height, spec.width) >= rho ? spec.power[b] : 0.0;
  });
  return high / total;
}

/// Share of non-DC temporal power at normalized frequency >= rho_t.
inline double t_hf_from_spectrum(const TemporalSpectrum& spec, double rho_t) {
  const std::size_t k_bins = spec.power.size();
  const double total = pairwise_reduce(k_bins - 1, [&](std::size_t i) { return spec.power[i + 1]; });
  if (!(total > 0.0)) throw degenerate_input_error("t_hf: tensor is constant along time (no non-DC power)");
  const double high = pairwise_reduce(k_bins - 1, [&](std::size_t i) {
    return temporal_frequency(i + 1, spec.frames) >= rho_t ? spec.power[i + 1] : 0.0;
  });
  return high / total;
}

inline double sp_hf(const LatentTensor& x, double rho = default_spatial_threshold) {
  if (x.shape().height < 2 && x.shape().width < 2)
    throw shape_error("sp_hf needs H >= 2 or W >= 2, got " + x.shape().to_string());
  return sp_hf_from_spectrum(spatial_power_spectrum(x), rho);
}

/// Accepts T >= 2: with T = 2 the single non-DC bin has f = 1.
inline double t_hf(const LatentTensor& x, double rho_t = default_temporal_threshold) {
  if (x.shape().frames < 2) throw shape_error("t_hf needs T >= 2, got " + x.shape().to_string());
  return t_hf_from_spectrum(temporal_power_spectrum(x), rho_t);
}

inline double t_diff_rms(const LatentTensor& x) {
  const Shape& s = x.shape();
  if (s.frames < 2) throw shape_error("temporal differences need T >= 2, got " + s.to_string());
  const std::size_t inner = s.slice_size();
  const std::size_t per_channel = (s.frames - 1) * inner;
  const auto v = x.values();
  const double ss = pairwise_reduce(s.channels * per_channel, [&](std::size_t i) {
    const std::size_t c = i / per_channel, rest = i % per_channel;
    const std::size_t at = c * s.frames * inner + rest;
    const double diff = v[at + inner] - v[at];
    return diff * diff;
  });
  return std::sqrt(ss / static_cast<double>(s.channels * per_channel));
}

struct TemporalDifference {
  double rms = 0.0;
  double rel = 0.0;
};

inline TemporalDifference t_diff(const LatentTensor& x) {
  const double rms = t_diff_rms(x);
  const double mean_sq = squared_norm(x.values()) / static_cast<double>(x.size());
  if (!(mean_sq > 0.0)) throw degenerate_input_error("tDiffRel: tensor is all zero");
  return {rms, rms / std::sqrt(mean_sq)};
}

struct SpectralMetrics {
  double sp_hf = 0.0;
  double t_hf = 0.0;
  double t_diff_rms = 0.0;
  double t_diff_rel = 0.0;
};

inline SpectralMetrics spectral_metrics(const LatentTensor& x, double rho = default_spatial_threshold,
                                        double rho_t = default_temporal_threshold) {
  const auto td = t_diff(x);
  return {sp_hf(x, rho), t_hf(x, rho_t), td.rms, td.rel};
}

// ---------------------------------------------------------------------------
// Population summaries

enum class Target { z, z_g, d };

inline std::string target_name(Target t) {
  switch (t) {
    case Target::z: return "z";
    case Target::z_g: return "zg";
    case Target::d: return "d";
  }
  return "?";
}

inline Target parse_target(const std::string& name) {
  if (name == "z") return Target::z;
  if (name == "zg" || name == "z_g") return Target::z_g;
  if (name == "d") return Target::d;
  throw config_error("unknown spectral target '" + name + "' (expected z, zg or d)");
}

struct SpectralOptions {
  double rho = default_spatial_threshold;
  double rho_t = default_temporal_threshold;
  std::vector<Target> targets{Target::z, Target::z_g, Target::d};
};

/// Per-record spectral rows. `delta_sp_hf` = sp_hf(z_g) - sp_hf(z) is always present.
struct RecordSpectral {
  std::string prompt_id;
  std::string seed_id;
  std::map<std::string, double> metrics;  // e.g. "sp_hf_d", "t_diff_rel_z", "delta_sp_hf"
};

inline RecordSpectral record_spectral(const SampleRecord& rec, const SpectralOptions& options) {
  RecordSpectral out{rec.prompt_id, rec.seed_id, {}};
  std::map<Target, double> sp;
  for (Target t : options.targets) {
    LatentTensor owned;
    const LatentTensor* x = nullptr;
    if (t == Target::z) x = &rec.z;
    else if (t == Target::z_g) x = &rec.z_g;
    else {
      std::vector<double> diff(rec.z.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = rec.z_g.values()[i] - rec.z.values()[i];
      owned = LatentTensor(rec.z.shape(), std::move(diff));
      x = &owned;
    }
    SpectralMetrics m;
    try {
      m = spectral_metrics(*x, options.rho, options.rho_t);
    } catch (const data_error& e) {
      throw degenerate_input_error("record (" + rec.prompt_id + ", " + rec.seed_id + "), target " +
                                   target_name(t) + ": " + e.what());
    }
    const std::string suffix = "_" + target_name(t);
    out.metrics["sp_hf" + suffix] = m.sp_hf;
    out.metrics["t_hf" + suffix] = m.t_hf;
    out.metrics["t_diff_rms" + suffix] = m.t_diff_rms;
    out.metrics["t_diff_rel" + suffix] = m.t_diff_rel;
    sp[t] = m.sp_hf;
  }
  const double sp_z = sp.count(Target::z) ? sp[Target::z] : noisediag::sp_hf(rec.z, options.rho);
  const double sp_zg = sp.count(Target::z_g) ? sp[Target::z_g] : noisediag::sp_hf(rec.z_g, options.rho);
  out.metrics["delta_sp_hf"] = sp_zg - sp_z;
  return out;
}

/// Mean / P10 / P90 of every spectral metric across the population.
struct SpectralSummary {
  std::size_t n_units = 0;      // records, or prompts when prompt-averaged
  bool prompt_averaged = false;
  std::map<std::string, Distribution> metrics;
};

/// Summarizes per-record rows. With `prompt_averaged`, each prompt's seeds are
/// averaged first and the summary runs over prompts.
inline SpectralSummary summarize_spectral(std::span<const RecordSpectral> rows, bool prompt_averaged) {
  if (rows.empty()) throw insufficient_data_error("spectral summary needs at least one record");
  std::map<std::string, std::vector<double>> columns;
  std::size_t units = 0;
  if (!prompt_averaged) {
    for (const auto& r : rows)
      for (const auto& [name, v] : r.metrics) columns[name].push_back(v);
    units = rows.size();
  } else {
    std::map<std::string, std::map<std::string, std::vector<double>>> by_prompt;
    for (const auto& r : rows)
      for (const auto& [name, v] : r.metrics) by_prompt[r.prompt_id][name].push_back(v);
    for (const auto& [prompt, cols] : by_prompt)
      for (const auto& [name, vals] : cols) columns[name].push_back(mean(vals));
    units = by_prompt.size();
  }
  SpectralSummary out{units, prompt_averaged, {}};
  for (const auto& [name, vals] : columns) {
    out.metrics[name] = summarize(vals);
    if (!(out.metrics[name].p10 <= out.metrics[name].p90)) throw internal_error("P10 > P90 for " + name);
  }
  return out;
}

inline SpectralSummary spectral_report(std::span<const SampleRecord> records, const SpectralOptions& options,
                                       bool prompt_averaged = false, std::size_t jobs = 1) {
  std::vector<RecordSpectral> rows(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) { rows[i] = record_spectral(records[i], options); });
  return summarize_spectral(rows, prompt_averaged);
}

} // namespace noisediag
