#pragma once

// Synthetic (z, z_g) datasets with known displacement structure.
//
// For prompt p a unit direction v_p is drawn (optionally band-limited); for
// each seed
//     z   ~ N(0, I)
//     z_g = z + alpha * v_p + epsilon * eta,   eta ~ N(0, I / D)
// so alpha and epsilon are the expected norms of the shared and the
// isotropic part of the displacement, and for large D
//     E[DirStab] ~= alpha^2 / (alpha^2 + epsilon^2).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisediag/dataset.hpp"
#include "noisediag/error.hpp"
#include "noisediag/fft.hpp"
#include "noisediag/npy.hpp"
#include "noisediag/numeric.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/rng.hpp"
#include "noisediag/scores.hpp"
#include "noisediag/spectral.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag {

/// Band limits applied to the shared direction. Unset fields leave that side
/// of the band open. Low-pass keeps frequencies below its cutoff; high-pass
/// keeps frequencies at or above it.
struct SpectralShaping {
  std::optional<double> spatial_lowpass;
  std::optional<double> spatial_highpass;
  std::optional<double> temporal_lowpass;
  std::optional<double> temporal_highpass;

  bool spatial() const { return spatial_lowpass || spatial_highpass; }
  bool temporal() const { return temporal_lowpass || temporal_highpass; }
  bool none() const { return !spatial() && !temporal(); }
};

/// Planted paired scores written next to the tensors.
struct ScoreFixtureSpec {
  std::string metric = "temporal_style";
  std::string baseline_arm = "baseline";
  std::string treatment_arm = "npnet";
  double baseline_mean = 0.076961;
  double prompt_sd = 0.02;
  double delta_mean = 0.001754;
  double delta_sd = 0.0123;
  double seed_sd = 0.005;
  bool exact_moments = true;  // rescale deltas to exactly delta_mean / delta_sd
};

struct RegimeSpec {
  Shape shape{4, 16, 40, 64};
  std::size_t n_prompts = 10;
  std::size_t n_seeds = 5;
  double alpha = 0.0;
  double epsilon = 0.0;
  SpectralShaping shaping;
  std::uint64_t rng_seed = 0;
  bool identity = false;
  StorageType dtype = StorageType::f64;
  std::optional<ScoreFixtureSpec> scores;

  void validate() const {
    if (shape.size() == 0) throw spec_error("regime shape has a zero axis");
    if (n_prompts < 1) throw spec_error("n_prompts must be at least 1");
    if (n_seeds < 1) throw spec_error("n_seeds must be at least 1");
    if (!(alpha >= 0.0) || !(epsilon >= 0.0) || !std::isfinite(alpha) || !std::isfinite(epsilon))
      throw spec_error("alpha and epsilon must be finite and non-negative");
    if (identity && (alpha > 0.0 || epsilon > 0.0)) throw spec_error("identity regime requires alpha = epsilon = 0");
    if (!identity && alpha * alpha + epsilon * epsilon == 0.0)
      throw spec_error("alpha^2 + epsilon^2 must be positive unless \"identity\": true is requested");
    auto check_cutoff = [](const std::optional<double>& c, const char* name) {
      if (c && !(*c > 0.0 && *c < 1.0))
        throw spec_error(std::string(name) + " cutoff must lie in (0, 1); 1 is the Nyquist frequency");
    };
    check_cutoff(shaping.spatial_lowpass, "spatial_lowpass");
    check_cutoff(shaping.spatial_highpass, "spatial_highpass");
    check_cutoff(shaping.temporal_lowpass, "temporal_lowpass");
    check_cutoff(shaping.temporal_highpass, "temporal_highpass");
    if (shaping.spatial() && shape.height < 2 && shape.width < 2)
      throw spec_error("spatial shaping needs H >= 2 or W >= 2");
    if (shaping.temporal() && shape.frames < 2) throw spec_error("temporal shaping needs T >= 2");
  }
};

/// alpha^2 / (alpha^2 + epsilon^2): large-D limit of the mean pairwise cosine.
inline double expected_dir_stab(double alpha, double epsilon) {
  return alpha * alpha / (alpha * alpha + epsilon * epsilon);
}

struct RegimeCalibration {
  double alpha = 0.0;
  double epsilon = 0.0;
};

/// Picks alpha and epsilon so that E[DirStab] = target_dir_stab and
/// |d| / |z| ~= target_rel_disp (|z| ~= sqrt(D) for a standard normal z).
inline RegimeCalibration calibrate_regime(double target_dir_stab, double target_rel_disp, const Shape& shape) {
  if (!(target_dir_stab >= 0.0 && target_dir_stab <= 1.0)) throw spec_error("target_dir_stab must lie in [0, 1]");
  if (!(target_rel_disp > 0.0)) throw spec_error("target_rel_disp must be positive");
  const double disp = target_rel_disp * std::sqrt(static_cast<double>(shape.size()));
  return {disp * std::sqrt(target_dir_stab), disp * std::sqrt(1.0 - target_dir_stab)};
}

// ---------------------------------------------------------------------------
// JSON

inline SpectralShaping parse_shaping(const nlohmann::json& j) {
  SpectralShaping s;
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "none")) return s;
  if (!j.is_object()) throw spec_error("spectral_shaping must be \"none\" or an object of cutoffs");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw spec_error("spectral_shaping." + key + " must be a number");
    const double v = value.get<double>();
    if (key == "spatial_lowpass") s.spatial_lowpass = v;
    else if (key == "spatial_highpass") s.spatial_highpass = v;
    else if (key == "temporal_lowpass") s.temporal_lowpass = v;
    else if (key == "temporal_highpass") s.temporal_highpass = v;
    else throw spec_error("unknown spectral_shaping key '" + key + "'");
  }
  return s;
}

inline RegimeSpec parse_regime_spec(const nlohmann::json& j) {
  RegimeSpec spec;
  try {
    if (!j.is_object()) throw spec_error("regime spec must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      static const std::vector<std::string> known{"shape",   "n_prompts",        "n_seeds",         "alpha",
                                                  "epsilon", "target_dir_stab",  "target_rel_disp", "spectral_shaping",
                                                  "rng_seed", "identity",        "dtype",           "scores"};
      if (std::find(known.begin(), known.end(), key) == known.end()) throw spec_error("unknown spec key '" + key + "'");
    }
    if (j.contains("shape")) {
      const auto& s = j["shape"];
      if (!s.is_array() || s.size() != 4) throw spec_error("shape must be [C, T, H, W]");
      spec.shape = {s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>(), s[3].get<std::size_t>()};
    }
    spec.n_prompts = j.value("n_prompts", spec.n_prompts);
    spec.n_seeds = j.value("n_seeds", spec.n_seeds);
    spec.rng_seed = j.value("rng_seed", spec.rng_seed);
    spec.identity = j.value("identity", false);
    const bool direct = j.contains("alpha") || j.contains("epsilon");
    const bool targeted = j.contains("target_dir_stab") || j.contains("target_rel_disp");
    if (direct && targeted) throw spec_error("give either alpha/epsilon or target_dir_stab/target_rel_disp, not both");
    if (targeted) {
      const auto cal = calibrate_regime(j.at("target_dir_stab").get<double>(), j.at("target_rel_disp").get<double>(),
                                        spec.shape);
      spec.alpha = cal.alpha;
      spec.epsilon = cal.epsilon;
    } else {
      spec.alpha = j.value("alpha", 0.0);
      spec.epsilon = j.value("epsilon", 0.0);
    }
    if (j.contains("spectral_shaping")) spec.shaping = parse_shaping(j["spectral_shaping"]);
    const std::string dtype = j.value("dtype", std::string("f8"));
    if (dtype == "f8" || dtype == "<f8") spec.dtype = StorageType::f64;
    else if (dtype == "f4" || dtype == "<f4") spec.dtype = StorageType::f32;
    else throw spec_error("dtype must be f4 or f8");
    if (j.contains("scores") && !j["scores"].is_null()) {
      const auto& s = j["scores"];
      ScoreFixtureSpec f;
      f.metric = s.value("metric", f.metric);
      f.baseline_arm = s.value("baseline_arm", f.baseline_arm);
      f.treatment_arm = s.value("treatment_arm", f.treatment_arm);
      f.baseline_mean = s.value("baseline_mean", f.baseline_mean);
      f.prompt_sd = s.value("prompt_sd", f.prompt_sd);
      f.delta_mean = s.value("delta_mean", f.delta_mean);
      f.delta_sd = s.value("delta_sd", f.delta_sd);
      f.seed_sd = s.value("seed_sd", f.seed_sd);
      f.exact_moments = s.value("exact_moments", f.exact_moments);
      if (f.baseline_arm == f.treatment_arm) throw spec_error("score fixture arms must differ");
      if (f.prompt_sd < 0 || f.delta_sd < 0 || f.seed_sd < 0) throw spec_error("score fixture sds must be >= 0");
      spec.scores = f;
    }
  } catch (const nlohmann::json::exception& e) {
    throw spec_error(std::string("invalid regime spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Generation

/// Zeroes the frequency bins outside the requested bands.
inline void apply_shaping(LatentTensor& x, const SpectralShaping& shaping) {
  const Shape& s = x.shape();
  if (shaping.spatial()) {
    const std::size_t count = s.channels * s.frames, half = s.width / 2 + 1;
    auto spec = fft::rfft2_slices(x.values(), count, s.height, s.width);
    std::size_t kept = 0;
    for (std::size_t fh = 0; fh < s.height; ++fh)
      for (std::size_t fw = 0; fw < half; ++fw) {
        const double r = radial_frequency(fh, fw, s.height, s.width);
        const bool keep = (!shaping.spatial_lowpass || r < *shaping.spatial_lowpass) &&
                          (!shaping.spatial_highpass || r >= *shaping.spatial_highpass);
        if (keep) {
          ++kept;
          continue;
        }
        for (std::size_t i = 0; i < count; ++i) spec[(i * s.height + fh) * half + fw] = 0.0;
      }
    if (kept == 0) throw spec_error("spatial shaping removes every frequency bin for shape " + s.to_string());
    const auto back = fft::irfft2_slices(spec, count, s.height, s.width);
    std::copy(back.begin(), back.end(), x.values().begin());
  }
  if (shaping.temporal()) {
    const std::size_t inner = s.slice_size(), k_bins = s.frames / 2 + 1;
    auto spec = fft::rfft_axis(x.values(), s.channels, s.frames, inner);
    std::size_t kept = 0;
    for (std::size_t k = 0; k < k_bins; ++k) {
      const double f = temporal_frequency(k, s.frames);
      const bool keep = (!shaping.temporal_lowpass || f < *shaping.temporal_lowpass) &&
                        (!shaping.temporal_highpass || f >= *shaping.temporal_highpass);
      if (keep) {
        ++kept;
        continue;
      }
      for (std::size_t c = 0; c < s.channels; ++c)
        for (std::size_t p = 0; p < inner; ++p) spec[(c * k_bins + k) * inner + p] = 0.0;
    }
    if (kept == 0) throw spec_error("temporal shaping removes every frequency bin for T = " + std::to_string(s.frames));
    const auto back = fft::irfft_axis(spec, s.channels, s.frames, inner);
    std::copy(back.begin(), back.end(), x.values().begin());
  }
}

inline LatentTensor standard_normal_tensor(const Shape& shape, Rng& rng) {
  LatentTensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

/// Unit-norm shared direction for one prompt.
inline LatentTensor shared_direction(const RegimeSpec& spec, Rng& rng) {
  LatentTensor v = standard_normal_tensor(spec.shape, rng);
  apply_shaping(v, spec.shaping);
  const double n = norm2(v.values());
  if (!(n > 0.0)) throw spec_error("spectral shaping left a zero direction");
  for (double& x : v.values()) x /= n;
  return v;
}

inline std::string padded_id(char prefix, std::size_t index, std::size_t count, std::size_t min_width) {
  std::size_t width = 1;
  for (std::size_t c = count > 0 ? count - 1 : 0; c >= 10; c /= 10) ++width;
  width = std::max(width, min_width);
  std::string digits = std::to_string(index);
  return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') + digits;
}

inline std::string synth_prompt_id(const RegimeSpec& spec, std::size_t p) { return padded_id('p', p, spec.n_prompts, 3); }
inline std::string synth_seed_id(const RegimeSpec& spec, std::size_t s) { return padded_id('s', s, spec.n_seeds, 1); }

/// Draws prompt `p`'s records from substream (rng_seed, synth_prompt, p). The
/// draw order is: direction, then per seed z followed by eta.
inline PromptGroup generate_group(const RegimeSpec& spec, std::size_t p) {
  Rng rng = Rng::substream(spec.rng_seed, Stream::synth_prompt, p);
  const LatentTensor v = shared_direction(spec, rng);
  const double iso = spec.epsilon / std::sqrt(static_cast<double>(spec.shape.size()));
  PromptGroup group{synth_prompt_id(spec, p), {}};
  for (std::size_t s = 0; s < spec.n_seeds; ++s) {
    LatentTensor z = standard_normal_tensor(spec.shape, rng);
    LatentTensor zg(spec.shape);
    const auto zv = z.values();
    auto gv = zg.values();
    const auto vv = v.values();
    for (std::size_t k = 0; k < gv.size(); ++k) {
      const double eta = rng.normal();
      gv[k] = spec.identity ? zv[k] : zv[k] + spec.alpha * vv[k] + iso * eta;
    }
    if (spec.dtype == StorageType::f32) {
      // round now so in-memory records equal what a reload would give
      for (double& x : z.values()) x = static_cast<float>(x);
      for (double& x : zg.values()) x = static_cast<float>(x);
    }
    z.set_storage(spec.dtype);
    zg.set_storage(spec.dtype);
    group.records.emplace_back(group.prompt_id, synth_seed_id(spec, s), std::move(z), std::move(zg));
  }
  return group;
}

/// Planted per-seed scores for two arms, one row per (arm, prompt, seed).
inline ScoreTable generate_scores(const RegimeSpec& spec) {
  if (!spec.scores) throw spec_error("regime spec has no score fixture");
  const ScoreFixtureSpec& f = *spec.scores;
  Rng rng = Rng::substream(spec.rng_seed, Stream::synth_scores, 0);
  const std::size_t n = spec.n_prompts;
  std::vector<double> base(n), delta(n);
  for (std::size_t p = 0; p < n; ++p) base[p] = f.baseline_mean + f.prompt_sd * rng.normal();
  for (std::size_t p = 0; p < n; ++p) delta[p] = rng.normal();
  if (f.exact_moments && n >= 2) {
    const double m = mean(delta);
    double ss = 0.0;
    for (double d : delta) ss += (d - m) * (d - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    for (double& d : delta) d = f.delta_mean + f.delta_sd * (d - m) / sd;
  } else {
    for (double& d : delta) d = f.delta_mean + f.delta_sd * d;
  }

  auto centered_noise = [&]() {
    std::vector<double> e(spec.n_seeds);
    for (double& x : e) x = f.seed_sd * rng.normal();
    if (spec.n_seeds > 1) {
      const double m = mean(e);
      for (double& x : e) x -= m;
    }
    return e;
  };

  ScoreTable table;
  for (std::size_t p = 0; p < n; ++p) {
    const auto eb = centered_noise();
    const auto et = centered_noise();
    for (std::size_t s = 0; s < spec.n_seeds; ++s) {
      table.add({f.baseline_arm, synth_prompt_id(spec, p), synth_seed_id(spec, s), f.metric, base[p] + eb[s]});
      table.add(
          {f.treatment_arm, synth_prompt_id(spec, p), synth_seed_id(spec, s), f.metric, base[p] + delta[p] + et[s]});
    }
  }
  return table;
}

struct SynthOutput {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> scores_path;
};

/// Writes data/<prompt>_<seed>_{z,zg}.npy, manifest.json and (when the spec
/// has a score fixture) scores.csv under `out_dir`.
inline SynthOutput generate_dataset(const RegimeSpec& spec, const std::filesystem::path& out_dir,
                                    std::size_t jobs = 1) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "data");
  std::vector<std::vector<ManifestEntry>> per_prompt(spec.n_prompts);
  parallel_for(spec.n_prompts, jobs, [&](std::size_t p) {
    const PromptGroup group = generate_group(spec, p);
    for (const auto& rec : group.records) {
      const std::string stem = rec.prompt_id + "_" + rec.seed_id;
      const auto path_z = out_dir / "data" / (stem + "_z.npy");
      const auto path_zg = out_dir / "data" / (stem + "_zg.npy");
      save_tensor(path_z, rec.z);
      save_tensor(path_zg, rec.z_g);
      per_prompt[p].push_back({rec.prompt_id, rec.seed_id, path_z, path_zg});
    }
  });

  SynthOutput out;
  out.manifest.declared_shape = spec.shape;
  out.manifest.base_dir = out_dir;
  for (auto& entries : per_prompt)
    for (auto& e : entries) out.manifest.entries.push_back(std::move(e));
  out.manifest_path = out_dir / "manifest.json";
  write_file_bytes(out.manifest_path, manifest_to_json(out.manifest).dump(2) + "\n");
  if (spec.scores) {
    out.scores_path = out_dir / "scores.csv";
    write_file_bytes(*out.scores_path, format_scores(generate_scores(spec)));
  }
  return out;
}

} // namespace noisediag
