#pragma once

// JSON / Markdown / CSV emitters for the geometry, spectral and paired
// reports. Markdown numbers are printed with six decimals; JSON keeps full
// double precision.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "noisediag/error.hpp"
#include "noisediag/geometry.hpp"
#include "noisediag/paired.hpp"
#include "noisediag/scores.hpp"
#include "noisediag/spectral.hpp"

namespace noisediag {

inline constexpr const char* tool_name = "noisediag";
inline constexpr const char* tool_version = "0.1.0";

using ordered_json = nlohmann::ordered_json;

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  return s == "-0.000000" ? "0.000000" : s;
}

inline std::string signed6(double v) {
  const std::string s = fixed6(v);
  return s.front() == '-' ? s : "+" + s;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw internal_error("SHA-256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

struct InputDigest {
  std::string path;
  std::string sha256;
};

inline ordered_json digests_json(const std::vector<InputDigest>& inputs) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : inputs) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

/// Fields shared by every report: tool identity, config echo, digests, seed.
inline ordered_json report_header(const std::string& kind, const ordered_json& config,
                                  const std::vector<InputDigest>& inputs, std::uint64_t rng_seed) {
  ordered_json j;
  j["report"] = kind;
  j["tool"] = {{"name", tool_name}, {"version", tool_version}};
  j["config"] = config;
  j["rng_seed"] = rng_seed;
  j["inputs"] = digests_json(inputs);
  return j;
}

// ---------------------------------------------------------------------------
// Geometry

inline ordered_json geometry_json(const std::vector<PromptGeometry>& prompts, const GeometrySummary& summary) {
  ordered_json j;
  j["summary"] = {
      {"n_prompts", summary.n_prompts},
      {"n_records", summary.n_records},
      {"rel_disp", {{"mean", summary.rel_disp.mean}, {"median", summary.rel_disp.median},
                    {"prompt_averaged_mean", summary.rel_disp_prompt_mean}}},
      {"cos_sim", {{"mean", summary.cos_sim.mean}, {"median", summary.cos_sim.median},
                   {"prompt_averaged_mean", summary.cos_sim_prompt_mean}}},
      {"dir_stab", {{"mean", summary.dir_stab.mean}, {"median", summary.dir_stab.median}}},
      {"cv_dnorm", {{"mean", summary.cv_dnorm.mean}, {"median", summary.cv_dnorm.median}}},
      {"evr1", {{"mean", summary.evr1.mean}, {"median", summary.evr1.median}}},
  };
  j["prompts"] = ordered_json::array();
  j["records"] = ordered_json::array();
  for (const auto& p : prompts) {
    j["prompts"].push_back({{"prompt_id", p.direction.prompt_id},
                            {"n_seeds", p.direction.n_seeds},
                            {"dir_stab", p.direction.dir_stab},
                            {"cv_dnorm", p.direction.cv_dnorm},
                            {"evr1", p.direction.evr1}});
    for (const auto& r : p.records)
      j["records"].push_back({{"prompt_id", r.prompt_id},
                              {"seed_id", r.seed_id},
                              {"rel_disp", r.metrics.rel_disp},
                              {"cos_sim", r.metrics.cos_sim},
                              {"d_norm", r.metrics.d_norm}});
  }
  return j;
}

inline std::string geometry_markdown(const GeometrySummary& s) {
  std::string md = "## Global geometry and directional consistency\n\n";
  md += "Prompts: " + std::to_string(s.n_prompts) + ", records: " + std::to_string(s.n_records) +
        ". Record metrics are summarized over all records; DirStab, CV and EVR1 are computed per prompt and "
        "summarized over prompts.\n\n";
  md += "| Metric | Mean | Median |\n|---|---|---|\n";
  auto row = [&](const std::string& name, const MeanMedian& v) {
    md += "| " + name + " | " + fixed6(v.mean) + " | " + fixed6(v.median) + " |\n";
  };
  row("‖z_g − z‖ / ‖z‖", s.rel_disp);
  row("cos(z, z_g)", s.cos_sim);
  row("Directional Stability (DirStab)", s.dir_stab);
  row("CV_‖d‖", s.cv_dnorm);
  row("Explained Variance Ratio (EVR1)", s.evr1);
  md += "\nSeed-averaged per prompt, then averaged over prompts:\n\n";
  md += "| Metric | Mean |\n|---|---|\n";
  md += "| ‖z_g − z‖ / ‖z‖ | " + fixed6(s.rel_disp_prompt_mean) + " |\n";
  md += "| cos(z, z_g) | " + fixed6(s.cos_sim_prompt_mean) + " |\n";
  return md;
}

inline ScoreTable geometry_rows(const std::vector<PromptGeometry>& prompts) {
  ScoreTable t;
  for (const auto& p : prompts) {
    for (const auto& r : p.records) {
      t.add({"", r.prompt_id, r.seed_id, "rel_disp", r.metrics.rel_disp});
      t.add({"", r.prompt_id, r.seed_id, "cos_sim", r.metrics.cos_sim});
    }
    t.add({"", p.direction.prompt_id, "*", "dir_stab", p.direction.dir_stab});
    t.add({"", p.direction.prompt_id, "*", "cv_dnorm", p.direction.cv_dnorm});
    t.add({"", p.direction.prompt_id, "*", "evr1", p.direction.evr1});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Spectral

inline std::string spectral_display_name(const std::string& key) {
  if (key == "delta_sp_hf") return "Δ Spatial HF (z_g − z)";
  const auto cut = key.rfind('_');
  const std::string metric = key.substr(0, cut), target = key.substr(cut + 1);
  const std::string arg = target == "zg" ? "z_g" : target;
  if (metric == "sp_hf") return "sp_hf(" + arg + ")";
  if (metric == "t_hf") return "t_hf(" + arg + ")";
  if (metric == "t_diff_rel") return "tDiffRel(" + arg + ")";
  if (metric == "t_diff_rms") return "tDiffRMS(" + arg + ")";
  return key;
}

/// Row order for the frequency table: the headline rows first, then the rest
/// alphabetically.
inline std::vector<std::string> spectral_row_order(const SpectralSummary& s) {
  std::vector<std::string> order;
  for (const char* k : {"delta_sp_hf", "sp_hf_d", "t_hf_d", "t_diff_rel_d"})
    if (s.metrics.count(k)) order.push_back(k);
  for (const auto& [k, _] : s.metrics)
    if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
  return order;
}

inline ordered_json spectral_summary_json(const SpectralSummary& s) {
  ordered_json j;
  j["n_units"] = s.n_units;
  j["prompt_averaged"] = s.prompt_averaged;
  j["metrics"] = ordered_json::object();
  for (const auto& key : spectral_row_order(s)) {
    const auto& d = s.metrics.at(key);
    j["metrics"][key] = {{"mean", d.mean}, {"p10", d.p10}, {"p90", d.p90}};
  }
  return j;
}

inline std::string spectral_markdown_table(const SpectralSummary& s) {
  std::string md = "| Metric | Mean | P10 | P90 |\n|---|---|---|---|\n";
  for (const auto& key : spectral_row_order(s)) {
    const auto& d = s.metrics.at(key);
    md += "| " + spectral_display_name(key) + " | " + fixed6(d.mean) + " | " + fixed6(d.p10) + " | " +
          fixed6(d.p90) + " |\n";
  }
  return md;
}

inline std::string spectral_markdown(const SpectralSummary& records, const SpectralSummary* prompts) {
  std::string md = "## Frequency summary\n\n";
  md += "Over " + std::to_string(records.n_units) + " records.\n\n" + spectral_markdown_table(records);
  if (prompts) {
    md += "\nSeed-averaged per prompt, over " + std::to_string(prompts->n_units) + " prompts.\n\n" +
          spectral_markdown_table(*prompts);
  }
  return md;
}

inline ScoreTable spectral_rows(const std::vector<RecordSpectral>& rows) {
  ScoreTable t;
  for (const auto& r : rows)
    for (const auto& [name, v] : r.metrics) t.add({"", r.prompt_id, r.seed_id, name, v});
  return t;
}

// ---------------------------------------------------------------------------
// Paired

inline ordered_json paired_result_json(const PairedTestResult& r) {
  ordered_json j;
  j["metric"] = r.metric;
  j["baseline_arm"] = r.baseline_arm;
  j["treatment_arm"] = r.treatment_arm;
  j["n_prompts"] = r.n_prompts;
  j["baseline_mean"] = r.baseline_mean;
  j["treatment_mean"] = r.treatment_mean;
  j["mean_delta"] = r.mean_delta;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["ci_level"] = r.ci_level;
  j["ci_method"] = "percentile";
  j["n_bootstrap"] = r.n_bootstrap;
  j["p_value"] = r.p_value;
  if (r.permutation_exact) j["n_permutations"] = "exact";
  else j["n_permutations"] = r.n_permutations;
  j["n_sign_patterns"] = r.n_permutations;
  j["sidedness"] = sidedness_name(r.sidedness);
  j["rng_seed"] = r.rng_seed;
  return j;
}

inline ordered_json paired_json(const PairedReport& report) {
  ordered_json j;
  j["result"] = paired_result_json(report.result);
  j["samples"] = ordered_json::array();
  for (const auto& s : report.samples)
    j["samples"].push_back(
        {{"prompt_id", s.prompt_id}, {"baseline", s.baseline}, {"treatment", s.treatment}, {"delta", s.delta}});
  return j;
}

inline std::string ci_header(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%% CI (bootstrap)", level * 100.0);
  return buf;
}

inline std::string paired_markdown_row(const PairedTestResult& r) {
  return "| " + r.metric + " | " + fixed6(r.baseline_mean) + " | " + fixed6(r.treatment_mean) + " | " +
         signed6(r.mean_delta) + " | [" + fixed6(r.ci_low) + ", " + fixed6(r.ci_high) + "] | " + fixed6(r.p_value) +
         " |";
}

inline std::string paired_markdown(const PairedTestResult& r) {
  std::string md = "## Prompt-level paired significance analysis\n\n";
  md += "N = " + std::to_string(r.n_prompts) + " prompts (seed-averaged). Mean Δ is " + r.treatment_arm + " minus " +
        r.baseline_arm + ". " + std::to_string(r.n_bootstrap) + " bootstrap resamples (percentile); sign-flip test " +
        sidedness_name(r.sidedness) + ", " +
        (r.permutation_exact ? "exact enumeration" : std::to_string(r.n_permutations) + " random flips") +
        "; rng_seed " + std::to_string(r.rng_seed) + ".\n\n";
  md += "| Metric | " + r.baseline_arm + " | " + r.treatment_arm + " | Mean Δ | " + ci_header(r.ci_level) +
        " | p (perm.) |\n";
  md += "|---|---|---|---|---|---|\n";
  md += paired_markdown_row(r) + "\n";
  return md;
}

inline ScoreTable paired_rows(const PairedReport& report) {
  ScoreTable t;
  const auto& r = report.result;
  for (const auto& s : report.samples) {
    t.add({r.baseline_arm, s.prompt_id, "mean", r.metric, s.baseline});
    t.add({r.treatment_arm, s.prompt_id, "mean", r.metric, s.treatment});
    t.add({"delta", s.prompt_id, "mean", r.metric, s.delta});
  }
  return t;
}

} // namespace noisediag
