#pragma once

// Pipeline driver behind the `noisediag` command line tool.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisediag/dataset.hpp"
#include "noisediag/error.hpp"
#include "noisediag/geometry.hpp"
#include "noisediag/npy.hpp"
#include "noisediag/paired.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/report.hpp"
#include "noisediag/scores.hpp"
#include "noisediag/spectral.hpp"
#include "noisediag/synth.hpp"

namespace noisediag {

enum class Command { geometry, spectral, paired_test, synth, all };

inline std::string command_name(Command c) {
  switch (c) {
    case Command::geometry: return "geometry";
    case Command::spectral: return "spectral";
    case Command::paired_test: return "paired-test";
    case Command::synth: return "synth";
    case Command::all: return "all";
  }
  return "?";
}

enum class OutputFormat { json, csv, md };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "json") return OutputFormat::json;
  if (s == "csv") return OutputFormat::csv;
  if (s == "md") return OutputFormat::md;
  throw config_error("unknown output format '" + s + "' (expected json, csv or md)");
}

/// Exit statuses. 64 and 70 follow the BSD sysexits convention.
enum ExitCode : int {
  exit_ok = 0,
  exit_validation = 1,
  exit_degenerate = 2,
  exit_usage = 64,
  exit_internal = 70,
};

inline constexpr const char* out_dir_env = "NOISEDIAG_OUT_DIR";
inline constexpr const char* default_out_dir = "noisediag-reports";

/// Output directory when --out is not given: $NOISEDIAG_OUT_DIR, else ./noisediag-reports.
inline std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv(out_dir_env); env && *env) return env;
  return default_out_dir;
}

struct RunConfig {
  Command command = Command::all;
  std::filesystem::path manifest;
  std::filesystem::path scores;            // one CSV with an arm column
  std::filesystem::path baseline_scores;   // or one CSV per arm
  std::filesystem::path treatment_scores;
  std::filesystem::path spec;
  std::string metric = "temporal_style";
  std::string baseline_arm = "baseline";
  std::string treatment_arm = "npnet";
  double rho = default_spatial_threshold;
  double rho_t = default_temporal_threshold;
  std::vector<Target> targets{Target::z, Target::z_g, Target::d};
  bool prompt_averaged = false;
  bool allow_partial = false;
  std::size_t n_bootstrap = 10000;
  std::size_t n_permutations = 100000;
  std::uint64_t rng_seed = 12345;
  double ci_level = 0.95;
  Sidedness sidedness = Sidedness::two_sided;
  std::filesystem::path out_dir = default_output_dir();
  std::set<OutputFormat> formats{OutputFormat::json, OutputFormat::md};
  std::size_t jobs = 1;

  void validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw config_error("--rho must lie in (0, 1]");
    if (!(rho_t > 0.0 && rho_t <= 1.0)) throw config_error("--rho-t must lie in (0, 1]");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw config_error("--ci-level must lie in (0, 1)");
    if (jobs < 1) throw config_error("--jobs must be at least 1");
    if (formats.empty()) throw config_error("at least one output format is required");
    if ((command == Command::geometry || command == Command::spectral) && manifest.empty())
      throw config_error(command_name(command) + " needs --manifest");
    if ((command == Command::synth || command == Command::all) && spec.empty())
      throw config_error(command_name(command) + " needs --spec");
    if (command == Command::paired_test) {
      const bool single = !scores.empty();
      const bool split = !baseline_scores.empty() || !treatment_scores.empty();
      if (single == split)
        throw config_error("paired-test needs either --scores or both --baseline-scores and --treatment-scores");
      if (split && (baseline_scores.empty() || treatment_scores.empty()))
        throw config_error("--baseline-scores and --treatment-scores must be given together");
    }
  }

  /// Config echo embedded in every report. Only fields that affect results.
  nlohmann::ordered_json echo() const {
    nlohmann::ordered_json j;
    j["command"] = command_name(command);
    if (!manifest.empty()) j["manifest"] = manifest.generic_string();
    if (!spec.empty()) j["spec"] = spec.generic_string();
    if (!scores.empty()) j["scores"] = scores.generic_string();
    if (!baseline_scores.empty()) j["baseline_scores"] = baseline_scores.generic_string();
    if (!treatment_scores.empty()) j["treatment_scores"] = treatment_scores.generic_string();
    j["metric"] = metric;
    j["baseline_arm"] = baseline_arm;
    j["treatment_arm"] = treatment_arm;
    j["rho"] = rho;
    j["rho_t"] = rho_t;
    j["targets"] = nlohmann::ordered_json::array();
    for (Target t : targets) j["targets"].push_back(target_name(t));
    j["prompt_averaged"] = prompt_averaged;
    j["allow_partial"] = allow_partial;
    j["n_bootstrap"] = n_bootstrap;
    j["n_permutations"] = n_permutations;
    j["ci_level"] = ci_level;
    j["sidedness"] = sidedness_name(sidedness);
    j["rng_seed"] = rng_seed;
    return j;
  }
};

namespace cli_detail {

struct DatasetAnalysis {
  std::vector<PromptGeometry> geometry;
  std::vector<RecordSpectral> spectral;
  std::vector<InputDigest> inputs;
};

inline std::vector<InputDigest> manifest_digests(const std::filesystem::path& manifest_path,
                                                 const std::string& manifest_label, const DatasetManifest& manifest) {
  std::vector<InputDigest> inputs{{manifest_label, sha256_file(manifest_path)}};
  for (const auto& e : manifest.entries) {
    inputs.push_back({e.path_z.lexically_relative(manifest.base_dir).generic_string(), sha256_file(e.path_z)});
    inputs.push_back({e.path_zg.lexically_relative(manifest.base_dir).generic_string(), sha256_file(e.path_zg)});
  }
  return inputs;
}

// Streams the dataset one prompt group at a time; results are stored by
// group index so the output order never depends on --jobs. `manifest_label`
// is the name the digest list records for the manifest.
inline DatasetAnalysis analyze_dataset(const std::filesystem::path& manifest_path, const std::string& manifest_label,
                                       const RunConfig& cfg, bool want_geometry, bool want_spectral) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const auto groups = group_entries(manifest);
  if (groups.empty()) throw insufficient_data_error("manifest has no entries");
  if (const auto missing = missing_pairs(groups); !missing.empty() && !cfg.allow_partial) {
    std::string list;
    for (const auto& [p, s] : missing) list += "\n  (" + p + ", " + s + ")";
    throw manifest_error("partial dataset; missing (prompt, seed) pairs:" + list +
                         "\n(pass --allow-partial to analyze it anyway)");
  }

  DatasetAnalysis out;
  out.inputs = manifest_digests(manifest_path, manifest_label, manifest);
  if (want_geometry) out.geometry.resize(groups.size());
  std::vector<std::vector<RecordSpectral>> spectral(groups.size());
  const SpectralOptions sopt{cfg.rho, cfg.rho_t, cfg.targets};
  parallel_for(groups.size(), cfg.jobs, [&](std::size_t i) {
    const PromptGroup group = load_group(groups[i], manifest.declared_shape);
    if (want_geometry) out.geometry[i] = prompt_geometry(group);
    if (want_spectral)
      for (const auto& rec : group.records) spectral[i].push_back(record_spectral(rec, sopt));
  });
  for (auto& rows : spectral)
    for (auto& r : rows) out.spectral.push_back(std::move(r));
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text,
                       std::vector<std::filesystem::path>& written) {
  write_file_bytes(path, text);
  written.push_back(path);
}

inline void emit_geometry(const RunConfig& cfg, const DatasetAnalysis& a, std::vector<std::filesystem::path>& written) {
  const GeometrySummary summary = aggregate_geometry(a.geometry);
  if (cfg.formats.count(OutputFormat::json)) {
    auto j = report_header("geometry", cfg.echo(), a.inputs, cfg.rng_seed);
    j.update(geometry_json(a.geometry, summary));
    write_text(cfg.out_dir / "geometry.json", j.dump(2) + "\n", written);
  }
  if (cfg.formats.count(OutputFormat::md)) write_text(cfg.out_dir / "geometry.md", geometry_markdown(summary), written);
  if (cfg.formats.count(OutputFormat::csv))
    write_text(cfg.out_dir / "geometry.csv", format_scores(geometry_rows(a.geometry)), written);
}

inline void emit_spectral(const RunConfig& cfg, const DatasetAnalysis& a, std::vector<std::filesystem::path>& written) {
  const SpectralSummary records = summarize_spectral(a.spectral, false);
  std::optional<SpectralSummary> prompts;
  if (cfg.prompt_averaged) prompts = summarize_spectral(a.spectral, true);
  if (cfg.formats.count(OutputFormat::json)) {
    auto j = report_header("spectral", cfg.echo(), a.inputs, cfg.rng_seed);
    j["summary"] = spectral_summary_json(records);
    if (prompts) j["prompt_averaged_summary"] = spectral_summary_json(*prompts);
    j["records"] = ordered_json::array();
    for (const auto& r : a.spectral) {
      ordered_json row{{"prompt_id", r.prompt_id}, {"seed_id", r.seed_id}};
      for (const auto& [k, v] : r.metrics) row[k] = v;
      j["records"].push_back(row);
    }
    write_text(cfg.out_dir / "spectral.json", j.dump(2) + "\n", written);
  }
  if (cfg.formats.count(OutputFormat::md))
    write_text(cfg.out_dir / "spectral.md", spectral_markdown(records, prompts ? &*prompts : nullptr), written);
  if (cfg.formats.count(OutputFormat::csv))
    write_text(cfg.out_dir / "spectral.csv", format_scores(spectral_rows(a.spectral)), written);
}

/// `scores_label`, when set, replaces the score path in the digest list and
/// config echo (the `all` pipeline records paths relative to --out).
inline void run_paired(const RunConfig& cfg, std::vector<std::filesystem::path>& written,
                       const std::string& scores_label = "") {
  ScoreTable table;
  std::vector<InputDigest> inputs;
  auto echo = cfg.echo();
  if (!cfg.scores.empty()) {
    table = load_scores(cfg.scores);
    if (!scores_label.empty()) echo["scores"] = scores_label;
    inputs.push_back({scores_label.empty() ? cfg.scores.generic_string() : scores_label, sha256_file(cfg.scores)});
  } else {
    table.merge_as_arm(load_scores(cfg.baseline_scores), cfg.baseline_arm);
    table.merge_as_arm(load_scores(cfg.treatment_scores), cfg.treatment_arm);
    inputs.push_back({cfg.baseline_scores.generic_string(), sha256_file(cfg.baseline_scores)});
    inputs.push_back({cfg.treatment_scores.generic_string(), sha256_file(cfg.treatment_scores)});
  }
  const PairedConfig pc{cfg.n_bootstrap, cfg.n_permutations, cfg.ci_level, cfg.rng_seed, cfg.sidedness, 20, cfg.jobs};
  const PairedReport report = paired_report(table, cfg.metric, cfg.baseline_arm, cfg.treatment_arm, pc);
  if (cfg.formats.count(OutputFormat::json)) {
    auto j = report_header("paired", echo, inputs, cfg.rng_seed);
    j.update(paired_json(report));
    write_text(cfg.out_dir / "paired.json", j.dump(2) + "\n", written);
  }
  if (cfg.formats.count(OutputFormat::md))
    write_text(cfg.out_dir / "paired.md", paired_markdown(report.result), written);
  if (cfg.formats.count(OutputFormat::csv))
    write_text(cfg.out_dir / "paired.csv", format_scores(paired_rows(report)), written);
}

inline RegimeSpec load_regime_spec(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw spec_error(path.string() + ": " + e.what());
  }
  return parse_regime_spec(j);
}

} // namespace cli_detail

struct RunResult {
  int exit_code = exit_ok;
  std::vector<std::filesystem::path> written;
  std::string message;  // error text when exit_code != 0
};

/// Runs one command end to end. Never throws; failures map to exit codes.
inline RunResult run(const RunConfig& cfg) {
  RunResult result;
  try {
    cfg.validate();
    switch (cfg.command) {
      case Command::geometry: {
        const auto a = cli_detail::analyze_dataset(cfg.manifest, cfg.manifest.generic_string(), cfg, true, false);
        cli_detail::emit_geometry(cfg, a, result.written);
        break;
      }
      case Command::spectral: {
        const auto a = cli_detail::analyze_dataset(cfg.manifest, cfg.manifest.generic_string(), cfg, false, true);
        cli_detail::emit_spectral(cfg, a, result.written);
        break;
      }
      case Command::paired_test:
        cli_detail::run_paired(cfg, result.written);
        break;
      case Command::synth: {
        const auto out = generate_dataset(cli_detail::load_regime_spec(cfg.spec), cfg.out_dir, cfg.jobs);
        result.written.push_back(out.manifest_path);
        if (out.scores_path) result.written.push_back(*out.scores_path);
        break;
      }
      case Command::all: {
        const RegimeSpec spec = cli_detail::load_regime_spec(cfg.spec);
        const auto dataset_dir = cfg.out_dir / "dataset";
        const auto synth = generate_dataset(spec, dataset_dir, cfg.jobs);
        result.written.push_back(synth.manifest_path);
        const auto a = cli_detail::analyze_dataset(synth.manifest_path, "dataset/manifest.json", cfg, true, true);
        cli_detail::emit_geometry(cfg, a, result.written);
        cli_detail::emit_spectral(cfg, a, result.written);
        if (synth.scores_path) {
          RunConfig paired = cfg;
          paired.scores = *synth.scores_path;
          paired.metric = spec.scores->metric;
          paired.baseline_arm = spec.scores->baseline_arm;
          paired.treatment_arm = spec.scores->treatment_arm;
          cli_detail::run_paired(paired, result.written, "dataset/scores.csv");
        }
        break;
      }
    }
  } catch (const config_error& e) {
    result = {exit_usage, {}, e.what()};
  } catch (const validation_error& e) {
    result = {exit_validation, {}, e.what()};
  } catch (const data_error& e) {
    result = {exit_degenerate, {}, e.what()};
  } catch (const std::exception& e) {
    result = {exit_internal, {}, std::string("internal error: ") + e.what()};
  }
  return result;
}

} // namespace noisediag
