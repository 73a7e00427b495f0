#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noisediag/cli.hpp"

namespace {

using noisediag::RunConfig;

struct RawOptions {
  std::string out;
  std::vector<std::string> formats{"json", "md"};
  std::vector<std::string> targets{"z", "zg", "d"};
  std::string sidedness = "two-sided";
};

void add_output_options(CLI::App* cmd, RunConfig& cfg, RawOptions& raw) {
  cmd->add_option("--out", raw.out, "Output directory (default: $NOISEDIAG_OUT_DIR or ./noisediag-reports)");
  cmd->add_option("--format", raw.formats, "Report formats: json, md, csv")->delimiter(',');
  cmd->add_option("--jobs", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

void add_dataset_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_flag("--allow-partial", cfg.allow_partial, "Analyze prompts that lack some seeds");
}

void add_spectral_options(CLI::App* cmd, RunConfig& cfg, RawOptions& raw) {
  cmd->add_option("--rho", cfg.rho, "Spatial HF threshold on normalized radius");
  cmd->add_option("--rho-t", cfg.rho_t, "Temporal HF threshold on normalized frequency");
  cmd->add_option("--targets", raw.targets, "Tensors to analyze: z, zg, d")->delimiter(',');
  cmd->add_flag("--prompt-averaged", cfg.prompt_averaged, "Also summarize seed-averaged prompts");
}

void add_paired_options(CLI::App* cmd, RunConfig& cfg, RawOptions& raw) {
  cmd->add_option("--n-bootstrap", cfg.n_bootstrap, "Bootstrap resamples");
  cmd->add_option("--n-permutations", cfg.n_permutations, "Monte-Carlo sign flips (N > 20)");
  cmd->add_option("--ci-level", cfg.ci_level, "Confidence level of the bootstrap interval");
  cmd->add_option("--sidedness", raw.sidedness, "two-sided, greater or less");
  cmd->add_option("--rng-seed", cfg.rng_seed, "Seed for resampling");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-space diagnostics and prompt-level paired tests for diffusion initializations"};
  app.set_version_flag("--version", std::string(noisediag::tool_version));
  app.require_subcommand(1);

  RunConfig cfg;
  RawOptions raw;

  auto* geometry = app.add_subcommand("geometry", "Displacement geometry and directional stability per prompt");
  geometry->add_option("--manifest", cfg.manifest, "Dataset manifest JSON")->required();
  add_dataset_options(geometry, cfg);
  add_output_options(geometry, cfg, raw);

  auto* spectral = app.add_subcommand("spectral", "Spatial / temporal high-frequency ratios of z, z_g and d");
  spectral->add_option("--manifest", cfg.manifest, "Dataset manifest JSON")->required();
  add_dataset_options(spectral, cfg);
  add_spectral_options(spectral, cfg, raw);
  add_output_options(spectral, cfg, raw);

  auto* paired = app.add_subcommand("paired-test", "Seed-averaged paired bootstrap CI and sign-flip test");
  auto* single = paired->add_option("--scores", cfg.scores, "Score CSV with an arm column");
  auto* base_csv = paired->add_option("--baseline-scores", cfg.baseline_scores, "Score CSV of the baseline arm");
  auto* treat_csv = paired->add_option("--treatment-scores", cfg.treatment_scores, "Score CSV of the treatment arm");
  single->excludes(base_csv)->excludes(treat_csv);
  base_csv->needs(treat_csv);
  treat_csv->needs(base_csv);
  paired->add_option("--metric", cfg.metric, "Metric name to test")->required();
  paired->add_option("--baseline", cfg.baseline_arm, "Baseline arm name");
  paired->add_option("--treatment", cfg.treatment_arm, "Treatment arm name");
  add_paired_options(paired, cfg, raw);
  add_output_options(paired, cfg, raw);

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset from a regime spec");
  synth->add_option("--spec", cfg.spec, "Regime spec JSON")->required();
  add_output_options(synth, cfg, raw);

  auto* all = app.add_subcommand("all", "synth, then geometry, spectral and (if scores are planted) paired-test");
  all->add_option("--spec", cfg.spec, "Regime spec JSON")->required();
  add_spectral_options(all, cfg, raw);
  add_paired_options(all, cfg, raw);
  add_output_options(all, cfg, raw);

  try {
    app.parse(argc, argv);
    if (!raw.out.empty()) cfg.out_dir = raw.out;
    cfg.formats.clear();
    for (const auto& f : raw.formats) cfg.formats.insert(noisediag::parse_format(f));
    cfg.targets.clear();
    for (const auto& t : raw.targets) cfg.targets.push_back(noisediag::parse_target(t));
    cfg.sidedness = noisediag::parse_sidedness(raw.sidedness);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return noisediag::exit_usage;
  } catch (const noisediag::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return noisediag::exit_usage;
  }

  if (*geometry) cfg.command = noisediag::Command::geometry;
  else if (*spectral) cfg.command = noisediag::Command::spectral;
  else if (*paired) cfg.command = noisediag::Command::paired_test;
  else if (*synth) cfg.command = noisediag::Command::synth;
  else cfg.command = noisediag::Command::all;

  const auto result = noisediag::run(cfg);
  if (result.exit_code != noisediag::exit_ok) {
    std::cerr << "error: " << result.message << "\n";
    return result.exit_code;
  }
  for (const auto& p : result.written) std::cout << "wrote " << p.generic_string() << "\n";
  return noisediag::exit_ok;
}
