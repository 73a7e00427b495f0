#include <cstdlib>
#include <regex>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace noisediag;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

int run_binary(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(NOISEDIAG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig base_config(Command command, const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.command = command;
  cfg.out_dir = out;
  cfg.formats = {OutputFormat::json, OutputFormat::md, OutputFormat::csv};
  return cfg;
}

std::string score_csv(int prompts, int seeds, double shift, std::uint64_t seed) {
  Rng rng(seed);
  std::string csv = "arm,prompt_id,seed_id,metric_name,value\n";
  for (int p = 0; p < prompts; ++p) {
    const double base = 0.077 + 0.02 * rng.normal();
    const double delta = shift + 0.01 * rng.normal();
    for (int s = 0; s < seeds; ++s) {
      csv += "base,p" + std::to_string(p) + ",s" + std::to_string(s) + ",temporal_style," +
             format_roundtrip(base + 0.003 * rng.normal()) + "\n";
      csv += "npnet,p" + std::to_string(p) + ",s" + std::to_string(s) + ",temporal_style," +
             format_roundtrip(base + delta + 0.003 * rng.normal()) + "\n";
    }
  }
  return csv;
}

/// Numbers in a Markdown line, as printed.
std::vector<std::string> numbers_in(const std::string& line) {
  static const std::regex num(R"([-+]?\d+\.\d{6})");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(line.begin(), line.end(), num); it != std::sregex_iterator(); ++it)
    out.push_back(it->str());
  return out;
}

std::string strip_plus(std::string s) { return !s.empty() && s.front() == '+' ? s.substr(1) : s; }

} // namespace

TEST(Cli, GeometryOnTwoByTwoFixture) {
  TempDir dir;
  const auto manifest = testing_support::write_dataset(dir.path(), {"p1", "p2"}, {"s1", "s2"}, Shape{1, 2, 3, 4});
  auto cfg = base_config(Command::geometry, dir / "r");
  cfg.manifest = manifest;
  const auto res = run(cfg);
  ASSERT_EQ(res.exit_code, exit_ok) << res.message;
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "geometry.json"));
  EXPECT_EQ(j["report"], "geometry");
  EXPECT_EQ(j["prompts"].size(), 2u);
  EXPECT_EQ(j["records"].size(), 4u);
  EXPECT_EQ(j["summary"]["n_prompts"], 2);
  EXPECT_EQ(j["tool"]["version"], tool_version);
  EXPECT_EQ(j["rng_seed"], 12345);
  EXPECT_EQ(j["inputs"].size(), 1u + 4u * 2u);
  EXPECT_EQ(j["inputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(j["config"]["command"], "geometry");
  EXPECT_TRUE(std::filesystem::exists(dir / "r" / "geometry.md"));
  const auto rows = load_scores(dir / "r" / "geometry.csv");
  EXPECT_EQ(rows.size(), 4u * 2u + 2u * 3u);
}

TEST(Cli, GeometryMarkdownMatchesJson) {
  TempDir dir;
  const auto manifest = testing_support::write_dataset(dir.path(), {"a", "b", "c"}, {"s1", "s2", "s3"}, Shape{1, 3, 4, 4});
  auto cfg = base_config(Command::geometry, dir / "r");
  cfg.manifest = manifest;
  ASSERT_EQ(run(cfg).exit_code, exit_ok);
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "geometry.json"));
  const std::string md = slurp(dir / "r" / "geometry.md");
  const auto& s = j["summary"];
  std::vector<std::string> expected;
  for (const char* key : {"rel_disp", "cos_sim", "dir_stab", "cv_dnorm", "evr1"}) {
    expected.push_back(fixed6(s[key]["mean"].get<double>()));
    expected.push_back(fixed6(s[key]["median"].get<double>()));
  }
  expected.push_back(fixed6(s["rel_disp"]["prompt_averaged_mean"].get<double>()));
  expected.push_back(fixed6(s["cos_sim"]["prompt_averaged_mean"].get<double>()));
  EXPECT_EQ(numbers_in(md), expected);
}

TEST(Cli, SpectralMarkdownMatchesJson) {
  TempDir dir;
  const auto manifest = testing_support::write_dataset(dir.path(), {"a", "b"}, {"s1", "s2"}, Shape{2, 4, 4, 6});
  auto cfg = base_config(Command::spectral, dir / "r");
  cfg.manifest = manifest;
  cfg.prompt_averaged = true;
  ASSERT_EQ(run(cfg).exit_code, exit_ok);
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "spectral.json"));
  EXPECT_EQ(j["records"].size(), 4u);
  EXPECT_EQ(j["prompt_averaged_summary"]["n_units"], 2);
  const std::string md = slurp(dir / "r" / "spectral.md");
  std::set<std::string> printed;
  for (const auto& n : numbers_in(md)) printed.insert(strip_plus(n));
  for (const auto* section : {"summary", "prompt_averaged_summary"})
    for (const auto& [name, d] : j[section]["metrics"].items())
      for (const char* field : {"mean", "p10", "p90"})
        EXPECT_TRUE(printed.count(fixed6(d[field].get<double>()))) << section << " " << name << " " << field;
}

TEST(Cli, PairedTestMarkdownRow) {
  TempDir dir;
  write_file_bytes(dir / "s.csv", score_csv(30, 5, 0.002, 1));
  auto cfg = base_config(Command::paired_test, dir / "r");
  cfg.scores = dir / "s.csv";
  cfg.baseline_arm = "base";
  cfg.n_permutations = 20000;
  const auto res = run(cfg);
  ASSERT_EQ(res.exit_code, exit_ok) << res.message;
  const std::string md = slurp(dir / "r" / "paired.md");
  EXPECT_NE(md.find("| Metric | base | npnet | Mean Δ | 95% CI (bootstrap) | p (perm.) |"), std::string::npos) << md;
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "paired.json"));
  const auto& r = j["result"];
  const std::string row_prefix = "| temporal_style | ";
  const auto at = md.find(row_prefix);
  ASSERT_NE(at, std::string::npos);
  const auto row = md.substr(at, md.find('\n', at) - at);
  const auto nums = numbers_in(row);
  ASSERT_EQ(nums.size(), 6u) << row;
  EXPECT_EQ(nums[0], fixed6(r["baseline_mean"].get<double>()));
  EXPECT_EQ(nums[1], fixed6(r["treatment_mean"].get<double>()));
  EXPECT_EQ(nums[2], signed6(r["mean_delta"].get<double>()));
  EXPECT_EQ(nums[3], fixed6(r["ci_low"].get<double>()));
  EXPECT_EQ(nums[4], fixed6(r["ci_high"].get<double>()));
  EXPECT_EQ(nums[5], fixed6(r["p_value"].get<double>()));
  EXPECT_EQ(r["n_prompts"], 30);
  EXPECT_EQ(r["n_permutations"], 20000);
  EXPECT_EQ(j["samples"].size(), 30u);
}

TEST(Cli, PairedTestWithSplitArmFiles) {
  TempDir dir;
  write_file_bytes(dir / "b.csv", "prompt_id,seed_id,metric_name,value\np1,s1,m,1\np2,s1,m,2\np3,s1,m,3\n");
  write_file_bytes(dir / "t.csv", "prompt_id,seed_id,metric_name,value\np1,s1,m,1.5\np2,s1,m,2.5\np3,s1,m,3.5\n");
  auto cfg = base_config(Command::paired_test, dir / "r");
  cfg.baseline_scores = dir / "b.csv";
  cfg.treatment_scores = dir / "t.csv";
  cfg.metric = "m";
  ASSERT_EQ(run(cfg).exit_code, exit_ok);
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "paired.json"));
  EXPECT_DOUBLE_EQ(j["result"]["mean_delta"].get<double>(), 0.5);
  EXPECT_EQ(j["result"]["n_permutations"], "exact");
  EXPECT_DOUBLE_EQ(j["result"]["p_value"].get<double>(), 0.25);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  // validation: malformed manifest
  write_file_bytes(dir / "bad.json", "[1, 2");
  auto cfg = base_config(Command::geometry, dir / "r");
  cfg.manifest = dir / "bad.json";
  EXPECT_EQ(run(cfg).exit_code, exit_validation);

  // validation: NaN score
  write_file_bytes(dir / "nan.csv", "arm,prompt_id,seed_id,metric_name,value\nbaseline,p,s,temporal_style,NaN\n");
  auto pc = base_config(Command::paired_test, dir / "r");
  pc.scores = dir / "nan.csv";
  EXPECT_EQ(run(pc).exit_code, exit_validation);

  // degenerate: z_g == z gives zero displacements
  const LatentTensor z(Shape{1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  save_tensor(dir / "z.npy", z);
  write_file_bytes(dir / "same.json", R"({"entries": [
    {"prompt_id": "p", "seed_id": "a", "path_z": "z.npy", "path_zg": "z.npy"},
    {"prompt_id": "p", "seed_id": "b", "path_z": "z.npy", "path_zg": "z.npy"}]})");
  cfg.manifest = dir / "same.json";
  const auto degenerate = run(cfg);
  EXPECT_EQ(degenerate.exit_code, exit_degenerate);
  EXPECT_NE(degenerate.message.find("prompt p"), std::string::npos) << degenerate.message;

  // insufficient: a single prompt in the paired test
  write_file_bytes(dir / "one.csv", "arm,prompt_id,seed_id,metric_name,value\nbaseline,p,s,temporal_style,1\n"
                                    "npnet,p,s,temporal_style,2\n");
  pc.scores = dir / "one.csv";
  EXPECT_EQ(run(pc).exit_code, exit_degenerate);

  // usage: bad threshold
  cfg.manifest = dir / "same.json";
  cfg.rho = 0.0;
  EXPECT_EQ(run(cfg).exit_code, exit_usage);
  cfg.rho = 0.25;
  cfg.manifest.clear();
  EXPECT_EQ(run(cfg).exit_code, exit_usage);
}

TEST(Cli, PartialDatasetListsMissingPairs) {
  TempDir dir;
  testing_support::write_dataset(dir.path(), {"p1", "p2"}, {"s1", "s2", "s3"}, Shape{1, 2, 2, 2});
  auto doc = nlohmann::json::parse(slurp(dir / "manifest.json"));
  doc["entries"].erase(doc["entries"].begin() + 4);  // (p2, s2)
  write_file_bytes(dir / "partial.json", doc.dump());
  auto cfg = base_config(Command::geometry, dir / "r");
  cfg.manifest = dir / "partial.json";
  const auto res = run(cfg);
  EXPECT_EQ(res.exit_code, exit_validation);
  EXPECT_NE(res.message.find("(p2, s2)"), std::string::npos) << res.message;
  cfg.allow_partial = true;
  EXPECT_EQ(run(cfg).exit_code, exit_ok);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  TempDir dir;
  const auto manifest = testing_support::write_dataset(dir.path(), {"a", "b"}, {"s1", "s2", "s3"}, Shape{1, 4, 4, 4});
  write_file_bytes(dir / "s.csv", score_csv(25, 3, 0.0, 2));
  for (Command c : {Command::geometry, Command::spectral, Command::paired_test}) {
    auto cfg = base_config(c, dir / "r1");
    cfg.manifest = manifest;
    cfg.scores = dir / "s.csv";
    cfg.baseline_arm = "base";
    cfg.n_permutations = 3000;
    if (c != Command::paired_test) cfg.scores.clear();
    else cfg.manifest.clear();
    ASSERT_EQ(run(cfg).exit_code, exit_ok);
    cfg.out_dir = dir / "r2";
    cfg.jobs = 3;
    ASSERT_EQ(run(cfg).exit_code, exit_ok);
  }
  for (const char* f : {"geometry.json", "spectral.json", "paired.json", "geometry.md", "paired.csv"})
    EXPECT_EQ(slurp(dir / "r1" / f), slurp(dir / "r2" / f)) << f;
}

TEST(Cli, AllPipelineWritesEveryReport) {
  TempDir dir;
  write_file_bytes(dir / "spec.json", R"({"shape": [1, 8, 8, 8], "n_prompts": 3, "n_seeds": 3,
    "target_dir_stab": 0.5, "target_rel_disp": 0.1, "rng_seed": 3, "scores": {}})");
  auto cfg = base_config(Command::all, dir / "r");
  cfg.spec = dir / "spec.json";
  const auto res = run(cfg);
  ASSERT_EQ(res.exit_code, exit_ok) << res.message;
  for (const char* f : {"dataset/manifest.json", "dataset/scores.csv", "geometry.json", "spectral.json",
                        "paired.json", "paired.md"})
    EXPECT_TRUE(std::filesystem::exists(dir / "r" / f)) << f;
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "paired.json"));
  EXPECT_EQ(j["inputs"][0]["path"], "dataset/scores.csv");
  EXPECT_EQ(j["result"]["treatment_arm"], "npnet");
}

TEST(Cli, SynthRejectsBadSpec) {
  TempDir dir;
  write_file_bytes(dir / "spec.json", R"({"alpha": 1, "spectral_shaping": {"spatial_lowpass": 1.5}})");
  auto cfg = base_config(Command::synth, dir / "r");
  cfg.spec = dir / "spec.json";
  EXPECT_EQ(run(cfg).exit_code, exit_validation);
  cfg.spec = dir / "missing.json";
  EXPECT_EQ(run(cfg).exit_code, exit_validation);
}

TEST(CliBinary, UsageErrorsExitSixtyFour) {
  TempDir dir;
  EXPECT_EQ(run_binary("geometry --bogus-flag", dir / "log"), 64);
  EXPECT_EQ(run_binary("", dir / "log"), 64);
  EXPECT_EQ(run_binary("paired-test --scores x.csv", dir / "log"), 64);  // --metric missing
  EXPECT_EQ(run_binary("spectral --manifest m.json --targets q", dir / "log"), 64);
  EXPECT_EQ(run_binary("--version", dir / "log"), 0);
  EXPECT_NE(slurp(dir / "log").find(tool_version), std::string::npos);
}

TEST(CliBinary, EndToEndWithEnvironmentOutputDir) {
  TempDir dir;
  const auto manifest = testing_support::write_dataset(dir.path(), {"p1", "p2"}, {"s1", "s2"}, Shape{1, 2, 3, 4});
  const std::string cmd = "NOISEDIAG_OUT_DIR=" + (dir / "env-out").string() + " " +
                          std::string(NOISEDIAG_CLI_PATH) + " geometry --manifest " + manifest.string() + " > " +
                          (dir / "log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0) << slurp(dir / "log");
  EXPECT_TRUE(std::filesystem::exists(dir / "env-out" / "geometry.json"));
  EXPECT_EQ(run_binary("geometry --manifest " + (dir / "nope.json").string() + " --out " + (dir / "x").string(),
                       dir / "log"),
            1);
}
