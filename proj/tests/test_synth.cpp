#include <gtest/gtest.h>

#include "support.hpp"

using namespace noisediag;
using testing_support::TempDir;

namespace {

RegimeSpec small_spec(double alpha, double epsilon, std::uint64_t seed = 1) {
  RegimeSpec s;
  s.shape = {2, 8, 12, 16};
  s.n_prompts = 3;
  s.n_seeds = 4;
  s.alpha = alpha;
  s.epsilon = epsilon;
  s.rng_seed = seed;
  return s;
}

std::vector<std::filesystem::path> files_under(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

TEST(Synth, SameSpecGivesByteIdenticalFiles) {
  TempDir a, b;
  auto spec = small_spec(1.0, 0.5, 42);
  spec.scores = ScoreFixtureSpec{};
  generate_dataset(spec, a.path(), 1);
  generate_dataset(spec, b.path(), 3);
  const auto fa = files_under(a.path()), fb = files_under(b.path());
  ASSERT_EQ(fa, fb);
  EXPECT_EQ(fa.size(), 3u * 4u * 2u + 2u);
  for (const auto& f : fa) EXPECT_EQ(testing_support::slurp(a.path() / f), testing_support::slurp(b.path() / f)) << f;
}

TEST(Synth, DifferentSeedsDiffer) {
  const auto g1 = generate_group(small_spec(1.0, 0.5, 1), 0);
  const auto g2 = generate_group(small_spec(1.0, 0.5, 2), 0);
  EXPECT_NE(g1.records[0].z.values()[0], g2.records[0].z.values()[0]);
}

TEST(Synth, LatentsPassCoarseNormalityCheck) {
  RegimeSpec spec = small_spec(1.0, 1.0);
  spec.shape = {4, 16, 40, 64};
  const auto g = generate_group(spec, 0);
  const auto z = g.records[0].z.values();
  const double n = static_cast<double>(z.size());
  ASSERT_GE(z.size(), 100000u);
  const double m = mean(z);
  double var = 0.0;
  for (double x : z) var += (x - m) * (x - m);
  var /= n - 1.0;
  EXPECT_LT(std::abs(m), 4.0 / std::sqrt(n));
  EXPECT_GE(var, 0.95);
  EXPECT_LE(var, 1.05);
}

TEST(Synth, IdsAndLayout) {
  TempDir dir;
  const auto out = generate_dataset(small_spec(1.0, 0.5), dir.path());
  const auto groups = group_by_prompt(load_manifest(out.manifest_path));
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].prompt_id, "p000");
  EXPECT_EQ(groups[2].records[3].seed_id, "s3");
  EXPECT_EQ(padded_id('p', 7, 1500, 3), "p0007");
  EXPECT_EQ(padded_id('s', 3, 12, 1), "s03");
  EXPECT_FALSE(out.scores_path.has_value());
}

TEST(Synth, ReloadedTensorsEqualGeneratedOnes) {
  TempDir dir;
  auto spec = small_spec(0.7, 0.3);
  spec.dtype = StorageType::f32;
  const auto out = generate_dataset(spec, dir.path());
  const auto loaded = group_by_prompt(load_manifest(out.manifest_path));
  const auto fresh = generate_group(spec, 1);
  for (std::size_t s = 0; s < fresh.records.size(); ++s) {
    const auto a = fresh.records[s].z_g.values(), b = loaded[1].records[s].z_g.values();
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Synth, SharedDirectionOnlyGivesUnitDirStabAndDegenerateEvr1) {
  const auto g = generate_group(small_spec(2.0, 0.0), 0);
  EXPECT_NEAR(dir_stab(g), 1.0, 1e-12);
  EXPECT_THROW(evr1(g), degenerate_input_error);
}

TEST(Synth, IsotropicOnlyGivesNearZeroDirStab) {
  RegimeSpec spec = small_spec(0.0, 1.0);
  spec.shape = {4, 16, 40, 64};
  spec.n_seeds = 5;
  const auto g = generate_group(spec, 0);
  EXPECT_LT(std::abs(dir_stab(g)), 0.05);
}

TEST(Synth, DirStabFollowsAnalyticExpectation) {
  // alpha^2/(alpha^2+eps^2) for a few mixes; D = 24576, so pairwise noise is about 0.006
  RegimeSpec spec = small_spec(0.0, 0.0);
  spec.shape = {2, 8, 32, 48};
  spec.n_seeds = 5;
  for (double target : {0.2, 0.5, 0.631, 0.9}) {
    const auto cal = calibrate_regime(target, 0.1, spec.shape);
    EXPECT_NEAR(expected_dir_stab(cal.alpha, cal.epsilon), target, 1e-12);
    spec.alpha = cal.alpha;
    spec.epsilon = cal.epsilon;
    std::vector<double> ds;
    for (std::size_t p = 0; p < 4; ++p) ds.push_back(dir_stab(generate_group(spec, p)));
    EXPECT_NEAR(mean(ds), target, 0.02) << "target " << target;
  }
}

TEST(Synth, CalibratedRelDisp) {
  RegimeSpec spec = small_spec(0.0, 0.0);
  const auto cal = calibrate_regime(0.631, 0.11, spec.shape);
  spec.alpha = cal.alpha;
  spec.epsilon = cal.epsilon;
  const auto g = generate_group(spec, 0);
  for (const auto& r : g.records) EXPECT_NEAR(geometry_metrics(r).rel_disp, 0.11, 0.01);
}

TEST(Synth, ShapingCorrectnessProperty) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    RegimeSpec spec;
    spec.shape = {1 + rng.bounded(2), 4 + rng.bounded(13), 4 + rng.bounded(13), 4 + rng.bounded(13)};
    const double rho = 0.25;
    const double spatial_cut = 0.1 + 0.15 * rng.uniform01();    // <= rho
    const double temporal_cut = 0.25 + 0.5 * rng.uniform01();   // >= rho_t
    spec.shaping.spatial_lowpass = spatial_cut;
    spec.shaping.temporal_highpass = temporal_cut;
    Rng draw(i);
    const auto v = shared_direction(spec, draw);
    ASSERT_NEAR(norm2(v.values()), 1.0, 1e-12);
    ASSERT_LT(sp_hf(v, rho), 1e-20) << spec.shape.to_string();
    ASSERT_NEAR(t_hf(v, rho), 1.0, 1e-12) << spec.shape.to_string();
  }
}

TEST(Synth, InverseShapingFlipsTheSignature) {
  RegimeSpec spec;
  spec.shape = {2, 16, 16, 16};
  spec.shaping.spatial_highpass = 0.5;
  spec.shaping.temporal_lowpass = 0.25;
  Rng draw(4);
  const auto v = shared_direction(spec, draw);
  EXPECT_NEAR(sp_hf(v), 1.0, 1e-12);
  EXPECT_LT(t_hf(v), 1e-20);
}

TEST(Synth, SpecErrors) {
  auto bad = small_spec(0.0, 0.0);
  EXPECT_THROW(bad.validate(), spec_error);
  bad.identity = true;
  EXPECT_NO_THROW(bad.validate());
  bad.alpha = 1.0;
  EXPECT_THROW(bad.validate(), spec_error);

  auto cut = small_spec(1.0, 0.0);
  cut.shaping.spatial_lowpass = 1.0;
  EXPECT_THROW(cut.validate(), spec_error);
  cut.shaping.spatial_lowpass = 0.0;
  EXPECT_THROW(cut.validate(), spec_error);
  auto neg = small_spec(-1.0, 1.0);
  EXPECT_THROW(neg.validate(), spec_error);

  // T = 2 has frequencies {0, 1}: the high-pass keeps only 1, the low-pass only 0
  auto empty = small_spec(1.0, 0.1);
  empty.shape = {1, 2, 4, 4};
  empty.shaping.temporal_highpass = 0.75;
  empty.shaping.temporal_lowpass = 0.5;
  EXPECT_THROW(generate_group(empty, 0), spec_error);
}

TEST(Synth, ParseRegimeSpec) {
  const auto spec = parse_regime_spec(nlohmann::json::parse(R"({
    "shape": [1, 4, 8, 8], "n_prompts": 2, "n_seeds": 3,
    "target_dir_stab": 0.2, "target_rel_disp": 0.05,
    "spectral_shaping": {"temporal_highpass": 0.25}, "rng_seed": 9, "dtype": "f4",
    "scores": {"delta_mean": 0.01}
  })"));
  EXPECT_EQ(spec.shape, (Shape{1, 4, 8, 8}));
  EXPECT_NEAR(expected_dir_stab(spec.alpha, spec.epsilon), 0.2, 1e-12);
  EXPECT_EQ(spec.dtype, StorageType::f32);
  ASSERT_TRUE(spec.scores.has_value());
  EXPECT_EQ(spec.scores->delta_mean, 0.01);
  EXPECT_EQ(spec.scores->treatment_arm, "npnet");

  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": 1, "bogus": 2})")), spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": 1, "target_dir_stab": 0.5})")), spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": 1, "dtype": "i4"})")), spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": 1, "shape": [1, 2]})")), spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": 1, "spectral_shaping": {"band": 0.3}})")),
               spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"alpha": "x"})")), spec_error);
  EXPECT_THROW(parse_regime_spec(nlohmann::json::parse(R"({"target_dir_stab": 1.5, "target_rel_disp": 0.1})")),
               spec_error);
}

TEST(Synth, ScoreFixtureHasPlantedMoments) {
  auto spec = small_spec(1.0, 0.0);
  spec.n_prompts = 100;
  spec.n_seeds = 5;
  spec.scores = ScoreFixtureSpec{};
  const auto samples = seed_average(generate_scores(spec), "temporal_style", "baseline", "npnet");
  ASSERT_EQ(samples.size(), 100u);
  const auto d = deltas_of(samples);
  const double m = mean(d);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.001754, 1e-12);
  EXPECT_NEAR(std::sqrt(ss / 99.0), 0.0123, 1e-12);
}
