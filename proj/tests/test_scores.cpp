#include <gtest/gtest.h>

#include "support.hpp"

using namespace noisediag;

TEST(Scores, SingleRow) {
  const auto t = parse_scores("prompt_id,seed_id,metric_name,value\np1,s1,temporal_style,0.0769\n");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.rows()[0].prompt_id, "p1");
  EXPECT_EQ(t.rows()[0].metric_name, "temporal_style");
  EXPECT_EQ(t.rows()[0].value, 0.0769);
  EXPECT_EQ(t.rows()[0].arm, "");
}

TEST(Scores, FiveHundredRows) {
  std::string csv = "prompt_id,seed_id,metric_name,value\n";
  for (int p = 0; p < 100; ++p)
    for (int s = 0; s < 5; ++s) csv += "p" + std::to_string(p) + ",s" + std::to_string(s) + ",m," + std::to_string(p * 0.01 + s) + "\n";
  EXPECT_EQ(parse_scores(csv).size(), 500u);
}

TEST(Scores, NanIsParseErrorWithLineNumber) {
  try {
    parse_scores("prompt_id,seed_id,metric_name,value\np1,s1,m,0.1\np1,s2,m,NaN\n", "x.csv");
    FAIL() << "expected parse_error";
  } catch (const parse_error& e) {
    EXPECT_NE(std::string(e.what()).find("x.csv:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,inf\n"), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,abc\n"), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,1.5x\n"), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,\n"), parse_error);
}

TEST(Scores, DuplicateKeyIsTableError) {
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,1\np,s,m,2\n"), table_error);
  // same key in different arms is fine
  EXPECT_EQ(parse_scores("arm,prompt_id,seed_id,metric_name,value\na,p,s,m,1\nb,p,s,m,2\n").size(), 2u);
}

TEST(Scores, HeaderProblems) {
  EXPECT_THROW(parse_scores(""), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,value\n"), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value,extra\n"), parse_error);
  EXPECT_THROW(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m\n"), parse_error);
}

TEST(Scores, CrlfBomAndColumnOrder) {
  const auto t = parse_scores("\xEF\xBB\xBFvalue,metric_name,seed_id,prompt_id\r\n1.5,m,s1,p1\r\n\r\n-2e-3,m,s2,p1\r\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.rows()[0].seed_id, "s1");
  EXPECT_EQ(t.rows()[1].value, -2e-3);
}

TEST(Scores, ArmColumnAndMerge) {
  const auto t = parse_scores("arm,prompt_id,seed_id,metric_name,value\nbaseline,p,s,m,1\nnpnet,p,s,m,2\n");
  EXPECT_EQ(t.arms(), (std::set<std::string>{"baseline", "npnet"}));
  ScoreTable merged;
  merged.merge_as_arm(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,1\n"), "a");
  merged.merge_as_arm(parse_scores("prompt_id,seed_id,metric_name,value\np,s,m,2\n"), "b");
  EXPECT_EQ(merged.arms(), (std::set<std::string>{"a", "b"}));
  EXPECT_THROW(merged.add({"a", "p", "s", "m", 3.0}), table_error);
  EXPECT_THROW(merged.add({"a", "q", "s", "m", std::nan("")}), table_error);
}

TEST(Scores, FormatParseRoundTripProperty) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    ScoreTable t;
    const std::size_t n = 1 + rng.bounded(30);
    const bool with_arm = i % 2 == 0;
    for (std::size_t k = 0; k < n; ++k)
      t.add({with_arm ? (k % 2 ? "b" : "a") : "", "p" + std::to_string(k), "s", "m",
             rng.normal() * std::pow(10.0, static_cast<double>(rng.bounded(20)) - 10.0)});
    const auto back = parse_scores(format_scores(t));
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t k = 0; k < n; ++k) {
      ASSERT_EQ(back.rows()[k].value, t.rows()[k].value);
      ASSERT_EQ(back.rows()[k].arm, t.rows()[k].arm);
    }
  }
}

TEST(Scores, QuotedFields) {
  const auto t = parse_scores("prompt_id,seed_id,metric_name,value\n\"a, b\",s,m,1\n");
  EXPECT_EQ(t.rows()[0].prompt_id, "a, b");
}
