#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gph/analysis.hpp"
#include "test_support.hpp"

namespace gph::analysis {
namespace {

using runner::Judgment;
using testing::make_pair;

const std::filesystem::path kData = GPH_TEST_DATA;

std::vector<Judgment> judgments(int total, int correct, int unparseable) {
  std::vector<Judgment> out;
  for (int i = 0; i < total; ++i) {
    Judgment j;
    j.pair_id = "p" + std::to_string(i / 3);
    j.dataset = Dataset::Blimp;
    j.paradigm = "npi";
    j.category = "NPI";
    j.trial_index = i % 3 + 1;
    j.condition = templates::ConditionSpec::parse("base");
    j.target_model = "m";
    j.order = Order::GoodFirst;
    if (i < correct) {
      j.choice = Choice::A;
    } else if (i < correct + unparseable) {
      j.choice = Choice::Unparseable;
    } else {
      j.choice = Choice::B;
    }
    j.correct = runner::is_correct(j.choice, j.order);
    out.push_back(j);
  }
  return out;
}

ParadigmScore score(const std::string& paradigm, const std::string& category, double acc,
                    const std::string& model = "m", const std::string& cond = "base") {
  ParadigmScore s;
  s.paradigm = paradigm;
  s.category = category;
  s.dataset = Dataset::Blimp;
  s.condition = cond;
  s.target_model = model;
  s.accuracy = acc;
  return s;
}

TEST(Score, Arithmetic) {
  EXPECT_DOUBLE_EQ(score_paradigm(judgments(150, 150, 0)).accuracy, 100.0);
  EXPECT_DOUBLE_EQ(score_paradigm(judgments(150, 75, 0)).accuracy, 50.0);
  auto s = score_paradigm(judgments(45, 37, 3));
  EXPECT_NEAR(s.accuracy, 82.2, 0.05);
  EXPECT_NEAR(s.unparse_rate, 6.7, 0.05);
  EXPECT_EQ(s.n_pairs, 15u);
  EXPECT_EQ(s.n_trials, 45u);
  EXPECT_THROW(score_paradigm({}), Error);
}

TEST(Score, RejectsMixedGroups) {
  auto js = judgments(6, 3, 0);
  js[4].target_model = "other";
  EXPECT_THROW(score_paradigm(js), Error);
  EXPECT_EQ(score_all(js).size(), 2u);
}

TEST(Macro, TwoPointMean) {
  auto m = macro_average({score("a", "c", 60), score("b", "c", 80)});
  ASSERT_EQ(m.categories.size(), 1u);
  EXPECT_DOUBLE_EQ(m.categories[0].accuracy, 70);
  EXPECT_EQ(m.categories[0].paradigm_count, 2u);
}

TEST(Macro, PublishedColumn) {
  for (const auto& c : testing::category_columns(kData)) {
    if (c.dataset != Dataset::Blimp || c.model != "gpt-3.5" || c.condition != "base") continue;
    EXPECT_NEAR(macro_average(testing::as_scores(c)).dataset_average, 67.9, 0.05);
    return;
  }
  FAIL() << "fixture column missing";
}

TEST(Macro, WeightingAgainstBruteForce) {
  std::vector<ParadigmScore> scores{score("a", "x", 60), score("b", "x", 90), score("c", "y", 40),
                                    score("d", "z", 75), score("e", "z", 85)};
  auto before = macro_average(scores);
  scores.push_back(score("a2", "x", 60));
  auto after = macro_average(scores);
  // Brute force: x = mean{60, 90, 60} = 70.
  EXPECT_DOUBLE_EQ(before.categories[0].accuracy, 75);
  EXPECT_DOUBLE_EQ(after.categories[0].accuracy, 70);
  EXPECT_DOUBLE_EQ(after.categories[1].accuracy, before.categories[1].accuracy);
  EXPECT_DOUBLE_EQ(after.categories[2].accuracy, before.categories[2].accuracy);
  EXPECT_DOUBLE_EQ(after.dataset_average, (70.0 + 40 + 80) / 3);
}

TEST(Macro, InvariantToPairCounts) {
  auto a = score("a", "x", 60);
  auto b = score("b", "x", 80);
  a.n_pairs = 5;
  b.n_pairs = 500;
  EXPECT_DOUBLE_EQ(macro_average({a, b}).dataset_average, 70);
}

TEST(Gap, PublishedEnglishBaseRow) {
  auto r = compute_gap({{{"en", "gpt-3.5"}, 66.0}, {{"en", "gpt-4o"}, 78.9}},
                       {{"gpt-3.5", Group::Slm}, {"gpt-4o", Group::Llm}});
  ASSERT_EQ(r.languages.size(), 1u);
  EXPECT_NEAR(r.languages[0].gap, 12.9, 1e-9);
  EXPECT_NEAR(r.cross_language_gap, 12.9, 1e-9);
}

TEST(Gap, GroupMeansAreUnweightedOverModels) {
  auto r = compute_gap({{{"en", "a"}, 60}, {{"en", "b"}, 70}, {{"en", "c"}, 90}, {{"en", "z"}, 1}},
                       {{"a", Group::Slm}, {"b", Group::Slm}, {"c", Group::Llm}});
  EXPECT_DOUBLE_EQ(r.languages[0].slm_avg, 65);
  EXPECT_DOUBLE_EQ(r.languages[0].gap, 25);
}

TEST(Gap, SymmetryAndAntisymmetry) {
  auto f = testing::gap_fixture(kData);
  auto in = testing::gap_inputs(f, "base");
  auto r = compute_gap(in, testing::stand_in_groups());
  auto swapped = compute_gap(in, {{"slm", Group::Llm}, {"llm", Group::Slm}});
  for (std::size_t i = 0; i < r.languages.size(); ++i)
    EXPECT_DOUBLE_EQ(swapped.languages[i].gap, -r.languages[i].gap);
  EXPECT_DOUBLE_EQ(swapped.cross_language_gap, -r.cross_language_gap);
  auto same = compute_gap({{{"en", "a"}, 80}, {{"en", "b"}, 80}}, {{"a", Group::Slm}, {"b", Group::Llm}});
  EXPECT_DOUBLE_EQ(same.cross_language_gap, 0);
}

TEST(Gap, MissingGroupIsAnError) {
  try {
    compute_gap({{{"en", "a"}, 80}, {{"zh", "a"}, 80}, {{"zh", "b"}, 90}},
                {{"a", Group::Slm}, {"b", Group::Llm}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGroup);
  }
}

TEST(Gap, Reduction) {
  EXPECT_NEAR(gap_reduction(13.0, 10.4), 20.0, 1e-9);
  EXPECT_NEAR(gap_reduction(13.0, 5.8), 55.38, 0.01);
  EXPECT_DOUBLE_EQ(gap_reduction(7.0, 7.0), 0.0);
  EXPECT_THROW(gap_reduction(0.0, 1.0), Error);
}

TEST(Paired, ConstantShiftHasUndefinedEffectSize) {
  auto c = paired_comparison({1, 2, 3}, {0, 1, 2});
  EXPECT_DOUBLE_EQ(c.mean_diff, 1.0);
  EXPECT_DOUBLE_EQ(c.sd_diff, 0.0);
  EXPECT_FALSE(c.cohens_d);
  EXPECT_FALSE(c.t_statistic);
  auto same = paired_comparison({4, 5}, {4, 5});
  EXPECT_DOUBLE_EQ(same.mean_diff, 0.0);
  EXPECT_FALSE(same.cohens_d);
}

TEST(Paired, Errors) {
  EXPECT_THROW(paired_comparison({1, 2}, {1}), Error);
  EXPECT_THROW(paired_comparison({1}, {1}), Error);
}

TEST(Paired, InvariantToCommonShift) {
  std::vector<double> a{70, 82, 91, 64, 77}, b{68, 85, 90, 60, 79};
  auto base = paired_comparison(a, b);
  for (auto& v : a) v += 13.5;
  for (auto& v : b) v += 13.5;
  auto shifted = paired_comparison(a, b);
  EXPECT_NEAR(shifted.mean_diff, base.mean_diff, 1e-9);
  EXPECT_NEAR(shifted.sd_diff, base.sd_diff, 1e-9);
  EXPECT_NEAR(*shifted.t_statistic, *base.t_statistic, 1e-9);
  EXPECT_NEAR(*shifted.p_value, *base.p_value, 1e-9);
  EXPECT_NEAR(*shifted.cohens_d, *base.cohens_d, 1e-9);
}

TEST(Paired, AudienceFixtureComparison) {
  auto scores = testing::audience_scores(kData);
  auto c = compare_conditions(scores, "gpb", "gpx");
  EXPECT_EQ(c.n, 36u);
  // Recomputed from the category cells.
  EXPECT_NEAR(c.mean_diff, -1.65, 0.01);
  EXPECT_NEAR(c.sd_diff, 6.167, 0.01);
  EXPECT_NEAR(*c.cohens_d, -0.2675, 0.001);
  EXPECT_NE(format_comparison("gpb", "gpx", c).find("n=36"), std::string::npos);
}

TEST(Alias, Resolution) {
  std::vector<std::string> labels{"base", "gp:son", "gpx:son", "gp+cot:son", "gpx+cot:o1"};
  EXPECT_EQ(resolve_condition_alias("gpb", labels), "gp:son");
  EXPECT_EQ(resolve_condition_alias("gpx", labels), "gpx:son");
  EXPECT_EQ(resolve_condition_alias("gpx+cot", labels), "gpx+cot:o1");
  EXPECT_EQ(resolve_condition_alias("base", labels), "base");
  EXPECT_THROW(resolve_condition_alias("cot", labels), Error);
  labels.push_back("gp:o1");
  EXPECT_THROW(resolve_condition_alias("gpb", labels), Error);
}

TEST(Order, CanonicalConditions) {
  auto got = canonical_condition_order(
      {"fewshot3", "textbook", "gp+cot:o1", "gp:o1", "control", "gp+cot:son", "gp:son", "cot",
       "base", "gpx:son"},
      {"son", "o1"});
  EXPECT_EQ(got, (std::vector<std::string>{"base", "cot", "gp:son", "gp:o1", "gp+cot:son",
                                           "gp+cot:o1", "gpx:son", "control", "textbook",
                                           "fewshot3"}));
  EXPECT_EQ(model_order({"z", "gpt-4o", "a", "gpt-3.5"}, {"gpt-3.5", "gpt-4o"}),
            (std::vector<std::string>{"gpt-3.5", "gpt-4o", "a", "z"}));
}

TEST(Flags, OnDisplayedValuesWithTies) {
  std::vector<Cell> row{{70.04}, {70.01}, {65.0}, {std::nullopt}};
  flag_row(row);
  EXPECT_TRUE(row[0].best);
  EXPECT_TRUE(row[1].best);
  EXPECT_TRUE(row[2].second);
  EXPECT_FALSE(row[3].best || row[3].second);
  std::vector<Cell> single{{42.0}};
  flag_row(single);
  EXPECT_TRUE(single[0].best);
}

TEST(Matrix, PublishedAverageRowAndBestFlag) {
  std::vector<ParadigmScore> scores;
  for (const auto& c : testing::category_columns(kData))
    if (c.dataset == Dataset::Blimp && c.model == "gpt-3.5")
      for (auto& s : testing::as_scores(c)) scores.push_back(s);
  MatrixOptions opt;
  opt.generator_order = {"son", "o1"};
  auto tables = condition_matrix(scores, opt);
  ASSERT_EQ(tables.size(), 1u);
  const auto& t = tables[0];
  EXPECT_EQ(t.columns, (std::vector<std::string>{"base", "cot", "gp:son", "gp:o1", "gp+cot:son",
                                                 "gp+cot:o1"}));
  std::vector<double> expected{67.9, 62.7, 73.6, 72.5, 77.9, 78.4};
  ASSERT_EQ(t.cells.size(), 1u);
  for (std::size_t i = 0; i < expected.size(); ++i)
    EXPECT_NEAR(*t.cells[0][i].value, expected[i], 0.1) << t.columns[i];
  EXPECT_TRUE(t.cells[0][5].best);
  EXPECT_TRUE(t.cells[0][4].second);

  auto cats = category_tables(scores, opt);
  ASSERT_EQ(cats.size(), 1u);
  EXPECT_EQ(cats[0].rows.back(), "Average");
  EXPECT_EQ(cats[0].rows.size(), 9u);
}

runner::RunDirectory fake_run(const std::string& model, const std::string& cond, double p) {
  std::vector<corpus::MinimalPair> pairs;
  llm::MockBackend::AnswerKey key;
  for (auto paradigm : {"npi_a", "npi_b", "island_a"})
    for (int i = 0; i < 10; ++i) {
      pairs.push_back(make_pair(paradigm, i, Dataset::Blimp,
                                std::string(paradigm).rfind("npi", 0) == 0 ? "NPI" : "island"));
      key.emplace(pairs.back().good, pairs.back().bad);
    }
  llm::MockPolicy m;
  m.oracle_accuracy = p;
  llm::Client c(std::make_shared<llm::MockBackend>(m, key));
  runner::RunRequest req;
  req.slice = pairs;
  req.condition = templates::ConditionSpec::parse(cond);
  req.target_model = model;
  req.run_id = runner::run_id_for(model, req.condition);
  req.corpus_digests = {{"BLIMP", "d1"}};
  auto out = runner::execute(req, c, templates::Renderer(), {}, {}, std::nullopt, testing::fixed_clock());
  return {out.manifest, out.judgments};
}

TEST(Report, PermutationInvariantBytes) {
  std::vector<runner::RunDirectory> runs{fake_run("gpt-3.5", "base", 0.6), fake_run("gpt-3.5", "cot", 0.7),
                                         fake_run("gpt-4o", "base", 0.9), fake_run("gpt-4o", "cot", 0.95)};
  ReportOptions opt;
  opt.groups = {{"gpt-3.5", Group::Slm}, {"gpt-4o", Group::Llm}};
  opt.gap = true;
  opt.comparisons = {{"base", "cot"}};
  auto ref = build_report(runs, opt);
  std::mt19937 rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(runs.begin(), runs.end(), rng);
    auto again = build_report(runs, opt);
    EXPECT_EQ(again.markdown, ref.markdown);
    EXPECT_EQ(again.csv, ref.csv);
  }
  EXPECT_NE(ref.markdown.find("gap"), std::string::npos);
}

TEST(Report, SingleRunMatrix) {
  auto r = build_report({fake_run("m", "base", 0.8)}, {});
  EXPECT_NE(r.markdown.find("**"), std::string::npos);
  auto back = category_scores_from_csv(r.csv);
  EXPECT_EQ(back.size(), 2u);
}

TEST(Report, CorpusMismatchNeedsForce) {
  auto a = fake_run("m", "base", 0.8);
  auto b = fake_run("m", "cot", 0.8);
  b.manifest.corpus_digests["BLIMP"] = "d2";
  try {
    build_report({a, b}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorpusMismatch);
  }
  ReportOptions force;
  force.force_mix = true;
  EXPECT_NO_THROW(build_report({a, b}, force));
}

TEST(Report, CsvRoundTripFeedsCompare) {
  std::vector<runner::RunDirectory> runs{fake_run("m", "base", 0.6), fake_run("m", "cot", 0.9),
                                         fake_run("n", "base", 0.7), fake_run("n", "cot", 0.8)};
  auto r = build_report(runs, {});
  auto from_csv = compare_conditions(category_scores_from_csv(r.csv), "base", "cot");
  std::vector<ParadigmScore> direct;
  for (const auto& run : runs) {
    auto s = score_all(run.judgments);
    direct.insert(direct.end(), s.begin(), s.end());
  }
  // Category rows are printed with enough precision to agree closely.
  auto c = compare_conditions(direct, "base", "cot");
  EXPECT_EQ(from_csv.n, 4u);
  EXPECT_NEAR(from_csv.mean_diff, c.mean_diff, 1e-6);
}

}  // namespace
}  // namespace gph::analysis
