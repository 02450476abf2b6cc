#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gph/templates.hpp"
#include "gph/util.hpp"
#include "test_support.hpp"

namespace gph::templates {
namespace {

using corpus::MinimalPair;
using testing::make_pair;

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  for (auto l : split_lines(s)) out.emplace_back(l);
  return out;
}

/// Indices of lines that differ between two texts with the same line count.
std::vector<std::size_t> differing_lines(const std::string& a, const std::string& b) {
  auto la = lines_of(a), lb = lines_of(b);
  EXPECT_EQ(la.size(), lb.size());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(la.size(), lb.size()); ++i)
    if (la[i] != lb[i]) out.push_back(i);
  return out;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

GrammarExplanation explanation(const std::string& text, const std::string& paradigm = "p") {
  GrammarExplanation e;
  e.paradigm = paradigm;
  e.dataset = Dataset::Blimp;
  e.generator_model = "son";
  e.text = text;
  return e;
}

InstructionSpec left_branch_spec(Audience audience) {
  InstructionSpec s;
  s.paradigm_display_name = "left branch island echo question";
  s.language_display_name = "English";
  s.audience = audience;
  s.reference_examples = {{"Irene had messed up whose rug?", "Whose had Irene messed up rug?"},
                          {"Sarah fixed whose car?", "Whose did Sarah fix car?"}};
  s.target_words = 250;
  s.template_version = "v";
  return s;
}

TEST(Templates, BundledVersionIsStableAndContentDerived) {
  auto a = TemplateSet::bundled();
  auto b = TemplateSet::bundled();
  EXPECT_EQ(a.version(), b.version());
  EXPECT_EQ(a.version().rfind("tpl-", 0), 0u);
  testing::TempDir dir;
  write_file_atomic(dir / "judge_base.txt",
                    "Pick one.\nSentence A: {sentence_a}\nSentence B: {sentence_b}\n");
  auto c = TemplateSet::with_overrides(dir.path());
  EXPECT_NE(c.version(), a.version());
  EXPECT_EQ(c.get("judge_cot"), a.get("judge_cot"));
  EXPECT_THROW(TemplateSet::with_overrides(dir / "missing"), Error);
}

TEST(Instruction, BeginnerTaskLine) {
  Renderer r;
  auto text = r.render_instruction(left_branch_spec(Audience::Beginner));
  EXPECT_NE(text.find("Task: Explain, to a novice learner, 'left branch island echo question' in "
                      "English (no need to use this term)."),
            std::string::npos);
  EXPECT_NE(text.find("Target length: about 250 words"), std::string::npos);
  EXPECT_NE(text.find("Good sentence: Sarah fixed whose car?"), std::string::npos);
}

TEST(Instruction, ExpertDiffersOnlyInAudienceSlots) {
  Renderer r;
  auto beginner = r.render_instruction(left_branch_spec(Audience::Beginner));
  auto expert = r.render_instruction(left_branch_spec(Audience::Expert));
  std::string replaced = beginner;
  for (auto pos = replaced.find("novice learner"); pos != std::string::npos;
       pos = replaced.find("novice learner", pos))
    replaced.replace(pos, 14, "expert linguist");
  EXPECT_EQ(replaced, expert);
  EXPECT_EQ(occurrences(beginner, "novice learner"), 3u);
}

TEST(Instruction, DeterministicAndValidated) {
  Renderer r;
  auto spec = left_branch_spec(Audience::Beginner);
  EXPECT_EQ(r.render_instruction(spec), r.render_instruction(spec));
  spec.reference_examples.resize(1);
  EXPECT_THROW(r.render_instruction(spec), Error);
  spec = left_branch_spec(Audience::Beginner);
  spec.target_words = 0;
  EXPECT_THROW(r.render_instruction(spec), Error);
}

TEST(Base, OrderPlacesGoodSentence) {
  Renderer r;
  auto p = make_pair("npi", 1);
  auto g = r.render_base(p, Order::GoodFirst);
  auto b = r.render_base(p, Order::BadFirst);
  EXPECT_NE(g.user_text.find("Sentence A: " + p.good), std::string::npos);
  EXPECT_NE(b.user_text.find("Sentence B: " + p.good), std::string::npos);
  EXPECT_NE(g.user_text.find("Please respond with just A or B"), std::string::npos);
  EXPECT_EQ(differing_lines(g.user_text, b.user_text), (std::vector<std::size_t>{1, 2}));
  EXPECT_NE(g.render_digest, b.render_digest);
}

TEST(Cot, MarkerInstructionAppearsOnce) {
  Renderer r;
  auto p = make_pair("npi", 1);
  auto cot = r.render_cot(p, Order::GoodFirst).user_text;
  EXPECT_EQ(occurrences(cot, "***"), 1u);
  EXPECT_NE(cot.find("write `***` followed by either `A` or `B`"), std::string::npos);
  // Relative to base: a preamble line is added and the answer-format line changes.
  auto base = lines_of(r.render_base(p, Order::GoodFirst).user_text);
  auto lines = lines_of(cot);
  ASSERT_EQ(lines.size(), base.size() + 1);
  EXPECT_TRUE(std::equal(base.begin(), base.end() - 1, lines.begin() + 1));
  EXPECT_NE(lines.back(), base.back());
}

TEST(Gp, ExplanationThenBlankLineThenBaseBody) {
  Renderer r;
  auto p = make_pair("npi", 2);
  auto e = explanation("Use 'ever' only after negation.");
  auto gp = r.render_with_explanation(p, Order::BadFirst, e, false);
  EXPECT_EQ(gp.user_text, e.text + "\n\n" + r.render_base(p, Order::BadFirst).user_text);
  EXPECT_EQ(gp.condition.kind, ConditionKind::Gp);
  EXPECT_EQ(gp.condition.label(), "gp:son");
  auto gpcot = r.render_with_explanation(p, Order::BadFirst, e, true).user_text;
  EXPECT_NE(gpcot.find(e.text), std::string::npos);
  EXPECT_NE(gpcot.find("***"), std::string::npos);
  e.text = " \n";
  try {
    r.render_with_explanation(p, Order::GoodFirst, e, false);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EmptyExplanation);
  }
}

TEST(Control, SameStructureAsGpDifferentDigest) {
  Renderer r;
  auto p = make_pair("npi", 3);
  auto relevant = explanation("Rule one.\nRule two.");
  auto control = explanation("Quotatives can be null.\nLike so.", "null_quotative");
  auto gp = r.render_with_explanation(p, Order::GoodFirst, relevant, false);
  auto c = r.render_control(p, Order::GoodFirst, control);
  EXPECT_NE(gp.render_digest, c.render_digest);
  EXPECT_EQ(c.condition.kind, ConditionKind::Control);
  EXPECT_EQ(differing_lines(gp.user_text, c.user_text), (std::vector<std::size_t>{0, 1}));
}

TEST(Textbook, HeadersSortedAndPermutationInvariant) {
  Renderer r;
  auto p = make_pair("npi", 4);
  std::vector<TextbookEntry> entries;
  for (int i = 0; i < 67; ++i) entries.push_back({"paradigm_" + std::to_string(100 + i), "Text " + std::to_string(i)});
  auto a = r.render_textbook(p, Order::GoodFirst, entries);
  std::mt19937 rng(3);
  std::shuffle(entries.begin(), entries.end(), rng);
  auto b = r.render_textbook(p, Order::GoodFirst, entries);
  EXPECT_EQ(a.user_text, b.user_text);
  EXPECT_EQ(count_lines_with_prefix(a.user_text, "## Explanation: "), 67u);
  EXPECT_THROW(r.render_textbook(p, Order::GoodFirst, {}), Error);
}

TEST(Textbook, SingleEntryIsGpPlusHeader) {
  Renderer r;
  auto p = make_pair("npi", 4);
  auto e = explanation("Only one rule.", "npi");
  auto tb = r.render_textbook(p, Order::BadFirst, {{"npi", e.text}});
  auto gp = r.render_with_explanation(p, Order::BadFirst, e, false);
  EXPECT_EQ(tb.user_text, "## Explanation: npi\n" + gp.user_text);
}

TEST(FewShot, ThreeSolvedExamplesWithTheirOwnLetters) {
  Renderer r;
  auto p = make_pair("npi", 0);
  std::vector<MinimalPair> shots = {make_pair("npi", 10), make_pair("npi", 11), make_pair("npi", 12)};
  auto text = r.render_few_shot(p, Order::GoodFirst, shots).user_text;
  EXPECT_EQ(count_lines_with_prefix(text, "More grammatically acceptable: "), 3u);
  auto question = text.find("Which sentence");
  for (std::size_t i = 0; i < shots.size(); ++i) {
    auto so = shot_order(i);
    auto letter = std::string(to_string(correct_letter(so)));
    auto block = text.find("Example " + std::to_string(i + 1) + ":");
    ASSERT_LT(block, question);
    auto good_slot = text.find(shots[i].good, block);
    auto tag = text.rfind(so == Order::GoodFirst ? "(A) " : "(B) ", good_slot);
    EXPECT_EQ(tag + 4, good_slot);
    EXPECT_EQ(text.find("More grammatically acceptable: " + letter, block),
              text.find("More grammatically acceptable: ", block));
  }
}

TEST(FewShot, OverlapWithEvaluationPairRejected) {
  Renderer r;
  auto p = make_pair("npi", 0);
  try {
    r.render_few_shot(p, Order::GoodFirst, {make_pair("npi", 1), p});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShotOverlapsEvaluationPair);
  }
}

TEST(Scaffold, ExplanationWithSentenceLineConflicts) {
  Renderer r;
  auto p = make_pair("npi", 0);
  try {
    r.render_with_explanation(p, Order::GoodFirst, explanation("Sentence A: is a trap"), false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScaffoldConflict);
  }
}

TEST(Scaffold, EveryJudgingPromptHasExactlyOneSentenceLinePair) {
  Renderer r;
  for (int i = 0; i < 20; ++i) {
    auto p = make_pair("npi", i);
    for (auto order : {Order::GoodFirst, Order::BadFirst}) {
      std::vector<PromptBundle> bundles = {
          r.render_base(p, order), r.render_cot(p, order),
          r.render_with_explanation(p, order, explanation("x"), false),
          r.render_with_explanation(p, order, explanation("x"), true),
          r.render_control(p, order, explanation("y")),
          r.render_textbook(p, order, {{"a", "x"}, {"b", "y"}}),
          r.render_few_shot(p, order, {make_pair("npi", 100), make_pair("npi", 101)})};
      for (const auto& b : bundles) {
        EXPECT_EQ(count_lines_with_prefix(b.user_text, "Sentence A:"), 1u);
        EXPECT_EQ(count_lines_with_prefix(b.user_text, "Sentence B:"), 1u);
      }
    }
  }
}

TEST(Condition, LabelsRoundTrip) {
  for (std::string label : {"base", "cot", "gp:son", "gp+cot:o1", "gpx:son", "gpx+cot:son", "control",
                            "textbook", "fewshot3", "fewshot5"}) {
    auto c = ConditionSpec::parse(label);
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.label(), label);
  }
  EXPECT_EQ(ConditionSpec::parse("fewshot").shots, 3u);
  EXPECT_EQ(ConditionSpec::parse("gpx:son").audience, Audience::Expert);
  EXPECT_THROW(ConditionSpec::parse("gp"), Error);
  EXPECT_THROW(ConditionSpec::parse("banana"), Error);
  EXPECT_TRUE(uses_reasoning(ConditionKind::GpCot));
  EXPECT_FALSE(uses_reasoning(ConditionKind::Textbook));
}

TEST(Renderer, SystemTextEntersDigest) {
  Renderer r;
  auto p = make_pair("npi", 0);
  auto plain = r.render_base(p, Order::GoodFirst);
  r.set_system_text("You are a careful linguist.");
  auto sys = r.render_base(p, Order::GoodFirst);
  EXPECT_EQ(sys.user_text, plain.user_text);
  EXPECT_NE(sys.render_digest, plain.render_digest);
  EXPECT_EQ(sys.system_text, "You are a careful linguist.");
}

}  // namespace
}  // namespace gph::templates
