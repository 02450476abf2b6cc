#include "gph/templates.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "gph/util.hpp"

namespace gph::templates {

const std::map<std::string, std::string>& bundled_template_texts();  // generated

namespace {

ConditionSpec spec_of(ConditionKind kind) {
  ConditionSpec c;
  c.kind = kind;
  return c;
}

std::string version_of(const std::map<std::string, std::string>& texts) {
  std::vector<std::string> fields;
  for (const auto& [name, text] : texts) {
    fields.push_back(name);
    fields.push_back(text);
  }
  return "tpl-" + field_digest(fields).substr(0, 12);
}

std::string strip_final_newline(std::string text) {
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (!text.empty() && text.back() == '\r') text.pop_back();
  return text;
}

}  // namespace

TemplateSet::TemplateSet(std::map<std::string, std::string> texts)
    : texts_(std::move(texts)), version_(version_of(texts_)) {}

TemplateSet TemplateSet::bundled() {
  std::map<std::string, std::string> texts;
  for (const auto& [name, text] : bundled_template_texts()) texts[name] = strip_final_newline(text);
  return TemplateSet(std::move(texts));
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::FileUnreadable, "template directory '" + dir.string() + "' not found");
  auto texts = bundled().texts_;
  for (auto& [name, text] : texts) {
    auto file = dir / (name + ".txt");
    if (std::filesystem::exists(file)) text = strip_final_newline(read_file(file));
  }
  return TemplateSet(std::move(texts));
}

const std::string& TemplateSet::get(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw Error(ErrorCode::InvalidArgument, "no template named " + name);
  return it->second;
}

std::string_view to_string(ConditionKind k) {
  switch (k) {
    case ConditionKind::Base: return "BASE";
    case ConditionKind::Cot: return "COT";
    case ConditionKind::Gp: return "GP";
    case ConditionKind::GpCot: return "GP_COT";
    case ConditionKind::Control: return "CONTROL";
    case ConditionKind::Textbook: return "TEXTBOOK";
    case ConditionKind::FewShot: return "FEW_SHOT";
  }
  return "BASE";
}

ConditionKind parse_condition_kind(std::string_view s) {
  for (auto k : {ConditionKind::Base, ConditionKind::Cot, ConditionKind::Gp, ConditionKind::GpCot,
                 ConditionKind::Control, ConditionKind::Textbook, ConditionKind::FewShot})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown condition kind '" + std::string(s) + "'");
}

bool uses_reasoning(ConditionKind k) { return k == ConditionKind::Cot || k == ConditionKind::GpCot; }

ConditionSpec ConditionSpec::parse(std::string_view label) {
  ConditionSpec c;
  auto fail = [&] {
    throw Error(ErrorCode::InvalidArgument, "unknown condition '" + std::string(label) + "'");
  };
  if (label == "base") {
    c.kind = ConditionKind::Base;
  } else if (label == "cot") {
    c.kind = ConditionKind::Cot;
  } else if (label == "control") {
    c.kind = ConditionKind::Control;
  } else if (label == "textbook") {
    c.kind = ConditionKind::Textbook;
  } else if (label.rfind("fewshot", 0) == 0) {
    c.kind = ConditionKind::FewShot;
    auto digits = label.substr(7);
    if (digits.empty()) {
      c.shots = 3;
    } else {
      if (digits.size() > 4 ||
          !std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
        fail();
      c.shots = static_cast<unsigned>(std::stoul(std::string(digits)));
      if (*c.shots == 0) fail();
    }
  } else {
    auto colon = label.find(':');
    if (colon == std::string_view::npos || colon + 1 == label.size()) fail();
    auto family = label.substr(0, colon);
    if (family == "gp") {
      c.kind = ConditionKind::Gp;
    } else if (family == "gp+cot") {
      c.kind = ConditionKind::GpCot;
    } else if (family == "gpx") {
      c.kind = ConditionKind::Gp;
      c.audience = Audience::Expert;
    } else if (family == "gpx+cot") {
      c.kind = ConditionKind::GpCot;
      c.audience = Audience::Expert;
    } else {
      fail();
    }
    c.explanation_source = std::string(label.substr(colon + 1));
  }
  return c;
}

std::string ConditionSpec::label() const {
  const char* x = audience == Audience::Expert ? "x" : "";
  switch (kind) {
    case ConditionKind::Base: return "base";
    case ConditionKind::Cot: return "cot";
    case ConditionKind::Control: return "control";
    case ConditionKind::Textbook: return "textbook";
    case ConditionKind::FewShot: return fmt::format("fewshot{}", shots.value_or(3));
    case ConditionKind::Gp: return fmt::format("gp{}:{}", x, explanation_source.value_or(""));
    case ConditionKind::GpCot: return fmt::format("gp{}+cot:{}", x, explanation_source.value_or(""));
  }
  return "base";
}

void ConditionSpec::validate() const {
  bool gp = kind == ConditionKind::Gp || kind == ConditionKind::GpCot;
  if (gp != explanation_source.has_value())
    throw Error(ErrorCode::InvalidArgument,
                "explanation_source must be set exactly for GP conditions");
  if (gp && explanation_source->empty())
    throw Error(ErrorCode::InvalidArgument, "explanation_source is empty");
  if ((kind == ConditionKind::FewShot) != shots.has_value())
    throw Error(ErrorCode::InvalidArgument, "shots must be set exactly for FEW_SHOT");
  if (shots && *shots == 0) throw Error(ErrorCode::InvalidArgument, "shots must be positive");
  if (!gp && audience != Audience::Beginner)
    throw Error(ErrorCode::InvalidArgument, "audience applies to GP conditions only");
}

Order shot_order(std::size_t index) { return index % 2 == 0 ? Order::GoodFirst : Order::BadFirst; }

std::size_t count_lines_with_prefix(std::string_view text, std::string_view prefix) {
  std::size_t n = 0;
  for (auto line : split_lines(text))
    if (line.substr(0, prefix.size()) == prefix) ++n;
  return n;
}

Renderer::Renderer(TemplateSet templates) : templates_(std::move(templates)) {}

std::string Renderer::render_instruction(const InstructionSpec& spec) const {
  if (spec.reference_examples.size() < 2 || spec.reference_examples.size() > 4)
    throw Error(ErrorCode::InvalidArgument, "instruction needs 2 to 4 reference examples");
  if (spec.target_words == 0) throw Error(ErrorCode::InvalidArgument, "target_words must be > 0");

  const auto& example_tmpl = templates_.get("instruction_example");
  std::string examples;
  for (const auto& [good, bad] : spec.reference_examples) {
    if (!examples.empty()) examples += "\n\n";
    examples += substitute(example_tmpl, {{"good", good}, {"bad", bad}});
  }
  auto words = std::to_string(spec.target_words);
  return substitute(templates_.get("instruction"),
                    {{"audience", audience_phrase(spec.audience)},
                     {"paradigm", spec.paradigm_display_name},
                     {"language", spec.language_display_name},
                     {"examples", examples},
                     {"target_words", words}});
}

std::string Renderer::judge_body(const std::string& template_name, const corpus::MinimalPair& pair,
                                 Order order) const {
  const auto& a = order == Order::GoodFirst ? pair.good : pair.bad;
  const auto& b = order == Order::GoodFirst ? pair.bad : pair.good;
  return substitute(templates_.get(template_name), {{"sentence_a", a}, {"sentence_b", b}});
}

PromptBundle Renderer::finish(std::string user_text, ConditionSpec condition, Order order) const {
  if (count_lines_with_prefix(user_text, "Sentence A:") != 1 ||
      count_lines_with_prefix(user_text, "Sentence B:") != 1)
    throw Error(ErrorCode::ScaffoldConflict,
                "prompt must contain exactly one 'Sentence A:' and one 'Sentence B:' line");
  PromptBundle b;
  b.system_text = system_text_;
  b.user_text = std::move(user_text);
  b.condition = std::move(condition);
  b.order = order;
  b.render_digest = field_digest({b.system_text.value_or(""), b.system_text ? "1" : "0",
                                  b.user_text, b.condition.label(), to_string(order),
                                  templates_.version()});
  return b;
}

PromptBundle Renderer::render_base(const corpus::MinimalPair& pair, Order order) const {
  return finish(judge_body("judge_base", pair, order), spec_of(ConditionKind::Base), order);
}

PromptBundle Renderer::render_cot(const corpus::MinimalPair& pair, Order order) const {
  return finish(judge_body("judge_cot", pair, order), spec_of(ConditionKind::Cot), order);
}

PromptBundle Renderer::render_with_explanation(const corpus::MinimalPair& pair, Order order,
                                               const GrammarExplanation& explanation,
                                               bool reasoning) const {
  if (trim(explanation.text).empty())
    throw Error(ErrorCode::EmptyExplanation, "explanation for '" + explanation.paradigm + "'");
  ConditionSpec c;
  c.kind = reasoning ? ConditionKind::GpCot : ConditionKind::Gp;
  c.explanation_source = explanation.generator_model;
  c.audience = explanation.audience;
  auto body = judge_body(reasoning ? "judge_gp_cot" : "judge_base", pair, order);
  return finish(explanation.text + "\n\n" + body, std::move(c), order);
}

PromptBundle Renderer::render_control(const corpus::MinimalPair& pair, Order order,
                                      const GrammarExplanation& control_explanation) const {
  if (trim(control_explanation.text).empty())
    throw Error(ErrorCode::EmptyExplanation, "control explanation");
  return finish(control_explanation.text + "\n\n" + judge_body("judge_base", pair, order),
                spec_of(ConditionKind::Control), order);
}

PromptBundle Renderer::render_textbook(const corpus::MinimalPair& pair, Order order,
                                       std::vector<TextbookEntry> explanations) const {
  if (explanations.empty()) throw Error(ErrorCode::EmptyExplanationSet, "textbook has no entries");
  std::sort(explanations.begin(), explanations.end(),
            [](const auto& l, const auto& r) { return std::tie(l.paradigm, l.text) < std::tie(r.paradigm, r.text); });
  const auto& header = templates_.get("textbook_header");
  std::string compiled;
  for (const auto& e : explanations) {
    if (trim(e.text).empty())
      throw Error(ErrorCode::EmptyExplanation, "textbook entry for '" + e.paradigm + "'");
    if (!compiled.empty()) compiled += "\n\n";
    compiled += substitute(header, {{"paradigm", e.paradigm}});
    compiled += '\n';
    compiled += e.text;
  }
  return finish(compiled + "\n\n" + judge_body("judge_base", pair, order),
                spec_of(ConditionKind::Textbook), order);
}

PromptBundle Renderer::render_few_shot(const corpus::MinimalPair& pair, Order order,
                                       const std::vector<corpus::MinimalPair>& shots) const {
  if (shots.empty()) throw Error(ErrorCode::InvalidArgument, "few-shot prompt needs shots");
  const auto& tmpl = templates_.get("few_shot_example");
  std::string text;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const auto& s = shots[i];
    if (s.id == pair.id || (s.good == pair.good && s.bad == pair.bad))
      throw Error(ErrorCode::ShotOverlapsEvaluationPair, "shot '" + s.id + "'");
    auto so = shot_order(i);
    const auto& a = so == Order::GoodFirst ? s.good : s.bad;
    const auto& b = so == Order::GoodFirst ? s.bad : s.good;
    auto index = std::to_string(i + 1);
    text += substitute(tmpl, {{"index", index},
                              {"sentence_a", a},
                              {"sentence_b", b},
                              {"answer", to_string(correct_letter(so))}});
    text += "\n\n";
  }
  auto c = spec_of(ConditionKind::FewShot);
  c.shots = static_cast<unsigned>(shots.size());
  return finish(text + judge_body("judge_base", pair, order), std::move(c), order);
}

}  // namespace gph::templates
