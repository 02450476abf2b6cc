#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gph/common.hpp"
#include "gph/corpus.hpp"
#include "gph/grammar_explanation.hpp"

namespace gph::templates {

/// Named template literals plus a version derived from their contents.
class TemplateSet {
 public:
  /// Templates compiled into the binary.
  static TemplateSet bundled();
  /// Bundled templates with any same-named `<name>.txt` files in `dir` laid on top.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  const std::string& get(const std::string& name) const;
  const std::string& version() const { return version_; }
  const std::map<std::string, std::string>& texts() const { return texts_; }

 private:
  explicit TemplateSet(std::map<std::string, std::string> texts);

  std::map<std::string, std::string> texts_;
  std::string version_;
};

struct InstructionSpec {
  std::string paradigm_display_name;
  std::string language_display_name;
  Audience audience = Audience::Beginner;
  /// (good, bad) pairs shown to the generator; 2 to 4 of them.
  std::vector<std::pair<std::string, std::string>> reference_examples;
  unsigned target_words = 250;
  std::string template_version;
};

enum class ConditionKind { Base, Cot, Gp, GpCot, Control, Textbook, FewShot };

std::string_view to_string(ConditionKind k);
ConditionKind parse_condition_kind(std::string_view s);
bool uses_reasoning(ConditionKind k);

/// One prompting condition. CLI spelling: base, cot, gp:<gen>, gp+cot:<gen>,
/// gpx:<gen>, gpx+cot:<gen> (expert explanations), control, textbook, fewshot<k>.
struct ConditionSpec {
  ConditionKind kind = ConditionKind::Base;
  std::optional<std::string> explanation_source;
  std::optional<unsigned> shots;
  Audience audience = Audience::Beginner;

  static ConditionSpec parse(std::string_view label);
  std::string label() const;
  /// Throws InvalidArgument when fields do not match the kind.
  void validate() const;

  friend bool operator==(const ConditionSpec&, const ConditionSpec&) = default;
};

struct PromptBundle {
  std::optional<std::string> system_text;
  std::string user_text;
  ConditionSpec condition;
  Order order = Order::GoodFirst;
  std::string render_digest;
};

/// Text of the paradigm explanation used in textbook prompts.
struct TextbookEntry {
  std::string paradigm;
  std::string text;
};

/// Renders every prompt the harness sends. All members are pure and safe to
/// call concurrently.
class Renderer {
 public:
  explicit Renderer(TemplateSet templates = TemplateSet::bundled());

  const std::string& template_version() const { return templates_.version(); }

  std::string render_instruction(const InstructionSpec& spec) const;

  PromptBundle render_base(const corpus::MinimalPair& pair, Order order) const;
  PromptBundle render_cot(const corpus::MinimalPair& pair, Order order) const;
  PromptBundle render_with_explanation(const corpus::MinimalPair& pair, Order order,
                                       const GrammarExplanation& explanation,
                                       bool reasoning) const;
  PromptBundle render_control(const corpus::MinimalPair& pair, Order order,
                              const GrammarExplanation& control_explanation) const;
  /// Explanations are sorted by paradigm name, so input order does not matter.
  PromptBundle render_textbook(const corpus::MinimalPair& pair, Order order,
                               std::vector<TextbookEntry> explanations) const;
  /// Shot i (0-based) is shown good-first when i is even, bad-first otherwise.
  PromptBundle render_few_shot(const corpus::MinimalPair& pair, Order order,
                               const std::vector<corpus::MinimalPair>& shots) const;

  /// Optional system turn attached to every judging bundle.
  void set_system_text(std::optional<std::string> text) { system_text_ = std::move(text); }

 private:
  std::string judge_body(const std::string& template_name, const corpus::MinimalPair& pair,
                         Order order) const;
  PromptBundle finish(std::string user_text, ConditionSpec condition, Order order) const;

  TemplateSet templates_;
  std::optional<std::string> system_text_;
};

/// Order in which shot i is displayed.
Order shot_order(std::size_t index);

/// Number of lines in `text` that begin with `prefix`.
std::size_t count_lines_with_prefix(std::string_view text, std::string_view prefix);

}  // namespace gph::templates
