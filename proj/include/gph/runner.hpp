#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gph/common.hpp"
#include "gph/corpus.hpp"
#include "gph/grammar_explanation.hpp"
#include "gph/llm.hpp"
#include "gph/templates.hpp"
#include "gph/util.hpp"

namespace gph::runner {

using templates::ConditionKind;
using templates::ConditionSpec;

enum class OrderProvenance { FixedGoodFirst, FixedBadFirst, Randomized };

std::string_view to_string(OrderProvenance p);

struct TrialPlan {
  std::string pair_id;
  int trial_index = 1;
  Order order = Order::GoodFirst;
  OrderProvenance order_provenance = OrderProvenance::FixedGoodFirst;
  /// The random bit behind trial 3 (0 = good first); unset for fixed trials.
  std::optional<int> rng_draw;

  friend bool operator==(const TrialPlan&, const TrialPlan&) = default;
};

/// First bit of SHA-256(run_seed ‖ pair_id).
int trial3_bit(std::uint64_t run_seed, std::string_view pair_id);

/// Trials 1 and 2 are fixed good-first and bad-first; trial 3 is seeded.
std::vector<TrialPlan> plan_trials(const corpus::MinimalPair& pair, std::uint64_t run_seed);

enum class ParsePath { Strict, Fallback, Marker, MarkerFallback, None };

std::string_view to_string(ParsePath p);
ParsePath parse_parse_path(std::string_view s);

struct ParsedAnswer {
  Choice choice = Choice::Unparseable;
  ParsePath path = ParsePath::None;

  friend bool operator==(const ParsedAnswer&, const ParsedAnswer&) = default;
};

/// Extracts the A/B choice from a raw model response. Reasoning conditions
/// look for the last `***` marker; the rest expect a bare letter.
ParsedAnswer parse_answer(ConditionKind kind, std::string_view raw);

struct Judgment {
  std::string run_id;
  std::string pair_id;
  Dataset dataset = Dataset::Custom;
  std::string language;
  std::string paradigm;
  std::string category;
  int trial_index = 1;
  Order order = Order::GoodFirst;
  ConditionSpec condition;
  std::string target_model;
  Choice choice = Choice::Unparseable;
  bool correct = false;
  std::string raw_response_digest;
  ParsePath parse_path = ParsePath::None;
  /// Set when the backend failed for this trial.
  std::optional<std::string> error;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

/// correct ⇔ the choice names the slot holding the grammatical sentence.
bool is_correct(Choice choice, Order order);

std::string to_json_line(const Judgment& j);
Judgment parse_judgment_line(std::string_view line);
std::string judgments_jsonl(const std::vector<Judgment>& judgments);
std::vector<Judgment> parse_judgments(std::string_view text);

struct RunManifest {
  std::string run_id;
  /// corpus digest of each dataset touched by the slice.
  std::map<std::string, std::string> corpus_digests;
  /// Digest of the evaluated slice itself.
  std::string slice_digest;
  std::vector<std::string> conditions;
  std::vector<std::string> target_models;
  std::uint64_t run_seed = 0;
  std::string template_version;
  std::vector<std::string> backend_kinds;
  std::string backend_description;
  std::string config_fingerprint;
  double temperature = 0.0;
  unsigned max_output_tokens = 0;
  std::vector<std::string> explanation_keys;
  std::size_t pair_count = 0;
  std::size_t judgment_count = 0;
  std::size_t failed_trials = 0;
  std::string started_at;
  std::optional<std::string> finished_at;
};

std::string manifest_json(const RunManifest& m);
RunManifest parse_manifest(std::string_view text);

/// Explanations and demonstrations a condition needs, resolved beforehand.
struct ConditionInputs {
  /// (dataset, paradigm) -> explanation, for GP and GP_COT.
  std::map<std::pair<Dataset, std::string>, GrammarExplanation> explanations;
  std::optional<GrammarExplanation> control;
  /// Per dataset, every paradigm's explanation, for TEXTBOOK.
  std::map<Dataset, std::vector<templates::TextbookEntry>> textbook;
  /// (dataset, paradigm) -> demonstration pairs, for FEW_SHOT.
  std::map<std::pair<Dataset, std::string>, std::vector<corpus::MinimalPair>> shots;
};

struct ExecuteOptions {
  std::size_t workers = 4;
  double temperature = 0.0;
  unsigned max_tokens_answer = 16;
  unsigned max_tokens_reasoning = 2048;
};

unsigned max_tokens_for(ConditionKind kind, const ExecuteOptions& options);

/// Renders the prompt for one trial.
templates::PromptBundle render_trial(const templates::Renderer& renderer,
                                     const corpus::MinimalPair& pair, Order order,
                                     const ConditionSpec& condition,
                                     const ConditionInputs& inputs);

struct RunRequest {
  std::string run_id;
  std::vector<corpus::MinimalPair> slice;
  ConditionSpec condition;
  std::string target_model;
  std::uint64_t run_seed = 0;
  std::map<std::string, std::string> corpus_digests;
  std::string config_fingerprint;
};

struct RunOutcome {
  RunManifest manifest;
  std::vector<Judgment> judgments;
  /// True when a finished run with the same fingerprint was found on disk.
  bool reused = false;
};

/// Runs 3 trials per pair. Backend failures become UNPARSEABLE judgments with
/// an error annotation; a replay miss or missing credentials abort the run.
/// With a run directory, the manifest is written before the first request and
/// judgments.jsonl when all trials are done.
RunOutcome execute(const RunRequest& request, llm::Client& client,
                   const templates::Renderer& renderer, const ConditionInputs& inputs,
                   const ExecuteOptions& options,
                   const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                   const Clock& clock = system_clock());

/// Directory-safe run id for (target, condition).
std::string run_id_for(std::string_view target_model, const ConditionSpec& condition);

struct RunDirectory {
  RunManifest manifest;
  std::vector<Judgment> judgments;
};

/// Reads a finished run. Throws MalformedRecord when it is incomplete.
RunDirectory load_run(const std::filesystem::path& dir);
/// Every finished run under `runs_root`, sorted by run id.
std::vector<RunDirectory> load_runs(const std::filesystem::path& runs_root);

}  // namespace gph::runner
