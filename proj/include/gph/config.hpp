#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gph/analysis.hpp"
#include "gph/corpus.hpp"
#include "gph/llm.hpp"

namespace gph::config {

struct ChallengingRule {
  /// JSON file: {"<model key>": {"<paradigm>": accuracy, ...}, ...}
  std::filesystem::path scores;
  std::string scores_key;
  double threshold = 90.0;
  corpus::ThresholdMode mode = corpus::ThresholdMode::AtMost;
};

struct CorpusSource {
  std::filesystem::path path;
  corpus::SourceFormat format = corpus::SourceFormat::CanonicalJsonl;
  /// Explicit paradigm list; empty means every paradigm unless `challenging`.
  std::vector<std::string> paradigms;
  std::optional<ChallengingRule> challenging;
};

struct ModelSpec {
  std::string label;
  std::string backend;
  /// Provider model id; defaults to the label.
  std::string model;
  std::optional<analysis::Group> group;
};

/// kind is one of openai, anthropic, mock-oracle, mock-scripted, replay.
struct BackendSpec {
  std::string kind;
  std::string base_url;
  std::string api_key_env;
  double requests_per_minute = 0;
  unsigned max_retries = 4;
  unsigned base_delay_ms = 500;
  int timeout_seconds = 120;
  std::optional<double> oracle_p;
  std::optional<std::uint64_t> oracle_seed;
  std::optional<std::string> scripted_default;
  std::optional<std::filesystem::path> scripted_file;
  std::optional<std::filesystem::path> replay_path;
};

/// Parses "mock-oracle:p=0.8[,seed=N]", "mock-scripted:always=A",
/// "mock-scripted:file=<json>", "replay:<path>", or a named provider kind.
BackendSpec parse_backend_override(std::string_view text);

struct RunConfig {
  std::vector<CorpusSource> corpora;
  std::size_t per_paradigm_n = 50;
  std::vector<std::string> conditions = {"base"};
  std::vector<ModelSpec> generators;
  std::vector<ModelSpec> targets;
  std::map<std::string, BackendSpec> backends;
  std::vector<Audience> audiences;
  std::optional<std::string> control_generator;
  std::optional<std::string> textbook_generator;
  std::optional<std::uint64_t> seed;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> template_dir;
  std::optional<std::string> system_text;
  std::size_t workers = 4;
  double judge_temperature = 0.0;
  unsigned judge_max_tokens = 16;
  unsigned judge_max_tokens_reasoning = 2048;
  double explain_temperature = 0.0;
  unsigned explain_max_tokens = 1024;
  unsigned target_words = 250;
  /// "warn" or "strict".
  std::string hygiene = "warn";
  /// Replaces every backend when set (from --backend).
  std::optional<BackendSpec> backend_override;

  /// Throws ConfigError on inconsistencies.
  void validate() const;

  const ModelSpec* find_generator(const std::string& label) const;
  const ModelSpec* find_target(const std::string& label) const;
  std::string effective_control_generator() const;
  std::string effective_textbook_generator() const;
  std::map<std::string, analysis::Group> groups() const;
  std::vector<std::string> target_order() const;
  std::vector<std::string> generator_order() const;
};

/// Relative paths resolve against `base_dir`.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the resolved configuration.
std::string resolved_json(const RunConfig& config);

/// Uses the configured seed, else `<out_dir>/seed.txt`, else draws a fresh
/// one and stores it there. Returns the seed and whether it was generated.
std::pair<std::uint64_t, bool> ensure_seed(RunConfig& config);

/// Backend named by `spec`, honoring the override. `answer_key` feeds the
/// mock oracle.
std::shared_ptr<llm::Backend> make_backend(const RunConfig& config, const ModelSpec& spec,
                                           const llm::MockBackend::AnswerKey& answer_key,
                                           std::uint64_t run_seed);

llm::ClientOptions client_options(const RunConfig& config, const ModelSpec& spec);

}  // namespace gph::config
