#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gph/common.hpp"
#include "gph/corpus.hpp"
#include "gph/grammar_explanation.hpp"
#include "gph/llm.hpp"
#include "gph/templates.hpp"
#include "gph/util.hpp"

namespace gph::explain {

using templates::InstructionSpec;

std::string cache_key(Dataset dataset, std::string_view paradigm, Audience audience,
                      std::string_view generator_model, std::string_view template_version);

std::string to_json(const GrammarExplanation& e);
GrammarExplanation explanation_from_json(std::string_view text);

/// Directory of `<cache_key>.json` documents. Reads take no locks; writes are
/// atomic and the first writer of a key wins.
class ExplanationCache {
 public:
  explicit ExplanationCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::optional<GrammarExplanation> get(const std::string& key) const;
  /// Stores `e` unless its key is already present. Returns whether it wrote.
  bool put(const GrammarExplanation& e);
  /// Every entry, sorted by cache_key. Throws CacheUnreadable.
  std::vector<GrammarExplanation> all() const;

 private:
  std::filesystem::path root_;
};

/// Archive text: a header record, then one explanation per line sorted by key.
std::string export_explanations(const ExplanationCache& cache);
/// Adds archive entries to `cache`. Entries already present with identical
/// content are skipped; a key repeated in the archive, or present in the
/// cache with different content, throws ImportConflict before anything is
/// written. Returns the number of entries written.
std::size_t import_explanations(ExplanationCache& cache, std::string_view archive);

struct ParadigmKey {
  Dataset dataset = Dataset::Custom;
  std::string paradigm;
};

struct GenerationSettings {
  double temperature = 0.0;
  unsigned max_output_tokens = 1024;
};

/// Elicits explanations from one generator model through a cache. At most
/// one backend call is made per key for the lifetime of this object.
class Generator {
 public:
  Generator(llm::Client& client, ExplanationCache& cache, const templates::Renderer& renderer,
            std::string generator_model, GenerationSettings settings = {},
            Clock clock = system_clock());

  GrammarExplanation generate(const InstructionSpec& spec, const ParadigmKey& key);

  /// Key that generate() would use, without generating.
  std::string key_for(const InstructionSpec& spec, const ParadigmKey& key) const;

  const std::string& generator_model() const { return generator_model_; }

 private:
  llm::Client& client_;
  ExplanationCache& cache_;
  const templates::Renderer& renderer_;
  std::string generator_model_;
  GenerationSettings settings_;
  Clock clock_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

/// Builds the instruction for a paradigm from its reference pairs, of which
/// the first four are used.
InstructionSpec instruction_for(const std::string& paradigm, const std::string& language,
                                Audience audience,
                                const std::vector<corpus::MinimalPair>& reference_pairs,
                                unsigned target_words, const std::string& template_version);

/// Instruction for the irrelevant phenomenon used by the control condition.
inline constexpr const char* kControlParadigm = "null_quotative";
InstructionSpec control_instruction(unsigned target_words, const std::string& template_version);

struct HygieneReport {
  std::vector<std::string> leaked_sentences;
  std::size_t word_count = 0;
  bool passed = true;
};

/// Whole-sentence leak check after whitespace normalization; case-sensitive.
HygieneReport check_hygiene(const GrammarExplanation& explanation,
                            const std::vector<corpus::MinimalPair>& pairs);

}  // namespace gph::explain
