#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gph/common.hpp"
#include "gph/util.hpp"

namespace gph::corpus {

struct MinimalPair {
  std::string id;
  Dataset dataset = Dataset::Custom;
  std::string language;
  std::string paradigm;
  std::string category;
  std::string good;
  std::string bad;

  friend bool operator==(const MinimalPair&, const MinimalPair&) = default;
};

struct ParadigmSpec {
  std::string name;
  std::string category;
  Dataset dataset = Dataset::Custom;
  std::size_t pair_count = 0;

  friend bool operator==(const ParadigmSpec&, const ParadigmSpec&) = default;
};

struct CorpusManifest {
  Dataset dataset = Dataset::Custom;
  std::string language;
  /// Sorted by (dataset, name).
  std::vector<ParadigmSpec> paradigms;
  /// Hash of the raw input bytes; changes iff any input byte changes.
  std::string source_digest;
  /// Hash of the canonical serialization of the pairs; stable across formats.
  std::string corpus_digest;
  std::string ingested_at;
};

enum class SourceFormat { BlimpJsonl, SlingTsvOrJsonl, RublimpJsonl, CanonicalJsonl };

SourceFormat parse_source_format(std::string_view s);
std::string_view to_string(SourceFormat f);

/// A record rejected for violating a MinimalPair invariant.
struct Diagnostic {
  std::string file;
  std::size_t line = 0;
  std::string reason;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<MinimalPair> pairs;
  std::vector<Diagnostic> rejected;
};

/// Reads a benchmark file, or every regular file below a directory in
/// lexicographic path order. Malformed lines throw MalformedRecord; records
/// that parse but violate pair invariants land in `rejected`.
Corpus ingest(const std::filesystem::path& path, SourceFormat format,
              const Clock& clock = system_clock());

/// Returns an empty string when the pair satisfies every invariant, else the
/// reason it does not.
std::string validate(const MinimalPair& pair);

/// One JSON object per line with keys id, dataset, language, paradigm,
/// category, good, bad (in that order).
std::string to_canonical_jsonl(const std::vector<MinimalPair>& pairs);
std::string to_canonical_line(const MinimalPair& pair);

std::string corpus_digest(const std::vector<MinimalPair>& pairs);
std::string manifest_json(const CorpusManifest& manifest);
CorpusManifest parse_manifest_json(std::string_view text);

/// Category from the bundled paradigm table; "uncategorized" when unknown.
std::string default_category(Dataset dataset, std::string_view paradigm);

/// First `per_paradigm_n` pairs of each requested paradigm, in file order,
/// grouped in request order. Shortfalls are appended to `warnings`.
std::vector<MinimalPair> select_slice(const std::vector<MinimalPair>& pairs,
                                      const std::vector<std::string>& paradigms,
                                      std::size_t per_paradigm_n,
                                      std::vector<std::string>* warnings = nullptr);

/// All pairs of one paradigm in file order.
std::vector<MinimalPair> paradigm_pairs(const std::vector<MinimalPair>& pairs,
                                        std::string_view paradigm);

/// Few-shot demonstrations are the last `shots` pairs of a paradigm; the
/// evaluation slice never includes them.
struct ShotSplit {
  std::vector<MinimalPair> evaluation;
  std::vector<MinimalPair> shots;
};
ShotSplit split_shots(const std::vector<MinimalPair>& paradigm_pairs, std::size_t per_paradigm_n,
                      std::size_t shots);

enum class ThresholdMode { AtMost, Below };

/// Paradigms at or under (or strictly under) `threshold`, sorted by accuracy
/// ascending with ties broken by name.
std::vector<std::string> filter_challenging(const std::map<std::string, double>& baseline_scores,
                                            double threshold, ThresholdMode mode);

/// Human-readable name: underscores become spaces.
std::string display_name(std::string_view paradigm);
/// "en" -> "English" etc.; unknown tags are returned verbatim.
std::string language_display_name(std::string_view tag);

}  // namespace gph::corpus
