#include "gph/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <json.hpp>
#include <set>
#include <unordered_map>

extern const char* const kParadigmCategoriesJson;  // generated from data/

namespace gph::corpus {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

SourceFormat parse_source_format(std::string_view s) {
  if (s == "blimp-jsonl" || s == "BLIMP_JSONL") return SourceFormat::BlimpJsonl;
  if (s == "sling" || s == "sling-tsv" || s == "sling-jsonl" || s == "SLING_TSV_OR_JSONL")
    return SourceFormat::SlingTsvOrJsonl;
  if (s == "rublimp-jsonl" || s == "RUBLIMP_JSONL") return SourceFormat::RublimpJsonl;
  if (s == "canonical" || s == "canonical-jsonl" || s == "CANONICAL_JSONL")
    return SourceFormat::CanonicalJsonl;
  throw Error(ErrorCode::InvalidArgument, "unknown corpus format '" + std::string(s) + "'");
}

std::string_view to_string(SourceFormat f) {
  switch (f) {
    case SourceFormat::BlimpJsonl: return "blimp-jsonl";
    case SourceFormat::SlingTsvOrJsonl: return "sling";
    case SourceFormat::RublimpJsonl: return "rublimp-jsonl";
    case SourceFormat::CanonicalJsonl: return "canonical-jsonl";
  }
  return "canonical-jsonl";
}

namespace {

const json& category_table() {
  static const json table = json::parse(kParadigmCategoriesJson);
  return table;
}

[[noreturn]] void malformed(const std::string& file, std::size_t line, const std::string& why) {
  throw Error(ErrorCode::MalformedRecord, fmt::format("{}:{}: {}", file, line, why));
}

std::optional<std::string> string_field(const json& obj, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) continue;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    if (it->is_number()) return it->dump();
  }
  return std::nullopt;
}

std::string synthesized_id(std::string_view paradigm, std::size_t line) {
  return fmt::format("{}:{:06d}", paradigm, line);
}

struct FileContext {
  std::string display;  // path relative to the ingest root
  std::string stem;
};

std::string_view default_language(SourceFormat f) {
  switch (f) {
    case SourceFormat::BlimpJsonl: return "en";
    case SourceFormat::SlingTsvOrJsonl: return "zh";
    case SourceFormat::RublimpJsonl: return "ru";
    case SourceFormat::CanonicalJsonl: return "";
  }
  return "";
}

Dataset default_dataset(SourceFormat f) {
  switch (f) {
    case SourceFormat::BlimpJsonl: return Dataset::Blimp;
    case SourceFormat::SlingTsvOrJsonl: return Dataset::Sling;
    case SourceFormat::RublimpJsonl: return Dataset::Rublimp;
    case SourceFormat::CanonicalJsonl: return Dataset::Custom;
  }
  return Dataset::Custom;
}

json parse_json_line(std::string_view line, const FileContext& ctx, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    malformed(ctx.display, line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) malformed(ctx.display, line_no, "expected a JSON object");
  return obj;
}

MinimalPair from_json_record(const json& obj, SourceFormat format, const FileContext& ctx,
                             std::size_t line_no) {
  MinimalPair p;
  p.dataset = default_dataset(format);
  p.language = std::string(default_language(format));
  std::optional<std::string> good, bad, paradigm, category, id;
  switch (format) {
    case SourceFormat::BlimpJsonl: {
      good = string_field(obj, {"sentence_good"});
      bad = string_field(obj, {"sentence_bad"});
      paradigm = string_field(obj, {"UID", "paradigm"});
      category = string_field(obj, {"linguistics_term", "category"});
      // pairID restarts at 0 in every paradigm file, so qualify it.
      if (auto pid = string_field(obj, {"pairID", "pair_id"}))
        id = paradigm.value_or(ctx.stem) + ":" + *pid;
      break;
    }
    case SourceFormat::SlingTsvOrJsonl:
      good = string_field(obj, {"sentence_good", "good"});
      bad = string_field(obj, {"sentence_bad", "bad"});
      paradigm = string_field(obj, {"paradigm", "UID"});
      category = string_field(obj, {"category", "phenomenon"});
      id = string_field(obj, {"id", "pair_id"});
      break;
    case SourceFormat::RublimpJsonl:
      good = string_field(obj, {"source_sentence", "sentence_good", "good"});
      bad = string_field(obj, {"target_sentence", "sentence_bad", "bad"});
      paradigm = string_field(obj, {"paradigm", "UID"});
      category = string_field(obj, {"phenomenon", "category"});
      id = string_field(obj, {"id", "pair_id", "pairID"});
      break;
    case SourceFormat::CanonicalJsonl: {
      for (const char* key : {"id", "dataset", "language", "paradigm", "category", "good", "bad"}) {
        if (!obj.contains(key) || !obj[key].is_string())
          malformed(ctx.display, line_no, fmt::format("missing string field '{}'", key));
      }
      try {
        p.dataset = parse_dataset(obj["dataset"].get<std::string>());
      } catch (const Error& e) {
        malformed(ctx.display, line_no, e.what());
      }
      p.language = obj["language"].get<std::string>();
      good = obj["good"].get<std::string>();
      bad = obj["bad"].get<std::string>();
      paradigm = obj["paradigm"].get<std::string>();
      category = obj["category"].get<std::string>();
      id = obj["id"].get<std::string>();
      break;
    }
  }
  if (!good) malformed(ctx.display, line_no, "missing good sentence");
  if (!bad) malformed(ctx.display, line_no, "missing bad sentence");
  if (auto lang = string_field(obj, {"language"}); lang && format != SourceFormat::CanonicalJsonl)
    p.language = *lang;
  p.paradigm = paradigm.value_or(ctx.stem);
  p.good = std::string(trim(*good));
  p.bad = std::string(trim(*bad));
  p.category = category && !category->empty() ? *category : default_category(p.dataset, p.paradigm);
  p.id = id ? *id : synthesized_id(p.paradigm, line_no);
  return p;
}

bool has_json_extension(const fs::path& p) {
  auto ext = p.extension().string();
  return ext == ".jsonl" || ext == ".json";
}

void ingest_file(const fs::path& file, const FileContext& ctx, SourceFormat format,
                 std::string_view bytes, Corpus& out,
                 std::set<std::tuple<Dataset, std::string, std::string>>& seen) {
  auto lines = split_lines(bytes);
  bool tsv = format == SourceFormat::SlingTsvOrJsonl && !has_json_extension(file);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::size_t line_no = i + 1;
    auto line = lines[i];
    if (trim(line).empty()) continue;
    MinimalPair pair;
    if (tsv) {
      auto tab = line.find('\t');
      if (tab == std::string_view::npos) malformed(ctx.display, line_no, "expected good<TAB>bad");
      auto good = line.substr(0, tab);
      auto bad = line.substr(tab + 1);
      if (bad.find('\t') != std::string_view::npos)
        malformed(ctx.display, line_no, "expected exactly two tab-separated columns");
      if (line_no == 1 && ((good == "sentence_good" && bad == "sentence_bad") ||
                           (good == "good" && bad == "bad")))
        continue;  // header
      pair.dataset = Dataset::Sling;
      pair.language = "zh";
      pair.paradigm = ctx.stem;
      pair.category = default_category(pair.dataset, pair.paradigm);
      pair.good = std::string(trim(good));
      pair.bad = std::string(trim(bad));
      pair.id = synthesized_id(pair.paradigm, line_no);
    } else {
      pair = from_json_record(parse_json_line(line, ctx, line_no), format, ctx, line_no);
    }
    if (auto why = validate(pair); !why.empty()) {
      out.rejected.push_back({ctx.display, line_no, why});
      continue;
    }
    if (!seen.emplace(pair.dataset, pair.paradigm, pair.id).second) {
      out.rejected.push_back({ctx.display, line_no, "duplicate id '" + pair.id + "'"});
      continue;
    }
    out.pairs.push_back(std::move(pair));
  }
}

}  // namespace

std::string validate(const MinimalPair& pair) {
  if (trim(pair.good).empty()) return "good sentence is empty";
  if (trim(pair.bad).empty()) return "bad sentence is empty";
  if (pair.good == pair.bad) return "good and bad sentences are identical";
  if (pair.good.find('\n') != std::string::npos || pair.bad.find('\n') != std::string::npos)
    return "sentence spans multiple lines";
  if (pair.paradigm.empty()) return "paradigm is empty";
  if (pair.id.empty()) return "id is empty";
  return {};
}

Corpus ingest(const fs::path& path, SourceFormat format, const Clock& clock) {
  std::error_code ec;
  auto status = fs::status(path, ec);
  if (ec || !fs::exists(status))
    throw Error(ErrorCode::FileUnreadable, "'" + path.string() + "' does not exist");

  std::vector<fs::path> files;
  if (fs::is_directory(status)) {
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      auto name = entry.path().filename().string();
      if (!name.empty() && name.front() == '.') continue;
      files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  Corpus out;
  std::set<std::tuple<Dataset, std::string, std::string>> seen;
  std::vector<std::string> digest_fields;
  for (const auto& file : files) {
    FileContext ctx;
    ctx.display = fs::is_directory(status) ? fs::relative(file, path).generic_string()
                                           : file.filename().string();
    ctx.stem = file.stem().string();
    auto bytes = read_file(file);
    digest_fields.push_back(ctx.display);
    digest_fields.push_back(bytes);
    ingest_file(file, ctx, format, bytes, out, seen);
  }
  if (out.pairs.empty()) {
    std::string detail = out.rejected.empty()
                             ? "no records in '" + path.string() + "'"
                             : fmt::format("all {} records rejected", out.rejected.size());
    throw Error(ErrorCode::EmptyCorpus, detail);
  }

  auto& m = out.manifest;
  m.source_digest = field_digest(digest_fields);
  m.corpus_digest = corpus_digest(out.pairs);
  m.ingested_at = clock();

  std::set<Dataset> datasets;
  std::set<std::string> languages;
  std::map<std::pair<Dataset, std::string>, ParadigmSpec> paradigms;
  for (const auto& p : out.pairs) {
    datasets.insert(p.dataset);
    languages.insert(p.language);
    auto& spec = paradigms[{p.dataset, p.paradigm}];
    if (spec.pair_count == 0) {
      spec.name = p.paradigm;
      spec.category = p.category;
      spec.dataset = p.dataset;
    }
    ++spec.pair_count;
  }
  m.dataset = datasets.size() == 1 ? *datasets.begin() : Dataset::Custom;
  m.language = languages.size() == 1 ? *languages.begin() : "mul";
  for (auto& [key, spec] : paradigms) m.paradigms.push_back(std::move(spec));
  return out;
}

std::string to_canonical_line(const MinimalPair& p) {
  ordered_json j;
  j["id"] = p.id;
  j["dataset"] = std::string(to_string(p.dataset));
  j["language"] = p.language;
  j["paradigm"] = p.paradigm;
  j["category"] = p.category;
  j["good"] = p.good;
  j["bad"] = p.bad;
  return j.dump();
}

std::string to_canonical_jsonl(const std::vector<MinimalPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += to_canonical_line(p);
    out += '\n';
  }
  return out;
}

std::string corpus_digest(const std::vector<MinimalPair>& pairs) {
  return sha256_hex(to_canonical_jsonl(pairs));
}

std::string manifest_json(const CorpusManifest& m) {
  ordered_json j;
  j["dataset"] = std::string(to_string(m.dataset));
  j["language"] = m.language;
  j["corpus_digest"] = m.corpus_digest;
  j["source_digest"] = m.source_digest;
  j["ingested_at"] = m.ingested_at;
  j["paradigms"] = ordered_json::array();
  for (const auto& p : m.paradigms) {
    ordered_json pj;
    pj["name"] = p.name;
    pj["category"] = p.category;
    pj["dataset"] = std::string(to_string(p.dataset));
    pj["pair_count"] = p.pair_count;
    j["paradigms"].push_back(pj);
  }
  return j.dump(2) + "\n";
}

CorpusManifest parse_manifest_json(std::string_view text) {
  CorpusManifest m;
  try {
    auto j = json::parse(text);
    m.dataset = parse_dataset(j.at("dataset").get<std::string>());
    m.language = j.at("language").get<std::string>();
    m.corpus_digest = j.at("corpus_digest").get<std::string>();
    m.source_digest = j.at("source_digest").get<std::string>();
    m.ingested_at = j.at("ingested_at").get<std::string>();
    for (const auto& pj : j.at("paradigms")) {
      m.paradigms.push_back({pj.at("name").get<std::string>(), pj.at("category").get<std::string>(),
                             parse_dataset(pj.at("dataset").get<std::string>()),
                             pj.at("pair_count").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("corpus manifest: ") + e.what());
  }
  return m;
}

std::string default_category(Dataset dataset, std::string_view paradigm) {
  const auto& table = category_table();
  auto ds = table.find(std::string(to_string(dataset)));
  if (ds != table.end()) {
    auto it = ds->find(std::string(paradigm));
    if (it != ds->end()) return it->get<std::string>();
  }
  // Custom corpora may reuse paradigm names of the public benchmarks.
  if (dataset == Dataset::Custom) {
    for (const auto& [name, entries] : table.items()) {
      auto it = entries.find(std::string(paradigm));
      if (it != entries.end()) return it->get<std::string>();
    }
  }
  return "uncategorized";
}

std::vector<MinimalPair> paradigm_pairs(const std::vector<MinimalPair>& pairs,
                                        std::string_view paradigm) {
  std::vector<MinimalPair> out;
  for (const auto& p : pairs)
    if (p.paradigm == paradigm) out.push_back(p);
  return out;
}

std::vector<MinimalPair> select_slice(const std::vector<MinimalPair>& pairs,
                                      const std::vector<std::string>& paradigms,
                                      std::size_t per_paradigm_n,
                                      std::vector<std::string>* warnings) {
  if (per_paradigm_n == 0)
    throw Error(ErrorCode::InvalidArgument, "per_paradigm_n must be at least 1");
  std::unordered_map<std::string, std::vector<const MinimalPair*>> by_paradigm;
  for (const auto& p : pairs) by_paradigm[p.paradigm].push_back(&p);

  std::vector<MinimalPair> out;
  for (const auto& name : paradigms) {
    auto it = by_paradigm.find(name);
    if (it == by_paradigm.end()) throw Error(ErrorCode::UnknownParadigm, name);
    const auto& group = it->second;
    auto take = std::min(per_paradigm_n, group.size());
    if (take < per_paradigm_n && warnings)
      warnings->push_back(fmt::format("paradigm '{}' has {} pairs, fewer than the requested {}",
                                      name, group.size(), per_paradigm_n));
    for (std::size_t i = 0; i < take; ++i) out.push_back(*group[i]);
  }
  return out;
}

ShotSplit split_shots(const std::vector<MinimalPair>& pp, std::size_t per_paradigm_n,
                      std::size_t shots) {
  if (pp.size() <= shots)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("paradigm has {} pairs; need more than {} to hold out shots", pp.size(),
                            shots));
  ShotSplit split;
  auto eval_pool = pp.size() - shots;
  auto take = std::min(per_paradigm_n, eval_pool);
  split.evaluation.assign(pp.begin(), pp.begin() + static_cast<std::ptrdiff_t>(take));
  split.shots.assign(pp.end() - static_cast<std::ptrdiff_t>(shots), pp.end());
  return split;
}

std::vector<std::string> filter_challenging(const std::map<std::string, double>& baseline_scores,
                                            double threshold, ThresholdMode mode) {
  std::vector<std::pair<double, std::string>> hits;
  for (const auto& [name, acc] : baseline_scores) {
    if (acc < 0.0 || acc > 100.0)
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("accuracy {} for '{}' is outside [0, 100]", acc, name));
    bool keep = mode == ThresholdMode::AtMost ? acc <= threshold : acc < threshold;
    if (keep) hits.emplace_back(acc, name);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (auto& [acc, name] : hits) out.push_back(std::move(name));
  return out;
}

std::string display_name(std::string_view paradigm) {
  std::string out(paradigm);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

std::string language_display_name(std::string_view tag) {
  auto primary = tag.substr(0, tag.find('-'));
  if (primary == "en") return "English";
  if (primary == "zh") return "Chinese";
  if (primary == "ru") return "Russian";
  return std::string(tag);
}

}  // namespace gph::corpus
