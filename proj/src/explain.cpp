#include "gph/explain.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <json.hpp>

namespace gph::explain {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string cache_key(Dataset dataset, std::string_view paradigm, Audience audience,
                      std::string_view generator_model, std::string_view template_version) {
  return field_digest(
      {to_string(dataset), paradigm, to_string(audience), generator_model, template_version});
}

namespace {

ordered_json to_ordered(const GrammarExplanation& e) {
  ordered_json j;
  j["cache_key"] = e.cache_key;
  j["dataset"] = to_string(e.dataset);
  j["paradigm"] = e.paradigm;
  j["audience"] = to_string(e.audience);
  j["generator_model"] = e.generator_model;
  j["template_version"] = e.template_version;
  j["token_estimate"] = e.token_estimate;
  j["created_at"] = e.created_at;
  j["text"] = e.text;
  return j;
}

GrammarExplanation from_json_value(const json& j) {
  GrammarExplanation e;
  e.cache_key = j.at("cache_key").get<std::string>();
  e.dataset = parse_dataset(j.at("dataset").get<std::string>());
  e.paradigm = j.at("paradigm").get<std::string>();
  e.audience = parse_audience(j.at("audience").get<std::string>());
  e.generator_model = j.at("generator_model").get<std::string>();
  e.template_version = j.at("template_version").get<std::string>();
  e.token_estimate = j.at("token_estimate").get<std::size_t>();
  e.created_at = j.at("created_at").get<std::string>();
  e.text = j.at("text").get<std::string>();
  auto expected =
      cache_key(e.dataset, e.paradigm, e.audience, e.generator_model, e.template_version);
  if (e.cache_key != expected)
    throw Error(ErrorCode::CacheUnreadable, "cache_key does not match its fields for " + e.paradigm);
  if (trim(e.text).empty())
    throw Error(ErrorCode::CacheUnreadable, "empty explanation text for " + e.paradigm);
  return e;
}

}  // namespace

std::string to_json(const GrammarExplanation& e) { return to_ordered(e).dump(2) + "\n"; }

GrammarExplanation explanation_from_json(std::string_view text) {
  try {
    return from_json_value(json::parse(text));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::CacheUnreadable, ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::CacheUnreadable) throw;
    throw Error(ErrorCode::CacheUnreadable, ex.what());
  }
}

ExplanationCache::ExplanationCache(fs::path root) : root_(std::move(root)) {}

std::optional<GrammarExplanation> ExplanationCache::get(const std::string& key) const {
  auto file = root_ / (key + ".json");
  std::error_code ec;
  if (!fs::exists(file, ec)) return std::nullopt;
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    throw Error(ErrorCode::CacheUnreadable, e.what());
  }
  auto e = explanation_from_json(text);
  if (e.cache_key != key)
    throw Error(ErrorCode::CacheUnreadable, file.string() + " holds a different key");
  return e;
}

bool ExplanationCache::put(const GrammarExplanation& e) {
  fs::create_directories(root_);
  return write_file_exclusive(root_ / (e.cache_key + ".json"), to_json(e));
}

std::vector<GrammarExplanation> ExplanationCache::all() const {
  std::vector<GrammarExplanation> out;
  std::error_code ec;
  if (!fs::exists(root_, ec)) return out;
  if (!fs::is_directory(root_, ec))
    throw Error(ErrorCode::CacheUnreadable, root_.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root_, ec)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".json" && p.filename().string()[0] != '.')
      files.push_back(p);
  }
  if (ec) throw Error(ErrorCode::CacheUnreadable, root_.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto key = f.stem().string();
    auto e = get(key);
    if (e) out.push_back(std::move(*e));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.cache_key < b.cache_key; });
  return out;
}

namespace {
constexpr const char* kArchiveFormat = "gph-explanation-archive";
constexpr int kArchiveVersion = 1;
}  // namespace

std::string export_explanations(const ExplanationCache& cache) {
  auto entries = cache.all();
  ordered_json header;
  header["format"] = kArchiveFormat;
  header["version"] = kArchiveVersion;
  header["count"] = entries.size();
  std::string out = header.dump() + "\n";
  for (const auto& e : entries) out += to_ordered(e).dump() + "\n";
  return out;
}

std::size_t import_explanations(ExplanationCache& cache, std::string_view archive) {
  auto lines = split_lines(archive);
  std::vector<GrammarExplanation> entries;
  bool saw_header = false;
  std::size_t declared = 0, lineno = 0;
  for (auto line : lines) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::CacheUnreadable, fmt::format("archive line {}: {}", lineno, ex.what()));
    }
    if (!saw_header) {
      if (j.value("format", "") != kArchiveFormat)
        throw Error(ErrorCode::CacheUnreadable, "archive has no header record");
      declared = j.value("count", std::size_t{0});
      saw_header = true;
      continue;
    }
    try {
      entries.push_back(from_json_value(j));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::CacheUnreadable, fmt::format("archive line {}: {}", lineno, ex.what()));
    }
  }
  if (!saw_header) throw Error(ErrorCode::CacheUnreadable, "archive is empty");
  if (declared != entries.size())
    throw Error(ErrorCode::CacheUnreadable,
                fmt::format("archive declares {} entries but holds {}", declared, entries.size()));

  std::set<std::string> seen;
  std::vector<const GrammarExplanation*> to_write;
  for (const auto& e : entries) {
    if (!seen.insert(e.cache_key).second)
      throw Error(ErrorCode::ImportConflict, "archive repeats key " + e.cache_key);
    auto existing = cache.get(e.cache_key);
    if (existing) {
      if (!(*existing == e))
        throw Error(ErrorCode::ImportConflict, "cache already holds a different " + e.cache_key);
      continue;
    }
    to_write.push_back(&e);
  }
  std::size_t written = 0;
  for (const auto* e : to_write) written += cache.put(*e) ? 1 : 0;
  return written;
}

Generator::Generator(llm::Client& client, ExplanationCache& cache,
                     const templates::Renderer& renderer, std::string generator_model,
                     GenerationSettings settings, Clock clock)
    : client_(client),
      cache_(cache),
      renderer_(renderer),
      generator_model_(std::move(generator_model)),
      settings_(settings),
      clock_(std::move(clock)) {}

std::string Generator::key_for(const InstructionSpec& spec, const ParadigmKey& key) const {
  return cache_key(key.dataset, key.paradigm, spec.audience, generator_model_,
                   spec.template_version);
}

GrammarExplanation Generator::generate(const InstructionSpec& spec, const ParadigmKey& key) {
  auto ck = key_for(spec, key);
  std::shared_ptr<std::mutex> key_mu;
  {
    std::lock_guard lock(mu_);
    auto& slot = key_locks_[ck];
    if (!slot) slot = std::make_shared<std::mutex>();
    key_mu = slot;
  }
  std::lock_guard key_lock(*key_mu);
  if (auto hit = cache_.get(ck)) return *hit;

  llm::ChatRequest req;
  req.model_label = generator_model_;
  req.user_text = renderer_.render_instruction(spec);
  req.temperature = settings_.temperature;
  req.max_output_tokens = settings_.max_output_tokens;
  req.tag = "explain:" + ck;
  auto resp = client_.complete(req);
  std::string text(rtrim(resp.text));
  if (trim(text).empty())
    throw Error(ErrorCode::EmptyResponse,
                fmt::format("{} returned an empty explanation for {}", generator_model_, key.paradigm));

  GrammarExplanation e;
  e.paradigm = key.paradigm;
  e.dataset = key.dataset;
  e.audience = spec.audience;
  e.generator_model = generator_model_;
  e.template_version = spec.template_version;
  e.text = std::move(text);
  e.token_estimate = (e.text.size() + 3) / 4;
  e.created_at = clock_();
  e.cache_key = ck;
  if (!cache_.put(e)) {
    // Another writer got there first; its entry is authoritative.
    if (auto winner = cache_.get(ck)) return *winner;
  }
  return e;
}

InstructionSpec instruction_for(const std::string& paradigm, const std::string& language,
                                Audience audience,
                                const std::vector<corpus::MinimalPair>& reference_pairs,
                                unsigned target_words, const std::string& template_version) {
  if (reference_pairs.size() < 2)
    throw Error(ErrorCode::InvalidArgument,
                "paradigm '" + paradigm + "' has fewer than 2 pairs to use as reference examples");
  InstructionSpec spec;
  spec.paradigm_display_name = corpus::display_name(paradigm);
  spec.language_display_name = corpus::language_display_name(language);
  spec.audience = audience;
  for (std::size_t i = 0; i < reference_pairs.size() && i < 4; ++i)
    spec.reference_examples.emplace_back(reference_pairs[i].good, reference_pairs[i].bad);
  spec.target_words = target_words;
  spec.template_version = template_version;
  return spec;
}

InstructionSpec control_instruction(unsigned target_words, const std::string& template_version) {
  InstructionSpec spec;
  spec.paradigm_display_name = corpus::display_name(kControlParadigm);
  spec.language_display_name = "English";
  spec.audience = Audience::Beginner;
  spec.reference_examples = {
      {"And then she was like, \"I'm done.\"", "And then she was like done, \"I'm.\""},
      {"So he goes, \"No way.\"", "So he goes way, \"No.\""},
      {"And I'm all, \"Really?\"", "And all I'm, \"Really?\""},
  };
  spec.target_words = target_words;
  spec.template_version = template_version;
  return spec;
}

HygieneReport check_hygiene(const GrammarExplanation& explanation,
                            const std::vector<corpus::MinimalPair>& pairs) {
  HygieneReport report;
  report.word_count = count_words(explanation.text);
  auto haystack = collapse_whitespace(explanation.text);
  std::set<std::string> reported;
  for (const auto& p : pairs) {
    for (const auto* s : {&p.good, &p.bad}) {
      auto needle = collapse_whitespace(*s);
      if (needle.empty() || reported.count(needle)) continue;
      if (haystack.find(needle) != std::string::npos) {
        reported.insert(needle);
        report.leaked_sentences.push_back(*s);
      }
    }
  }
  report.passed = report.leaked_sentences.empty();
  return report;
}

}  // namespace gph::explain
