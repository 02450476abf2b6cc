#include "gph/runner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <json.hpp>
#include <set>
#include <mutex>
#include <thread>

namespace gph::runner {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(OrderProvenance p) {
  switch (p) {
    case OrderProvenance::FixedGoodFirst: return "FIXED_GOOD_FIRST";
    case OrderProvenance::FixedBadFirst: return "FIXED_BAD_FIRST";
    case OrderProvenance::Randomized: return "RANDOMIZED";
  }
  return "RANDOMIZED";
}

int trial3_bit(std::uint64_t run_seed, std::string_view pair_id) {
  auto h = hash64(field_digest({std::to_string(run_seed), pair_id}));
  return static_cast<int>(h >> 63);
}

std::vector<TrialPlan> plan_trials(const corpus::MinimalPair& pair, std::uint64_t run_seed) {
  int bit = trial3_bit(run_seed, pair.id);
  return {
      {pair.id, 1, Order::GoodFirst, OrderProvenance::FixedGoodFirst, std::nullopt},
      {pair.id, 2, Order::BadFirst, OrderProvenance::FixedBadFirst, std::nullopt},
      {pair.id, 3, bit == 0 ? Order::GoodFirst : Order::BadFirst, OrderProvenance::Randomized, bit},
  };
}

// ---------------------------------------------------------------- parsing

std::string_view to_string(ParsePath p) {
  switch (p) {
    case ParsePath::Strict: return "STRICT";
    case ParsePath::Fallback: return "FALLBACK";
    case ParsePath::Marker: return "MARKER";
    case ParsePath::MarkerFallback: return "MARKER_FALLBACK";
    case ParsePath::None: return "NONE";
  }
  return "NONE";
}

ParsePath parse_parse_path(std::string_view s) {
  for (auto p : {ParsePath::Strict, ParsePath::Fallback, ParsePath::Marker,
                 ParsePath::MarkerFallback, ParsePath::None})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::MalformedRecord, "unknown parse path '" + std::string(s) + "'");
}

namespace {

// Non-ASCII bytes count as word characters so letters inside words of other
// scripts are never mistaken for standalone tokens.
bool is_word_byte(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string_view> word_tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_byte(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word_byte(s[j])) ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

Choice letter_token(std::string_view tok) {
  if (tok == "A") return Choice::A;
  if (tok == "B") return Choice::B;
  return Choice::Unparseable;
}

std::string_view strip_punct(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (is_space(s[b]) || is_ascii_punct(s[b]))) ++b;
  while (e > b && (is_space(s[e - 1]) || is_ascii_punct(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

Choice bare_letter(std::string_view s) {
  auto core = strip_punct(s);
  if (core == "A" || core == "a") return Choice::A;
  if (core == "B" || core == "b") return Choice::B;
  return Choice::Unparseable;
}

ParsedAnswer parse_direct(std::string_view raw) {
  if (auto c = bare_letter(raw); c != Choice::Unparseable) return {c, ParsePath::Strict};
  Choice found = Choice::Unparseable;
  int count = 0;
  for (auto tok : word_tokens(raw)) {
    auto c = letter_token(tok);
    if (c == Choice::Unparseable) continue;
    found = c;
    ++count;
  }
  if (count == 1) return {found, ParsePath::Fallback};
  return {};
}

ParsedAnswer parse_marked(std::string_view raw) {
  auto pos = raw.rfind("***");
  if (pos != std::string_view::npos) {
    auto rest = raw.substr(pos + 3);
    if (auto c = bare_letter(rest); c != Choice::Unparseable) return {c, ParsePath::Marker};
    for (auto tok : word_tokens(rest))
      if (auto c = letter_token(tok); c != Choice::Unparseable) return {c, ParsePath::Marker};
    return {};
  }
  auto lines = split_lines(raw);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (trim(*it).empty()) continue;
    auto toks = word_tokens(*it);
    for (auto t = toks.rbegin(); t != toks.rend(); ++t)
      if (auto c = letter_token(*t); c != Choice::Unparseable) return {c, ParsePath::MarkerFallback};
    return {};
  }
  return {};
}

}  // namespace

ParsedAnswer parse_answer(ConditionKind kind, std::string_view raw) {
  return templates::uses_reasoning(kind) ? parse_marked(raw) : parse_direct(raw);
}

bool is_correct(Choice choice, Order order) {
  return choice != Choice::Unparseable && choice == correct_letter(order);
}

// ---------------------------------------------------------------- judgments

std::string to_json_line(const Judgment& j) {
  ordered_json o;
  o["run_id"] = j.run_id;
  o["pair_id"] = j.pair_id;
  o["dataset"] = to_string(j.dataset);
  o["language"] = j.language;
  o["paradigm"] = j.paradigm;
  o["category"] = j.category;
  o["trial_index"] = j.trial_index;
  o["order"] = to_string(j.order);
  o["condition"] = j.condition.label();
  o["target_model"] = j.target_model;
  o["choice"] = to_string(j.choice);
  o["correct"] = j.correct;
  o["raw_response_digest"] = j.raw_response_digest;
  o["parse_path"] = to_string(j.parse_path);
  o["error"] = j.error ? ordered_json(*j.error) : ordered_json(nullptr);
  return o.dump();
}

Judgment parse_judgment_line(std::string_view line) {
  try {
    auto o = json::parse(line);
    Judgment j;
    j.run_id = o.at("run_id").get<std::string>();
    j.pair_id = o.at("pair_id").get<std::string>();
    j.dataset = parse_dataset(o.at("dataset").get<std::string>());
    j.language = o.at("language").get<std::string>();
    j.paradigm = o.at("paradigm").get<std::string>();
    j.category = o.at("category").get<std::string>();
    j.trial_index = o.at("trial_index").get<int>();
    j.order = parse_order(o.at("order").get<std::string>());
    j.condition = ConditionSpec::parse(o.at("condition").get<std::string>());
    j.target_model = o.at("target_model").get<std::string>();
    j.choice = parse_choice(o.at("choice").get<std::string>());
    j.correct = o.at("correct").get<bool>();
    j.raw_response_digest = o.at("raw_response_digest").get<std::string>();
    j.parse_path = parse_parse_path(o.at("parse_path").get<std::string>());
    if (!o.at("error").is_null()) j.error = o.at("error").get<std::string>();
    if (j.correct != is_correct(j.choice, j.order))
      throw Error(ErrorCode::MalformedRecord, "judgment grade disagrees with its choice and order");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedRecord) throw;
    throw Error(ErrorCode::MalformedRecord, e.what());
  }
}

std::string judgments_jsonl(const std::vector<Judgment>& judgments) {
  std::string out;
  for (const auto& j : judgments) out += to_json_line(j) + "\n";
  return out;
}

std::vector<Judgment> parse_judgments(std::string_view text) {
  std::vector<Judgment> out;
  std::size_t lineno = 0;
  for (auto line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_judgment_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("judgment line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------- manifest

std::string manifest_json(const RunManifest& m) {
  ordered_json o;
  o["run_id"] = m.run_id;
  o["corpus_digests"] = m.corpus_digests;
  o["slice_digest"] = m.slice_digest;
  o["conditions"] = m.conditions;
  o["target_models"] = m.target_models;
  o["run_seed"] = m.run_seed;
  o["template_version"] = m.template_version;
  o["backend_kinds"] = m.backend_kinds;
  o["backend_description"] = m.backend_description;
  o["config_fingerprint"] = m.config_fingerprint;
  o["temperature"] = m.temperature;
  o["max_output_tokens"] = m.max_output_tokens;
  o["explanation_keys"] = m.explanation_keys;
  o["pair_count"] = m.pair_count;
  o["judgment_count"] = m.judgment_count;
  o["failed_trials"] = m.failed_trials;
  o["started_at"] = m.started_at;
  o["finished_at"] = m.finished_at ? ordered_json(*m.finished_at) : ordered_json(nullptr);
  return o.dump(2) + "\n";
}

RunManifest parse_manifest(std::string_view text) {
  try {
    auto o = json::parse(text);
    RunManifest m;
    m.run_id = o.at("run_id").get<std::string>();
    m.corpus_digests = o.at("corpus_digests").get<std::map<std::string, std::string>>();
    m.slice_digest = o.at("slice_digest").get<std::string>();
    m.conditions = o.at("conditions").get<std::vector<std::string>>();
    m.target_models = o.at("target_models").get<std::vector<std::string>>();
    m.run_seed = o.at("run_seed").get<std::uint64_t>();
    m.template_version = o.at("template_version").get<std::string>();
    m.backend_kinds = o.at("backend_kinds").get<std::vector<std::string>>();
    m.backend_description = o.at("backend_description").get<std::string>();
    m.config_fingerprint = o.at("config_fingerprint").get<std::string>();
    m.temperature = o.at("temperature").get<double>();
    m.max_output_tokens = o.at("max_output_tokens").get<unsigned>();
    m.explanation_keys = o.at("explanation_keys").get<std::vector<std::string>>();
    m.pair_count = o.at("pair_count").get<std::size_t>();
    m.judgment_count = o.at("judgment_count").get<std::size_t>();
    m.failed_trials = o.at("failed_trials").get<std::size_t>();
    m.started_at = o.at("started_at").get<std::string>();
    if (!o.at("finished_at").is_null()) m.finished_at = o.at("finished_at").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("run manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------- execution

unsigned max_tokens_for(ConditionKind kind, const ExecuteOptions& options) {
  return templates::uses_reasoning(kind) ? options.max_tokens_reasoning : options.max_tokens_answer;
}

templates::PromptBundle render_trial(const templates::Renderer& renderer,
                                     const corpus::MinimalPair& pair, Order order,
                                     const ConditionSpec& condition,
                                     const ConditionInputs& inputs) {
  auto missing = [&](const std::string& what) {
    return Error(ErrorCode::MissingExplanation, what);
  };
  switch (condition.kind) {
    case ConditionKind::Base: return renderer.render_base(pair, order);
    case ConditionKind::Cot: return renderer.render_cot(pair, order);
    case ConditionKind::Gp:
    case ConditionKind::GpCot: {
      auto it = inputs.explanations.find({pair.dataset, pair.paradigm});
      if (it == inputs.explanations.end()) throw missing(pair.paradigm);
      const auto& e = it->second;
      if (e.generator_model != condition.explanation_source || e.audience != condition.audience)
        throw missing(fmt::format("{} ({} explanation from {})", pair.paradigm,
                                  to_string(condition.audience),
                                  condition.explanation_source.value_or("?")));
      return renderer.render_with_explanation(pair, order, e,
                                              condition.kind == ConditionKind::GpCot);
    }
    case ConditionKind::Control:
      if (!inputs.control) throw missing("control explanation");
      return renderer.render_control(pair, order, *inputs.control);
    case ConditionKind::Textbook: {
      auto it = inputs.textbook.find(pair.dataset);
      if (it == inputs.textbook.end() || it->second.empty())
        throw missing(fmt::format("textbook for {}", to_string(pair.dataset)));
      return renderer.render_textbook(pair, order, it->second);
    }
    case ConditionKind::FewShot: {
      auto it = inputs.shots.find({pair.dataset, pair.paradigm});
      if (it == inputs.shots.end() || it->second.size() != condition.shots.value_or(0))
        throw Error(ErrorCode::ConfigError,
                    fmt::format("paradigm {} lacks {} demonstration pairs", pair.paradigm,
                                condition.shots.value_or(0)));
      return renderer.render_few_shot(pair, order, it->second);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unhandled condition");
}

std::string run_id_for(std::string_view target_model, const ConditionSpec& condition) {
  std::string out;
  auto append = [&out](std::string_view s) {
    for (char c : s) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')
        out += c;
      else if (c == '+')
        out += "_";
      else if (c == ':')
        out += "-";
      else
        out += '_';
    }
  };
  append(target_model);
  out += "__";
  append(condition.label());
  return out;
}

namespace {

bool recorded_failure(ErrorCode code) {
  return code == ErrorCode::BackendFailure || code == ErrorCode::NonRetryableProviderError ||
         code == ErrorCode::EmptyResponse;
}

std::vector<std::string> explanation_keys(const std::vector<corpus::MinimalPair>& slice,
                                          const ConditionSpec& condition,
                                          const ConditionInputs& inputs) {
  std::set<std::string> keys;
  switch (condition.kind) {
    case ConditionKind::Gp:
    case ConditionKind::GpCot:
      for (const auto& p : slice) {
        auto it = inputs.explanations.find({p.dataset, p.paradigm});
        if (it != inputs.explanations.end()) keys.insert(it->second.cache_key);
      }
      break;
    case ConditionKind::Control:
      if (inputs.control) keys.insert(inputs.control->cache_key);
      break;
    default:
      break;
  }
  return {keys.begin(), keys.end()};
}

}  // namespace

RunOutcome execute(const RunRequest& request, llm::Client& client,
                   const templates::Renderer& renderer, const ConditionInputs& inputs,
                   const ExecuteOptions& options, const std::optional<fs::path>& run_dir,
                   const Clock& clock) {
  request.condition.validate();
  if (request.run_id.empty()) throw Error(ErrorCode::ConfigError, "run id is empty");
  if (options.workers == 0) throw Error(ErrorCode::ConfigError, "worker count must be positive");

  RunOutcome outcome;
  auto& m = outcome.manifest;
  m.run_id = request.run_id;
  m.corpus_digests = request.corpus_digests;
  m.slice_digest = corpus::corpus_digest(request.slice);
  m.conditions = {request.condition.label()};
  m.target_models = {request.target_model};
  m.run_seed = request.run_seed;
  m.template_version = renderer.template_version();
  m.backend_kinds = {std::string(llm::to_string(client.backend().kind()))};
  m.backend_description = client.backend().describe();
  m.config_fingerprint = request.config_fingerprint;
  m.temperature = options.temperature;
  m.max_output_tokens = max_tokens_for(request.condition.kind, options);
  m.explanation_keys = explanation_keys(request.slice, request.condition, inputs);
  m.pair_count = request.slice.size();

  if (run_dir) {
    auto mf = *run_dir / "manifest.json";
    if (fs::exists(mf)) {
      auto prior = parse_manifest(read_file(mf));
      if (prior.finished_at) {
        if (prior.config_fingerprint != request.config_fingerprint)
          throw Error(ErrorCode::ConfigError,
                      "run " + request.run_id +
                          " already finished with a different configuration; choose another output directory");
        auto loaded = load_run(*run_dir);
        outcome.manifest = loaded.manifest;
        outcome.judgments = std::move(loaded.judgments);
        outcome.reused = true;
        return outcome;
      }
    }
  }

  // Plan and render every trial up front so configuration problems surface
  // before the first request.
  struct Task {
    const corpus::MinimalPair* pair;
    TrialPlan plan;
  };
  std::vector<Task> tasks;
  tasks.reserve(request.slice.size() * 3);
  {
    std::set<std::string> ids;
    for (const auto& p : request.slice) {
      if (!ids.insert(std::string(to_string(p.dataset)) + "\x1f" + p.paradigm + "\x1f" + p.id)
               .second)
        throw Error(ErrorCode::ConfigError, "slice repeats pair " + p.id);
      for (auto& plan : plan_trials(p, request.run_seed)) {
        render_trial(renderer, p, plan.order, request.condition, inputs);
        tasks.push_back({&p, plan});
      }
    }
  }

  m.started_at = clock();
  if (run_dir) {
    fs::create_directories(*run_dir);
    write_file_atomic(*run_dir / "manifest.json", manifest_json(m));
  }

  std::vector<Judgment> judgments(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto work = [&] {
    for (;;) {
      if (abort) return;
      auto i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& [pair, plan] = tasks[i];
      try {
        auto bundle = render_trial(renderer, *pair, plan.order, request.condition, inputs);
        llm::ChatRequest req;
        req.model_label = request.target_model;
        req.system_text = bundle.system_text;
        req.user_text = bundle.user_text;
        req.temperature = options.temperature;
        req.max_output_tokens = m.max_output_tokens;
        req.tag = fmt::format("{}#{}", pair->id, plan.trial_index);

        Judgment& j = judgments[i];
        j.run_id = request.run_id;
        j.pair_id = pair->id;
        j.dataset = pair->dataset;
        j.language = pair->language;
        j.paradigm = pair->paradigm;
        j.category = pair->category;
        j.trial_index = plan.trial_index;
        j.order = plan.order;
        j.condition = request.condition;
        j.target_model = request.target_model;
        try {
          auto resp = client.complete(req);
          auto parsed = parse_answer(request.condition.kind, resp.text);
          j.choice = parsed.choice;
          j.parse_path = parsed.path;
          j.raw_response_digest = sha256_hex(resp.text);
        } catch (const Error& e) {
          if (!recorded_failure(e.code())) throw;
          j.choice = Choice::Unparseable;
          j.parse_path = ParsePath::None;
          j.raw_response_digest = "";
          j.error = std::string(gph::to_string(e.code()));
        }
        j.correct = is_correct(j.choice, j.order);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      }
    }
  };

  std::size_t width = std::min<std::size_t>(options.workers, std::max<std::size_t>(1, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < width; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  m.judgment_count = judgments.size();
  m.failed_trials = static_cast<std::size_t>(
      std::count_if(judgments.begin(), judgments.end(), [](const Judgment& j) { return j.error.has_value(); }));
  m.finished_at = clock();
  if (run_dir) {
    write_file_atomic(*run_dir / "judgments.jsonl", judgments_jsonl(judgments));
    write_file_atomic(*run_dir / "manifest.json", manifest_json(m));
  }
  outcome.judgments = std::move(judgments);
  return outcome;
}

RunDirectory load_run(const fs::path& dir) {
  RunDirectory run;
  run.manifest = parse_manifest(read_file(dir / "manifest.json"));
  if (!run.manifest.finished_at)
    throw Error(ErrorCode::MalformedRecord, "run " + run.manifest.run_id + " is not finished");
  run.judgments = parse_judgments(read_file(dir / "judgments.jsonl"));
  if (run.judgments.size() != run.manifest.judgment_count)
    throw Error(ErrorCode::MalformedRecord,
                fmt::format("run {} lists {} judgments but its log holds {}", run.manifest.run_id,
                            run.manifest.judgment_count, run.judgments.size()));
  for (const auto& j : run.judgments)
    if (j.run_id != run.manifest.run_id)
      throw Error(ErrorCode::MalformedRecord,
                  "judgment for pair " + j.pair_id + " names run " + j.run_id);
  return run;
}

std::vector<RunDirectory> load_runs(const fs::path& runs_root) {
  std::vector<RunDirectory> out;
  if (!fs::is_directory(runs_root))
    throw Error(ErrorCode::FileUnreadable, "no runs directory at " + runs_root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs_root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto m = parse_manifest(read_file(d / "manifest.json"));
    if (!m.finished_at) continue;
    out.push_back(load_run(d));
  }
  return out;
}

}  // namespace gph::runner
