#include "gph/config.hpp"

#include <fmt/format.h>

#include <json.hpp>
#include <random>
#include <set>

#include "gph/http_backend.hpp"
#include "gph/templates.hpp"
#include "gph/util.hpp"

namespace gph::config {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(fmt::format("unknown key '{}' in {}", k, where));
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(fmt::format("{}.{} has the wrong type", where, key));
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

corpus::ThresholdMode parse_mode(const std::string& s) {
  if (s == "at_most" || s == "AT_MOST") return corpus::ThresholdMode::AtMost;
  if (s == "below" || s == "BELOW") return corpus::ThresholdMode::Below;
  fail("threshold mode must be at_most or below, not '" + s + "'");
}

ModelSpec parse_model(const json& j, const std::string& where) {
  check_keys(j, {"label", "backend", "model", "group"}, where);
  ModelSpec m;
  m.label = get_or<std::string>(j, "label", "", where);
  if (m.label.empty()) fail(where + " needs a label");
  m.backend = get_or<std::string>(j, "backend", "", where);
  m.model = get_or<std::string>(j, "model", m.label, where);
  if (j.contains("group") && !j.at("group").is_null())
    m.group = analysis::parse_group(get_or<std::string>(j, "group", "", where));
  return m;
}

BackendSpec parse_backend(const json& j, const fs::path& base, const std::string& where) {
  check_keys(j,
             {"kind", "base_url", "api_key_env", "requests_per_minute", "max_retries",
              "base_delay_ms", "timeout_seconds", "oracle_p", "oracle_seed", "scripted_default",
              "scripted_file", "replay_path"},
             where);
  BackendSpec b;
  b.kind = get_or<std::string>(j, "kind", "", where);
  b.base_url = get_or<std::string>(j, "base_url", "", where);
  b.api_key_env = get_or<std::string>(j, "api_key_env", "", where);
  b.requests_per_minute = get_or<double>(j, "requests_per_minute", 0.0, where);
  b.max_retries = get_or<unsigned>(j, "max_retries", 4, where);
  b.base_delay_ms = get_or<unsigned>(j, "base_delay_ms", 500, where);
  b.timeout_seconds = get_or<int>(j, "timeout_seconds", 120, where);
  if (j.contains("oracle_p")) b.oracle_p = get_or<double>(j, "oracle_p", 0.0, where);
  if (j.contains("oracle_seed")) b.oracle_seed = get_or<std::uint64_t>(j, "oracle_seed", 0, where);
  if (j.contains("scripted_default"))
    b.scripted_default = get_or<std::string>(j, "scripted_default", "", where);
  if (j.contains("scripted_file"))
    b.scripted_file = resolve(base, get_or<std::string>(j, "scripted_file", "", where));
  if (j.contains("replay_path"))
    b.replay_path = resolve(base, get_or<std::string>(j, "replay_path", "", where));
  return b;
}

}  // namespace

BackendSpec parse_backend_override(std::string_view text) {
  BackendSpec b;
  auto colon = text.find(':');
  b.kind = std::string(text.substr(0, colon));
  std::string_view rest = colon == std::string_view::npos ? "" : text.substr(colon + 1);
  if (b.kind == "replay") {
    if (rest.empty()) fail("--backend replay:<transcript file or directory>");
    b.replay_path = fs::path(std::string(rest));
    return b;
  }
  // Comma-separated key=value options.
  std::map<std::string, std::string> opts;
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = rest.substr(0, comma);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) fail("backend option '" + std::string(item) + "' needs key=value");
    opts[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    rest = comma == std::string_view::npos ? "" : rest.substr(comma + 1);
  }
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = opts.find(key);
    if (it == opts.end()) return std::nullopt;
    auto v = it->second;
    opts.erase(it);
    return v;
  };
  try {
    if (b.kind == "mock-oracle") {
      auto p = take("p");
      if (!p) fail("--backend mock-oracle needs p=<probability>");
      b.oracle_p = std::stod(*p);
      if (auto s = take("seed")) b.oracle_seed = std::stoull(*s);
    } else if (b.kind == "mock-scripted") {
      if (auto a = take("always")) b.scripted_default = *a;
      if (auto f = take("file")) b.scripted_file = fs::path(*f);
      if (!b.scripted_default && !b.scripted_file)
        fail("--backend mock-scripted needs always=<text> or file=<json>");
    } else if (b.kind == "openai" || b.kind == "anthropic") {
      if (auto u = take("base_url")) b.base_url = *u;
      if (auto k = take("api_key_env")) b.api_key_env = *k;
    } else {
      fail("unknown backend '" + b.kind + "'");
    }
  } catch (const std::invalid_argument&) {
    fail("malformed number in --backend " + std::string(text));
  } catch (const std::out_of_range&) {
    fail("number out of range in --backend " + std::string(text));
  }
  if (!opts.empty()) fail("unknown backend option '" + opts.begin()->first + "'");
  return b;
}

RunConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"corpora", "per_paradigm_n", "conditions", "generators", "targets", "backends",
              "audiences", "control_generator", "textbook_generator", "seed", "cache_dir",
              "out_dir", "template_dir", "system_text", "workers", "judge", "explain", "hygiene",
              "comment"},
             "config");
  RunConfig c;
  if (j.contains("corpora")) {
    for (const auto& cj : j.at("corpora")) {
      check_keys(cj, {"path", "format", "paradigms", "challenging"}, "corpora[]");
      CorpusSource s;
      s.path = resolve(base_dir, get_or<std::string>(cj, "path", "", "corpora[]"));
      if (s.path.empty()) fail("corpora[] needs a path");
      s.format = corpus::parse_source_format(get_or<std::string>(cj, "format", "canonical-jsonl", "corpora[]"));
      s.paradigms = get_or<std::vector<std::string>>(cj, "paradigms", {}, "corpora[]");
      if (cj.contains("challenging")) {
        const auto& ch = cj.at("challenging");
        check_keys(ch, {"scores", "key", "threshold", "mode"}, "challenging");
        ChallengingRule r;
        r.scores = resolve(base_dir, get_or<std::string>(ch, "scores", "", "challenging"));
        r.scores_key = get_or<std::string>(ch, "key", "", "challenging");
        r.threshold = get_or<double>(ch, "threshold", 90.0, "challenging");
        r.mode = parse_mode(get_or<std::string>(ch, "mode", "at_most", "challenging"));
        s.challenging = r;
      }
      c.corpora.push_back(std::move(s));
    }
  }
  c.per_paradigm_n = get_or<std::size_t>(j, "per_paradigm_n", 50, "config");
  c.conditions = get_or<std::vector<std::string>>(j, "conditions", {"base"}, "config");
  if (j.contains("generators"))
    for (const auto& g : j.at("generators")) c.generators.push_back(parse_model(g, "generators[]"));
  if (j.contains("targets"))
    for (const auto& t : j.at("targets")) c.targets.push_back(parse_model(t, "targets[]"));
  if (j.contains("backends")) {
    if (!j.at("backends").is_object()) fail("backends must be an object");
    for (const auto& [name, bj] : j.at("backends").items())
      c.backends[name] = parse_backend(bj, base_dir, "backends." + name);
  }
  for (const auto& a : get_or<std::vector<std::string>>(j, "audiences", {}, "config"))
    c.audiences.push_back(parse_audience(a));
  if (j.contains("control_generator") && !j.at("control_generator").is_null())
    c.control_generator = get_or<std::string>(j, "control_generator", "", "config");
  if (j.contains("textbook_generator") && !j.at("textbook_generator").is_null())
    c.textbook_generator = get_or<std::string>(j, "textbook_generator", "", "config");
  if (j.contains("seed") && !j.at("seed").is_null())
    c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  c.cache_dir = resolve(base_dir, get_or<std::string>(j, "cache_dir", "cache", "config"));
  c.out_dir = resolve(base_dir, get_or<std::string>(j, "out_dir", "out", "config"));
  if (j.contains("template_dir") && !j.at("template_dir").is_null())
    c.template_dir = resolve(base_dir, get_or<std::string>(j, "template_dir", "", "config"));
  if (j.contains("system_text") && !j.at("system_text").is_null())
    c.system_text = get_or<std::string>(j, "system_text", "", "config");
  c.workers = get_or<std::size_t>(j, "workers", 4, "config");
  if (j.contains("judge")) {
    const auto& jj = j.at("judge");
    check_keys(jj, {"temperature", "max_tokens", "max_tokens_reasoning"}, "judge");
    c.judge_temperature = get_or<double>(jj, "temperature", 0.0, "judge");
    c.judge_max_tokens = get_or<unsigned>(jj, "max_tokens", 16, "judge");
    c.judge_max_tokens_reasoning = get_or<unsigned>(jj, "max_tokens_reasoning", 2048, "judge");
  }
  if (j.contains("explain")) {
    const auto& ej = j.at("explain");
    check_keys(ej, {"temperature", "max_tokens", "target_words"}, "explain");
    c.explain_temperature = get_or<double>(ej, "temperature", 0.0, "explain");
    c.explain_max_tokens = get_or<unsigned>(ej, "max_tokens", 1024, "explain");
    c.target_words = get_or<unsigned>(ej, "target_words", 250, "explain");
  }
  c.hygiene = get_or<std::string>(j, "hygiene", "warn", "config");
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return parse_config(text, path.parent_path());
}

const ModelSpec* RunConfig::find_generator(const std::string& label) const {
  for (const auto& g : generators)
    if (g.label == label) return &g;
  return nullptr;
}

const ModelSpec* RunConfig::find_target(const std::string& label) const {
  for (const auto& t : targets)
    if (t.label == label) return &t;
  return nullptr;
}

std::string RunConfig::effective_control_generator() const {
  if (control_generator) return *control_generator;
  if (generators.empty()) fail("the control condition needs a generator");
  return generators.front().label;
}

std::string RunConfig::effective_textbook_generator() const {
  if (textbook_generator) return *textbook_generator;
  if (generators.empty()) fail("the textbook condition needs a generator");
  return generators.front().label;
}

std::map<std::string, analysis::Group> RunConfig::groups() const {
  std::map<std::string, analysis::Group> out;
  for (const auto& t : targets)
    if (t.group) out[t.label] = *t.group;
  return out;
}

std::vector<std::string> RunConfig::target_order() const {
  std::vector<std::string> out;
  for (const auto& t : targets) out.push_back(t.label);
  return out;
}

std::vector<std::string> RunConfig::generator_order() const {
  std::vector<std::string> out;
  for (const auto& g : generators) out.push_back(g.label);
  return out;
}

void RunConfig::validate() const {
  if (per_paradigm_n == 0) fail("per_paradigm_n must be at least 1");
  if (workers == 0) fail("workers must be at least 1");
  if (hygiene != "warn" && hygiene != "strict") fail("hygiene must be warn or strict");
  if (target_words == 0) fail("explain.target_words must be positive");
  std::set<std::string> labels;
  for (const auto& m : generators)
    if (!labels.insert("g:" + m.label).second) fail("duplicate generator " + m.label);
  for (const auto& m : targets)
    if (!labels.insert("t:" + m.label).second) fail("duplicate target " + m.label);
  if (!backend_override) {
    for (const auto* list : {&generators, &targets})
      for (const auto& m : *list)
        if (!backends.count(m.backend))
          fail(fmt::format("model {} names unknown backend '{}'", m.label, m.backend));
  }
  for (const auto& label : conditions) {
    templates::ConditionSpec c;
    try {
      c = templates::ConditionSpec::parse(label);
      c.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
    if (c.explanation_source && !find_generator(*c.explanation_source))
      fail(fmt::format("condition {} names unknown generator '{}'", label, *c.explanation_source));
    if (c.kind == templates::ConditionKind::Control && !find_generator(effective_control_generator()))
      fail("control_generator is not a configured generator");
    if (c.kind == templates::ConditionKind::Textbook &&
        !find_generator(effective_textbook_generator()))
      fail("textbook_generator is not a configured generator");
  }
}

std::string resolved_json(const RunConfig& c) {
  ordered_json j;
  ordered_json corpora = ordered_json::array();
  for (const auto& s : c.corpora) {
    ordered_json cj;
    cj["path"] = s.path.string();
    cj["format"] = corpus::to_string(s.format);
    cj["paradigms"] = s.paradigms;
    if (s.challenging) {
      cj["challenging"] = {{"scores", s.challenging->scores.string()},
                           {"key", s.challenging->scores_key},
                           {"threshold", s.challenging->threshold},
                           {"mode", s.challenging->mode == corpus::ThresholdMode::AtMost ? "at_most" : "below"}};
    }
    corpora.push_back(cj);
  }
  j["corpora"] = corpora;
  j["per_paradigm_n"] = c.per_paradigm_n;
  j["conditions"] = c.conditions;
  auto models = [](const std::vector<ModelSpec>& ms) {
    ordered_json arr = ordered_json::array();
    for (const auto& m : ms) {
      ordered_json o;
      o["label"] = m.label;
      o["backend"] = m.backend;
      o["model"] = m.model;
      o["group"] = m.group ? ordered_json(std::string(analysis::to_string(*m.group))) : ordered_json(nullptr);
      arr.push_back(o);
    }
    return arr;
  };
  j["generators"] = models(c.generators);
  j["targets"] = models(c.targets);
  std::vector<std::string> auds;
  for (auto a : c.audiences) auds.emplace_back(to_string(a));
  j["audiences"] = auds;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
  j["judge"] = {{"temperature", c.judge_temperature},
                {"max_tokens", c.judge_max_tokens},
                {"max_tokens_reasoning", c.judge_max_tokens_reasoning}};
  j["explain"] = {{"temperature", c.explain_temperature},
                  {"max_tokens", c.explain_max_tokens},
                  {"target_words", c.target_words}};
  j["system_text"] = c.system_text ? ordered_json(*c.system_text) : ordered_json(nullptr);
  j["template_dir"] = c.template_dir ? ordered_json(c.template_dir->string()) : ordered_json(nullptr);
  return j.dump();
}

std::pair<std::uint64_t, bool> ensure_seed(RunConfig& config) {
  if (config.seed) return {*config.seed, false};
  auto file = config.out_dir / "seed.txt";
  if (fs::exists(file)) {
    auto text = std::string(trim(read_file(file)));
    try {
      config.seed = std::stoull(text);
      return {*config.seed, false};
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, file.string() + " does not hold a seed");
    }
  }
  std::random_device rd;
  std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  write_file_atomic(file, std::to_string(seed) + "\n");
  config.seed = seed;
  return {seed, true};
}

std::shared_ptr<llm::Backend> make_backend(const RunConfig& config, const ModelSpec& spec,
                                           const llm::MockBackend::AnswerKey& answer_key,
                                           std::uint64_t run_seed) {
  const BackendSpec* b = nullptr;
  if (config.backend_override) {
    b = &*config.backend_override;
  } else {
    auto it = config.backends.find(spec.backend);
    if (it == config.backends.end())
      fail(fmt::format("model {} names unknown backend '{}'", spec.label, spec.backend));
    b = &it->second;
  }
  if (b->kind == "openai" || b->kind == "anthropic") {
    llm::ProviderConfig pc;
    pc.provider = llm::parse_provider(b->kind);
    pc.base_url = b->base_url;
    pc.api_key_env = b->api_key_env.empty()
                         ? (b->kind == "openai" ? "OPENAI_API_KEY" : "ANTHROPIC_API_KEY")
                         : b->api_key_env;
    pc.timeout_seconds = b->timeout_seconds;
    for (const auto* list : {&config.generators, &config.targets})
      for (const auto& m : *list) pc.models[m.label] = m.model;
    return std::make_shared<llm::HttpBackend>(pc);
  }
  if (b->kind == "mock-oracle") {
    llm::MockPolicy p;
    p.kind = llm::MockKind::Oracle;
    p.oracle_accuracy = b->oracle_p;
    p.rng_seed = b->oracle_seed.value_or(run_seed);
    return std::make_shared<llm::MockBackend>(p, answer_key);
  }
  if (b->kind == "mock-scripted") {
    llm::MockPolicy p;
    p.kind = llm::MockKind::Scripted;
    p.default_response = b->scripted_default;
    if (b->scripted_file) {
      try {
        p.scripted_map = json::parse(read_file(*b->scripted_file)).get<std::map<std::string, std::string>>();
      } catch (const json::exception& e) {
        fail(b->scripted_file->string() + ": " + e.what());
      }
    }
    return std::make_shared<llm::MockBackend>(p);
  }
  if (b->kind == "replay") {
    if (!b->replay_path) fail("replay backend needs replay_path");
    if (!fs::exists(*b->replay_path))
      throw Error(ErrorCode::FileUnreadable, "no transcript at " + b->replay_path->string());
    return std::make_shared<llm::ReplayBackend>(llm::load_transcript(*b->replay_path),
                                                b->replay_path->string());
  }
  fail("unknown backend kind '" + b->kind + "'");
}

llm::ClientOptions client_options(const RunConfig& config, const ModelSpec& spec) {
  llm::ClientOptions o;
  const BackendSpec* b = nullptr;
  if (config.backend_override) {
    b = &*config.backend_override;
  } else if (auto it = config.backends.find(spec.backend); it != config.backends.end()) {
    b = &it->second;
  }
  if (b) {
    o.retry.max_retries = b->max_retries;
    o.retry.base_delay = std::chrono::milliseconds(b->base_delay_ms);
    o.requests_per_minute = b->requests_per_minute;
  }
  return o;
}

}  // namespace gph::config
