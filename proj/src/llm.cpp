#include "gph/llm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "gph/util.hpp"

namespace gph::llm {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string ChatRequest::digest() const {
  return field_digest({model_label, system_text ? "1" : "0", system_text.value_or(""), user_text,
                       fmt::format("{:.17g}", temperature), std::to_string(max_output_tokens), tag});
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Http: return "HTTP";
    case BackendKind::Replay: return "REPLAY";
    case BackendKind::Mock: return "MOCK";
  }
  return "MOCK";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "HTTP") return BackendKind::Http;
  if (s == "REPLAY") return BackendKind::Replay;
  if (s == "MOCK") return BackendKind::Mock;
  throw Error(ErrorCode::InvalidArgument, "unknown backend kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- mock

void MockPolicy::validate() const {
  if (kind == MockKind::Scripted && !scripted_map && !default_response)
    throw Error(ErrorCode::InvalidArgument, "SCRIPTED mock needs a scripted map");
  if (kind == MockKind::Oracle) {
    if (!oracle_accuracy) throw Error(ErrorCode::InvalidArgument, "ORACLE mock needs an accuracy");
    if (!(*oracle_accuracy >= 0.0 && *oracle_accuracy <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "oracle accuracy must lie in [0, 1]");
  }
}

double unit_draw(std::uint64_t seed, std::string_view key) {
  auto h = hash64(field_digest({std::to_string(seed), key}));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string oracle_answer(Order pair_order, const MockPolicy& policy, std::string_view draw_key) {
  if (policy.kind != MockKind::Oracle || !policy.oracle_accuracy)
    throw Error(ErrorCode::InvalidArgument, "oracle_answer needs an ORACLE policy");
  bool right = unit_draw(policy.rng_seed, draw_key) < *policy.oracle_accuracy;
  Choice good = correct_letter(pair_order);
  Choice pick = right ? good : (good == Choice::A ? Choice::B : Choice::A);
  return std::string(to_string(pick));
}

MockBackend::MockBackend(MockPolicy policy, AnswerKey answer_key)
    : policy_(std::move(policy)), key_(std::move(answer_key)) {
  policy_.validate();
}

std::string MockBackend::describe() const {
  if (policy_.kind == MockKind::Scripted)
    return fmt::format("mock-scripted(entries={}{})",
                       policy_.scripted_map ? policy_.scripted_map->size() : 0,
                       policy_.default_response ? ",default=" + *policy_.default_response : "");
  return fmt::format("mock-oracle(p={},seed={})", *policy_.oracle_accuracy, policy_.rng_seed);
}

namespace {

std::optional<std::string> sentence_after(std::string_view text, std::string_view prefix) {
  for (auto line : split_lines(text))
    if (line.substr(0, prefix.size()) == prefix) return std::string(trim(line.substr(prefix.size())));
  return std::nullopt;
}

}  // namespace

std::string MockBackend::complete(const ChatRequest& request) {
  auto digest = request.digest();
  if (policy_.kind == MockKind::Scripted) {
    if (policy_.scripted_map) {
      auto it = policy_.scripted_map->find(digest);
      if (it != policy_.scripted_map->end()) return it->second;
    }
    if (policy_.default_response) return *policy_.default_response;
    throw Error(ErrorCode::NonRetryableProviderError, "no scripted response for " + digest);
  }

  auto a = sentence_after(request.user_text, "Sentence A:");
  auto b = sentence_after(request.user_text, "Sentence B:");
  if (!a || !b) {
    // Not a judging prompt: treat it as an explanation request.
    return fmt::format(
        "Mock explanation {}.\nLook at how the words in each sentence depend on one another, "
        "and prefer the sentence whose structure a fluent speaker would produce.",
        digest.substr(0, 12));
  }
  Order order;
  if (key_.count({*a, *b}))
    order = Order::GoodFirst;
  else if (key_.count({*b, *a}))
    order = Order::BadFirst;
  else
    throw Error(ErrorCode::NonRetryableProviderError,
                "oracle cannot find the grammatical sentence of this prompt");
  auto letter = oracle_answer(order, policy_, digest);
  if (request.user_text.find("***") != std::string::npos)
    return "Comparing the two sentences step by step.\n*** " + letter;
  return letter;
}

// ---------------------------------------------------------------- transcript

namespace {

ordered_json request_json(const ChatRequest& r) {
  ordered_json j;
  j["model_label"] = r.model_label;
  j["system_text"] = r.system_text ? ordered_json(*r.system_text) : ordered_json(nullptr);
  j["user_text"] = r.user_text;
  j["temperature"] = r.temperature;
  j["max_output_tokens"] = r.max_output_tokens;
  j["tag"] = r.tag;
  return j;
}

ChatRequest request_from_json(const json& j) {
  ChatRequest r;
  r.model_label = j.at("model_label").get<std::string>();
  if (!j.at("system_text").is_null()) r.system_text = j.at("system_text").get<std::string>();
  r.user_text = j.at("user_text").get<std::string>();
  r.temperature = j.at("temperature").get<double>();
  r.max_output_tokens = j.at("max_output_tokens").get<unsigned>();
  r.tag = j.value("tag", "");
  return r;
}

}  // namespace

std::string to_json_line(const TranscriptEntry& e) {
  ordered_json j;
  j["request_digest"] = e.request_digest;
  j["request"] = request_json(e.request);
  if (e.response) {
    ordered_json r;
    r["text"] = e.response->text;
    r["latency_ms"] = e.response->latency_ms;
    r["attempt_count"] = e.response->attempt_count;
    r["backend_kind"] = to_string(e.response->backend_kind);
    j["response"] = r;
  } else {
    j["response"] = nullptr;
  }
  if (e.error_code) {
    j["error"] = {{"code", *e.error_code}, {"message", e.error_message.value_or("")}};
  }
  j["started_at"] = e.started_at;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

TranscriptEntry parse_transcript_line(std::string_view line) {
  json j = json::parse(line);
  TranscriptEntry e;
  e.request_digest = j.at("request_digest").get<std::string>();
  e.request = request_from_json(j.at("request"));
  if (!j.at("response").is_null()) {
    const auto& r = j.at("response");
    ChatResponse resp;
    resp.text = r.at("text").get<std::string>();
    resp.latency_ms = r.at("latency_ms").get<std::uint64_t>();
    resp.attempt_count = r.at("attempt_count").get<unsigned>();
    resp.backend_kind = parse_backend_kind(r.at("backend_kind").get<std::string>());
    e.response = resp;
  }
  if (j.contains("error")) {
    e.error_code = j["error"].at("code").get<std::string>();
    e.error_message = j["error"].at("message").get<std::string>();
  }
  e.started_at = j.value("started_at", "");
  return e;
}

Transcript::Transcript(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw Error(ErrorCode::FileUnreadable, "cannot open transcript " + path.string());
}

void Transcript::append(const TranscriptEntry& entry) {
  auto line = to_json_line(entry);
  std::lock_guard lock(mu_);
  out_ << line << '\n';
  out_.flush();
}

namespace {

void load_file(const fs::path& path, TranscriptIndex& index) {
  auto text = read_file(path);
  std::size_t lineno = 0;
  for (auto line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto e = parse_transcript_line(line);
      if (e.request_digest != e.request.digest())
        throw Error(ErrorCode::MalformedRecord, "request_digest does not match request");
      auto key = e.request_digest;
      index.insert_or_assign(key, std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::MalformedRecord,
                  fmt::format("{}:{}: {}", path.string(), lineno, ex.what()));
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::MalformedRecord) throw;
      throw Error(ErrorCode::MalformedRecord,
                  fmt::format("{}:{}: {}", path.string(), lineno, ex.what()));
    }
  }
}

}  // namespace

TranscriptIndex load_transcript(const fs::path& path) {
  TranscriptIndex index;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path))
      if (entry.is_regular_file() && entry.path().filename() == "transcript.jsonl")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f, index);
  } else {
    load_file(path, index);
  }
  return index;
}

// ---------------------------------------------------------------- replay

ReplayBackend::ReplayBackend(TranscriptIndex index, std::string source)
    : index_(std::move(index)), source_(std::move(source)) {}

std::string ReplayBackend::describe() const {
  return fmt::format("replay({}{} entries)", source_.empty() ? "" : source_ + ", ", index_.size());
}

std::string ReplayBackend::complete(const ChatRequest& request) {
  auto digest = request.digest();
  auto it = index_.find(digest);
  if (it == index_.end()) throw Error(ErrorCode::TranscriptMissingEntry, digest);
  const auto& e = it->second;
  if (e.response) return e.response->text;
  // Recorded failures replay as the same failure.
  auto code = ErrorCode::BackendFailure;
  if (e.error_code == "NonRetryableProviderError") code = ErrorCode::NonRetryableProviderError;
  throw Error(code, "replayed failure: " + e.error_message.value_or(""));
}

// ---------------------------------------------------------------- client

std::chrono::milliseconds RetryPolicy::delay_before(unsigned retry) const {
  // retry is 1-based: the first retry waits base_delay.
  double ms = static_cast<double>(base_delay.count()) * std::pow(2.0, retry - 1);
  return std::chrono::milliseconds(
      static_cast<long long>(std::min(ms, static_cast<double>(max_delay.count()))));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

RateLimiter::RateLimiter(double per_minute, Sleeper sleep, Now now)
    : per_minute_(per_minute),
      capacity_(std::max(1.0, per_minute / 60.0)),
      tokens_(capacity_),
      sleep_(std::move(sleep)),
      now_(std::move(now)) {
  if (per_minute <= 0) throw Error(ErrorCode::InvalidArgument, "rate limit must be positive");
  last_ = now_();
}

void RateLimiter::acquire() {
  std::lock_guard lock(mu_);
  for (;;) {
    auto t = now_();
    double elapsed_min = std::chrono::duration<double, std::ratio<60>>(t - last_).count();
    last_ = t;
    tokens_ = std::min(capacity_, tokens_ + elapsed_min * per_minute_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    double wait_ms = (1.0 - tokens_) / per_minute_ * 60000.0;
    sleep_(std::chrono::milliseconds(static_cast<long long>(std::ceil(wait_ms))));
  }
}

Client::Client(std::shared_ptr<Backend> backend, ClientOptions options,
               std::shared_ptr<Transcript> transcript,
               std::shared_ptr<const TranscriptIndex> prefill)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      transcript_(std::move(transcript)),
      prefill_(std::move(prefill)) {
  if (!backend_) throw Error(ErrorCode::ConfigError, "client has no backend");
  bool throttled = backend_->kind() == BackendKind::Http && options_.requests_per_minute > 0;
  if (throttled)
    limiter_ = std::make_unique<RateLimiter>(options_.requests_per_minute, options_.sleep);
}

ChatResponse Client::complete(const ChatRequest& request) {
  if (trim(request.user_text).empty())
    throw Error(ErrorCode::InvalidArgument, "request user_text is empty");
  auto digest = request.digest();
  if (prefill_) {
    auto it = prefill_->find(digest);
    if (it != prefill_->end() && it->second.response) return *it->second.response;
  }

  TranscriptEntry entry;
  entry.request_digest = digest;
  entry.request = request;
  entry.started_at = utc_timestamp();
  auto start = std::chrono::steady_clock::now();
  auto record_failure = [&](const Error& e) {
    entry.error_code = std::string(gph::to_string(e.code()));
    entry.error_message = e.what();
    if (transcript_) transcript_->append(entry);
  };

  unsigned attempts = 0;
  for (;;) {
    ++attempts;
    if (limiter_) limiter_->acquire();
    ++backend_calls_;
    try {
      auto text = backend_->complete(request);
      ChatResponse resp;
      resp.text = std::move(text);
      resp.attempt_count = attempts;
      resp.backend_kind = backend_->kind();
      resp.latency_ms = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - start)
              .count());
      entry.response = resp;
      if (transcript_) transcript_->append(entry);
      return resp;
    } catch (const TransientError& e) {
      if (attempts > options_.retry.max_retries) {
        Error err(ErrorCode::BackendFailure,
                  fmt::format("giving up after {} attempts: {}", attempts, e.what()));
        record_failure(err);
        throw err;
      }
      options_.sleep(options_.retry.delay_before(attempts));
    } catch (const Error& e) {
      // A replay miss is not a backend outcome and is not recorded.
      if (e.code() != ErrorCode::TranscriptMissingEntry) record_failure(e);
      throw;
    }
  }
}

}  // namespace gph::llm
