#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gph/common.hpp"

namespace gph::llm {

struct ChatRequest {
  std::string model_label;
  std::optional<std::string> system_text;
  std::string user_text;
  double temperature = 0.0;
  unsigned max_output_tokens = 16;
  /// Distinguishes otherwise identical requests, e.g. "<pair_id>#<trial>".
  /// Part of the digest so every trial gets its own transcript entry.
  std::string tag;

  std::string digest() const;
};

enum class BackendKind { Http, Replay, Mock };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct ChatResponse {
  std::string text;
  std::uint64_t latency_ms = 0;
  unsigned attempt_count = 1;
  BackendKind backend_kind = BackendKind::Mock;
};

/// Thrown by backends for failures worth retrying (timeouts, 429, 5xx).
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendKind kind() const = 0;
  /// Short description recorded in run manifests.
  virtual std::string describe() const = 0;
  /// Returns the response text. Throws TransientError or gph::Error.
  virtual std::string complete(const ChatRequest& request) = 0;
};

enum class MockKind { Scripted, Oracle };

struct MockPolicy {
  MockKind kind = MockKind::Oracle;
  std::optional<std::map<std::string, std::string>> scripted_map;
  /// Used by SCRIPTED when the digest is not in the map.
  std::optional<std::string> default_response;
  std::optional<double> oracle_accuracy;
  std::uint64_t rng_seed = 0;

  /// Throws InvalidArgument when fields do not match the kind.
  void validate() const;
};

/// Letter the oracle gives for one judging prompt. Correct with probability
/// p; the draw is a pure function of (rng_seed, draw_key).
std::string oracle_answer(Order pair_order, const MockPolicy& policy, std::string_view draw_key);

/// Uniform [0, 1) value derived from (seed, key).
double unit_draw(std::uint64_t seed, std::string_view key);

class MockBackend : public Backend {
 public:
  /// (good, bad) pairs that let the oracle find the grammatical slot.
  using AnswerKey = std::set<std::pair<std::string, std::string>>;

  explicit MockBackend(MockPolicy policy, AnswerKey answer_key = {});

  BackendKind kind() const override { return BackendKind::Mock; }
  std::string describe() const override;
  std::string complete(const ChatRequest& request) override;

 private:
  MockPolicy policy_;
  AnswerKey key_;
};

/// One line of a transcript.
struct TranscriptEntry {
  std::string request_digest;
  ChatRequest request;
  std::optional<ChatResponse> response;
  /// Set when the final outcome was a failure.
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
  std::string started_at;
};

std::string to_json_line(const TranscriptEntry& entry);
TranscriptEntry parse_transcript_line(std::string_view line);

/// Append-only JSON Lines log. Appends are serialized.
class Transcript {
 public:
  explicit Transcript(const std::filesystem::path& path);

  void append(const TranscriptEntry& entry);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

/// Entries keyed by request digest; a later entry for a digest replaces an
/// earlier one, so a resumed run's retry supersedes the recorded failure.
using TranscriptIndex = std::map<std::string, TranscriptEntry>;

/// Loads one transcript file, or every transcript.jsonl below a directory.
TranscriptIndex load_transcript(const std::filesystem::path& path);

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(TranscriptIndex index, std::string source = "");

  BackendKind kind() const override { return BackendKind::Replay; }
  std::string describe() const override;
  std::string complete(const ChatRequest& request) override;

 private:
  TranscriptIndex index_;
  std::string source_;
};

struct RetryPolicy {
  unsigned max_retries = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};

  std::chrono::milliseconds delay_before(unsigned retry) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Token bucket refilled continuously at `per_minute` tokens a minute, with
/// a burst capacity of one second's worth (at least one token).
class RateLimiter {
 public:
  using Now = std::function<std::chrono::steady_clock::time_point()>;

  explicit RateLimiter(double per_minute, Sleeper sleep = real_sleeper(),
                       Now now = [] { return std::chrono::steady_clock::now(); });

  void acquire();

 private:
  double per_minute_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  Sleeper sleep_;
  Now now_;
  std::mutex mu_;
};

struct ClientOptions {
  RetryPolicy retry;
  /// 0 disables rate limiting.
  double requests_per_minute = 0;
  Sleeper sleep = real_sleeper();
};

/// Shared by all workers of a run. Adds retries, rate limiting, transcript
/// recording, and an optional prefill index of already-recorded responses.
class Client {
 public:
  Client(std::shared_ptr<Backend> backend, ClientOptions options = {},
         std::shared_ptr<Transcript> transcript = nullptr,
         std::shared_ptr<const TranscriptIndex> prefill = nullptr);

  ChatResponse complete(const ChatRequest& request);

  /// Calls that reached the backend (prefill hits excluded).
  std::size_t backend_calls() const { return backend_calls_; }
  Backend& backend() { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  ClientOptions options_;
  std::shared_ptr<Transcript> transcript_;
  std::shared_ptr<const TranscriptIndex> prefill_;
  std::unique_ptr<RateLimiter> limiter_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace gph::llm
