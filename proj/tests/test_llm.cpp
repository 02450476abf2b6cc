#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "gph/llm.hpp"
#include "gph/templates.hpp"
#include "gph/util.hpp"
#include "test_support.hpp"

namespace gph::llm {
namespace {

using testing::make_pair;
using testing::TempDir;

ChatRequest judging_request(const templates::PromptBundle& b, const std::string& tag = "t#1") {
  ChatRequest r;
  r.model_label = "gpt-3.5";
  r.system_text = b.system_text;
  r.user_text = b.user_text;
  r.tag = tag;
  return r;
}

MockPolicy oracle(double p, std::uint64_t seed = 1) {
  MockPolicy m;
  m.kind = MockKind::Oracle;
  m.oracle_accuracy = p;
  m.rng_seed = seed;
  return m;
}

/// Fails with TransientError `failures` times, then answers.
class FlakyBackend : public Backend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  BackendKind kind() const override { return BackendKind::Http; }
  std::string describe() const override { return "flaky"; }
  std::string complete(const ChatRequest&) override {
    ++calls;
    if (failures_-- > 0) throw TransientError("503");
    return "A";
  }
  int calls = 0;

 private:
  int failures_;
};

class ThrowingBackend : public Backend {
 public:
  explicit ThrowingBackend(ErrorCode code) : code_(code) {}
  BackendKind kind() const override { return BackendKind::Http; }
  std::string describe() const override { return "throwing"; }
  std::string complete(const ChatRequest&) override {
    ++calls;
    throw Error(code_, "nope");
  }
  int calls = 0;

 private:
  ErrorCode code_;
};

TEST(Request, DigestCoversEveryField) {
  ChatRequest a;
  a.model_label = "m";
  a.user_text = "u";
  auto base = a.digest();
  auto b = a;
  b.tag = "p#2";
  EXPECT_NE(b.digest(), base);
  b = a;
  b.system_text = "";
  EXPECT_NE(b.digest(), base);
  b = a;
  b.temperature = 0.7;
  EXPECT_NE(b.digest(), base);
  b = a;
  b.max_output_tokens = 17;
  EXPECT_NE(b.digest(), base);
  EXPECT_EQ(a.digest(), base);
}

TEST(Mock, ScriptedLookupAndDefault) {
  MockPolicy m;
  m.kind = MockKind::Scripted;
  ChatRequest r;
  r.user_text = "hello";
  m.scripted_map = std::map<std::string, std::string>{{r.digest(), "A"}};
  MockBackend b(m);
  EXPECT_EQ(b.complete(r), "A");
  r.user_text = "other";
  EXPECT_THROW(b.complete(r), Error);
  m.default_response = "B";
  EXPECT_EQ(MockBackend(m).complete(r), "B");
  MockPolicy empty;
  empty.kind = MockKind::Scripted;
  EXPECT_THROW(MockBackend{empty}, Error);
  EXPECT_THROW(MockBackend{oracle(1.5)}, Error);
}

TEST(Mock, PerfectOracleOnGpPromptAlwaysPicksGrammaticalSlot) {
  templates::Renderer r;
  GrammarExplanation e;
  e.generator_model = "son";
  e.text = "An explanation.";
  MockBackend::AnswerKey key;
  std::vector<corpus::MinimalPair> pairs;
  for (int i = 0; i < 50; ++i) {
    pairs.push_back(make_pair("npi", i));
    key.emplace(pairs.back().good, pairs.back().bad);
  }
  MockBackend b(oracle(1.0), key);
  for (const auto& p : pairs)
    for (auto order : {Order::GoodFirst, Order::BadFirst})
      EXPECT_EQ(b.complete(judging_request(r.render_with_explanation(p, order, e, false))),
                to_string(correct_letter(order)));
}

TEST(Mock, OracleCotAnswersCarryTheMarker) {
  templates::Renderer r;
  auto p = make_pair("npi", 0);
  MockBackend b(oracle(1.0), {{p.good, p.bad}});
  auto text = b.complete(judging_request(r.render_cot(p, Order::BadFirst)));
  EXPECT_EQ(text.substr(text.size() - 5), "*** B");
}

TEST(Mock, UnknownPairIsNonRetryable) {
  templates::Renderer r;
  MockBackend b(oracle(0.5));
  try {
    b.complete(judging_request(r.render_base(make_pair("npi", 0), Order::GoodFirst)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonRetryableProviderError);
  }
}

TEST(Oracle, ZeroAccuracyAlwaysWrong) {
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(oracle_answer(Order::GoodFirst, oracle(0.0), std::to_string(i)), "B");
    EXPECT_EQ(oracle_answer(Order::BadFirst, oracle(0.0), std::to_string(i)), "A");
  }
}

TEST(Oracle, DeterministicPerSeedAndKey) {
  for (int i = 0; i < 100; ++i) {
    auto k = "key" + std::to_string(i);
    EXPECT_EQ(oracle_answer(Order::GoodFirst, oracle(0.5, 9), k),
              oracle_answer(Order::GoodFirst, oracle(0.5, 9), k));
  }
  EXPECT_EQ(unit_draw(3, "x"), unit_draw(3, "x"));
  EXPECT_NE(unit_draw(3, "x"), unit_draw(4, "x"));
}

TEST(Oracle, EmpiricalRateWithinBinomialBound) {
  const int n = 10000;
  int right = 0;
  for (int i = 0; i < n; ++i)
    right += oracle_answer(Order::GoodFirst, oracle(0.8, 42), "draw-" + std::to_string(i)) == "A";
  double bound = 3 * std::sqrt(0.8 * 0.2 / n);
  EXPECT_NEAR(right / double(n), 0.8, bound);
}

TEST(Oracle, UnitDrawInRange) {
  for (int i = 0; i < 1000; ++i) {
    double u = unit_draw(i, "k");
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Transcript, LineRoundTrip) {
  TranscriptEntry e;
  e.request.model_label = "m";
  e.request.system_text = "sys";
  e.request.user_text = "Which?\nSentence A: x\nSentence B: y";
  e.request.tag = "p#3";
  e.request_digest = e.request.digest();
  e.response = ChatResponse{"B", 12, 2, BackendKind::Http};
  e.started_at = "2024-01-01T00:00:00Z";
  auto back = parse_transcript_line(to_json_line(e));
  EXPECT_EQ(to_json_line(back), to_json_line(e));
  EXPECT_EQ(back.response->text, "B");
  EXPECT_EQ(back.request.system_text, "sys");
}

TEST(Transcript, RecordThenReplayIsIdenticalWithoutBackendCalls) {
  TempDir dir;
  templates::Renderer r;
  std::vector<corpus::MinimalPair> pairs;
  MockBackend::AnswerKey key;
  for (int i = 0; i < 10; ++i) {
    pairs.push_back(make_pair("npi", i));
    key.emplace(pairs.back().good, pairs.back().bad);
  }
  std::vector<std::string> recorded;
  {
    auto transcript = std::make_shared<Transcript>(dir / "transcript.jsonl");
    Client c(std::make_shared<MockBackend>(oracle(0.7), key), {}, transcript);
    for (const auto& p : pairs) recorded.push_back(c.complete(judging_request(r.render_cot(p, Order::GoodFirst), p.id)).text);
    EXPECT_EQ(c.backend_calls(), pairs.size());
  }
  auto text = read_file(dir / "transcript.jsonl");
  auto lines = split_lines(text);
  std::size_t nonempty = std::count_if(lines.begin(), lines.end(), [](auto l) { return !l.empty(); });
  EXPECT_EQ(nonempty, pairs.size());

  auto replay = std::make_shared<ReplayBackend>(load_transcript(dir.path()));
  Client c(replay);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto resp = c.complete(judging_request(r.render_cot(pairs[i], Order::GoodFirst), pairs[i].id));
    EXPECT_EQ(resp.text, recorded[i]);
  }
  auto mutated = judging_request(r.render_cot(pairs[0], Order::GoodFirst), pairs[0].id);
  mutated.user_text += " ";
  try {
    c.complete(mutated);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TranscriptMissingEntry);
  }
}

TEST(Transcript, TamperedDigestIsMalformed) {
  TempDir dir;
  TranscriptEntry e;
  e.request.user_text = "x";
  e.request_digest = "0000";
  e.response = ChatResponse{};
  write_file_atomic(dir / "t.jsonl", to_json_line(e) + "\n");
  try {
    load_transcript(dir / "t.jsonl");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::MalformedRecord);
  }
}

TEST(Transcript, ReplayedFailureRethrowsSameCode) {
  TempDir dir;
  auto transcript = std::make_shared<Transcript>(dir / "t.jsonl");
  ChatRequest req;
  req.user_text = "q";
  {
    Client c(std::make_shared<ThrowingBackend>(ErrorCode::NonRetryableProviderError), {}, transcript);
    EXPECT_THROW(c.complete(req), Error);
  }
  Client replay(std::make_shared<ReplayBackend>(load_transcript(dir / "t.jsonl")));
  try {
    replay.complete(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonRetryableProviderError);
  }
}

TEST(Retry, ExponentialScheduleCapped) {
  RetryPolicy p;
  EXPECT_EQ(p.delay_before(1).count(), 500);
  EXPECT_EQ(p.delay_before(2).count(), 1000);
  EXPECT_EQ(p.delay_before(4).count(), 4000);
  EXPECT_EQ(p.delay_before(20).count(), 30000);
}

TEST(Retry, TransientFailuresAreRetriedThenSucceed) {
  std::vector<long long> slept;
  ClientOptions o;
  o.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d.count()); };
  auto flaky = std::make_shared<FlakyBackend>(3);
  Client c(flaky, o);
  ChatRequest req;
  req.user_text = "q";
  auto resp = c.complete(req);
  EXPECT_EQ(resp.text, "A");
  EXPECT_EQ(resp.attempt_count, 4u);
  EXPECT_EQ(slept, (std::vector<long long>{500, 1000, 2000}));
}

TEST(Retry, GivesUpAfterCapWithBackendFailure) {
  TempDir dir;
  ClientOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  auto flaky = std::make_shared<FlakyBackend>(100);
  auto transcript = std::make_shared<Transcript>(dir / "t.jsonl");
  Client c(flaky, o, transcript);
  ChatRequest req;
  req.user_text = "q";
  try {
    c.complete(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendFailure);
  }
  EXPECT_EQ(flaky->calls, 5);
  auto index = load_transcript(dir / "t.jsonl");
  ASSERT_EQ(index.size(), 1u);
  EXPECT_EQ(index.begin()->second.error_code, "BackendFailure");
}

TEST(Retry, NonRetryableErrorsAreNotRetried) {
  auto b = std::make_shared<ThrowingBackend>(ErrorCode::AuthMissing);
  Client c(b);
  ChatRequest req;
  req.user_text = "q";
  EXPECT_THROW(c.complete(req), Error);
  EXPECT_EQ(b->calls, 1);
  ChatRequest empty;
  EXPECT_THROW(c.complete(empty), Error);
}

TEST(Prefill, RecordedResponsesSkipTheBackend) {
  ChatRequest req;
  req.user_text = "q";
  TranscriptEntry e;
  e.request = req;
  e.request_digest = req.digest();
  e.response = ChatResponse{"B", 0, 1, BackendKind::Mock};
  auto index = std::make_shared<TranscriptIndex>();
  (*index)[e.request_digest] = e;
  auto flaky = std::make_shared<FlakyBackend>(0);
  Client c(flaky, {}, nullptr, index);
  EXPECT_EQ(c.complete(req).text, "B");
  EXPECT_EQ(flaky->calls, 0);
  EXPECT_EQ(c.backend_calls(), 0u);
}

TEST(RateLimiter, SpacesRequestsAtConfiguredRate) {
  using namespace std::chrono;
  auto t = steady_clock::time_point{};
  std::vector<long long> slept;
  RateLimiter lim(
      60.0, [&](milliseconds d) { slept.push_back(d.count()); t += d; }, [&] { return t; });
  for (int i = 0; i < 5; ++i) lim.acquire();
  // Burst of one, then one token a second.
  long long total = 0;
  for (auto s : slept) total += s;
  EXPECT_GE(total, 4000);
  EXPECT_LE(total, 4010);
  EXPECT_THROW(RateLimiter(0), Error);
}

}  // namespace
}  // namespace gph::llm
