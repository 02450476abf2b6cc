#include <gtest/gtest.h>

#include "gph/config.hpp"
#include "test_support.hpp"

namespace gph::config {
namespace {

using testing::TempDir;

const char* kMinimal = R"({
  "corpora": [{"path": "blimp", "format": "blimp-jsonl"}],
  "conditions": ["base", "gp:son"],
  "generators": [{"label": "son", "backend": "mock"}],
  "targets": [{"label": "gpt-3.5", "backend": "mock", "group": "SLM"},
              {"label": "gpt-4o", "backend": "mock", "group": "LLM"}],
  "backends": {"mock": {"kind": "mock-oracle", "oracle_p": 0.8}}
})";

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

TEST(Config, ParsesAndResolvesPaths) {
  auto c = parse_config(kMinimal, "/work");
  c.validate();
  ASSERT_EQ(c.corpora.size(), 1u);
  EXPECT_EQ(c.corpora[0].path, std::filesystem::path("/work/blimp"));
  EXPECT_EQ(c.per_paradigm_n, 50u);
  EXPECT_EQ(c.out_dir, std::filesystem::path("/work/out"));
  EXPECT_EQ(c.targets[0].model, "gpt-3.5");
  auto groups = c.groups();
  EXPECT_EQ(groups.at("gpt-3.5"), analysis::Group::Slm);
  EXPECT_EQ(groups.at("gpt-4o"), analysis::Group::Llm);
  EXPECT_EQ(c.target_order(), (std::vector<std::string>{"gpt-3.5", "gpt-4o"}));
}

TEST(Config, UnknownKeysAreRejected) {
  std::string text = kMinimal;
  text.insert(1, "\"per_paradigm_count\": 5,");
  EXPECT_EQ(code_of([&] { parse_config(text, "/"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_config("{not json", "/"); }), ErrorCode::ConfigError);
}

TEST(Config, ValidationCatchesInconsistencies) {
  auto base = parse_config(kMinimal, "/");
  auto c = base;
  c.conditions = {"gp:o1"};
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = base;
  c.targets[1].label = "gpt-3.5";
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = base;
  c.targets[0].backend = "nowhere";
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c.backend_override = parse_backend_override("mock-oracle:p=0.5");
  EXPECT_NO_THROW(c.validate());
  c = base;
  c.per_paradigm_n = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  c = base;
  c.conditions = {"fewshot12345"};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, BackendOverrides) {
  auto o = parse_backend_override("mock-oracle:p=0.8,seed=9");
  EXPECT_EQ(o.kind, "mock-oracle");
  EXPECT_DOUBLE_EQ(*o.oracle_p, 0.8);
  EXPECT_EQ(*o.oracle_seed, 9u);
  EXPECT_EQ(*parse_backend_override("mock-scripted:always=A").scripted_default, "A");
  EXPECT_EQ(*parse_backend_override("replay:/x/t.jsonl").replay_path, std::filesystem::path("/x/t.jsonl"));
  EXPECT_EQ(parse_backend_override("openai").kind, "openai");
  EXPECT_THROW(parse_backend_override("mock-oracle:q=1"), Error);
  EXPECT_THROW(parse_backend_override("carrier-pigeon"), Error);
}

TEST(Config, MockOracleSeedDefaultsToRunSeed) {
  auto c = parse_config(kMinimal, "/");
  auto b = make_backend(c, c.targets[0], {}, 42);
  EXPECT_NE(b->describe().find("seed=42"), std::string::npos);
}

TEST(Config, HttpBackendNeedsCredentials) {
  auto c = parse_config(kMinimal, "/");
  c.backend_override = parse_backend_override("openai");
  c.backend_override->api_key_env = "GPH_TEST_UNSET_KEY";
  ::unsetenv("GPH_TEST_UNSET_KEY");
  EXPECT_EQ(code_of([&] { make_backend(c, c.targets[0], {}, 1); }), ErrorCode::AuthMissing);
}

TEST(Config, SeedIsGeneratedOnceAndPersisted) {
  TempDir dir;
  auto c = parse_config(kMinimal, dir.path());
  auto [seed, generated] = ensure_seed(c);
  EXPECT_TRUE(generated);
  auto again = parse_config(kMinimal, dir.path());
  auto [seed2, generated2] = ensure_seed(again);
  EXPECT_FALSE(generated2);
  EXPECT_EQ(seed2, seed);
  auto fixed = parse_config(kMinimal, dir.path());
  fixed.seed = 5;
  EXPECT_EQ(ensure_seed(fixed).first, 5u);
}

TEST(Config, ResolvedJsonIsStable) {
  auto a = parse_config(kMinimal, "/w");
  auto b = parse_config(kMinimal, "/w");
  EXPECT_EQ(resolved_json(a), resolved_json(b));
  b.per_paradigm_n = 10;
  EXPECT_NE(resolved_json(a), resolved_json(b));
}

}  // namespace
}  // namespace gph::config
