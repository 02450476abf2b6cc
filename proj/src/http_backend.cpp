#include "gph/http_backend.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <httplib.h>
#include <json.hpp>

namespace gph::llm {

using nlohmann::json;

Provider parse_provider(std::string_view s) {
  if (s == "openai") return Provider::OpenAi;
  if (s == "anthropic") return Provider::Anthropic;
  throw Error(ErrorCode::ConfigError, "unknown provider '" + std::string(s) + "'");
}

std::string_view to_string(Provider p) { return p == Provider::OpenAi ? "openai" : "anthropic"; }

namespace {

// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  auto scheme = url.find("://");
  auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  auto prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

}  // namespace

HttpBackend::HttpBackend(ProviderConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    config_.base_url = config_.provider == Provider::OpenAi ? "https://api.openai.com"
                                                            : "https://api.anthropic.com";
  }
  if (config_.api_key_env.empty())
    throw Error(ErrorCode::ConfigError, "provider config names no api_key_env");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw Error(ErrorCode::AuthMissing, "environment variable " + config_.api_key_env + " is not set");
  api_key_ = key;
}

std::string HttpBackend::describe() const {
  return fmt::format("http({},{})", to_string(config_.provider), config_.base_url);
}

std::string HttpBackend::model_id(const std::string& label) const {
  auto it = config_.models.find(label);
  return it == config_.models.end() ? label : it->second;
}

std::string HttpBackend::request_body(const ChatRequest& r) const {
  json body;
  body["model"] = model_id(r.model_label);
  body["max_tokens"] = r.max_output_tokens;
  body["temperature"] = r.temperature;
  json messages = json::array();
  if (config_.provider == Provider::OpenAi) {
    if (r.system_text) messages.push_back({{"role", "system"}, {"content", *r.system_text}});
  } else if (r.system_text) {
    body["system"] = *r.system_text;
  }
  messages.push_back({{"role", "user"}, {"content", r.user_text}});
  body["messages"] = messages;
  return body.dump();
}

std::string HttpBackend::response_text(const std::string& body) const {
  try {
    auto j = json::parse(body);
    if (config_.provider == Provider::OpenAi) {
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    }
    std::string text;
    for (const auto& block : j.at("content"))
      if (block.value("type", "") == "text") text += block.at("text").get<std::string>();
    return text;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::NonRetryableProviderError,
                std::string("unexpected provider response: ") + e.what());
  }
}

std::string HttpBackend::complete(const ChatRequest& request) {
  auto [host, prefix] = split_base_url(config_.base_url);
  httplib::Client cli(host);
  cli.set_connection_timeout(config_.timeout_seconds, 0);
  cli.set_read_timeout(config_.timeout_seconds, 0);
  cli.set_write_timeout(config_.timeout_seconds, 0);

  httplib::Headers headers;
  std::string path;
  if (config_.provider == Provider::OpenAi) {
    headers.emplace("Authorization", "Bearer " + api_key_);
    path = prefix + "/v1/chat/completions";
  } else {
    headers.emplace("x-api-key", api_key_);
    headers.emplace("anthropic-version", "2023-06-01");
    path = prefix + "/v1/messages";
  }

  auto res = cli.Post(path, headers, request_body(request), "application/json");
  if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()));
  int status = res->status;
  if (status == 408 || status == 429 || status >= 500)
    throw TransientError(fmt::format("HTTP {}", status));
  if (status < 200 || status >= 300)
    throw Error(ErrorCode::NonRetryableProviderError,
                fmt::format("HTTP {}: {}", status, res->body.substr(0, 300)));
  return response_text(res->body);
}

}  // namespace gph::llm
