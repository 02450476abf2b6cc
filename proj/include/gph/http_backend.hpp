#pragma once

#include <map>
#include <string>

#include "gph/llm.hpp"

namespace gph::llm {

enum class Provider { OpenAi, Anthropic };

Provider parse_provider(std::string_view s);
std::string_view to_string(Provider p);

struct ProviderConfig {
  Provider provider = Provider::OpenAi;
  /// Scheme, host and optional port, e.g. "https://api.openai.com".
  std::string base_url;
  /// Name of the environment variable holding the API key.
  std::string api_key_env;
  /// Model label -> provider model id. Labels not listed are sent verbatim.
  std::map<std::string, std::string> models;
  int timeout_seconds = 120;
};

/// Chat-completion adapter for OpenAI- and Anthropic-style HTTP APIs.
class HttpBackend : public Backend {
 public:
  /// Reads the key from the environment now; throws AuthMissing when unset.
  explicit HttpBackend(ProviderConfig config);

  BackendKind kind() const override { return BackendKind::Http; }
  std::string describe() const override;
  std::string complete(const ChatRequest& request) override;

  /// Request body for `request`, exposed for tests.
  std::string request_body(const ChatRequest& request) const;
  /// Extracts the reply text from a provider response body.
  std::string response_text(const std::string& body) const;

 private:
  std::string model_id(const std::string& label) const;

  ProviderConfig config_;
  std::string api_key_;
};

}  // namespace gph::llm
