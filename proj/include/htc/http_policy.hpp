#pragma once

#include <string>

#include "htc/engine.hpp"

namespace htc::engine {

// Chat-completions wire contract: POST {model, messages:[{role, content}],
// temperature, max_tokens, logprobs?, seed} -> {text | choices[0].message.
// content, optional token logprobs}. The API key comes from the named
// environment variable.
struct HttpPolicyConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  double temperature = 1.0;
  int max_tokens = 1024;
  bool request_logprobs = false;
  std::string api_key_env;
  std::string api_key_header = "Authorization";
  std::string api_key_prefix = "Bearer ";
  int timeout_ms = 30000;
  int max_retries = 3;
};

class HttpPolicyClient : public PolicyClient {
 public:
  explicit HttpPolicyClient(HttpPolicyConfig config) : config_(std::move(config)) {}

  PolicyResponse generate(const Conversation& conversation, uint64_t seed) override;

 private:
  HttpPolicyConfig config_;
};

}  // namespace htc::engine
