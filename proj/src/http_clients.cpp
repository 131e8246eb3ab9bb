#include <chrono>
#include <cstdlib>
#include <thread>

#include "htc/errors.hpp"
#include "htc/hash.hpp"
#include "htc/http_policy.hpp"
#include "htc/search.hpp"
#include "httplib.h"
#include "json.hpp"

namespace htc {

namespace {

void apply_api_key(httplib::Headers& headers, const std::string& env_name,
                   const std::string& header, const std::string& prefix) {
  if (env_name.empty()) return;
  const char* key = std::getenv(env_name.c_str());
  if (!key || !*key) return;
  headers.emplace(header, prefix + key);
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

void backoff(int attempt) {
  std::this_thread::sleep_for(std::chrono::milliseconds(100L << attempt));
}

// Runs `request` up to max_retries times with exponential backoff; returns
// the first 2xx body or throws TransportError.
template <class RequestFn>
std::string with_retries(const std::string& what, int max_retries, RequestFn&& request) {
  std::string last_error = "no attempt made";
  const int attempts = std::max(1, max_retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) backoff(attempt - 1);
    httplib::Result res = request();
    if (!res) {
      last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP status " + std::to_string(res->status);
    if (!retryable_status(res->status)) break;
  }
  throw TransportError(what + ": " + last_error);
}

}  // namespace

namespace engine {

PolicyResponse HttpPolicyClient::generate(const Conversation& conversation, uint64_t seed) {
  nlohmann::json messages = nlohmann::json::array();
  for (const ChatMessage& m : conversation) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  nlohmann::json body{{"model", config_.model},
                      {"messages", std::move(messages)},
                      {"temperature", config_.temperature},
                      {"max_tokens", config_.max_tokens},
                      {"seed", seed}};
  if (config_.request_logprobs) body["logprobs"] = true;

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
  httplib::Headers headers;
  apply_api_key(headers, config_.api_key_env, config_.api_key_header, config_.api_key_prefix);

  const std::string response_body =
      with_retries("policy endpoint " + config_.base_url, config_.max_retries, [&] {
        return client.Post(config_.path, headers, body.dump(), "application/json");
      });

  nlohmann::json j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded()) throw TransportError("policy endpoint returned invalid JSON");

  PolicyResponse out;
  if (j.contains("text") && j["text"].is_string()) {
    out.text = j["text"].get<std::string>();
  } else if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& choice = j["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content")) {
      out.text = choice["message"]["content"].get<std::string>();
    } else if (choice.contains("text")) {
      out.text = choice["text"].get<std::string>();
    } else {
      throw TransportError("policy response carries no text");
    }
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content")) {
      std::vector<TokenLogprob> lps;
      for (const auto& entry : choice["logprobs"]["content"]) {
        TokenLogprob lp;
        lp.logprob = entry.at("logprob").get<double>();
        if (entry.contains("token_id")) {
          lp.token_id = entry["token_id"].get<int>();
        } else {
          lp.token_id =
              static_cast<int>(fnv1a64(entry.value("token", std::string{})) & 0x7fffffff);
        }
        lps.push_back(lp);
      }
      out.token_logprobs = std::move(lps);
    }
  } else {
    throw TransportError("policy response carries no text");
  }

  if (!out.token_logprobs && j.contains("token_logprobs") && j["token_logprobs"].is_array()) {
    std::vector<TokenLogprob> lps;
    for (const auto& entry : j["token_logprobs"]) {
      if (entry.is_array() && entry.size() == 2) {
        lps.push_back(TokenLogprob{entry[0].get<int>(), entry[1].get<double>()});
      } else if (entry.is_object()) {
        lps.push_back(
            TokenLogprob{entry.at("token_id").get<int>(), entry.at("logprob").get<double>()});
      }
    }
    out.token_logprobs = std::move(lps);
  }

  if (out.token_logprobs) {
    for (const TokenLogprob& lp : *out.token_logprobs) {
      if (lp.logprob > 0.0 || lp.token_id < 0) {
        throw TransportError("policy response carries an invalid token logprob");
      }
    }
  }
  return out;
}

}  // namespace engine

namespace search {

std::vector<SearchHit> HttpSearchClient::search(const std::string& query, int top_k) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
  httplib::Headers headers;
  apply_api_key(headers, config_.api_key_env, config_.api_key_header, config_.api_key_prefix);

  httplib::Params params{{config_.query_param, query},
                         {config_.top_k_param, std::to_string(top_k)}};

  const std::string body =
      with_retries("search endpoint " + config_.base_url, config_.max_retries,
                   [&] { return client.Get(config_.path, params, headers); });

  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("search endpoint returned invalid JSON");
  const nlohmann::json* results = &j;
  if (!config_.results_path.empty()) {
    if (!j.contains(config_.results_path)) {
      throw TransportError("search response lacks field \"" + config_.results_path + "\"");
    }
    results = &j[config_.results_path];
  }
  if (!results->is_array()) throw TransportError("search results field is not an array");

  std::vector<SearchHit> hits;
  for (const auto& r : *results) {
    if (static_cast<int>(hits.size()) >= top_k) break;
    SearchHit hit;
    hit.title = r.value(config_.title_field, std::string{});
    hit.snippet = r.value(config_.snippet_field, std::string{});
    hit.source = r.value(config_.source_field, std::string{});
    if (hit.snippet.empty()) hit.snippet = hit.title;
    if (hit.snippet.empty()) continue;
    hits.push_back(std::move(hit));
  }
  return hits;
}

}  // namespace search

}  // namespace htc
