#include "htc/config.hpp"

#include <fstream>
#include <sstream>

#include "htc/errors.hpp"
#include "htc/hash.hpp"
#include "htc/prompts.hpp"

namespace htc::config {

namespace {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void parse_policy(const nlohmann::json& j, PolicyEndpointConfig& out) {
  out.type = j.value("type", out.type);
  out.script_path = j.value("script", out.script_path);
  if (j.contains("answers")) out.answers = j["answers"].get<std::vector<std::string>>();
  out.http.base_url = j.value("base_url", out.http.base_url);
  out.http.path = j.value("path", out.http.path);
  out.http.model = j.value("model", out.http.model);
  out.http.temperature = j.value("temperature", out.http.temperature);
  out.http.max_tokens = j.value("max_tokens", out.http.max_tokens);
  out.http.request_logprobs = j.value("logprobs", out.http.request_logprobs);
  out.http.api_key_env = j.value("api_key_env", out.http.api_key_env);
  out.http.timeout_ms = j.value("timeout_ms", out.http.timeout_ms);
  out.http.max_retries = j.value("max_retries", out.http.max_retries);
}

nlohmann::json policy_to_json(const PolicyEndpointConfig& p) {
  return nlohmann::json{{"type", p.type},
                        {"script", p.script_path},
                        {"answers", p.answers},
                        {"base_url", p.http.base_url},
                        {"path", p.http.path},
                        {"model", p.http.model},
                        {"temperature", p.http.temperature},
                        {"max_tokens", p.http.max_tokens},
                        {"logprobs", p.http.request_logprobs},
                        {"api_key_env", p.http.api_key_env},
                        {"timeout_ms", p.http.timeout_ms},
                        {"max_retries", p.http.max_retries}};
}

std::shared_ptr<engine::PolicyClient> make_policy(const PolicyEndpointConfig& cfg, bool offline,
                                                  const char* role) {
  if (cfg.type == "http") {
    if (offline) {
      throw ConfigError(std::string(role) + " policy type \"http\" is forbidden with --offline");
    }
    return std::make_shared<engine::HttpPolicyClient>(cfg.http);
  }
  if (cfg.type == "scripted_rules") {
    if (cfg.script_path.empty()) {
      throw ConfigError(std::string(role) + " scripted_rules policy needs a \"script\" path");
    }
    return std::make_shared<engine::RuleScriptedPolicy>(load_script_rules(cfg.script_path));
  }
  if (cfg.type == "seeded_choice") {
    if (cfg.answers.empty()) {
      throw ConfigError(std::string(role) + " seeded_choice policy needs \"answers\"");
    }
    return std::make_shared<engine::SeededChoicePolicy>(cfg.answers);
  }
  throw ConfigError(std::string(role) + " policy type \"" + cfg.type + "\" is unknown");
}

}  // namespace

AppConfig AppConfig::from_file(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return from_json(j);
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
  AppConfig cfg;
  cfg.policy.type = "http";
  if (j.contains("policy")) parse_policy(j["policy"], cfg.policy);
  if (j.contains("toolcaller_policy")) parse_policy(j["toolcaller_policy"], cfg.toolcaller_policy);

  if (j.contains("search")) {
    const auto& s = j["search"];
    cfg.search.type = s.value("type", cfg.search.type);
    cfg.search.corpus_path = s.value("corpus", cfg.search.corpus_path);
    cfg.search.cache_dir = s.value("cache_dir", cfg.search.cache_dir);
    cfg.search.cache_mode = s.value("cache_mode", cfg.search.cache_mode);
    cfg.search.http.base_url = s.value("base_url", cfg.search.http.base_url);
    cfg.search.http.path = s.value("path", cfg.search.http.path);
    cfg.search.http.query_param = s.value("query_param", cfg.search.http.query_param);
    cfg.search.http.top_k_param = s.value("top_k_param", cfg.search.http.top_k_param);
    cfg.search.http.results_path = s.value("results_path", cfg.search.http.results_path);
    cfg.search.http.title_field = s.value("title_field", cfg.search.http.title_field);
    cfg.search.http.snippet_field = s.value("snippet_field", cfg.search.http.snippet_field);
    cfg.search.http.source_field = s.value("source_field", cfg.search.http.source_field);
    cfg.search.http.api_key_env = s.value("api_key_env", cfg.search.http.api_key_env);
    cfg.search.http.timeout_ms = s.value("timeout_ms", cfg.search.http.timeout_ms);
    cfg.search.http.max_retries = s.value("max_retries", cfg.search.http.max_retries);
  }

  if (j.contains("prompts")) {
    const auto& p = j["prompts"];
    cfg.prompts.planner = p.value("planner", cfg.prompts.planner);
    cfg.prompts.direct = p.value("direct", cfg.prompts.direct);
    cfg.prompts.toolcaller = p.value("toolcaller", cfg.prompts.toolcaller);
  }

  if (j.contains("toolcaller")) {
    const auto& t = j["toolcaller"];
    cfg.toolcaller.top_k = t.value("top_k", cfg.toolcaller.top_k);
    cfg.toolcaller.max_search_calls = t.value("max_search_calls", cfg.toolcaller.max_search_calls);
  }

  if (j.contains("limits")) {
    cfg.limits.max_rounds = j["limits"].value("max_rounds", cfg.limits.max_rounds);
  }

  if (j.contains("grpo")) {
    const auto& g = j["grpo"];
    cfg.grpo.group_size = g.value("group_size", cfg.grpo.group_size);
    cfg.grpo.batch_prompts = g.value("batch_prompts", cfg.grpo.batch_prompts);
    cfg.grpo.clip_epsilon = g.value("clip_epsilon", cfg.grpo.clip_epsilon);
    cfg.grpo.kl_beta = g.value("kl_beta", cfg.grpo.kl_beta);
    cfg.grpo.advantage_std_floor = g.value("advantage_std_floor", cfg.grpo.advantage_std_floor);
    cfg.grpo.mask_pad_token_id = g.value("mask_pad_token_id", cfg.grpo.mask_pad_token_id);
  }

  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  cfg.max_inflight = j.value("max_inflight", cfg.max_inflight);
  if (j.contains("cem_variant")) {
    const std::string v = j["cem_variant"].get<std::string>();
    if (v == "token_subsequence") {
      cfg.cem_variant = metrics::CemVariant::TokenSubsequence;
    } else if (v == "raw_substring") {
      cfg.cem_variant = metrics::CemVariant::RawSubstring;
    } else {
      throw ConfigError("unknown cem_variant \"" + v + "\"");
    }
  }
  if (j.contains("mixture") && j["mixture"].contains("ratio")) {
    cfg.mixture_ratio = j["mixture"]["ratio"].get<double>();
  }
  return cfg;
}

nlohmann::json canonical_json(const AppConfig& cfg) {
  nlohmann::json j;
  j["policy"] = policy_to_json(cfg.policy);
  j["toolcaller_policy"] = policy_to_json(cfg.toolcaller_policy);
  j["search"] = {{"type", cfg.search.type},
                 {"corpus", cfg.search.corpus_path},
                 {"cache_dir", cfg.search.cache_dir},
                 {"cache_mode", cfg.search.cache_mode},
                 {"base_url", cfg.search.http.base_url},
                 {"path", cfg.search.http.path},
                 {"query_param", cfg.search.http.query_param},
                 {"top_k_param", cfg.search.http.top_k_param},
                 {"results_path", cfg.search.http.results_path},
                 {"title_field", cfg.search.http.title_field},
                 {"snippet_field", cfg.search.http.snippet_field},
                 {"source_field", cfg.search.http.source_field},
                 {"api_key_env", cfg.search.http.api_key_env},
                 {"timeout_ms", cfg.search.http.timeout_ms},
                 {"max_retries", cfg.search.http.max_retries}};
  j["prompts"] = {{"planner", cfg.prompts.planner},
                  {"direct", cfg.prompts.direct},
                  {"toolcaller", cfg.prompts.toolcaller}};
  j["toolcaller"] = {{"top_k", cfg.toolcaller.top_k},
                     {"max_search_calls", cfg.toolcaller.max_search_calls}};
  j["limits"] = {{"max_rounds", cfg.limits.max_rounds}};
  j["grpo"] = {{"group_size", cfg.grpo.group_size},
               {"batch_prompts", cfg.grpo.batch_prompts},
               {"clip_epsilon", cfg.grpo.clip_epsilon},
               {"kl_beta", cfg.grpo.kl_beta},
               {"advantage_std_floor", cfg.grpo.advantage_std_floor},
               {"mask_pad_token_id", cfg.grpo.mask_pad_token_id}};
  j["concurrency"] = cfg.concurrency;
  j["max_inflight"] = cfg.max_inflight;
  j["cem_variant"] = metrics::cem_variant_label(cfg.cem_variant);
  if (cfg.mixture_ratio) {
    j["mixture"] = {{"ratio", *cfg.mixture_ratio}};
  }
  return j;
}

std::string fingerprint(const nlohmann::json& effective_config) {
  return fnv1a64_hex(effective_config.dump());
}

std::vector<engine::ScriptRule> load_script_rules(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw ConfigError("script file is not a JSON array: " + path.string());
  }
  std::vector<engine::ScriptRule> rules;
  for (const auto& r : j) {
    engine::ScriptRule rule;
    if (r.contains("turn")) rule.turn = r["turn"].get<int>();
    if (r.contains("match")) rule.match = r["match"].get<std::string>();
    rule.emit = r.at("emit").get<std::string>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

engine::EngineDeps build_deps(const AppConfig& cfg, bool offline) {
  engine::EngineDeps deps;
  deps.planner = make_policy(cfg.policy, offline, "planner");
  if (cfg.toolcaller_policy.type.empty()) {
    deps.toolcaller = deps.planner;
  } else {
    deps.toolcaller = make_policy(cfg.toolcaller_policy, offline, "toolcaller");
  }

  std::shared_ptr<search::SearchClient> backend;
  if (cfg.search.type == "fixture") {
    if (cfg.search.corpus_path.empty()) {
      throw ConfigError("search type \"fixture\" needs a \"corpus\" path");
    }
    backend = std::make_shared<search::FixtureSearchClient>(
        search::FixtureCorpus::from_jsonl(cfg.search.corpus_path));
  } else if (cfg.search.type == "http") {
    if (offline) throw ConfigError("search type \"http\" is forbidden with --offline");
    backend = std::make_shared<search::HttpSearchClient>(cfg.search.http);
  } else if (cfg.search.type == "replay") {
    if (cfg.search.cache_dir.empty()) {
      throw ConfigError("search type \"replay\" needs a \"cache_dir\"");
    }
    backend = nullptr;  // served purely from the store below
  } else {
    throw ConfigError("search type \"" + cfg.search.type + "\" is unknown");
  }

  if (!cfg.search.cache_dir.empty() || cfg.search.type == "replay") {
    search::CacheMode mode = search::CacheMode::ReadWrite;
    if (cfg.search.type == "replay" || cfg.search.cache_mode == "read_only") {
      mode = search::CacheMode::ReadOnly;
    } else if (cfg.search.cache_mode != "read_write") {
      throw ConfigError("unknown cache_mode \"" + cfg.search.cache_mode + "\"");
    }
    deps.searcher = std::make_shared<search::CachedSearchClient>(
        backend, std::filesystem::path(cfg.search.cache_dir), mode);
  } else {
    deps.searcher = backend;
  }

  deps.planner_prompt = cfg.prompts.planner.empty() ? std::string(prompts::kPlanner)
                                                    : read_text_file(cfg.prompts.planner);
  deps.direct_prompt = cfg.prompts.direct.empty() ? std::string(prompts::kDirect)
                                                  : read_text_file(cfg.prompts.direct);
  deps.toolcaller_prompt = cfg.prompts.toolcaller.empty()
                               ? std::string(prompts::kToolcaller)
                               : read_text_file(cfg.prompts.toolcaller);
  deps.toolcaller_config = cfg.toolcaller;
  if (cfg.max_inflight > 0) {
    deps.throttle = std::make_shared<engine::EndpointThrottle>(cfg.max_inflight);
  }
  return deps;
}

}  // namespace htc::config
