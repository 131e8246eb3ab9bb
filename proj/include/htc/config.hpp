#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "htc/engine.hpp"
#include "htc/grpo.hpp"
#include "htc/http_policy.hpp"
#include "htc/metrics.hpp"
#include "htc/search.hpp"
#include "json.hpp"

namespace htc::config {

struct PolicyEndpointConfig {
  std::string type;  // "http" | "scripted_rules" | "seeded_choice" | "" (unset)
  engine::HttpPolicyConfig http;
  std::string script_path;            // scripted_rules
  std::vector<std::string> answers;   // seeded_choice
};

struct SearchEndpointConfig {
  std::string type = "fixture";  // "fixture" | "http" | "replay"
  std::string corpus_path;
  search::HttpSearchConfig http;
  std::string cache_dir;                  // empty = no persistent cache
  std::string cache_mode = "read_write";  // "read_write" | "read_only"
};

struct PromptPaths {
  std::string planner;
  std::string direct;
  std::string toolcaller;
};

struct AppConfig {
  PolicyEndpointConfig policy;             // the planner policy
  PolicyEndpointConfig toolcaller_policy;  // unset = share the planner policy
  SearchEndpointConfig search;
  PromptPaths prompts;  // empty entries fall back to the built-in prompts
  engine::ToolcallerConfig toolcaller;
  engine::RolloutLimits limits;
  grpo::GrpoConfig grpo;
  int concurrency = 4;
  int max_inflight = 0;  // per-endpoint in-flight cap; 0 = unlimited
  metrics::CemVariant cem_variant = metrics::CemVariant::TokenSubsequence;
  std::optional<double> mixture_ratio;  // required by the mixture command

  static AppConfig from_file(const std::filesystem::path& path);  // throws ConfigError
  static AppConfig from_json(const nlohmann::json& j);
};

// Full effective configuration with defaults filled in; the fingerprint
// input and the `meta.config` echo in reports.
nlohmann::json canonical_json(const AppConfig& cfg);

std::string fingerprint(const nlohmann::json& effective_config);

// Loads a scripted_rules file: a JSON array of {turn?, match?, emit}.
std::vector<engine::ScriptRule> load_script_rules(const std::filesystem::path& path);

// Instantiates clients and prompts. With `offline` set, any "http" endpoint
// is rejected (ConfigError) and replay/fixture backends are required.
engine::EngineDeps build_deps(const AppConfig& cfg, bool offline);

}  // namespace htc::config
