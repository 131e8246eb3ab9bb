#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "htc/expected.hpp"
#include "htc/protocol.hpp"
#include "htc/search.hpp"

namespace htc::engine {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

using Conversation = std::vector<ChatMessage>;

struct TokenLogprob {
  int token_id = 0;
  double logprob = 0.0;  // <= 0; exp(logprob) in (0, 1]
};

struct PolicyResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
};

// Chat-completion access to the policy being driven. Implementations must be
// safely shareable across concurrent rollouts and deterministic given
// (conversation, seed) when scripted. Throws TransportError on failure.
class PolicyClient {
 public:
  virtual ~PolicyClient() = default;
  virtual PolicyResponse generate(const Conversation& conversation, uint64_t seed) = 0;
};

enum class RunMode {
  Hierarchical,       // planner delegates sub-queries to the toolcaller agent
  FlatRawSearch,      // tool calls answered with raw concatenated snippets
  DirectIO,           // single generation, no tool access
  DirectIOPlusSearch, // one search over the question primes the conversation
};

std::string_view run_mode_label(RunMode mode);
std::optional<RunMode> run_mode_from_label(std::string_view label);

struct ObservationPacket {
  std::string subquery;
  std::string summary;  // the observation text handed to the planner
  std::vector<search::SearchHit> hits;
  int search_calls_used = 0;
};

// Fallback summary when the toolcaller exhausts its search budget or
// produces an empty reply.
inline constexpr const char* kNoConclusiveResult = "no conclusive result";

struct ToolcallerConfig {
  int top_k = 5;
  int max_search_calls = 3;
};

struct RolloutLimits {
  int max_rounds = 10;
};

// Cap on concurrent calls into the policy/search endpoints, shared by all
// rollouts of a run. Disabled when max_inflight <= 0.
class EndpointThrottle {
 public:
  explicit EndpointThrottle(int max_inflight)
      : enabled_(max_inflight > 0), sem_(max_inflight > 0 ? max_inflight : 1) {}

  void acquire();
  void release();

  template <class Fn>
  auto run(Fn&& fn) {
    acquire();
    struct Release {
      EndpointThrottle& t;
      ~Release() { t.release(); }
    } release{*this};
    return fn();
  }

 private:
  bool enabled_;
  std::counting_semaphore<> sem_;
};

struct EngineDeps {
  std::shared_ptr<PolicyClient> planner;
  std::shared_ptr<PolicyClient> toolcaller;  // required for Hierarchical mode
  std::shared_ptr<search::SearchClient> searcher;
  std::string planner_prompt;     // system prompt for tool-enabled modes
  std::string direct_prompt;      // system prompt for direct-IO modes
  std::string toolcaller_prompt;  // system prompt for the toolcaller agent
  ToolcallerConfig toolcaller_config;
  std::shared_ptr<EndpointThrottle> throttle;  // null = unlimited
};

struct RolloutFailure {
  std::string message;
};

struct RolloutRecord {
  protocol::Trajectory trajectory;
  std::vector<ObservationPacket> packets;  // provenance, one per observation
};

using RolloutOutcome = Expected<RolloutRecord, RolloutFailure>;

// Drives one planner loop to a terminal state. Transport failures surface as
// RolloutFailure; malformed generations and round-limit overruns terminate
// the trajectory instead.
RolloutOutcome run_rollout(const std::string& question, const std::string& prompt_id,
                           RunMode mode, EngineDeps& deps, const RolloutLimits& limits,
                           uint64_t seed);

// Inner sub-agent loop: the toolcaller policy may issue up to
// max_search_calls <search> requests and ends with a <summary> (an untagged
// reply counts as a direct summary). Budget exhaustion yields the sentinel
// summary with all accumulated hits.
ObservationPacket toolcaller_answer(const std::string& subquery, PolicyClient& agent_policy,
                                    search::SearchClient& searcher,
                                    const ToolcallerConfig& budget,
                                    const std::string& system_prompt, uint64_t seed);

struct RolloutRequest {
  std::string prompt_id;
  std::string question;
};

// Independent rollouts, results in input order; per-item seed is
// base_seed + item index, so outputs do not depend on the concurrency level.
std::vector<RolloutOutcome> run_batch(std::span<const RolloutRequest> requests, RunMode mode,
                                      EngineDeps& deps, const RolloutLimits& limits,
                                      int concurrency_limit, uint64_t base_seed);

// Raw observation text for FlatRawSearch / DirectIOPlusSearch: the snippets
// joined by newlines, with a fixed placeholder when there are no hits.
std::string concat_snippets(const std::vector<search::SearchHit>& hits);

std::string format_observation_message(const std::string& observation_text,
                                       const protocol::TagSet& tags = protocol::default_tags());

// --- scripted policies (deterministic test doubles) ---

struct ScriptRule {
  std::optional<int> turn;           // match only this assistant-turn index
  std::optional<std::string> match;  // substring of the rendered conversation
  std::string emit;
};

// First rule whose constraints hold wins; no match raises TransportError.
class RuleScriptedPolicy : public PolicyClient {
 public:
  explicit RuleScriptedPolicy(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

  PolicyResponse generate(const Conversation& conversation, uint64_t seed) override;

 private:
  std::vector<ScriptRule> rules_;
};

// Emits think+answer with the answer chosen by the seed; distinct seeds give
// distinct answers (modulo the list length).
class SeededChoicePolicy : public PolicyClient {
 public:
  explicit SeededChoicePolicy(std::vector<std::string> answers)
      : answers_(std::move(answers)) {}

  PolicyResponse generate(const Conversation& conversation, uint64_t seed) override;

 private:
  std::vector<std::string> answers_;
};

std::string render_conversation(const Conversation& conversation);

}  // namespace htc::engine
