#include "htc/engine.hpp"

#include <atomic>
#include <cctype>
#include <thread>

#include "htc/errors.hpp"
#include "htc/hash.hpp"

namespace htc::engine {

namespace {

using protocol::Segment;
using protocol::SegmentKind;
using protocol::Terminal;
using protocol::Trajectory;

std::string trim_copy(const std::string& s) {
  size_t begin = 0;
  size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

// Inner toolcaller emissions: a <search> request, a <summary>, or an
// untagged direct answer.
struct ToolcallerAction {
  enum class Kind { Search, Summary } kind;
  std::string payload;
};

std::optional<std::string> extract_tagged(const std::string& text, const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const size_t begin = text.find(open);
  if (begin == std::string::npos) return std::nullopt;
  const size_t payload_begin = begin + open.size();
  const size_t end = text.find(close, payload_begin);
  if (end == std::string::npos) return std::nullopt;
  return text.substr(payload_begin, end - payload_begin);
}

ToolcallerAction parse_toolcaller_reply(const std::string& text) {
  if (auto query = extract_tagged(text, "search")) {
    return {ToolcallerAction::Kind::Search, trim_copy(*query)};
  }
  if (auto summary = extract_tagged(text, "summary")) {
    return {ToolcallerAction::Kind::Summary, trim_copy(*summary)};
  }
  return {ToolcallerAction::Kind::Summary, trim_copy(text)};
}

std::string format_hits_for_agent(const std::vector<search::SearchHit>& hits) {
  if (hits.empty()) return "(no results)";
  std::string out = "search results:";
  int rank = 1;
  for (const auto& hit : hits) {
    out += "\n" + std::to_string(rank++) + ". " + hit.title + " - " + hit.snippet + " [" +
           hit.source + "]";
  }
  return out;
}

void finish(Trajectory& t, Terminal terminal) {
  t.terminal = terminal;
  protocol::assign_char_spans(t.segments);
}

template <class Fn>
auto gated(EngineDeps& deps, Fn&& fn) {
  if (!deps.throttle) return fn();
  return deps.throttle->run(std::forward<Fn>(fn));
}

}  // namespace

void EndpointThrottle::acquire() {
  if (!enabled_) return;
  sem_.acquire();
}

void EndpointThrottle::release() {
  if (!enabled_) return;
  sem_.release();
}

std::string_view run_mode_label(RunMode mode) {
  switch (mode) {
    case RunMode::Hierarchical: return "hierarchical";
    case RunMode::FlatRawSearch: return "flat-raw-search";
    case RunMode::DirectIO: return "direct-io";
    case RunMode::DirectIOPlusSearch: return "direct-io+search";
  }
  return "?";
}

std::optional<RunMode> run_mode_from_label(std::string_view label) {
  for (RunMode mode : {RunMode::Hierarchical, RunMode::FlatRawSearch, RunMode::DirectIO,
                       RunMode::DirectIOPlusSearch}) {
    if (run_mode_label(mode) == label) return mode;
  }
  return std::nullopt;
}

std::string concat_snippets(const std::vector<search::SearchHit>& hits) {
  if (hits.empty()) return "(no results)";
  std::string out;
  for (const auto& hit : hits) {
    if (!out.empty()) out += "\n";
    out += hit.snippet;
  }
  return out;
}

std::string format_observation_message(const std::string& observation_text,
                                       const protocol::TagSet& tags) {
  return "<" + tags.observation + ">" + observation_text + "</" + tags.observation + ">";
}

std::string render_conversation(const Conversation& conversation) {
  std::string out;
  for (const ChatMessage& m : conversation) {
    out += m.role + ": " + m.content + "\n";
  }
  return out;
}

ObservationPacket toolcaller_answer(const std::string& subquery, PolicyClient& agent_policy,
                                    search::SearchClient& searcher,
                                    const ToolcallerConfig& budget,
                                    const std::string& system_prompt, uint64_t seed) {
  ObservationPacket packet;
  packet.subquery = subquery;

  Conversation conv;
  if (!system_prompt.empty()) conv.push_back({"system", system_prompt});
  conv.push_back({"user", subquery});

  for (;;) {
    PolicyResponse reply = agent_policy.generate(conv, seed);
    ToolcallerAction action = parse_toolcaller_reply(reply.text);
    if (action.kind == ToolcallerAction::Kind::Summary) {
      packet.summary = action.payload.empty() ? kNoConclusiveResult : action.payload;
      return packet;
    }
    if (packet.search_calls_used >= budget.max_search_calls) {
      packet.summary = kNoConclusiveResult;
      return packet;
    }
    auto hits = searcher.search(action.payload, budget.top_k);
    ++packet.search_calls_used;
    packet.hits.insert(packet.hits.end(), hits.begin(), hits.end());
    conv.push_back({"assistant", reply.text});
    conv.push_back({"user", format_hits_for_agent(hits)});
  }
}

RolloutOutcome run_rollout(const std::string& question, const std::string& prompt_id,
                           RunMode mode, EngineDeps& deps, const RolloutLimits& limits,
                           uint64_t seed) {
  if (question.empty()) return RolloutFailure{"empty question"};
  if (limits.max_rounds < 1) return RolloutFailure{"max_rounds must be >= 1"};
  if (!deps.planner) return RolloutFailure{"no planner policy configured"};

  const bool tool_mode = mode == RunMode::Hierarchical || mode == RunMode::FlatRawSearch;
  if ((tool_mode || mode == RunMode::DirectIOPlusSearch) && !deps.searcher) {
    return RolloutFailure{"no search client configured"};
  }
  if (mode == RunMode::Hierarchical && !deps.toolcaller) {
    return RolloutFailure{"no toolcaller policy configured"};
  }

  RolloutRecord record;
  record.trajectory.prompt_id = prompt_id;
  Trajectory& traj = record.trajectory;

  try {
    Conversation conv;
    conv.push_back({"system", tool_mode ? deps.planner_prompt : deps.direct_prompt});
    conv.push_back({"user", question});

    if (mode == RunMode::DirectIOPlusSearch) {
      auto hits = gated(deps, [&] {
        return deps.searcher->search(question, deps.toolcaller_config.top_k);
      });
      const std::string obs_text = concat_snippets(hits);
      ObservationPacket packet;
      packet.subquery = question;
      packet.summary = obs_text;
      packet.hits = std::move(hits);
      packet.search_calls_used = 1;
      record.packets.push_back(std::move(packet));
      traj.segments.push_back(Segment{SegmentKind::Observation, obs_text, {}});
      conv.push_back({"user", format_observation_message(obs_text)});
    }

    int rounds = 0;
    for (;;) {
      PolicyResponse response = gated(deps, [&] { return deps.planner->generate(conv, seed); });
      auto parsed = protocol::parse_planner_emission(response.text);
      if (!parsed) {
        finish(traj, Terminal::MalformedOutput);
        return record;
      }
      std::vector<Segment>& emitted = parsed.value();
      const bool is_answer = emitted.back().kind == SegmentKind::Answer;

      if (is_answer) {
        for (Segment& seg : emitted) traj.segments.push_back(std::move(seg));
        finish(traj, Terminal::Answered);
        return record;
      }

      // Tool call. Direct modes have no tool access; treat as malformed.
      if (!tool_mode) {
        finish(traj, Terminal::MalformedOutput);
        return record;
      }
      if (rounds >= limits.max_rounds) {
        // The over-limit emission is discarded; the completed rounds stand.
        finish(traj, Terminal::RoundLimitExceeded);
        return record;
      }

      const std::string subquery = emitted.back().text;
      for (Segment& seg : emitted) traj.segments.push_back(std::move(seg));

      ObservationPacket packet;
      if (mode == RunMode::Hierarchical) {
        packet = gated(deps, [&] {
          return toolcaller_answer(subquery, *deps.toolcaller, *deps.searcher,
                                   deps.toolcaller_config, deps.toolcaller_prompt,
                                   mix_seed(seed, static_cast<uint64_t>(rounds)));
        });
      } else {
        auto hits = gated(deps, [&] {
          return deps.searcher->search(subquery, deps.toolcaller_config.top_k);
        });
        packet.subquery = subquery;
        packet.summary = concat_snippets(hits);
        packet.hits = std::move(hits);
        packet.search_calls_used = 1;
      }

      const std::string obs_text = packet.summary.empty() ? kNoConclusiveResult : packet.summary;
      traj.segments.push_back(Segment{SegmentKind::Observation, obs_text, {}});
      record.packets.push_back(std::move(packet));

      conv.push_back({"assistant", response.text});
      conv.push_back({"user", format_observation_message(obs_text)});
      ++rounds;
    }
  } catch (const TransportError& e) {
    return RolloutFailure{std::string("transport failure: ") + e.what()};
  }
}

std::vector<RolloutOutcome> run_batch(std::span<const RolloutRequest> requests, RunMode mode,
                                      EngineDeps& deps, const RolloutLimits& limits,
                                      int concurrency_limit, uint64_t base_seed) {
  std::vector<RolloutOutcome> results(requests.size(), RolloutFailure{"not run"});
  if (requests.empty()) return results;

  const int workers =
      std::max(1, std::min<int>(concurrency_limit, static_cast<int>(requests.size())));
  std::atomic<size_t> next{0};

  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      const RolloutRequest& req = requests[i];
      try {
        results[i] = run_rollout(req.question, req.prompt_id, mode, deps, limits,
                                 base_seed + static_cast<uint64_t>(i));
      } catch (const std::exception& e) {
        results[i] = RolloutFailure{std::string("rollout failed: ") + e.what()};
      }
    }
  };

  if (workers == 1) {
    work();
    return results;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) threads.emplace_back(work);
  for (std::thread& t : threads) t.join();
  return results;
}

PolicyResponse RuleScriptedPolicy::generate(const Conversation& conversation, uint64_t seed) {
  (void)seed;
  int turn = 0;
  for (const ChatMessage& m : conversation) {
    if (m.role == "assistant") ++turn;
  }
  const std::string rendered = render_conversation(conversation);
  for (const ScriptRule& rule : rules_) {
    if (rule.turn && *rule.turn != turn) continue;
    if (rule.match && rendered.find(*rule.match) == std::string::npos) continue;
    return PolicyResponse{rule.emit, std::nullopt};
  }
  throw TransportError("no scripted rule matched (turn " + std::to_string(turn) + ")");
}

PolicyResponse SeededChoicePolicy::generate(const Conversation& conversation, uint64_t seed) {
  (void)conversation;
  if (answers_.empty()) throw TransportError("seeded policy has no answers");
  const size_t index = seed % answers_.size();
  return PolicyResponse{"<think>option " + std::to_string(index) + "</think><answer>" +
                            answers_[index] + "</answer>",
                        std::nullopt};
}

}  // namespace htc::engine
