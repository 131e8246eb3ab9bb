#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htc/expected.hpp"

namespace htc::protocol {

// Tagged segment grammar for planner output and full trajectories.
//
// A planner emission is zero or more <think> blocks followed by exactly one
// terminal block, either <tool_calling> or <answer>. A full trajectory
// additionally contains engine-inserted <obs> blocks: every <tool_calling>
// is immediately followed by an <obs>, an <obs> may also open the trajectory
// (search-primed modes), and <answer> may only appear as the last segment.
//
// Payloads may not contain any protocol tag string; there is no escaping
// scheme. Non-protocol angle-bracket text inside a payload is plain text.

enum class SegmentKind { Think, ToolCall, Observation, Answer };

// Half-open [begin, end) character range.
struct CharSpan {
  size_t begin = 0;
  size_t end = 0;

  size_t length() const { return end - begin; }
  bool operator==(const CharSpan& other) const = default;
};

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string text;    // payload between the tags, tags excluded
  CharSpan char_span;  // into the serialized trajectory, tags included
};

enum class Terminal { Answered, MalformedOutput, RoundLimitExceeded };

struct Trajectory {
  std::string prompt_id;
  std::vector<Segment> segments;
  Terminal terminal = Terminal::MalformedOutput;

  int rounds_used() const;
};

enum class ParseErrorCode {
  UnclosedTag,        // opener without its closer, stray/mismatched closer, nested tag
  UnknownTag,         // well-formed tag token whose name is not a protocol tag
  MultipleTerminals,  // more than one tool_calling/answer block in an emission
  EmptyPayload,       // tag pair with no non-whitespace payload
  TrailingGarbage,    // non-whitespace content outside tags, or content after the terminal
  MissingTerminal,    // emission with no tool_calling/answer block
  InvalidSequence,    // segment order violates the trajectory grammar
};

std::string_view parse_error_code_name(ParseErrorCode code);

struct ParseError {
  ParseErrorCode code = ParseErrorCode::TrailingGarbage;
  std::string message;
  size_t offset = 0;  // character offset into the parsed text
};

// The four tag names; the answer tag is configurable alongside the others.
struct TagSet {
  std::string think = "think";
  std::string tool_call = "tool_calling";
  std::string observation = "obs";
  std::string answer = "answer";

  const std::string& name_for(SegmentKind kind) const;
};

const TagSet& default_tags();

using SegmentsOrError = Expected<std::vector<Segment>, ParseError>;

// Parses one planner generation. Accepted shape: think* (tool_calling|answer).
// Char spans are relative to `text`. Whitespace between segments is allowed.
SegmentsOrError parse_planner_emission(std::string_view text, const TagSet& tags = default_tags());

// Parses a serialized trajectory body (the full grammar described above).
// An empty input yields an empty segment list.
SegmentsOrError parse_trajectory_text(std::string_view text, const TagSet& tags = default_tags());

// Canonical serialization: segments concatenated with no separator,
// each as <tag>payload</tag>.
std::string serialize_segments(const std::vector<Segment>& segments,
                               const TagSet& tags = default_tags());
std::string serialize_trajectory(const Trajectory& t, const TagSet& tags = default_tags());

// Rewrites char_span on every segment to match the canonical serialization.
void assign_char_spans(std::vector<Segment>& segments, const TagSet& tags = default_tags());

// Spans (tags inclusive) of every Observation segment, in order, relative to
// the canonical serialization.
std::vector<CharSpan> observation_char_spans(const Trajectory& t,
                                             const TagSet& tags = default_tags());

// Structural check of the Trajectory invariants (payload validity, segment
// order, terminal consistency). Returns nullopt when valid, else a reason.
std::optional<std::string> validate_trajectory(const Trajectory& t,
                                               const TagSet& tags = default_tags());

std::string_view kind_label(SegmentKind kind);           // "think" | "tool_call" | ...
std::string_view terminal_label(Terminal terminal);      // "answered" | ...
std::optional<SegmentKind> kind_from_label(std::string_view label);
std::optional<Terminal> terminal_from_label(std::string_view label);

// Trajectory dump format: one JSON object per line with fields
// {prompt_id, terminal, rounds_used, segments:[{kind, text}]}.
std::string trajectory_to_json_line(const Trajectory& t);
Expected<Trajectory, std::string> trajectory_from_json_line(const std::string& line);

}  // namespace htc::protocol
