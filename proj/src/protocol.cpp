#include "htc/protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "json.hpp"

namespace htc::protocol {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return is_space(c); });
}

constexpr std::array<SegmentKind, 4> kAllKinds = {
    SegmentKind::Think, SegmentKind::ToolCall, SegmentKind::Observation, SegmentKind::Answer};

struct TagToken {
  bool closing = false;
  SegmentKind kind = SegmentKind::Think;
  size_t begin = 0;  // position of '<'
  size_t end = 0;    // one past '>'
};

std::string open_tag(const TagSet& tags, SegmentKind kind) {
  return "<" + tags.name_for(kind) + ">";
}

std::string close_tag(const TagSet& tags, SegmentKind kind) {
  return "</" + tags.name_for(kind) + ">";
}

// Earliest protocol tag token at or after `from`. Non-protocol angle-bracket
// text never matches.
std::optional<TagToken> find_next_protocol_token(std::string_view text, size_t from,
                                                 const TagSet& tags) {
  std::optional<TagToken> best;
  for (SegmentKind kind : kAllKinds) {
    for (bool closing : {false, true}) {
      const std::string tag = closing ? close_tag(tags, kind) : open_tag(tags, kind);
      size_t pos = text.find(tag, from);
      if (pos == std::string_view::npos) continue;
      if (!best || pos < best->begin) {
        best = TagToken{closing, kind, pos, pos + tag.size()};
      }
    }
  }
  return best;
}

// Reads a generic tag token `<name>` or `</name>` at `pos`. Used only to
// distinguish an unknown tag from plain stray text.
struct GenericTag {
  bool closing = false;
  std::string name;
  size_t end = 0;
};

std::optional<GenericTag> read_generic_tag(std::string_view text, size_t pos) {
  size_t i = pos;
  if (i >= text.size() || text[i] != '<') return std::nullopt;
  ++i;
  bool closing = false;
  if (i < text.size() && text[i] == '/') {
    closing = true;
    ++i;
  }
  size_t name_begin = i;
  auto name_char = [](char c, bool first) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalpha(u) || c == '_') return true;
    return !first && std::isdigit(u);
  };
  while (i < text.size() && name_char(text[i], i == name_begin)) ++i;
  if (i == name_begin) return std::nullopt;
  if (i >= text.size() || text[i] != '>') return std::nullopt;
  return GenericTag{closing, std::string(text.substr(name_begin, i - name_begin)), i + 1};
}

std::optional<SegmentKind> kind_for_tag_name(const TagSet& tags, std::string_view name) {
  for (SegmentKind kind : kAllKinds) {
    if (tags.name_for(kind) == name) return kind;
  }
  return std::nullopt;
}

ParseError make_error(ParseErrorCode code, std::string message, size_t offset) {
  return ParseError{code, std::move(message), offset};
}

// Lexical pass shared by both grammars: text -> ordered segments.
SegmentsOrError scan_segments(std::string_view text, const TagSet& tags) {
  std::vector<Segment> segments;
  size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (text[i] != '<') {
      return make_error(ParseErrorCode::TrailingGarbage, "text outside tags", i);
    }
    auto generic = read_generic_tag(text, i);
    if (!generic) {
      return make_error(ParseErrorCode::TrailingGarbage, "stray '<' outside tags", i);
    }
    auto kind = kind_for_tag_name(tags, generic->name);
    if (!kind) {
      return make_error(ParseErrorCode::UnknownTag, "unknown tag <" + generic->name + ">", i);
    }
    if (generic->closing) {
      return make_error(ParseErrorCode::UnclosedTag,
                        "closing tag </" + generic->name + "> without an opener", i);
    }
    const size_t payload_begin = generic->end;
    auto next = find_next_protocol_token(text, payload_begin, tags);
    if (!next) {
      return make_error(ParseErrorCode::UnclosedTag,
                        "missing " + close_tag(tags, *kind), i);
    }
    if (!next->closing || next->kind != *kind) {
      return make_error(ParseErrorCode::UnclosedTag,
                        open_tag(tags, *kind) + " not closed before the next tag", next->begin);
    }
    std::string_view payload = text.substr(payload_begin, next->begin - payload_begin);
    if (all_whitespace(payload)) {
      return make_error(ParseErrorCode::EmptyPayload,
                        "empty payload in " + open_tag(tags, *kind), payload_begin);
    }
    segments.push_back(Segment{*kind, std::string(payload), CharSpan{i, next->end}});
    i = next->end;
  }
  return segments;
}

bool is_terminal_kind(SegmentKind kind) {
  return kind == SegmentKind::ToolCall || kind == SegmentKind::Answer;
}

std::optional<ParseError> check_emission_grammar(const std::vector<Segment>& segments) {
  std::optional<size_t> terminal_index;
  std::optional<size_t> trailing_think;
  for (size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    if (seg.kind == SegmentKind::Observation) {
      return make_error(ParseErrorCode::InvalidSequence,
                        "observation block not permitted in a planner emission",
                        seg.char_span.begin);
    }
    if (is_terminal_kind(seg.kind)) {
      if (terminal_index) {
        return make_error(ParseErrorCode::MultipleTerminals,
                          "more than one tool_calling/answer block", seg.char_span.begin);
      }
      terminal_index = i;
    } else if (terminal_index && !trailing_think) {
      trailing_think = i;
    }
  }
  if (!terminal_index) {
    return make_error(ParseErrorCode::MissingTerminal,
                      "no tool_calling/answer block in emission", 0);
  }
  if (trailing_think) {
    return make_error(ParseErrorCode::TrailingGarbage, "content after the terminal block",
                      segments[*trailing_think].char_span.begin);
  }
  return std::nullopt;
}

std::optional<ParseError> check_trajectory_grammar(const std::vector<Segment>& segments) {
  size_t answers = 0;
  for (const Segment& seg : segments) {
    if (seg.kind == SegmentKind::Answer) ++answers;
  }
  if (answers > 1) {
    return make_error(ParseErrorCode::MultipleTerminals, "more than one answer block", 0);
  }
  for (size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    switch (seg.kind) {
      case SegmentKind::ToolCall:
        if (i + 1 >= segments.size() || segments[i + 1].kind != SegmentKind::Observation) {
          return make_error(ParseErrorCode::InvalidSequence,
                            "tool_calling block not followed by an observation",
                            seg.char_span.begin);
        }
        break;
      case SegmentKind::Observation:
        if (i != 0 && segments[i - 1].kind != SegmentKind::ToolCall) {
          return make_error(ParseErrorCode::InvalidSequence,
                            "observation block without a preceding tool call",
                            seg.char_span.begin);
        }
        break;
      case SegmentKind::Answer:
        if (i + 1 != segments.size()) {
          return make_error(ParseErrorCode::InvalidSequence,
                            "answer block is not the final segment", seg.char_span.begin);
        }
        break;
      case SegmentKind::Think:
        break;
    }
  }
  return std::nullopt;
}

}  // namespace

const std::string& TagSet::name_for(SegmentKind kind) const {
  switch (kind) {
    case SegmentKind::Think: return think;
    case SegmentKind::ToolCall: return tool_call;
    case SegmentKind::Observation: return observation;
    case SegmentKind::Answer: return answer;
  }
  return think;
}

const TagSet& default_tags() {
  static const TagSet tags;
  return tags;
}

int Trajectory::rounds_used() const {
  return static_cast<int>(std::count_if(segments.begin(), segments.end(), [](const Segment& s) {
    return s.kind == SegmentKind::ToolCall;
  }));
}

std::string_view parse_error_code_name(ParseErrorCode code) {
  switch (code) {
    case ParseErrorCode::UnclosedTag: return "UnclosedTag";
    case ParseErrorCode::UnknownTag: return "UnknownTag";
    case ParseErrorCode::MultipleTerminals: return "MultipleTerminals";
    case ParseErrorCode::EmptyPayload: return "EmptyPayload";
    case ParseErrorCode::TrailingGarbage: return "TrailingGarbage";
    case ParseErrorCode::MissingTerminal: return "MissingTerminal";
    case ParseErrorCode::InvalidSequence: return "InvalidSequence";
  }
  return "?";
}

SegmentsOrError parse_planner_emission(std::string_view text, const TagSet& tags) {
  auto scanned = scan_segments(text, tags);
  if (!scanned) return scanned;
  if (auto err = check_emission_grammar(scanned.value())) return *err;
  return scanned;
}

SegmentsOrError parse_trajectory_text(std::string_view text, const TagSet& tags) {
  auto scanned = scan_segments(text, tags);
  if (!scanned) return scanned;
  if (auto err = check_trajectory_grammar(scanned.value())) return *err;
  return scanned;
}

std::string serialize_segments(const std::vector<Segment>& segments, const TagSet& tags) {
  std::string out;
  for (const Segment& seg : segments) {
    out += open_tag(tags, seg.kind);
    out += seg.text;
    out += close_tag(tags, seg.kind);
  }
  return out;
}

std::string serialize_trajectory(const Trajectory& t, const TagSet& tags) {
  return serialize_segments(t.segments, tags);
}

void assign_char_spans(std::vector<Segment>& segments, const TagSet& tags) {
  size_t offset = 0;
  for (Segment& seg : segments) {
    const size_t total =
        open_tag(tags, seg.kind).size() + seg.text.size() + close_tag(tags, seg.kind).size();
    seg.char_span = CharSpan{offset, offset + total};
    offset += total;
  }
}

std::vector<CharSpan> observation_char_spans(const Trajectory& t, const TagSet& tags) {
  std::vector<CharSpan> spans;
  size_t offset = 0;
  for (const Segment& seg : t.segments) {
    const size_t total =
        open_tag(tags, seg.kind).size() + seg.text.size() + close_tag(tags, seg.kind).size();
    if (seg.kind == SegmentKind::Observation) {
      spans.push_back(CharSpan{offset, offset + total});
    }
    offset += total;
  }
  return spans;
}

std::optional<std::string> validate_trajectory(const Trajectory& t, const TagSet& tags) {
  for (const Segment& seg : t.segments) {
    if (all_whitespace(seg.text)) return "segment with empty payload";
    for (SegmentKind kind : kAllKinds) {
      if (seg.text.find(open_tag(tags, kind)) != std::string::npos ||
          seg.text.find(close_tag(tags, kind)) != std::string::npos) {
        return "segment payload contains a protocol tag";
      }
    }
  }
  std::vector<Segment> copy = t.segments;
  assign_char_spans(copy, tags);
  if (auto err = check_trajectory_grammar(copy)) return std::string(err->message);

  const size_t answers =
      static_cast<size_t>(std::count_if(t.segments.begin(), t.segments.end(), [](const Segment& s) {
        return s.kind == SegmentKind::Answer;
      }));
  const bool last_is_answer =
      !t.segments.empty() && t.segments.back().kind == SegmentKind::Answer;
  if (t.terminal == Terminal::Answered) {
    if (answers != 1 || !last_is_answer) return "answered trajectory must end with its one answer";
  } else if (answers != 0) {
    return "non-answered trajectory contains an answer block";
  }
  return std::nullopt;
}

std::string_view kind_label(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think: return "think";
    case SegmentKind::ToolCall: return "tool_call";
    case SegmentKind::Observation: return "observation";
    case SegmentKind::Answer: return "answer";
  }
  return "?";
}

std::string_view terminal_label(Terminal terminal) {
  switch (terminal) {
    case Terminal::Answered: return "answered";
    case Terminal::MalformedOutput: return "malformed_output";
    case Terminal::RoundLimitExceeded: return "round_limit_exceeded";
  }
  return "?";
}

std::optional<SegmentKind> kind_from_label(std::string_view label) {
  for (SegmentKind kind : kAllKinds) {
    if (kind_label(kind) == label) return kind;
  }
  return std::nullopt;
}

std::optional<Terminal> terminal_from_label(std::string_view label) {
  for (Terminal t : {Terminal::Answered, Terminal::MalformedOutput, Terminal::RoundLimitExceeded}) {
    if (terminal_label(t) == label) return t;
  }
  return std::nullopt;
}

std::string trajectory_to_json_line(const Trajectory& t) {
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& seg : t.segments) {
    segs.push_back({{"kind", kind_label(seg.kind)}, {"text", seg.text}});
  }
  nlohmann::json j{{"prompt_id", t.prompt_id},
                   {"terminal", terminal_label(t.terminal)},
                   {"rounds_used", t.rounds_used()},
                   {"segments", std::move(segs)}};
  return j.dump();
}

Expected<Trajectory, std::string> trajectory_from_json_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) return std::string("invalid JSON");
  if (!j.is_object() || !j.contains("prompt_id") || !j.contains("terminal") ||
      !j.contains("segments")) {
    return std::string("missing dump fields");
  }
  Trajectory t;
  t.prompt_id = j["prompt_id"].get<std::string>();
  auto terminal = terminal_from_label(j["terminal"].get<std::string>());
  if (!terminal) return std::string("unknown terminal label");
  t.terminal = *terminal;
  for (const auto& js : j["segments"]) {
    auto kind = kind_from_label(js.at("kind").get<std::string>());
    if (!kind) return std::string("unknown segment kind");
    t.segments.push_back(Segment{*kind, js.at("text").get<std::string>(), {}});
  }
  assign_char_spans(t.segments);
  return t;
}

}  // namespace htc::protocol
