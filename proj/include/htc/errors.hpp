#pragma once

#include <stdexcept>
#include <string>

namespace htc {

// Endpoint unreachable / bad wire payload after retries. Distinct from a
// malformed model generation, which is a scored outcome, not an error.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input file violates its documented schema. Carries the 1-based line number
// when the offending record is known.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg, long line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  long line_number = 0;
};

struct InsufficientPool : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpanMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoUnmaskedTokens : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GroupTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceDetected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace htc
