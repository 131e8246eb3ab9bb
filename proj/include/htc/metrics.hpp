#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "htc/expected.hpp"
#include "htc/protocol.hpp"

namespace htc::metrics {

// Scalar reward for a trajectory whose output failed format validation.
constexpr double kMalformedReward = -2.0;

// Answer normalization: lowercase, delete ASCII punctuation, drop the
// articles "a"/"an"/"the" as whole tokens, collapse whitespace. Bytes >= 0x80
// pass through untouched.
std::string normalize_answer(std::string_view s);

// normalize_answer output split on single spaces; empty when it normalizes
// to the empty string.
std::vector<std::string> normalized_tokens(std::string_view s);

class GoldAnswerSet {
 public:
  // Rejects an empty list and any alias that normalizes to the empty string.
  static Expected<GoldAnswerSet, std::string> make(std::vector<std::string> answers);

  const std::vector<std::string>& answers() const { return answers_; }

 private:
  std::vector<std::string> answers_;
};

// Token-level bag-overlap F1 against the best-scoring gold alias.
// Precision = overlap/|pred|, recall = overlap/|gold|; 0 on zero overlap or
// an empty side.
double f1_score(std::string_view prediction, const GoldAnswerSet& golds);

// Normalized prediction equals any normalized gold.
bool exact_match(std::string_view prediction, const GoldAnswerSet& golds);

enum class CemVariant {
  TokenSubsequence,  // gold tokens appear as a contiguous run of prediction tokens
  RawSubstring,      // normalized gold is a substring of the normalized prediction
};

std::string_view cem_variant_label(CemVariant v);

bool cover_exact_match(std::string_view prediction, const GoldAnswerSet& golds,
                       CemVariant variant = CemVariant::TokenSubsequence);

struct RewardRecord {
  bool format_valid = false;
  bool em = false;
  bool cem = false;
  double f1 = 0.0;
  double reward = kMalformedReward;
};

// Scores a bare prediction; reward = f1 when format_valid, else -2.
RewardRecord score_prediction(std::string_view prediction, bool format_valid,
                              const GoldAnswerSet& golds,
                              CemVariant variant = CemVariant::TokenSubsequence);

// format_valid iff the trajectory terminated Answered with a structurally
// valid segment sequence; metrics run on the answer payload.
RewardRecord score_trajectory(const protocol::Trajectory& t, const GoldAnswerSet& golds,
                              CemVariant variant = CemVariant::TokenSubsequence);

}  // namespace htc::metrics
