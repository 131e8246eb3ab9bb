#include "htc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

namespace htc::metrics {

namespace {

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

std::unordered_map<std::string, int> token_counts(const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, int> counts;
  for (const std::string& t : tokens) ++counts[t];
  return counts;
}

double f1_against_one(const std::vector<std::string>& pred_tokens,
                      const std::vector<std::string>& gold_tokens) {
  if (pred_tokens.empty() || gold_tokens.empty()) return 0.0;
  auto gold_counts = token_counts(gold_tokens);
  int overlap = 0;
  for (const std::string& t : pred_tokens) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred_tokens.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold_tokens.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::string out;
  out.reserve(cleaned.size());
  size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    size_t begin = i;
    while (i < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    if (begin == i) break;
    std::string_view token(cleaned.data() + begin, i - begin);
    if (is_article(token)) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(token);
  }
  return out;
}

std::vector<std::string> normalized_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  const std::string normalized = normalize_answer(s);
  size_t i = 0;
  while (i < normalized.size()) {
    size_t space = normalized.find(' ', i);
    if (space == std::string::npos) space = normalized.size();
    tokens.emplace_back(normalized.substr(i, space - i));
    i = space + 1;
  }
  return tokens;
}

Expected<GoldAnswerSet, std::string> GoldAnswerSet::make(std::vector<std::string> answers) {
  if (answers.empty()) return std::string("gold answer set is empty");
  for (const std::string& a : answers) {
    if (normalize_answer(a).empty()) {
      return std::string("gold answer normalizes to the empty string: \"" + a + "\"");
    }
  }
  GoldAnswerSet set;
  set.answers_ = std::move(answers);
  return set;
}

double f1_score(std::string_view prediction, const GoldAnswerSet& golds) {
  const auto pred_tokens = normalized_tokens(prediction);
  double best = 0.0;
  for (const std::string& gold : golds.answers()) {
    best = std::max(best, f1_against_one(pred_tokens, normalized_tokens(gold)));
  }
  return best;
}

bool exact_match(std::string_view prediction, const GoldAnswerSet& golds) {
  const std::string pred = normalize_answer(prediction);
  for (const std::string& gold : golds.answers()) {
    if (pred == normalize_answer(gold)) return true;
  }
  return false;
}

std::string_view cem_variant_label(CemVariant v) {
  switch (v) {
    case CemVariant::TokenSubsequence: return "token_subsequence";
    case CemVariant::RawSubstring: return "raw_substring";
  }
  return "?";
}

bool cover_exact_match(std::string_view prediction, const GoldAnswerSet& golds,
                       CemVariant variant) {
  if (variant == CemVariant::RawSubstring) {
    const std::string pred = normalize_answer(prediction);
    for (const std::string& gold : golds.answers()) {
      const std::string g = normalize_answer(gold);
      if (!g.empty() && pred.find(g) != std::string::npos) return true;
    }
    return false;
  }
  const auto pred_tokens = normalized_tokens(prediction);
  for (const std::string& gold : golds.answers()) {
    const auto gold_tokens = normalized_tokens(gold);
    if (gold_tokens.empty() || gold_tokens.size() > pred_tokens.size()) continue;
    auto it = std::search(pred_tokens.begin(), pred_tokens.end(), gold_tokens.begin(),
                          gold_tokens.end());
    if (it != pred_tokens.end()) return true;
  }
  return false;
}

RewardRecord score_prediction(std::string_view prediction, bool format_valid,
                              const GoldAnswerSet& golds, CemVariant variant) {
  RewardRecord record;
  record.format_valid = format_valid;
  if (!format_valid) {
    record.reward = kMalformedReward;
    return record;
  }
  record.em = exact_match(prediction, golds);
  record.cem = cover_exact_match(prediction, golds, variant);
  record.f1 = f1_score(prediction, golds);
  record.reward = record.f1;
  return record;
}

RewardRecord score_trajectory(const protocol::Trajectory& t, const GoldAnswerSet& golds,
                              CemVariant variant) {
  const bool structurally_valid = !protocol::validate_trajectory(t).has_value();
  const bool format_valid = structurally_valid && t.terminal == protocol::Terminal::Answered;
  std::string prediction;
  if (format_valid) prediction = t.segments.back().text;
  return score_prediction(prediction, format_valid, golds, variant);
}

}  // namespace htc::metrics
