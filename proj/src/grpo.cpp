#include "htc/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "htc/errors.hpp"
#include "htc/hash.hpp"
#include "json.hpp"

namespace htc::grpo {

namespace {

bool spans_intersect(const protocol::CharSpan& a, const protocol::CharSpan& b) {
  return a.begin < b.end && b.begin < a.end;
}

void validate_rollout_lengths(const TokenizedRollout& r) {
  const Eigen::Index n = r.token_ids.size();
  if (r.logprobs_new.size() != n || r.logprobs_old.size() != n || r.logprobs_ref.size() != n ||
      r.loss_mask.size() != n) {
    throw LengthMismatch("tokenized rollout arrays disagree on length");
  }
}

nlohmann::json cfg_to_json(const GrpoConfig& cfg) {
  return nlohmann::json{{"group_size", cfg.group_size},
                        {"batch_prompts", cfg.batch_prompts},
                        {"clip_epsilon", cfg.clip_epsilon},
                        {"kl_beta", cfg.kl_beta},
                        {"advantage_std_floor", cfg.advantage_std_floor},
                        {"mask_pad_token_id", cfg.mask_pad_token_id}};
}

GrpoConfig cfg_from_json(const nlohmann::json& j) {
  GrpoConfig cfg;
  cfg.group_size = j.at("group_size").get<int>();
  cfg.batch_prompts = j.at("batch_prompts").get<int>();
  cfg.clip_epsilon = j.at("clip_epsilon").get<double>();
  cfg.kl_beta = j.at("kl_beta").get<double>();
  cfg.advantage_std_floor = j.at("advantage_std_floor").get<double>();
  cfg.mask_pad_token_id = j.at("mask_pad_token_id").get<int>();
  return cfg;
}

}  // namespace

Eigen::VectorXd compute_advantages(const Eigen::Ref<const Eigen::VectorXd>& rewards,
                                   const GrpoConfig& cfg) {
  const Eigen::Index n = rewards.size();
  if (n < 2) throw GroupTooSmall("advantage normalization needs at least 2 rewards");

  bool all_equal = true;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (rewards[i] != rewards[0]) {
      all_equal = false;
      break;
    }
  }
  if (all_equal) return Eigen::VectorXd::Zero(n);

  const double mean = rewards.mean();
  const double variance = (rewards.array() - mean).square().sum() / static_cast<double>(n);
  const double std_dev = std::sqrt(variance);
  if (std_dev == 0.0) return Eigen::VectorXd::Zero(n);
  const double denom = std::max(std_dev, cfg.advantage_std_floor);
  return (rewards.array() - mean) / denom;
}

GrpoGroup make_group(std::string prompt_id, std::vector<TokenizedRollout> rollouts,
                     Eigen::VectorXd rewards, const GrpoConfig& cfg) {
  if (rollouts.size() < 2) throw GroupTooSmall("group needs at least 2 rollouts");
  if (static_cast<Eigen::Index>(rollouts.size()) != rewards.size()) {
    throw LengthMismatch("rollout and reward counts disagree");
  }
  for (const TokenizedRollout& r : rollouts) validate_rollout_lengths(r);
  GrpoGroup group;
  group.prompt_id = std::move(prompt_id);
  group.rollouts = std::move(rollouts);
  group.advantages = compute_advantages(rewards, cfg);
  group.rewards = std::move(rewards);
  return group;
}

std::vector<TokenSpan> byte_chunk_tokenize(std::string_view text, size_t chunk_len) {
  if (chunk_len == 0) chunk_len = 1;
  std::vector<TokenSpan> tokens;
  tokens.reserve(text.size() / chunk_len + 1);
  for (size_t i = 0; i < text.size(); i += chunk_len) {
    const size_t end = std::min(i + chunk_len, text.size());
    const auto chunk = text.substr(i, end - i);
    tokens.push_back(TokenSpan{static_cast<int>(fnv1a64(chunk) & 0x7fffffff),
                               protocol::CharSpan{i, end}});
  }
  return tokens;
}

double synthetic_logprob(std::string_view chunk) {
  return -0.05 - static_cast<double>(fnv1a64(chunk) % 997) / 500.0;
}

BoolArray build_loss_mask(const protocol::Trajectory& t, std::span<const TokenSpan> tokenization,
                          size_t prompt_char_len) {
  const std::string serialized = protocol::serialize_trajectory(t);
  const size_t total_len = prompt_char_len + serialized.size();

  size_t expected_begin = 0;
  for (const TokenSpan& tok : tokenization) {
    if (tok.span.begin != expected_begin || tok.span.end <= tok.span.begin) {
      throw SpanMismatch("tokenization does not tile the text at offset " +
                         std::to_string(expected_begin));
    }
    expected_begin = tok.span.end;
  }
  if (expected_begin != total_len) {
    throw SpanMismatch("tokenization covers " + std::to_string(expected_begin) +
                       " characters, text has " + std::to_string(total_len));
  }

  std::vector<protocol::CharSpan> obs_spans = protocol::observation_char_spans(t);
  for (protocol::CharSpan& span : obs_spans) {
    span.begin += prompt_char_len;
    span.end += prompt_char_len;
  }
  const protocol::CharSpan prompt_span{0, prompt_char_len};

  BoolArray mask(static_cast<Eigen::Index>(tokenization.size()));
  for (size_t i = 0; i < tokenization.size(); ++i) {
    const protocol::CharSpan& span = tokenization[i].span;
    bool keep = !(prompt_char_len > 0 && spans_intersect(span, prompt_span));
    if (keep) {
      for (const protocol::CharSpan& obs : obs_spans) {
        if (spans_intersect(span, obs)) {
          keep = false;
          break;
        }
      }
    }
    mask[static_cast<Eigen::Index>(i)] = keep;
  }
  return mask;
}

double kl_divergence_estimate(const Eigen::Ref<const Eigen::VectorXd>& logprobs_new,
                              const Eigen::Ref<const Eigen::VectorXd>& logprobs_ref,
                              const BoolArray& loss_mask) {
  if (logprobs_new.size() != logprobs_ref.size() || logprobs_new.size() != loss_mask.size()) {
    throw LengthMismatch("kl estimate inputs disagree on length");
  }
  double acc = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < logprobs_new.size(); ++i) {
    if (!loss_mask[i]) continue;
    const double d = logprobs_ref[i] - logprobs_new[i];
    acc += std::expm1(d) - d;  // e^d - d - 1, exact zero at d = 0
    ++count;
  }
  if (count == 0) throw NoUnmaskedTokens("kl estimate over an all-masked rollout");
  return acc / static_cast<double>(count);
}

ObjectiveBreakdown grpo_objective(const GrpoGroup& group, const GrpoConfig& cfg) {
  const size_t g = group.rollouts.size();
  if (g == 0) throw LengthMismatch("empty group");
  if (group.rewards.size() != static_cast<Eigen::Index>(g) ||
      group.advantages.size() != static_cast<Eigen::Index>(g)) {
    throw LengthMismatch("group rewards/advantages disagree with rollout count");
  }

  ObjectiveBreakdown out;
  out.per_token_ratios.reserve(g);
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;

  double objective_acc = 0.0;
  double kl_acc = 0.0;
  long clipped = 0;
  long total_unmasked = 0;

  for (size_t i = 0; i < g; ++i) {
    const TokenizedRollout& r = group.rollouts[i];
    validate_rollout_lengths(r);
    const double advantage = group.advantages[static_cast<Eigen::Index>(i)];

    double term_acc = 0.0;
    double rollout_kl = 0.0;
    Eigen::Index unmasked = 0;
    std::vector<double> ratios;
    for (Eigen::Index t = 0; t < r.size(); ++t) {
      if (!r.loss_mask[t]) continue;
      const double rho = std::exp(r.logprobs_new[t] - r.logprobs_old[t]);
      ratios.push_back(rho);
      const double unclipped = rho * advantage;
      const double clipped_term = std::clamp(rho, lo, hi) * advantage;
      term_acc += std::min(unclipped, clipped_term);
      if (clipped_term < unclipped) ++clipped;

      const double d = r.logprobs_ref[t] - r.logprobs_new[t];
      rollout_kl += std::expm1(d) - d;
      ++unmasked;
    }
    if (unmasked == 0) {
      throw NoUnmaskedTokens("rollout " + std::to_string(i) + " has no unmasked tokens");
    }
    total_unmasked += unmasked;
    rollout_kl /= static_cast<double>(unmasked);
    objective_acc += term_acc / static_cast<double>(unmasked) - cfg.kl_beta * rollout_kl;
    kl_acc += rollout_kl;

    out.per_token_ratios.push_back(
        Eigen::Map<const Eigen::VectorXd>(ratios.data(), static_cast<Eigen::Index>(ratios.size())));
  }

  out.objective = objective_acc / static_cast<double>(g);
  out.mean_kl = kl_acc / static_cast<double>(g);
  out.clip_fraction =
      total_unmasked > 0 ? static_cast<double>(clipped) / static_cast<double>(total_unmasked) : 0.0;
  return out;
}

void export_batch(std::span<const GrpoGroup> groups, const std::filesystem::path& path,
                  const GrpoConfig& cfg) {
  for (const GrpoGroup& group : groups) {
    const Eigen::Index n = static_cast<Eigen::Index>(group.rollouts.size());
    if (n < 2) throw ValidationError("group " + group.prompt_id + " has fewer than 2 rollouts");
    if (group.rewards.size() != n || group.advantages.size() != n) {
      throw ValidationError("group " + group.prompt_id + " has inconsistent reward/advantage sizes");
    }
    for (const TokenizedRollout& r : group.rollouts) validate_rollout_lengths(r);
    const Eigen::VectorXd expected = compute_advantages(group.rewards, cfg);
    if (((expected - group.advantages).cwiseAbs().maxCoeff()) > 1e-9) {
      throw ValidationError("group " + group.prompt_id + " advantages do not match its rewards");
    }
  }

  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open batch file for writing: " + path.string());

  nlohmann::json header{{"format_version", 1}, {"cfg", cfg_to_json(cfg)}};
  out << header.dump() << "\n";

  for (const GrpoGroup& group : groups) {
    for (size_t i = 0; i < group.rollouts.size(); ++i) {
      const TokenizedRollout& r = group.rollouts[i];
      nlohmann::json token_ids = nlohmann::json::array();
      nlohmann::json loss_mask = nlohmann::json::array();
      nlohmann::json logprobs_old = nlohmann::json::array();
      for (Eigen::Index t = 0; t < r.size(); ++t) {
        token_ids.push_back(r.loss_mask[t] ? r.token_ids[t] : cfg.mask_pad_token_id);
        loss_mask.push_back(static_cast<bool>(r.loss_mask[t]));
        logprobs_old.push_back(r.logprobs_old[t]);
      }
      nlohmann::json obs_spans = nlohmann::json::array();
      for (const protocol::CharSpan& span : r.observation_spans) {
        obs_spans.push_back({span.begin, span.end});
      }
      nlohmann::json record{{"prompt_id", group.prompt_id},
                            {"token_ids", std::move(token_ids)},
                            {"loss_mask", std::move(loss_mask)},
                            {"logprobs_old", std::move(logprobs_old)},
                            {"reward", group.rewards[static_cast<Eigen::Index>(i)]},
                            {"advantage", group.advantages[static_cast<Eigen::Index>(i)]},
                            {"text", r.text},
                            {"obs_spans", std::move(obs_spans)}};
      out << record.dump() << "\n";
    }
  }
}

ExportedBatch import_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open batch file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("batch file is empty: " + path.string());
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.contains("format_version") || !header.contains("cfg")) {
    throw FormatError("invalid batch header", 1);
  }

  ExportedBatch batch;
  batch.format_version = header["format_version"].get<int>();
  batch.cfg = cfg_from_json(header["cfg"]);

  struct PartialGroup {
    std::vector<TokenizedRollout> rollouts;
    std::vector<double> rewards;
    std::vector<double> advantages;
  };
  std::vector<std::string> order;
  std::vector<PartialGroup> partial;
  auto group_index = [&](const std::string& prompt_id) -> size_t {
    for (size_t i = 0; i < order.size(); ++i) {
      if (order[i] == prompt_id) return i;
    }
    order.push_back(prompt_id);
    partial.emplace_back();
    return order.size() - 1;
  };

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("invalid batch record", line_no);
    try {
      TokenizedRollout r;
      const auto& ids = j.at("token_ids");
      const auto& mask = j.at("loss_mask");
      const auto& old_lp = j.at("logprobs_old");
      if (ids.size() != mask.size() || ids.size() != old_lp.size()) {
        throw FormatError("record arrays disagree on length", line_no);
      }
      const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
      r.token_ids.resize(n);
      r.loss_mask.resize(n);
      r.logprobs_old.resize(n);
      for (Eigen::Index t = 0; t < n; ++t) {
        r.token_ids[t] = ids[static_cast<size_t>(t)].get<int>();
        r.loss_mask[t] = mask[static_cast<size_t>(t)].get<bool>();
        r.logprobs_old[t] = old_lp[static_cast<size_t>(t)].get<double>();
      }
      r.logprobs_new = r.logprobs_old;
      r.logprobs_ref = r.logprobs_old;
      r.text = j.at("text").get<std::string>();
      for (const auto& span : j.at("obs_spans")) {
        r.observation_spans.push_back(
            protocol::CharSpan{span.at(0).get<size_t>(), span.at(1).get<size_t>()});
      }
      const size_t gi = group_index(j.at("prompt_id").get<std::string>());
      partial[gi].rollouts.push_back(std::move(r));
      partial[gi].rewards.push_back(j.at("reward").get<double>());
      partial[gi].advantages.push_back(j.at("advantage").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid batch record: ") + e.what(), line_no);
    }
  }

  for (size_t i = 0; i < order.size(); ++i) {
    GrpoGroup group;
    group.prompt_id = order[i];
    group.rollouts = std::move(partial[i].rollouts);
    group.rewards = Eigen::Map<const Eigen::VectorXd>(
        partial[i].rewards.data(), static_cast<Eigen::Index>(partial[i].rewards.size()));
    group.advantages = Eigen::Map<const Eigen::VectorXd>(
        partial[i].advantages.data(), static_cast<Eigen::Index>(partial[i].advantages.size()));
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

}  // namespace htc::grpo
