#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "htc/protocol.hpp"

namespace htc::grpo {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct GrpoConfig {
  int group_size = 12;
  int batch_prompts = 3;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double advantage_std_floor = 1e-6;
  int mask_pad_token_id = 0;  // masked token ids are rewritten to this on export
};

// One rollout's per-token view of the policy ratio computation. All arrays
// share one length; loss_mask is false on prompt tokens and on every token
// touching an observation span.
struct TokenizedRollout {
  Eigen::VectorXi token_ids;
  Eigen::VectorXd logprobs_new;
  Eigen::VectorXd logprobs_old;
  Eigen::VectorXd logprobs_ref;
  BoolArray loss_mask;

  std::string text;  // serialized trajectory (training-batch payload)
  std::vector<protocol::CharSpan> observation_spans;

  Eigen::Index size() const { return token_ids.size(); }
};

struct GrpoGroup {
  std::string prompt_id;
  std::vector<TokenizedRollout> rollouts;
  Eigen::VectorXd rewards;
  Eigen::VectorXd advantages;
};

// Group-relative advantages: (r - mean) / max(population std, std floor).
// A group of bitwise-equal rewards yields exactly zero advantages.
// Throws GroupTooSmall below two rewards.
Eigen::VectorXd compute_advantages(const Eigen::Ref<const Eigen::VectorXd>& rewards,
                                   const GrpoConfig& cfg);

// Validates sizes and fills advantages.
GrpoGroup make_group(std::string prompt_id, std::vector<TokenizedRollout> rollouts,
                     Eigen::VectorXd rewards, const GrpoConfig& cfg);

struct TokenSpan {
  int token_id = 0;
  protocol::CharSpan span;
};

// Fixed-width byte chunking; a deterministic stand-in tokenizer whose spans
// tile the input exactly. Ids are nonnegative hashes of the chunk bytes.
std::vector<TokenSpan> byte_chunk_tokenize(std::string_view text, size_t chunk_len = 4);

// Deterministic stand-in for sampling-time logprobs in exported batches.
double synthetic_logprob(std::string_view chunk);

// mask[i] is false iff token i's span intersects the prompt region
// [0, prompt_char_len) or any observation span (tags included) of t, both
// taken relative to prompt + serialized trajectory. The token spans must
// tile [0, prompt_char_len + |serialized|) exactly or SpanMismatch is thrown.
BoolArray build_loss_mask(const protocol::Trajectory& t, std::span<const TokenSpan> tokenization,
                          size_t prompt_char_len = 0);

// Mean over unmasked tokens of exp(ref - new) - (ref - new) - 1.
// Nonnegative; zero iff new == ref at every unmasked position.
// Throws NoUnmaskedTokens when the mask is all false.
double kl_divergence_estimate(const Eigen::Ref<const Eigen::VectorXd>& logprobs_new,
                              const Eigen::Ref<const Eigen::VectorXd>& logprobs_ref,
                              const BoolArray& loss_mask);

struct ObjectiveBreakdown {
  double objective = 0.0;
  // Probability ratios of the unmasked tokens, in token order, per rollout.
  std::vector<Eigen::VectorXd> per_token_ratios;
  // Share of unmasked tokens where the clipped term was strictly below the
  // unclipped one.
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
};

// Clipped-surrogate objective with per-token ratios averaged within each
// rollout, minus kl_beta times the per-rollout KL estimate, averaged over the
// group:
//   rho = exp(new - old)
//   term = min(rho * A_i, clamp(rho, 1-eps, 1+eps) * A_i)
//   objective = mean_i( mean_unmasked(term) - beta * KL_i )
ObjectiveBreakdown grpo_objective(const GrpoGroup& group, const GrpoConfig& cfg);

// Training-batch file: one JSON header line {cfg, format_version}, then one
// JSON line per rollout {prompt_id, token_ids, loss_mask, logprobs_old,
// reward, advantage, text, obs_spans}. Masked token ids are rewritten to
// cfg.mask_pad_token_id. Byte-deterministic given identical inputs.
void export_batch(std::span<const GrpoGroup> groups, const std::filesystem::path& path,
                  const GrpoConfig& cfg);

struct ExportedBatch {
  int format_version = 0;
  GrpoConfig cfg;
  std::vector<GrpoGroup> groups;
};

// Reads a batch file back; logprobs_new/ref mirror logprobs_old since the
// consumer recomputes them.
ExportedBatch import_batch(const std::filesystem::path& path);

}  // namespace htc::grpo
