#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "htc/grpo.hpp"

namespace htc::grpo::toy {

// Synthetic target-string task: the policy emits seq_len vocabulary symbols,
// the joined words are scored with token F1 against the target; a sequence
// containing the garbled symbol counts as malformed and earns the -2 reward.
struct ToyTask {
  std::vector<std::string> vocab;
  std::string target;
  int seq_len = 2;
  int garbled_symbol = -1;  // index into vocab, or -1 to disable
};

ToyTask default_task();

// Per-position categorical softmax model with an explicit logits table
// (seq_len x vocab); exact logprobs and analytic gradients by construction.
struct ToyPolicy {
  Eigen::MatrixXd logits;

  static ToyPolicy uniform(const ToyTask& task) {
    ToyPolicy p;
    p.logits = Eigen::MatrixXd::Zero(task.seq_len, static_cast<Eigen::Index>(task.vocab.size()));
    return p;
  }
};

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits);

struct ToyRollout {
  std::vector<int> symbols;      // one vocab index per position
  Eigen::VectorXd logprobs_old;  // under the sampling policy
  Eigen::VectorXd logprobs_ref;  // under the frozen reference policy
  double reward = 0.0;
};

struct SampledBatch {
  std::vector<ToyRollout> rollouts;
  Eigen::VectorXd rewards;
  Eigen::VectorXd advantages;
};

double uniform01(std::mt19937_64& rng);
int sample_categorical(const Eigen::VectorXd& logits_row, std::mt19937_64& rng);

double rollout_reward(const ToyTask& task, const std::vector<int>& symbols);

// Samples cfg.group_size rollouts from `old_logits`, scores them and fills
// group-relative advantages.
SampledBatch sample_batch(const Eigen::MatrixXd& old_logits, const Eigen::MatrixXd& ref_logits,
                          const ToyTask& task, const GrpoConfig& cfg, std::mt19937_64& rng);

// Wraps the batch as a GrpoGroup with logprobs_new taken from `params`; the
// objective is evaluated by grpo_objective itself.
GrpoGroup batch_as_group(const Eigen::MatrixXd& params, const SampledBatch& batch);

double objective_for_params(const Eigen::MatrixXd& params, const SampledBatch& batch,
                            const GrpoConfig& cfg);

// Analytic d objective / d params; matches central finite differences of
// objective_for_params away from the clip boundaries.
Eigen::MatrixXd gradient_for_params(const Eigen::MatrixXd& params, const SampledBatch& batch,
                                    const GrpoConfig& cfg);

struct TrainStats {
  int step = 0;
  double mean_reward = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double objective = 0.0;
};

struct TrainConfig {
  int steps = 200;
  double learning_rate = 0.5;
  uint64_t seed = 1;
};

// Full loop: sample a group from the pre-update policy, score, normalize
// advantages, ascend the objective by its analytic gradient (one update per
// sampled batch). The reference policy is the initial one. Throws
// DivergenceDetected when the mean reward turns NaN.
std::vector<TrainStats> train(ToyPolicy& policy, const ToyTask& task, const GrpoConfig& cfg,
                              const TrainConfig& train_cfg);

// Learning curve as CSV: step,mean_reward,kl,clip_fraction.
void write_curve_csv(std::span<const TrainStats> stats, const std::filesystem::path& path);

}  // namespace htc::grpo::toy
