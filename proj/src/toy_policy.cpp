#include "htc/toy_policy.hpp"

#include <cmath>
#include <fstream>

#include "htc/errors.hpp"
#include "htc/metrics.hpp"

namespace htc::grpo::toy {

ToyTask default_task() {
  ToyTask task;
  task.vocab = {"north", "star", "harbor", "lamp", "ember", "quill", "%%garbled%%", "mirror"};
  task.target = "north star";
  task.seq_len = 2;
  task.garbled_symbol = 6;
  return task;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double max = logits.row(r).maxCoeff();
    const double lse = std::log((logits.row(r).array() - max).exp().sum()) + max;
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_categorical(const Eigen::VectorXd& logits_row, std::mt19937_64& rng) {
  const double max = logits_row.maxCoeff();
  Eigen::VectorXd probs = (logits_row.array() - max).exp();
  probs /= probs.sum();
  const double u = uniform01(rng);
  double cum = 0.0;
  for (Eigen::Index v = 0; v < probs.size(); ++v) {
    cum += probs[v];
    if (u < cum) return static_cast<int>(v);
  }
  return static_cast<int>(probs.size() - 1);
}

double rollout_reward(const ToyTask& task, const std::vector<int>& symbols) {
  std::string joined;
  for (int s : symbols) {
    if (s == task.garbled_symbol) return metrics::kMalformedReward;
    if (!joined.empty()) joined += " ";
    joined += task.vocab[static_cast<size_t>(s)];
  }
  auto golds = metrics::GoldAnswerSet::make({task.target});
  return metrics::f1_score(joined, golds.value());
}

SampledBatch sample_batch(const Eigen::MatrixXd& old_logits, const Eigen::MatrixXd& ref_logits,
                          const ToyTask& task, const GrpoConfig& cfg, std::mt19937_64& rng) {
  const Eigen::MatrixXd old_logp = log_softmax_rows(old_logits);
  const Eigen::MatrixXd ref_logp = log_softmax_rows(ref_logits);

  SampledBatch batch;
  batch.rollouts.reserve(static_cast<size_t>(cfg.group_size));
  Eigen::VectorXd rewards(cfg.group_size);
  for (int i = 0; i < cfg.group_size; ++i) {
    ToyRollout rollout;
    rollout.symbols.reserve(static_cast<size_t>(task.seq_len));
    rollout.logprobs_old.resize(task.seq_len);
    rollout.logprobs_ref.resize(task.seq_len);
    for (int t = 0; t < task.seq_len; ++t) {
      const int symbol = sample_categorical(old_logits.row(t), rng);
      rollout.symbols.push_back(symbol);
      rollout.logprobs_old[t] = old_logp(t, symbol);
      rollout.logprobs_ref[t] = ref_logp(t, symbol);
    }
    rollout.reward = rollout_reward(task, rollout.symbols);
    rewards[i] = rollout.reward;
    batch.rollouts.push_back(std::move(rollout));
  }
  batch.advantages = compute_advantages(rewards, cfg);
  batch.rewards = std::move(rewards);
  return batch;
}

GrpoGroup batch_as_group(const Eigen::MatrixXd& params, const SampledBatch& batch) {
  const Eigen::MatrixXd new_logp = log_softmax_rows(params);

  GrpoGroup group;
  group.prompt_id = "toy";
  group.rewards = batch.rewards;
  group.advantages = batch.advantages;
  group.rollouts.reserve(batch.rollouts.size());
  for (const ToyRollout& rollout : batch.rollouts) {
    const Eigen::Index n = static_cast<Eigen::Index>(rollout.symbols.size());
    TokenizedRollout r;
    r.token_ids.resize(n);
    r.logprobs_new.resize(n);
    r.loss_mask = BoolArray::Constant(n, true);
    for (Eigen::Index t = 0; t < n; ++t) {
      r.token_ids[t] = rollout.symbols[static_cast<size_t>(t)];
      r.logprobs_new[t] = new_logp(t, rollout.symbols[static_cast<size_t>(t)]);
    }
    r.logprobs_old = rollout.logprobs_old;
    r.logprobs_ref = rollout.logprobs_ref;
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

double objective_for_params(const Eigen::MatrixXd& params, const SampledBatch& batch,
                            const GrpoConfig& cfg) {
  return grpo_objective(batch_as_group(params, batch), cfg).objective;
}

Eigen::MatrixXd gradient_for_params(const Eigen::MatrixXd& params, const SampledBatch& batch,
                                    const GrpoConfig& cfg) {
  const Eigen::MatrixXd new_logp = log_softmax_rows(params);
  Eigen::MatrixXd probs = new_logp.array().exp();

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(params.rows(), params.cols());
  const double g = static_cast<double>(batch.rollouts.size());
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;

  for (size_t i = 0; i < batch.rollouts.size(); ++i) {
    const ToyRollout& rollout = batch.rollouts[i];
    const double advantage = batch.advantages[static_cast<Eigen::Index>(i)];
    const double t_count = static_cast<double>(rollout.symbols.size());
    for (size_t t = 0; t < rollout.symbols.size(); ++t) {
      const Eigen::Index row = static_cast<Eigen::Index>(t);
      const int symbol = rollout.symbols[t];
      const double lp_new = new_logp(row, symbol);
      const double rho = std::exp(lp_new - rollout.logprobs_old[row]);
      const double unclipped = rho * advantage;
      const double clipped = std::clamp(rho, lo, hi) * advantage;

      // d(min-term)/d lp_new: the clipped branch is constant in the params.
      double coeff = (unclipped <= clipped) ? rho * advantage : 0.0;
      // d(-beta * kl)/d lp_new = beta * (exp(ref - new) - 1)
      coeff += cfg.kl_beta * std::expm1(rollout.logprobs_ref[row] - lp_new);
      coeff /= g * t_count;

      // d lp_new / d params(row, v) = [v == symbol] - softmax(row)_v
      grad.row(row) -= coeff * probs.row(row);
      grad(row, symbol) += coeff;
    }
  }
  return grad;
}

std::vector<TrainStats> train(ToyPolicy& policy, const ToyTask& task, const GrpoConfig& cfg,
                              const TrainConfig& train_cfg) {
  const Eigen::MatrixXd ref_logits = policy.logits;
  std::mt19937_64 rng(train_cfg.seed);

  std::vector<TrainStats> stats;
  stats.reserve(static_cast<size_t>(train_cfg.steps));
  for (int step = 0; step < train_cfg.steps; ++step) {
    const Eigen::MatrixXd old_logits = policy.logits;
    SampledBatch batch = sample_batch(old_logits, ref_logits, task, cfg, rng);

    const Eigen::MatrixXd grad = gradient_for_params(policy.logits, batch, cfg);
    policy.logits += train_cfg.learning_rate * grad;

    ObjectiveBreakdown breakdown = grpo_objective(batch_as_group(policy.logits, batch), cfg);
    TrainStats s;
    s.step = step;
    s.mean_reward = batch.rewards.mean();
    s.kl = breakdown.mean_kl;
    s.clip_fraction = breakdown.clip_fraction;
    s.objective = breakdown.objective;
    if (!std::isfinite(s.mean_reward) || !policy.logits.allFinite()) {
      throw DivergenceDetected("toy training diverged at step " + std::to_string(step));
    }
    stats.push_back(s);
  }
  return stats;
}

void write_curve_csv(std::span<const TrainStats> stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open curve file for writing: " + path.string());
  out << "step,mean_reward,kl,clip_fraction\n";
  for (const TrainStats& s : stats) {
    out << s.step << "," << s.mean_reward << "," << s.kl << "," << s.clip_fraction << "\n";
  }
}

}  // namespace htc::grpo::toy
