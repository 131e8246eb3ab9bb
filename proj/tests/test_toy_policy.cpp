#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "htc/errors.hpp"
#include "htc/toy_policy.hpp"
#include "test_support.hpp"

using namespace htc;
using namespace htc::grpo;
using namespace htc::grpo::toy;

namespace {

// Central finite differences of the batch objective; the independent check
// for the analytic gradient.
Eigen::MatrixXd finite_difference_gradient(const Eigen::MatrixXd& params,
                                           const SampledBatch& batch, const GrpoConfig& cfg,
                                           double h) {
  Eigen::MatrixXd grad(params.rows(), params.cols());
  for (Eigen::Index r = 0; r < params.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.cols(); ++c) {
      Eigen::MatrixXd plus = params;
      Eigen::MatrixXd minus = params;
      plus(r, c) += h;
      minus(r, c) -= h;
      grad(r, c) =
          (objective_for_params(plus, batch, cfg) - objective_for_params(minus, batch, cfg)) /
          (2.0 * h);
    }
  }
  return grad;
}

// Ratios must be clear of the clip boundaries so the finite-difference step
// cannot flip the min() branch.
bool clear_of_clip_boundaries(const Eigen::MatrixXd& params, const SampledBatch& batch,
                              const GrpoConfig& cfg, double margin) {
  const Eigen::MatrixXd new_logp = log_softmax_rows(params);
  for (const ToyRollout& rollout : batch.rollouts) {
    for (size_t t = 0; t < rollout.symbols.size(); ++t) {
      const double rho = std::exp(new_logp(static_cast<Eigen::Index>(t), rollout.symbols[t]) -
                                  rollout.logprobs_old[static_cast<Eigen::Index>(t)]);
      if (std::abs(rho - (1.0 - cfg.clip_epsilon)) < margin) return false;
      if (std::abs(rho - (1.0 + cfg.clip_epsilon)) < margin) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("analytic gradient matches central finite differences") {
  const ToyTask task = default_task();
  GrpoConfig cfg;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> noise(0.0, 0.7);
  const double h = 1e-5;

  int checked = 0;
  while (checked < 20) {
    const Eigen::Index v = static_cast<Eigen::Index>(task.vocab.size());
    Eigen::MatrixXd params(task.seq_len, v), old_logits(task.seq_len, v), ref_logits(task.seq_len, v);
    for (Eigen::Index r = 0; r < params.rows(); ++r) {
      for (Eigen::Index c = 0; c < v; ++c) {
        params(r, c) = noise(rng);
        old_logits(r, c) = noise(rng);
        ref_logits(r, c) = noise(rng);
      }
    }
    const SampledBatch batch = sample_batch(old_logits, ref_logits, task, cfg, rng);
    if (batch.advantages.isZero(0.0)) continue;  // degenerate group, resample
    if (!clear_of_clip_boundaries(params, batch, cfg, 5e-3)) continue;

    const Eigen::MatrixXd analytic = gradient_for_params(params, batch, cfg);
    const Eigen::MatrixXd fd = finite_difference_gradient(params, batch, cfg, h);
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
    const double max_rel_err = (analytic - fd).cwiseAbs().maxCoeff() / scale;
    CHECK_MESSAGE(max_rel_err < 1e-4, "draw " << checked << " err " << max_rel_err);
    ++checked;
  }
}

TEST_CASE("seeded learning run improves and trends monotonically by windows") {
  const ToyTask task = default_task();
  GrpoConfig cfg;
  ToyPolicy policy = ToyPolicy::uniform(task);
  TrainConfig tcfg;
  tcfg.steps = 200;
  tcfg.learning_rate = 0.5;
  tcfg.seed = 1;

  const auto stats = train(policy, task, cfg, tcfg);
  REQUIRE(stats.size() == 200);
  CHECK(stats.back().mean_reward > stats.front().mean_reward);

  for (size_t w = 0; w + 20 <= stats.size(); w += 20) {
    double acc = 0.0;
    for (size_t i = w; i < w + 20; ++i) acc += stats[i].mean_reward;
    const double mean = acc / 20.0;
    if (w > 0) {
      double prev = 0.0;
      for (size_t i = w - 20; i < w; ++i) prev += stats[i].mean_reward;
      CHECK(mean >= prev / 20.0 - 1e-9);
    }
  }
}

TEST_CASE("a huge kl penalty anchors the parameters to the reference") {
  const ToyTask task = default_task();
  GrpoConfig cfg;
  cfg.kl_beta = 1e3;
  ToyPolicy policy = ToyPolicy::uniform(task);
  const Eigen::MatrixXd initial = policy.logits;
  TrainConfig tcfg;
  tcfg.steps = 200;
  tcfg.learning_rate = 5e-4;
  tcfg.seed = 2;

  train(policy, task, cfg, tcfg);
  CHECK((policy.logits - initial).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("curve csv has one row per step") {
  const ToyTask task = default_task();
  ToyPolicy policy = ToyPolicy::uniform(task);
  TrainConfig tcfg;
  tcfg.steps = 17;
  tcfg.seed = 3;
  const auto stats = train(policy, task, GrpoConfig{}, tcfg);

  test::TempDir dir("curve");
  const auto path = dir.path() / "curve.csv";
  write_curve_csv(stats, path);
  CHECK(test::count_lines(path) == 18);  // header + 17 rows
  const std::string contents = test::read_file(path);
  CHECK(contents.rfind("step,mean_reward,kl,clip_fraction\n", 0) == 0);
}

TEST_CASE("divergence is detected when the update produces non-finite values") {
  ToyTask task;
  task.vocab = {"x", "y"};
  task.target = "zzz";  // unreachable: every reward is 0, advantages all zero
  task.seq_len = 2;
  task.garbled_symbol = -1;

  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  ToyPolicy policy = ToyPolicy::uniform(task);
  TrainConfig tcfg;
  tcfg.steps = 3;
  tcfg.learning_rate = std::numeric_limits<double>::infinity();
  tcfg.seed = 4;
  CHECK_THROWS_AS(train(policy, task, cfg, tcfg), DivergenceDetected);
}

TEST_CASE("rewards follow the malformed branch for the garbled symbol") {
  const ToyTask task = default_task();
  CHECK(rollout_reward(task, {0, 1}) == doctest::Approx(1.0));   // "north star"
  CHECK(rollout_reward(task, {1, 0}) == doctest::Approx(1.0));   // bag of tokens
  CHECK(rollout_reward(task, {0, 3}) == doctest::Approx(0.5));   // one of two
  CHECK(rollout_reward(task, {3, 4}) == doctest::Approx(0.0));
  CHECK(rollout_reward(task, {0, task.garbled_symbol}) == -2.0);
}
