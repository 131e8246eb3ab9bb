// Acceptance suite: one criterion per check, one PASS/FAIL line each,
// nonzero exit when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "htc/bench.hpp"
#include "htc/config.hpp"
#include "htc/engine.hpp"
#include "htc/grpo.hpp"
#include "htc/metrics.hpp"
#include "htc/protocol.hpp"
#include "htc/toy_policy.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace htc;

namespace {

struct Criterion {
  int number;
  std::string description;
  double time_budget_seconds;  // 0 = no stated budget
  std::function<bool(std::string&)> run;
};

bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---- criterion 1 -----------------------------------------------------------

bool criterion_round_trip(std::string& detail) {
  std::mt19937_64 rng(1001);
  for (int i = 0; i < 1000; ++i) {
    const auto t = test::random_trajectory(rng, "rt" + std::to_string(i));
    if (protocol::validate_trajectory(t)) {
      detail = "generator produced an invalid trajectory";
      return false;
    }
    const std::string s = protocol::serialize_trajectory(t);
    auto parsed = protocol::parse_trajectory_text(s);
    if (!parsed) {
      detail = "round-trip parse failed: " + parsed.error().message;
      return false;
    }
    const auto& segs = parsed.value();
    if (segs.size() != t.segments.size()) {
      detail = "segment count changed in round-trip";
      return false;
    }
    for (size_t k = 0; k < segs.size(); ++k) {
      if (segs[k].kind != t.segments[k].kind || segs[k].text != t.segments[k].text) {
        detail = "segment mismatch in round-trip";
        return false;
      }
    }
  }
  for (int i = 0; i < 500; ++i) {
    const auto t = test::random_trajectory(rng, "mut" + std::to_string(i));
    const std::string bad = test::mutate_to_invalid(t, rng);
    if (protocol::parse_trajectory_text(bad)) {
      detail = "accepted invalid string: " + bad.substr(0, 120);
      return false;
    }
  }
  detail = "1000 round-trips, 500 rejections";
  return true;
}

// ---- criterion 2 -----------------------------------------------------------

bool criterion_metric_fixture(std::string& detail) {
  std::ifstream in(test::fixture_path("metric_cases.jsonl"));
  if (!in) {
    detail = "fixture file missing";
    return false;
  }
  std::string line;
  size_t cases = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::string prediction = j["prediction"].get<std::string>();
    const auto gold_list = j["golds"].get<std::vector<std::string>>();
    const bool format_valid = j["format_valid"].get<bool>();
    const auto& expect = j["expect"];

    const auto golds = metrics::GoldAnswerSet::make(gold_list);
    if (!golds) {
      detail = "fixture golds rejected";
      return false;
    }
    const auto got = metrics::score_prediction(prediction, format_valid, golds.value());
    const bool impl_ok = got.em == expect["em"].get<bool>() &&
                         got.cem == expect["cem"].get<bool>() &&
                         approx(got.f1, expect["f1"].get<double>(), 1e-9) &&
                         approx(got.reward, expect["reward"].get<double>(), 1e-9);
    bool oracle_ok = approx(test::oracle_reward(prediction, gold_list, format_valid),
                            expect["reward"].get<double>(), 1e-9);
    if (format_valid) {
      oracle_ok = oracle_ok && test::oracle_em(prediction, gold_list) == expect["em"].get<bool>() &&
                  test::oracle_cem_tokens(prediction, gold_list) == expect["cem"].get<bool>() &&
                  approx(test::oracle_f1(prediction, gold_list), expect["f1"].get<double>(), 1e-9);
    }
    if (!impl_ok || !oracle_ok) {
      detail = "mismatch on prediction: " + prediction;
      return false;
    }
    ++cases;
  }
  if (cases != 50) {
    detail = "expected 50 fixture cases, saw " + std::to_string(cases);
    return false;
  }
  detail = "50 cases, implementation == oracle == frozen file";
  return true;
}

// ---- criterion 3 -----------------------------------------------------------

bool criterion_advantages(std::string& detail) {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  grpo::GrpoConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = 2 + static_cast<int>(test::gen_range(rng, 15));
    Eigen::VectorXd rewards(g);
    for (int i = 0; i < g; ++i) rewards[i] = unit(rng) * 3.0 - 2.0;

    const auto a = grpo::compute_advantages(rewards, cfg);
    const double mean = a.mean();
    const double sd = std::sqrt((a.array() - mean).square().sum() / g);
    if (!approx(mean, 0.0, 1e-9) || !approx(sd, 1.0, 1e-6)) {
      detail = "normalization identity violated";
      return false;
    }

    const double shift = unit(rng) * 10.0 - 5.0;
    const double scale = 0.1 + unit(rng) * 5.0;
    const auto shifted = grpo::compute_advantages(rewards.array() + shift, cfg);
    const auto scaled = grpo::compute_advantages(rewards * scale, cfg);
    for (int i = 0; i < g; ++i) {
      if (!approx(a[i], shifted[i], 1e-9) || !approx(a[i], scaled[i], 1e-9)) {
        detail = "shift/scale invariance violated";
        return false;
      }
    }

    const double constant = unit(rng);
    const auto zeros = grpo::compute_advantages(Eigen::VectorXd::Constant(g, constant), cfg);
    for (int i = 0; i < g; ++i) {
      if (zeros[i] != 0.0) {
        detail = "all-equal group produced nonzero advantages";
        return false;
      }
    }
  }
  detail = "1000 groups, G in [2,16]";
  return true;
}

// ---- shared random-group builder (criteria 4 and 5) ------------------------

grpo::GrpoGroup random_tokenized_group(std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int g = 2 + static_cast<int>(test::gen_range(rng, 7));
  grpo::GrpoGroup group;
  group.prompt_id = "acc";
  Eigen::VectorXd rewards(g);
  for (int i = 0; i < g; ++i) {
    const int n = 1 + static_cast<int>(test::gen_range(rng, 8));
    grpo::TokenizedRollout r;
    r.token_ids = Eigen::VectorXi::Zero(n);
    r.logprobs_new.resize(n);
    r.logprobs_old.resize(n);
    r.logprobs_ref.resize(n);
    r.loss_mask.resize(n);
    bool any = false;
    for (int t = 0; t < n; ++t) {
      r.logprobs_new[t] = -std::abs(noise(rng));
      r.logprobs_old[t] = -std::abs(noise(rng));
      r.logprobs_ref[t] = -std::abs(noise(rng));
      r.loss_mask[t] = unit(rng) > 0.3;
      any = any || r.loss_mask[t];
    }
    if (!any) r.loss_mask[0] = true;
    group.rollouts.push_back(std::move(r));
    rewards[i] = unit(rng) < 0.15 ? -2.0 : unit(rng);
  }
  group.advantages = grpo::compute_advantages(rewards, grpo::GrpoConfig{});
  group.rewards = std::move(rewards);
  return group;
}

// ---- criterion 4 -----------------------------------------------------------

bool criterion_objective_oracle(std::string& detail) {
  std::mt19937_64 rng(1004);
  grpo::GrpoConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto group = random_tokenized_group(rng);
    const auto ours = grpo::grpo_objective(group, cfg);
    const auto oracle = test::oracle_grpo_objective(group, cfg.clip_epsilon, cfg.kl_beta);
    if (!approx(ours.objective, oracle.objective, 1e-9)) {
      detail = "objective disagrees with brute force at trial " + std::to_string(trial);
      return false;
    }
    if (!approx(ours.clip_fraction, oracle.clip_fraction, 1e-12)) {
      detail = "clip_fraction disagrees with brute force";
      return false;
    }
  }
  std::mt19937_64 rng2(1005);
  for (int trial = 0; trial < 50; ++trial) {
    auto group = random_tokenized_group(rng2);
    for (auto& r : group.rollouts) {
      r.logprobs_old = r.logprobs_new;
      r.logprobs_ref = r.logprobs_new;
    }
    const auto out = grpo::grpo_objective(group, cfg);
    if (!approx(out.objective, group.advantages.mean(), 1e-12) || out.clip_fraction != 0.0) {
      detail = "identity-policy case disagrees with mean advantage";
      return false;
    }
  }
  detail = "1000 randomized groups + 50 identity cases";
  return true;
}

// ---- criterion 5 -----------------------------------------------------------

bool criterion_masking_soundness(std::string& detail) {
  std::mt19937_64 rng(1006);
  std::normal_distribution<double> noise(0.0, 2.0);
  grpo::GrpoConfig cfg;

  for (int trial = 0; trial < 200; ++trial) {
    // Build a group of two tokenized fuzz trajectories.
    std::vector<grpo::TokenizedRollout> rollouts;
    while (rollouts.size() < 2) {
      const auto traj = test::random_trajectory(rng, "m" + std::to_string(trial));
      const std::string s = protocol::serialize_trajectory(traj);
      if (s.empty()) continue;
      const size_t prompt_len = test::gen_range(rng, 30);
      const auto tokens = test::random_tokenization(rng, prompt_len + s.size());

      grpo::TokenizedRollout r;
      r.text = s;
      r.loss_mask = grpo::build_loss_mask(traj, tokens, prompt_len);

      // masked-token counts must match the char-level oracle
      const auto oracle_mask = test::oracle_loss_mask(s, tokens, prompt_len);
      long ours = 0, theirs = 0;
      for (size_t k = 0; k < oracle_mask.size(); ++k) {
        if (!r.loss_mask[static_cast<Eigen::Index>(k)]) ++ours;
        if (!oracle_mask[k]) ++theirs;
        if (r.loss_mask[static_cast<Eigen::Index>(k)] != oracle_mask[k]) {
          detail = "mask disagrees with char-level oracle";
          return false;
        }
      }
      if (ours != theirs) {
        detail = "masked-token count disagrees with char-level oracle";
        return false;
      }
      if (!r.loss_mask.any()) continue;

      const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
      r.token_ids = Eigen::VectorXi::Zero(n);
      r.logprobs_new.resize(n);
      r.logprobs_old.resize(n);
      r.logprobs_ref.resize(n);
      for (Eigen::Index t = 0; t < n; ++t) {
        r.logprobs_new[t] = -std::abs(noise(rng));
        r.logprobs_old[t] = -std::abs(noise(rng));
        r.logprobs_ref[t] = -std::abs(noise(rng));
      }
      rollouts.push_back(std::move(r));
    }
    grpo::GrpoGroup group;
    group.prompt_id = "mask";
    group.rollouts = std::move(rollouts);
    Eigen::VectorXd rewards(2);
    rewards << 1.0, 0.0;
    group.advantages = grpo::compute_advantages(rewards, cfg);
    group.rewards = rewards;

    const double before = grpo::grpo_objective(group, cfg).objective;
    for (auto& r : group.rollouts) {
      for (Eigen::Index t = 0; t < r.size(); ++t) {
        if (r.loss_mask[t]) continue;
        r.logprobs_new[t] += noise(rng);
        r.logprobs_old[t] += noise(rng);
        r.logprobs_ref[t] += noise(rng);
      }
    }
    const double after = grpo::grpo_objective(group, cfg).objective;
    if (before != after) {
      detail = "objective moved under masked-only perturbation";
      return false;
    }
  }
  detail = "200 fuzzed tokenized trajectories";
  return true;
}

// ---- criterion 6 -----------------------------------------------------------

bool criterion_kl(std::string& detail) {
  std::mt19937_64 rng(1007);
  std::normal_distribution<double> noise(0.0, 1.5);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(test::gen_range(rng, 8));
    Eigen::VectorXd lp_new(n), lp_ref(n);
    grpo::BoolArray mask(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      lp_new[i] = noise(rng);
      lp_ref[i] = noise(rng);
      mask[i] = test::gen_range(rng, 4) != 0;
      any = any || mask[i];
    }
    if (!any) mask[0] = true;
    const double kl = grpo::kl_divergence_estimate(lp_new, lp_ref, mask);
    if (kl < 0.0) {
      detail = "estimator went negative";
      return false;
    }

    Eigen::VectorXd equal = lp_new;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) equal[i] = lp_new[i] + noise(rng);  // masked positions free
    }
    if (grpo::kl_divergence_estimate(lp_new, equal, mask) != 0.0) {
      detail = "estimator nonzero although new == ref at unmasked positions";
      return false;
    }
    Eigen::VectorXd off = equal;
    for (int i = 0; i < n; ++i) {
      if (mask[i]) {
        off[i] += 0.3;
        break;
      }
    }
    if (!(grpo::kl_divergence_estimate(lp_new, off, mask) > 0.0)) {
      detail = "estimator zero although an unmasked position differs";
      return false;
    }
  }
  grpo::BoolArray one = grpo::BoolArray::Constant(1, true);
  Eigen::VectorXd a(1), b(1);
  a << -1.5;
  b << -1.0;  // ref - new = 0.5
  const double closed = grpo::kl_divergence_estimate(a, b, one);
  if (!approx(closed, 0.14872, 1e-5)) {
    detail = "closed form mismatch: " + std::to_string(closed);
    return false;
  }
  detail = "10000 random inputs, closed form, zero-iff-equal";
  return true;
}

// ---- criterion 7 -----------------------------------------------------------

bool criterion_gradient_check(std::string& detail) {
  const auto task = grpo::toy::default_task();
  grpo::GrpoConfig cfg;
  std::mt19937_64 rng(1008);
  std::normal_distribution<double> noise(0.0, 0.7);
  const double h = 1e-5;

  double worst = 0.0;
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
    const auto batch = grpo::toy::sample_batch(old_logits, ref_logits, task, cfg, rng);
    if (batch.advantages.isZero(0.0)) continue;

    bool clear = true;
    const Eigen::MatrixXd new_logp = grpo::toy::log_softmax_rows(params);
    for (const auto& rollout : batch.rollouts) {
      for (size_t t = 0; t < rollout.symbols.size(); ++t) {
        const double rho =
            std::exp(new_logp(static_cast<Eigen::Index>(t), rollout.symbols[t]) -
                     rollout.logprobs_old[static_cast<Eigen::Index>(t)]);
        if (std::abs(rho - (1.0 - cfg.clip_epsilon)) < 5e-3 ||
            std::abs(rho - (1.0 + cfg.clip_epsilon)) < 5e-3) {
          clear = false;
        }
      }
    }
    if (!clear) continue;

    const Eigen::MatrixXd analytic = grpo::toy::gradient_for_params(params, batch, cfg);
    Eigen::MatrixXd fd(params.rows(), params.cols());
    for (Eigen::Index r = 0; r < params.rows(); ++r) {
      for (Eigen::Index c = 0; c < params.cols(); ++c) {
        Eigen::MatrixXd plus = params, minus = params;
        plus(r, c) += h;
        minus(r, c) -= h;
        fd(r, c) = (grpo::toy::objective_for_params(plus, batch, cfg) -
                    grpo::toy::objective_for_params(minus, batch, cfg)) /
                   (2.0 * h);
      }
    }
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
    const double rel = (analytic - fd).cwiseAbs().maxCoeff() / scale;
    worst = std::max(worst, rel);
    if (rel >= 1e-4) {
      detail = "relative error " + std::to_string(rel) + " at draw " + std::to_string(checked);
      return false;
    }
    ++checked;
  }
  std::ostringstream oss;
  oss << "20 draws, worst relative error " << worst;
  detail = oss.str();
  return true;
}

// ---- criterion 8 -----------------------------------------------------------

bool criterion_toy_learning(std::string& detail) {
  const auto task = grpo::toy::default_task();
  grpo::GrpoConfig cfg;
  grpo::toy::ToyPolicy policy = grpo::toy::ToyPolicy::uniform(task);
  grpo::toy::TrainConfig tcfg;
  tcfg.steps = 200;
  tcfg.learning_rate = 0.5;
  tcfg.seed = 1;
  const auto stats = grpo::toy::train(policy, task, cfg, tcfg);

  if (!(stats.back().mean_reward > stats.front().mean_reward)) {
    detail = "no improvement from step 0 to step 200";
    return false;
  }
  double prev = -1e9;
  for (size_t w = 0; w + 20 <= stats.size(); w += 20) {
    double acc = 0.0;
    for (size_t i = w; i < w + 20; ++i) acc += stats[i].mean_reward;
    const double mean = acc / 20.0;
    if (mean < prev - 1e-9) {
      detail = "window mean regressed at step " + std::to_string(w);
      return false;
    }
    prev = mean;
  }

  grpo::GrpoConfig anchored = cfg;
  anchored.kl_beta = 1e3;
  grpo::toy::ToyPolicy pinned = grpo::toy::ToyPolicy::uniform(task);
  const Eigen::MatrixXd initial = pinned.logits;
  grpo::toy::TrainConfig acfg;
  acfg.steps = 200;
  acfg.learning_rate = 5e-4;
  acfg.seed = 2;
  grpo::toy::train(pinned, task, anchored, acfg);
  const double drift = (pinned.logits - initial).cwiseAbs().maxCoeff();
  if (drift >= 1e-2) {
    detail = "kl anchoring drift " + std::to_string(drift);
    return false;
  }
  std::ostringstream oss;
  oss << "reward " << stats.front().mean_reward << " -> " << stats.back().mean_reward
      << ", anchored drift " << drift;
  detail = oss.str();
  return true;
}

// ---- criterion 9 -----------------------------------------------------------

bool criterion_hermetic_rollout(std::string& detail) {
  engine::EngineDeps deps;
  deps.planner = std::make_shared<engine::RuleScriptedPolicy>(
      config::load_script_rules(test::fixture_path("two_hop_planner_rules.json")));
  deps.toolcaller = std::make_shared<engine::RuleScriptedPolicy>(
      config::load_script_rules(test::fixture_path("two_hop_toolcaller_rules.json")));
  deps.searcher = std::make_shared<search::FixtureSearchClient>(
      search::FixtureCorpus::from_jsonl(test::fixture_path("corpus.jsonl")));
  deps.planner_prompt = "planner";
  deps.toolcaller_prompt = "toolcaller";

  const std::string golden = test::read_file_trimmed(test::fixture_path("golden_two_hop.txt"));
  const std::string golden_dump =
      test::read_file_trimmed(test::fixture_path("golden_two_hop.json"));

  std::vector<engine::RolloutRequest> requests(
      8, {"hop2", "Who was the mother of Mira Tallis's maternal grandmother?"});
  for (int concurrency : {1, 8}) {
    const auto outcomes =
        engine::run_batch(requests, engine::RunMode::Hierarchical, deps, {}, concurrency, 0);
    for (const auto& outcome : outcomes) {
      if (!outcome) {
        detail = "rollout failed: " + outcome.error().message;
        return false;
      }
      if (protocol::serialize_trajectory(outcome.value().trajectory) != golden) {
        detail = "trajectory differs from the frozen golden (concurrency " +
                 std::to_string(concurrency) + ")";
        return false;
      }
      if (protocol::trajectory_to_json_line(outcome.value().trajectory) != golden_dump) {
        detail = "dump line differs from the frozen golden";
        return false;
      }
    }
  }

  // eval --offline over the 20-sample fixture dataset through the CLI
  test::TempDir dir("acc_eval");
  nlohmann::json cfg{
      {"policy",
       {{"type", "scripted_rules"},
        {"script", test::fixture_path("mini_policy_rules.json").string()}}},
      {"search",
       {{"type", "fixture"}, {"corpus", test::fixture_path("corpus.jsonl").string()}}}};
  const auto config_path = dir.path() / "config.json";
  test::write_file(config_path, cfg.dump());
  const auto report_path = dir.path() / "report.json";

  const int status = bench::cli({"--config", config_path.string(), "--offline", "eval",
                                 "--dataset", test::fixture_path("mini_eval.jsonl").string(),
                                 "--mode", "direct-io", "--report-out", report_path.string()});
  if (status != 0) {
    detail = "eval --offline exited " + std::to_string(status);
    return false;
  }
  const auto report = nlohmann::json::parse(test::read_file(report_path));
  const auto& rows = report["per_sample"];
  size_t em = 0, cem = 0;
  for (const auto& row : rows) {
    em += row["em"].get<bool>() ? 1 : 0;
    cem += row["cem"].get<bool>() ? 1 : 0;
  }
  const double em_pct = bench::round1(100.0 * double(em) / double(rows.size()));
  const double cem_pct = bench::round1(100.0 * double(cem) / double(rows.size()));
  if (report["aggregates"]["em_pct"].get<double>() != em_pct ||
      report["aggregates"]["cem_pct"].get<double>() != cem_pct) {
    detail = "aggregates do not match the per-sample rows";
    return false;
  }
  if (!(em_pct <= cem_pct)) {
    detail = "em_pct > cem_pct";
    return false;
  }
  std::ostringstream oss;
  oss << "golden x16, eval em " << em_pct << " cem " << cem_pct;
  detail = oss.str();
  return true;
}

// ---- criterion 10 ----------------------------------------------------------

bool criterion_batch_export(std::string& detail) {
  std::mt19937_64 rng(1010);
  grpo::GrpoConfig cfg;  // group_size 12, batch_prompts 3
  test::TempDir dir("acc_export");

  auto build = [&rng](const std::string& prompt_id) {
    for (;;) {
      const auto traj = test::random_trajectory(rng, prompt_id);
      const std::string s = protocol::serialize_trajectory(traj);
      if (s.empty()) continue;
      grpo::TokenizedRollout r;
      r.text = s;
      r.observation_spans = protocol::observation_char_spans(traj);
      const auto tokens = grpo::byte_chunk_tokenize(s, 4);
      r.loss_mask = grpo::build_loss_mask(traj, tokens);
      if (!r.loss_mask.any()) continue;
      const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
      r.token_ids.resize(n);
      r.logprobs_old.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        r.token_ids[i] = tokens[static_cast<size_t>(i)].token_id;
        r.logprobs_old[i] = grpo::synthetic_logprob(std::string_view(s).substr(
            tokens[static_cast<size_t>(i)].span.begin, tokens[static_cast<size_t>(i)].span.length()));
      }
      r.logprobs_new = r.logprobs_old;
      r.logprobs_ref = r.logprobs_old;
      return r;
    }
  };

  std::vector<grpo::GrpoGroup> groups;
  for (int p = 0; p < cfg.batch_prompts; ++p) {
    std::vector<grpo::TokenizedRollout> rollouts;
    Eigen::VectorXd rewards(cfg.group_size);
    for (int g = 0; g < cfg.group_size; ++g) {
      rollouts.push_back(build("prompt" + std::to_string(p)));
      rewards[g] = static_cast<double>(test::gen_range(rng, 101)) / 100.0;
    }
    groups.push_back(
        grpo::make_group("prompt" + std::to_string(p), std::move(rollouts), rewards, cfg));
  }

  const auto path_a = dir.path() / "a.jsonl";
  const auto path_b = dir.path() / "b.jsonl";
  grpo::export_batch(groups, path_a, cfg);
  grpo::export_batch(groups, path_b, cfg);
  if (test::count_lines(path_a) != 37) {
    detail = "expected 36 records + header, got " + std::to_string(test::count_lines(path_a));
    return false;
  }
  if (test::read_file(path_a) != test::read_file(path_b)) {
    detail = "export is not byte-deterministic";
    return false;
  }

  const auto back = grpo::import_batch(path_a);
  if (back.groups.size() != 3) {
    detail = "reimport lost groups";
    return false;
  }
  for (size_t p = 0; p < groups.size(); ++p) {
    const auto& orig = groups[p];
    const auto& got = back.groups[p];
    if (got.prompt_id != orig.prompt_id || got.rollouts.size() != orig.rollouts.size()) {
      detail = "reimport group shape mismatch";
      return false;
    }
    for (Eigen::Index i = 0; i < got.rewards.size(); ++i) {
      if (got.rewards[i] != orig.rewards[i] || got.advantages[i] != orig.advantages[i]) {
        detail = "reimport rewards/advantages mismatch";
        return false;
      }
    }
    for (size_t i = 0; i < got.rollouts.size(); ++i) {
      if (got.rollouts[i].text != orig.rollouts[i].text) {
        detail = "reimport text mismatch";
        return false;
      }
    }
  }
  const auto path_c = dir.path() / "c.jsonl";
  grpo::export_batch(back.groups, path_c, back.cfg);
  if (test::read_file(path_c) != test::read_file(path_a)) {
    detail = "reimport/re-export is not byte-identical";
    return false;
  }
  detail = "36 records, reimport faithful, byte-deterministic";
  return true;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "protocol round-trip and rejection completeness", 10.0, criterion_round_trip},
      {2, "metric oracle fixture suite", 1.0, criterion_metric_fixture},
      {3, "advantage normalization properties", 0.0, criterion_advantages},
      {4, "objective equals brute-force evaluation", 0.0, criterion_objective_oracle},
      {5, "observation masking soundness", 0.0, criterion_masking_soundness},
      {6, "kl estimator properties and closed form", 0.0, criterion_kl},
      {7, "toy-policy analytic gradient vs finite differences", 60.0, criterion_gradient_check},
      {8, "toy-policy learning and kl anchoring", 120.0, criterion_toy_learning},
      {9, "hermetic golden rollout and offline eval", 30.0, criterion_hermetic_rollout},
      {10, "training-batch export round-trip and determinism", 0.0, criterion_batch_export},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && criterion.time_budget_seconds > 0.0 && seconds > criterion.time_budget_seconds) {
      ok = false;
      detail = "over time budget of " + std::to_string(criterion.time_budget_seconds) + " s";
    }
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << criterion.number << ": "
              << criterion.description << " [" << detail << "] ("
              << static_cast<long>(seconds * 1000) << " ms)\n";
    if (!ok) ++failures;
  }
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all 10 criteria passed\n";
  return 0;
}
