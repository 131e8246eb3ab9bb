#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "htc/bench.hpp"
#include "htc/config.hpp"
#include "htc/errors.hpp"
#include "htc/grpo.hpp"
#include "htc/hash.hpp"
#include "htc/toy_policy.hpp"

namespace htc::bench {

namespace {

struct GlobalOptions {
  std::string config_path;
  uint64_t seed = 0;
  bool offline = false;
};

config::AppConfig load_config(const GlobalOptions& global) {
  if (global.config_path.empty()) return config::AppConfig{};
  return config::AppConfig::from_file(global.config_path);
}

engine::RunMode parse_mode_or_throw(const std::string& label) {
  auto mode = engine::run_mode_from_label(label);
  if (!mode) throw ConfigError("unknown mode \"" + label + "\"");
  return *mode;
}

std::string dataset_label_for(const std::string& name_flag, const std::string& path) {
  if (!name_flag.empty()) return name_flag;
  return std::filesystem::path(path).stem().string();
}

nlohmann::json effective_config_json(const config::AppConfig& cfg, const GlobalOptions& global,
                                     const std::string& mode, int max_rounds) {
  nlohmann::json j = config::canonical_json(cfg);
  j["run"] = {{"mode", mode},
              {"max_rounds", max_rounds},
              {"seed", global.seed},
              {"offline", global.offline}};
  return j;
}

void dump_packets(const std::vector<engine::ObservationPacket>& packets, std::ostream& out) {
  for (const auto& packet : packets) {
    nlohmann::json hits = nlohmann::json::array();
    for (const auto& hit : packet.hits) {
      hits.push_back({{"title", hit.title}, {"snippet", hit.snippet}, {"source", hit.source}});
    }
    out << nlohmann::json{{"subquery", packet.subquery},
                          {"summary", packet.summary},
                          {"search_calls_used", packet.search_calls_used},
                          {"hits", std::move(hits)}}
               .dump()
        << "\n";
  }
}

int run_rollout_command(const GlobalOptions& global, const std::string& question,
                        const std::string& prompt_id, const std::string& mode_label,
                        int max_rounds, const std::string& dump_out,
                        const std::string& packets_out) {
  config::AppConfig cfg = load_config(global);
  engine::EngineDeps deps = config::build_deps(cfg, global.offline);
  engine::RolloutLimits limits = cfg.limits;
  if (max_rounds > 0) limits.max_rounds = max_rounds;

  auto outcome = engine::run_rollout(question, prompt_id, parse_mode_or_throw(mode_label), deps,
                                     limits, global.seed);
  if (!outcome) {
    std::cerr << "rollout failed: " << outcome.error().message << "\n";
    return 2;
  }
  const engine::RolloutRecord& record = outcome.value();
  const protocol::Trajectory& t = record.trajectory;
  std::cout << protocol::serialize_trajectory(t) << "\n";
  std::cout << "terminal: " << protocol::terminal_label(t.terminal)
            << "  rounds_used: " << t.rounds_used() << "\n";
  if (!dump_out.empty()) {
    std::ofstream out(dump_out, std::ios::trunc);
    out << protocol::trajectory_to_json_line(t) << "\n";
  }
  if (!packets_out.empty()) {
    std::ofstream out(packets_out, std::ios::trunc);
    dump_packets(record.packets, out);
  }
  return 0;
}

int run_eval_command(const GlobalOptions& global, const std::string& dataset_path,
                     const std::string& dataset_name, const std::string& mode_label,
                     int max_rounds, int concurrency, const std::string& report_out,
                     const std::string& csv_out) {
  config::AppConfig cfg = load_config(global);
  engine::EngineDeps deps = config::build_deps(cfg, global.offline);

  const std::string label = dataset_label_for(dataset_name, dataset_path);
  const auto samples = load_dataset(dataset_path, source_dataset_from_label(label));

  EvalOptions options;
  options.limits = cfg.limits;
  if (max_rounds > 0) options.limits.max_rounds = max_rounds;
  options.concurrency = concurrency > 0 ? concurrency : cfg.concurrency;
  options.base_seed = global.seed;
  options.cem_variant = cfg.cem_variant;
  options.dataset_label = label;
  options.effective_config =
      effective_config_json(cfg, global, mode_label, options.limits.max_rounds);

  EvalReport report = evaluate(samples, parse_mode_or_throw(mode_label), deps, options);
  write_report(report, report_out);
  if (!csv_out.empty()) write_report_csv(report, csv_out);
  std::cout << "dataset " << report.dataset << "  n " << report.n << "  em_pct " << report.em_pct
            << "  cem_pct " << report.cem_pct << "\n";
  return 0;
}

int run_export_command(const GlobalOptions& global, const std::string& prompts_path,
                       int group_size, const std::string& mode_label, size_t chunk_len,
                       const std::string& out_path) {
  config::AppConfig cfg = load_config(global);
  engine::EngineDeps deps = config::build_deps(cfg, global.offline);
  grpo::GrpoConfig gcfg = cfg.grpo;
  if (group_size > 0) gcfg.group_size = group_size;
  if (gcfg.group_size < 2) throw ConfigError("group size must be at least 2");
  const engine::RunMode mode = parse_mode_or_throw(mode_label);

  const auto samples = load_dataset(prompts_path);
  if (samples.empty()) throw ConfigError("prompts file has no records");

  std::vector<engine::RolloutRequest> requests;
  for (const QASample& sample : samples) {
    for (int g = 0; g < gcfg.group_size; ++g) {
      requests.push_back({sample.id, sample.question});
    }
  }
  const auto outcomes =
      engine::run_batch(requests, mode, deps, cfg.limits, cfg.concurrency, global.seed);
  const auto groups = build_training_groups(samples, outcomes, gcfg, cfg.cem_variant, chunk_len);
  grpo::export_batch(groups, out_path, gcfg);
  size_t records = 0;
  for (const auto& group : groups) records += group.rollouts.size();
  std::cout << "exported " << groups.size() << " groups (" << records << " records) to "
            << out_path << "\n";
  return 0;
}

int run_train_toy_command(const GlobalOptions& global, int steps, double lr, double beta,
                          const std::string& curve_out) {
  config::AppConfig cfg = load_config(global);
  grpo::GrpoConfig gcfg = cfg.grpo;
  if (beta >= 0.0) gcfg.kl_beta = beta;

  grpo::toy::ToyTask task = grpo::toy::default_task();
  grpo::toy::ToyPolicy policy = grpo::toy::ToyPolicy::uniform(task);
  grpo::toy::TrainConfig tcfg;
  tcfg.steps = steps;
  tcfg.learning_rate = lr;
  tcfg.seed = global.seed;

  const auto stats = grpo::toy::train(policy, task, gcfg, tcfg);
  if (!curve_out.empty()) grpo::toy::write_curve_csv(stats, curve_out);
  if (!stats.empty()) {
    std::cout << "step 0 mean_reward " << stats.front().mean_reward << "  step "
              << stats.back().step << " mean_reward " << stats.back().mean_reward << "\n";
  }
  return 0;
}

int run_mixture_command(const GlobalOptions& global, const std::string& hotpot_path,
                        const std::string& twowiki_path, size_t total, double ratio,
                        const std::string& out_path) {
  const auto hotpot = load_dataset(hotpot_path, SourceDataset::HotpotQA);
  const auto twowiki = load_dataset(twowiki_path, SourceDataset::TwoWikiMultiHopQA);
  const auto mixture = sample_training_mixture(hotpot, twowiki, total, ratio, global.seed);
  write_dataset(mixture, out_path);
  std::cout << "wrote " << mixture.size() << " samples to " << out_path << "\n";
  return 0;
}

}  // namespace

int cli(const std::vector<std::string>& args) {
  CLI::App app{"hierarchical planner/toolcaller rollout engine"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--config", global.config_path, "JSON config file");
  app.add_option("--seed", global.seed, "base seed for rollouts and sampling");
  app.add_flag("--offline", global.offline, "forbid live endpoints; require fixtures/replay");

  auto* rollout_cmd = app.add_subcommand("rollout", "run one question and print the trajectory");
  std::string question, prompt_id = "q0", mode_label = "hierarchical";
  std::string dump_out, packets_out;
  int max_rounds = 0;
  rollout_cmd->add_option("--question", question, "the question")->required();
  rollout_cmd->add_option("--id", prompt_id, "prompt id");
  rollout_cmd->add_option("--mode", mode_label, "run mode")
      ->check(CLI::IsMember({"hierarchical", "flat-raw-search", "direct-io", "direct-io+search"}));
  rollout_cmd->add_option("--max-rounds", max_rounds, "tool-call round limit");
  rollout_cmd->add_option("--dump-out", dump_out, "trajectory dump file (JSON lines)");
  rollout_cmd->add_option("--packets-out", packets_out, "observation provenance dump file");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a dataset and write a report");
  std::string dataset_path, dataset_name, report_out = "eval_report.json", csv_out;
  std::string eval_mode = "hierarchical";
  int eval_max_rounds = 0, concurrency = 0;
  eval_cmd->add_option("--dataset", dataset_path, "JSON-lines dataset file")->required();
  eval_cmd->add_option("--dataset-name", dataset_name, "dataset label for the report");
  eval_cmd->add_option("--mode", eval_mode, "run mode")
      ->check(CLI::IsMember({"hierarchical", "flat-raw-search", "direct-io", "direct-io+search"}));
  eval_cmd->add_option("--max-rounds", eval_max_rounds, "tool-call round limit");
  eval_cmd->add_option("--concurrency", concurrency, "parallel rollouts");
  eval_cmd->add_option("--report-out", report_out, "report JSON path");
  eval_cmd->add_option("--csv-out", csv_out, "optional per-sample CSV path");

  auto* export_cmd = app.add_subcommand("export-batch", "roll out groups and export a training batch");
  std::string prompts_path, export_out;
  std::string export_mode = "hierarchical";
  int group_size = 0;
  size_t chunk_len = 4;
  export_cmd->add_option("--prompts", prompts_path, "JSON-lines prompts file")->required();
  export_cmd->add_option("--group-size", group_size, "rollouts per prompt");
  export_cmd->add_option("--mode", export_mode, "run mode")
      ->check(CLI::IsMember({"hierarchical", "flat-raw-search", "direct-io", "direct-io+search"}));
  export_cmd->add_option("--chunk-len", chunk_len, "tokenizer chunk length in bytes");
  export_cmd->add_option("--out", export_out, "batch file path")->required();

  auto* toy_cmd = app.add_subcommand("train-toy", "train the toy policy and write its curve");
  int steps = 200;
  double lr = 0.5, beta = -1.0;
  std::string curve_out = "toy_curve.csv";
  toy_cmd->add_option("--steps", steps, "training steps");
  toy_cmd->add_option("--lr", lr, "learning rate");
  toy_cmd->add_option("--beta", beta, "override kl_beta");
  toy_cmd->add_option("--curve-out", curve_out, "learning-curve CSV path");

  auto* mixture_cmd = app.add_subcommand("mixture", "sample a training mixture from two pools");
  std::string hotpot_path, twowiki_path, mixture_out;
  size_t total = 0;
  double ratio = -1.0;
  mixture_cmd->add_option("--hotpot", hotpot_path, "first pool (JSON lines)")->required();
  mixture_cmd->add_option("--twowiki", twowiki_path, "second pool (JSON lines)")->required();
  mixture_cmd->add_option("--total", total, "mixture size")->required();
  mixture_cmd->add_option("--ratio", ratio, "share drawn from the first pool")->required();
  mixture_cmd->add_option("--out", mixture_out, "output dataset path")->required();

  std::vector<const char*> argv;
  argv.push_back("htc");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand(rollout_cmd)) {
      return run_rollout_command(global, question, prompt_id, mode_label, max_rounds, dump_out,
                                 packets_out);
    }
    if (app.got_subcommand(eval_cmd)) {
      return run_eval_command(global, dataset_path, dataset_name, eval_mode, eval_max_rounds,
                              concurrency, report_out, csv_out);
    }
    if (app.got_subcommand(export_cmd)) {
      return run_export_command(global, prompts_path, group_size, export_mode, chunk_len,
                                export_out);
    }
    if (app.got_subcommand(toy_cmd)) {
      return run_train_toy_command(global, steps, lr, beta, curve_out);
    }
    if (app.got_subcommand(mixture_cmd)) {
      return run_mixture_command(global, hotpot_path, twowiki_path, total, ratio, mixture_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace htc::bench
