#include "htc/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include "htc/config.hpp"
#include "htc/errors.hpp"

namespace htc::bench {

namespace {

// Deterministic bounded draw (modulo with rejection); std::shuffle and the
// std distributions are not pinned down by the standard.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound) {
  const uint64_t limit = std::numeric_limits<uint64_t>::max() - (std::numeric_limits<uint64_t>::max() % bound);
  uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

template <class T>
void fisher_yates_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(bounded_rand(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

// First `count` elements of a seeded partial shuffle of [0, n).
std::vector<size_t> sample_indices(size_t n, size_t count, std::mt19937_64& rng) {
  std::vector<size_t> indices(n);
  for (size_t i = 0; i < n; ++i) indices[i] = i;
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + static_cast<size_t>(bounded_rand(rng, n - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(count);
  return indices;
}

}  // namespace

std::string_view source_dataset_label(SourceDataset d) {
  switch (d) {
    case SourceDataset::HotpotQA: return "hotpotqa";
    case SourceDataset::TwoWikiMultiHopQA: return "2wikimultihopqa";
    case SourceDataset::MuSiQue: return "musique";
    case SourceDataset::Bamboogle: return "bamboogle";
    case SourceDataset::Custom: return "custom";
  }
  return "?";
}

std::optional<SourceDataset> source_dataset_from_label(std::string_view label) {
  for (SourceDataset d : {SourceDataset::HotpotQA, SourceDataset::TwoWikiMultiHopQA,
                          SourceDataset::MuSiQue, SourceDataset::Bamboogle, SourceDataset::Custom}) {
    if (source_dataset_label(d) == label) return d;
  }
  return std::nullopt;
}

std::vector<QASample> load_dataset(const std::filesystem::path& path,
                                   std::optional<SourceDataset> source_hint) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset file: " + path.string());

  std::vector<QASample> samples;
  std::string line;
  long line_no = 0;
  size_t record_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;

    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("invalid JSON object", line_no);

    QASample sample;
    if (j.contains("id")) {
      sample.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      sample.id = "q" + std::to_string(record_index);
    }
    if (!j.contains("question") || !j["question"].is_string()) {
      throw FormatError("record lacks a \"question\" string", line_no);
    }
    sample.question = j["question"].get<std::string>();
    if (sample.question.empty()) throw FormatError("empty question", line_no);

    std::vector<std::string> answers;
    if (j.contains("answer") && j["answer"].is_string()) {
      answers.push_back(j["answer"].get<std::string>());
    } else if (j.contains("answers") && j["answers"].is_array()) {
      for (const auto& a : j["answers"]) answers.push_back(a.get<std::string>());
    } else if (j.contains("golden_answers") && j["golden_answers"].is_array()) {
      for (const auto& a : j["golden_answers"]) answers.push_back(a.get<std::string>());
    } else {
      throw FormatError("record lacks answer/answers/golden_answers", line_no);
    }
    auto golds = metrics::GoldAnswerSet::make(std::move(answers));
    if (!golds) throw FormatError(golds.error(), line_no);
    sample.golds = std::move(golds.value());

    if (j.contains("source")) {
      auto source = source_dataset_from_label(j["source"].get<std::string>());
      if (!source) throw FormatError("unknown source dataset", line_no);
      sample.source = *source;
    } else if (source_hint) {
      sample.source = *source_hint;
    }
    samples.push_back(std::move(sample));
    ++record_index;
  }
  return samples;
}

void write_dataset(std::span<const QASample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open dataset file for writing: " + path.string());
  for (const QASample& s : samples) {
    nlohmann::json j{{"id", s.id},
                     {"question", s.question},
                     {"golden_answers", s.golds.answers()},
                     {"source", source_dataset_label(s.source)}};
    out << j.dump() << "\n";
  }
}

std::vector<QASample> sample_training_mixture(std::span<const QASample> hotpot,
                                              std::span<const QASample> twowiki, size_t total,
                                              double ratio, uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ValidationError("mixture ratio must be in [0, 1]");
  const size_t from_hotpot =
      static_cast<size_t>(std::llround(static_cast<double>(total) * ratio));
  if (from_hotpot > total) throw ValidationError("mixture ratio overflows the total");
  const size_t from_twowiki = total - from_hotpot;
  if (from_hotpot > hotpot.size()) {
    throw InsufficientPool("need " + std::to_string(from_hotpot) + " samples, pool has " +
                           std::to_string(hotpot.size()));
  }
  if (from_twowiki > twowiki.size()) {
    throw InsufficientPool("need " + std::to_string(from_twowiki) + " samples, pool has " +
                           std::to_string(twowiki.size()));
  }

  std::mt19937_64 rng(seed);
  std::vector<QASample> mixture;
  mixture.reserve(total);
  for (size_t i : sample_indices(hotpot.size(), from_hotpot, rng)) mixture.push_back(hotpot[i]);
  for (size_t i : sample_indices(twowiki.size(), from_twowiki, rng)) mixture.push_back(twowiki[i]);
  fisher_yates_shuffle(mixture, rng);
  return mixture;
}

double round1(double pct) { return std::round(pct * 10.0) / 10.0; }

EvalReport evaluate(std::span<const QASample> samples, engine::RunMode mode,
                    engine::EngineDeps& deps, const EvalOptions& options) {
  std::vector<engine::RolloutRequest> requests;
  requests.reserve(samples.size());
  for (const QASample& s : samples) requests.push_back({s.id, s.question});

  const auto outcomes =
      engine::run_batch(requests, mode, deps, options.limits, options.concurrency,
                        options.base_seed);

  EvalReport report;
  report.dataset = options.dataset_label;
  report.mode = mode;
  report.n = samples.size();
  report.cem_variant = options.cem_variant;
  report.config_fingerprint = config::fingerprint(options.effective_config);
  report.reference_scores = reference_scores_for(options.dataset_label);

  size_t em_count = 0;
  size_t cem_count = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    PerSampleRow row;
    row.id = samples[i].id;
    if (!outcomes[i]) {
      row.terminal = "failed";
    } else {
      const protocol::Trajectory& t = outcomes[i].value().trajectory;
      const metrics::RewardRecord scored =
          metrics::score_trajectory(t, samples[i].golds, options.cem_variant);
      if (t.terminal == protocol::Terminal::Answered) row.prediction = t.segments.back().text;
      row.em = scored.em;
      row.cem = scored.cem;
      row.f1 = scored.f1;
      row.rounds_used = t.rounds_used();
      row.terminal = protocol::terminal_label(t.terminal);
    }
    em_count += row.em ? 1 : 0;
    cem_count += row.cem ? 1 : 0;
    report.per_sample.push_back(std::move(row));
  }
  if (report.n > 0) {
    report.em_pct = round1(100.0 * static_cast<double>(em_count) / static_cast<double>(report.n));
    report.cem_pct = round1(100.0 * static_cast<double>(cem_count) / static_cast<double>(report.n));
  }
  return report;
}

std::vector<grpo::GrpoGroup> build_training_groups(
    std::span<const QASample> samples, std::span<const engine::RolloutOutcome> outcomes,
    const grpo::GrpoConfig& cfg, metrics::CemVariant cem_variant, size_t chunk_len) {
  if (outcomes.size() != samples.size() * static_cast<size_t>(cfg.group_size)) {
    throw ValidationError("outcome count does not match samples x group_size");
  }
  std::vector<grpo::GrpoGroup> groups;
  size_t flat = 0;
  for (const QASample& sample : samples) {
    std::vector<grpo::TokenizedRollout> rollouts;
    std::vector<double> rewards;
    for (int g = 0; g < cfg.group_size; ++g, ++flat) {
      const auto& outcome = outcomes[flat];
      if (!outcome) {
        std::cerr << "warning: dropping failed rollout for " << sample.id << ": "
                  << outcome.error().message << "\n";
        continue;
      }
      const protocol::Trajectory& t = outcome.value().trajectory;
      grpo::TokenizedRollout r;
      r.text = protocol::serialize_trajectory(t);
      if (r.text.empty()) {
        std::cerr << "warning: dropping empty trajectory for " << sample.id << "\n";
        continue;
      }
      r.observation_spans = protocol::observation_char_spans(t);
      const auto tokens = grpo::byte_chunk_tokenize(r.text, chunk_len);
      r.loss_mask = grpo::build_loss_mask(t, tokens);
      if (!r.loss_mask.any()) {
        std::cerr << "warning: dropping all-masked trajectory for " << sample.id << "\n";
        continue;
      }
      const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
      r.token_ids.resize(n);
      r.logprobs_old.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tok = tokens[static_cast<size_t>(i)];
        r.token_ids[i] = tok.token_id;
        r.logprobs_old[i] = grpo::synthetic_logprob(
            std::string_view(r.text).substr(tok.span.begin, tok.span.length()));
      }
      r.logprobs_new = r.logprobs_old;
      r.logprobs_ref = r.logprobs_old;
      rollouts.push_back(std::move(r));
      rewards.push_back(metrics::score_trajectory(t, sample.golds, cem_variant).reward);
    }
    if (rollouts.size() < 2) {
      std::cerr << "warning: skipping group " << sample.id << " with " << rollouts.size()
                << " surviving rollouts\n";
      continue;
    }
    groups.push_back(grpo::make_group(
        sample.id, std::move(rollouts),
        Eigen::Map<const Eigen::VectorXd>(rewards.data(),
                                          static_cast<Eigen::Index>(rewards.size())),
        cfg));
  }
  return groups;
}

nlohmann::json reference_scores_for(std::string_view dataset_label) {
  // Published full-scale EM/CEM percentages carried for side-by-side
  // comparison in reports; desk-scale runs are not expected to match them.
  static const nlohmann::json table = nlohmann::json::parse(R"({
    "bamboogle": [
      {"system": "direct-io", "em_pct": 17.6, "cem_pct": 26.4},
      {"system": "direct-io+search", "em_pct": 29.6, "cem_pct": 42.4},
      {"system": "chat-agent", "em_pct": 36.8, "cem_pct": 47.2},
      {"system": "chat-agent+search", "em_pct": 51.2, "cem_pct": 62.4},
      {"system": "flat-raw-search", "em_pct": 58.4, "cem_pct": 72.0},
      {"system": "hierarchical-base", "em_pct": 60.0, "cem_pct": 71.2},
      {"system": "hierarchical-instruct", "em_pct": 63.2, "cem_pct": 75.2}
    ],
    "hotpotqa": [
      {"system": "direct-io", "em_pct": 20.0, "cem_pct": 27.2},
      {"system": "direct-io+search", "em_pct": 32.6, "cem_pct": 52.8},
      {"system": "chat-agent", "em_pct": 23.2, "cem_pct": 44.2},
      {"system": "chat-agent+search", "em_pct": 32.4, "cem_pct": 59.4},
      {"system": "flat-raw-search", "em_pct": 47.2, "cem_pct": 64.2},
      {"system": "hierarchical-base", "em_pct": 35.0, "cem_pct": 55.2},
      {"system": "hierarchical-instruct", "em_pct": 37.2, "cem_pct": 57.4}
    ],
    "2wikimultihopqa": [
      {"system": "direct-io", "em_pct": 22.6, "cem_pct": 25.4},
      {"system": "direct-io+search", "em_pct": 27.2, "cem_pct": 40.2},
      {"system": "chat-agent", "em_pct": 20.8, "cem_pct": 34.6},
      {"system": "chat-agent+search", "em_pct": 35.0, "cem_pct": 69.4},
      {"system": "flat-raw-search", "em_pct": 52.4, "cem_pct": 68.0},
      {"system": "hierarchical-base", "em_pct": 42.8, "cem_pct": 68.0},
      {"system": "hierarchical-instruct", "em_pct": 44.6, "cem_pct": 70.0}
    ],
    "musique": [
      {"system": "direct-io", "em_pct": 4.8, "cem_pct": 9.0},
      {"system": "direct-io+search", "em_pct": 14.0, "cem_pct": 18.0},
      {"system": "chat-agent", "em_pct": 9.2, "cem_pct": 18.8},
      {"system": "chat-agent+search", "em_pct": 16.0, "cem_pct": 29.4},
      {"system": "flat-raw-search", "em_pct": 20.8, "cem_pct": 28.6},
      {"system": "hierarchical-base", "em_pct": 15.6, "cem_pct": 28.8},
      {"system": "hierarchical-instruct", "em_pct": 18.4, "cem_pct": 29.8}
    ]
  })");
  auto it = table.find(std::string(dataset_label));
  if (it == table.end()) return nlohmann::json();
  return *it;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json per_sample = nlohmann::json::array();
  double f1_sum = 0.0;
  for (const PerSampleRow& row : report.per_sample) {
    f1_sum += row.f1;
    per_sample.push_back({{"id", row.id},
                          {"prediction", row.prediction},
                          {"em", row.em},
                          {"cem", row.cem},
                          {"f1", row.f1},
                          {"rounds_used", row.rounds_used},
                          {"terminal", row.terminal}});
  }
  nlohmann::json meta{{"dataset", report.dataset},
                      {"mode", engine::run_mode_label(report.mode)},
                      {"n", report.n},
                      {"config_fingerprint", report.config_fingerprint},
                      {"cem_variant", metrics::cem_variant_label(report.cem_variant)}};
  if (!report.reference_scores.is_null()) meta["reference_scores"] = report.reference_scores;
  nlohmann::json aggregates{
      {"em_pct", report.em_pct},
      {"cem_pct", report.cem_pct},
      {"mean_f1", report.n > 0 ? f1_sum / static_cast<double>(report.n) : 0.0}};
  return nlohmann::json{
      {"meta", std::move(meta)}, {"aggregates", aggregates}, {"per_sample", per_sample}};
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open report file for writing: " + path.string());
  out << report_to_json(report).dump(2) << "\n";
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open csv file for writing: " + path.string());
  out << "id,em,cem,f1,rounds_used,terminal,prediction\n";
  for (const PerSampleRow& row : report.per_sample) {
    std::string prediction = row.prediction;
    std::replace(prediction.begin(), prediction.end(), ',', ';');
    std::replace(prediction.begin(), prediction.end(), '\n', ' ');
    out << row.id << "," << (row.em ? 1 : 0) << "," << (row.cem ? 1 : 0) << "," << row.f1 << ","
        << row.rounds_used << "," << row.terminal << "," << prediction << "\n";
  }
}

}  // namespace htc::bench
