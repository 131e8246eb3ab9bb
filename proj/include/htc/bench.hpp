#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htc/engine.hpp"
#include "htc/grpo.hpp"
#include "htc/metrics.hpp"
#include "json.hpp"

namespace htc::bench {

enum class SourceDataset { HotpotQA, TwoWikiMultiHopQA, MuSiQue, Bamboogle, Custom };

std::string_view source_dataset_label(SourceDataset d);
std::optional<SourceDataset> source_dataset_from_label(std::string_view label);

struct QASample {
  std::string id;
  std::string question;
  metrics::GoldAnswerSet golds;
  SourceDataset source = SourceDataset::Custom;
};

// JSON-lines loader accepting the field variants
// {id?, question, answer | answers | golden_answers}. Records without an id
// get "q<record index>". Any bad record rejects the whole load with a
// FormatError naming the line.
std::vector<QASample> load_dataset(const std::filesystem::path& path,
                                   std::optional<SourceDataset> source_hint = std::nullopt);

void write_dataset(std::span<const QASample> samples, const std::filesystem::path& path);

// Seeded sampling without replacement: round(total*ratio) from `hotpot`,
// the remainder from `twowiki`, output order shuffled by the same seed.
// Fully reproducible; the RNG usage is self-contained.
std::vector<QASample> sample_training_mixture(std::span<const QASample> hotpot,
                                              std::span<const QASample> twowiki, size_t total,
                                              double ratio, uint64_t seed);

struct PerSampleRow {
  std::string id;
  std::string prediction;
  bool em = false;
  bool cem = false;
  double f1 = 0.0;
  int rounds_used = 0;
  std::string terminal;
};

struct EvalReport {
  std::string dataset;
  engine::RunMode mode = engine::RunMode::Hierarchical;
  size_t n = 0;
  double em_pct = 0.0;
  double cem_pct = 0.0;
  std::vector<PerSampleRow> per_sample;
  std::string config_fingerprint;
  metrics::CemVariant cem_variant = metrics::CemVariant::TokenSubsequence;
  nlohmann::json reference_scores;  // published full-scale rows for this dataset, if any
};

struct EvalOptions {
  engine::RolloutLimits limits;
  int concurrency = 4;
  uint64_t base_seed = 0;
  metrics::CemVariant cem_variant = metrics::CemVariant::TokenSubsequence;
  nlohmann::json effective_config;  // fingerprint input
  std::string dataset_label = "custom";
};

// Runs the batch, scores every trajectory, aggregates EM/CEM percentages to
// one decimal place. Per-sample failures score as wrong and stay in n.
EvalReport evaluate(std::span<const QASample> samples, engine::RunMode mode,
                    engine::EngineDeps& deps, const EvalOptions& options);

double round1(double pct);

// Reference EM/CEM rows for the named benchmark, for side-by-side comparison
// in reports; null for unknown datasets.
nlohmann::json reference_scores_for(std::string_view dataset_label);

nlohmann::json report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

// Scores, tokenizes and groups batch outcomes for export. `outcomes` holds
// group_size rollouts per sample, flat in sample order. Failed rollouts are
// dropped from their group; a group with fewer than two survivors is skipped
// with a warning on stderr. Sampling-time logprobs are synthesized
// deterministically from the token bytes.
std::vector<grpo::GrpoGroup> build_training_groups(
    std::span<const QASample> samples, std::span<const engine::RolloutOutcome> outcomes,
    const grpo::GrpoConfig& cfg, metrics::CemVariant cem_variant, size_t chunk_len = 4);

// Command-line entry; returns the process exit status
// (0 success, 1 usage error, 2 runtime failure).
int cli(const std::vector<std::string>& args);

}  // namespace htc::bench
