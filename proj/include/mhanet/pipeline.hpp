#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhanet/data.hpp"
#include "mhanet/train.hpp"

namespace mhanet {

/// Everything a run needs, as read from a JSON document. Unknown keys are
/// rejected; missing keys take the defaults below and the fully resolved
/// document is written next to the outputs.
struct RunConfig {
  std::string data_dir = "data";
  std::string output_dir = "out";
  std::size_t c_out = 16;
  std::size_t k1 = 8;
  std::size_t dilation = 0;  // 0: derived from the window length
  double shrinkage = 0.05;
  double sample_rate = 128.0;  // nominal; recordings must match
  double window_seconds = 1.0;
  double train_hop_seconds = 0.5;
  double eval_hop_seconds = 1.0;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
  double lr = 5e-3;
  double weight_decay = 3e-4;
  std::uint64_t seed = 1;
  std::string ablation = "none";
  SplitRatios split_ratios;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Throws ErrorKind::Config on any inconsistent value.
  void validate() const;

  std::size_t samples() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  WindowingConfig windowing() const;
};

struct SubjectResult {
  TrainReport report;
  double baseline_accuracy = 0.0;  // CSP + LDA on the same test split
};

struct RunSummary {
  std::string ablation;
  std::size_t param_count = 0;
  std::vector<SubjectResult> subjects;

  double mean_accuracy() const;
  /// Sample standard deviation across subjects (0 for a single subject).
  double sd_accuracy() const;
  double mean_baseline() const;
  nlohmann::json to_json() const;
};

/// Per subject: split, fit CSP on the training windows, train and test.
/// When `out_dir` is non-empty, writes effective_config.json, summary.json and
/// <subject>/{checkpoint.mhck, metrics.csv, report.json} beneath it.
RunSummary run_training(const RunConfig& config, const std::vector<Recording>& recordings,
                        const std::filesystem::path& out_dir);

/// Loads recordings from config.data_dir and writes to config.output_dir.
RunSummary run_training(const RunConfig& config);

struct EvalOutcome {
  std::string subject_id;
  std::size_t windows = 0;
  double loss = 0.0;
  double accuracy = 0.0;

  nlohmann::json to_json() const;
};

/// Rebuilds the subject's test split from the checkpoint metadata and the
/// matching recording in `data_dir`, then evaluates the stored model.
EvalOutcome run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir);

struct AblationTable {
  std::vector<RunSummary> rows;  // full model first

  nlohmann::json to_json() const;
  /// Markdown table: variant, params, mean accuracy, SD, delta to full.
  std::string to_markdown() const;
};

/// Trains the full model and every listed variant ("ca,mta,mga,mta+ca,stc").
/// Outputs go to <output_dir>/ablation/<variant>/ when `write` is set.
AblationTable run_ablation(const RunConfig& config, const std::vector<Recording>& recordings,
                           const std::vector<Ablation>& variants, bool write);
AblationTable run_ablation(const RunConfig& config, const std::vector<Ablation>& variants);

std::vector<Ablation> parse_variants(const std::string& list);

/// Worker count from MHANET_THREADS, else the hardware concurrency.
std::size_t worker_threads();

}  // namespace mhanet
