#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "osr/config.hpp"
#include "osr/data.hpp"
#include "osr/evaluation.hpp"
#include "osr/training.hpp"

namespace osr {

/// Version of the sources this library was built from (git short hash).
std::string code_version();

/// Loads the datasets named by `config.data` and applies the split.
SplitData load_split_data(const ExperimentConfig& config, const SplitSpec& spec);
SplitData load_split_data(const ExperimentConfig& config);

struct RunTrainResult {
  std::filesystem::path run_dir;
  MetricsRecord final_metrics;
  TrainResult train;
};

/// Trains into config.output_dir, which receives config.json, run.json,
/// metrics.jsonl, checkpoints/ and metrics_record.json. With `resume`, the
/// run continues from that checkpoint and appends to metrics.jsonl.
RunTrainResult run_train(ExperimentConfig config, const std::optional<std::filesystem::path>& resume = std::nullopt);

enum class ThresholdMode { Inherent, Sweep };

/// Which samples play the unknown role during evaluation.
enum class UnknownSource { Split, Noise, MnistNoise };

UnknownSource parse_unknown_source(std::string_view text);

struct EvalOptions {
  ThresholdMode mode = ThresholdMode::Inherent;
  std::optional<double> threshold;  // overrides the inherent threshold
  std::optional<double> epsilon;
  std::optional<int> trial;         // overrides the trial recorded in the checkpoint
  UnknownSource unknown = UnknownSource::Split;
};

/// Scores a classifier on a split. The threshold is `threshold` when given,
/// else the inherent one from (K, alpha_hard, epsilon).
MetricsRecord evaluate_classifier(GroupedNet& net, const SplitData& split, const ExperimentConfig& config,
                                  ThresholdMode mode, std::optional<double> threshold = std::nullopt,
                                  std::optional<double> epsilon = std::nullopt);

MetricsRecord run_eval(const std::filesystem::path& checkpoint, const EvalOptions& options = {});

struct SuiteSummary {
  std::vector<int> trials;
  std::vector<MetricsRecord> records;
  std::vector<nlohmann::json> failures;  // {trial, kind, message}
  std::map<std::string, MeanStd> stats;  // metric name -> mean/std over successful trials

  nlohmann::json to_json() const;
};

/// Summary statistics of per-trial metrics records.
std::map<std::string, MeanStd> summarize(const std::vector<MetricsRecord>& records);

/// One training run per trial under config.output_dir/trial_<t>; failures
/// are recorded and the suite continues.
SuiteSummary run_suite(const ExperimentConfig& config, const std::vector<int>& trials);

struct DiagnoseOptions {
  std::optional<std::filesystem::path> baseline_checkpoint;
  std::optional<std::filesystem::path> export_dir;
};

/// Difficulty report of the Copycat hard/easy fakes and the GAN fakes as
/// seen by the classifier, plus the class-wise report when a baseline
/// checkpoint is supplied. Feature matrices are exported to export_dir.
DifficultyReport run_diagnose(const std::filesystem::path& checkpoint, const DiagnoseOptions& options = {});
DifficultyReport diagnose(Trainer& trainer, const SplitData& split, const ExperimentConfig& config,
                          GroupedNet* baseline = nullptr,
                          const std::optional<std::filesystem::path>& export_dir = std::nullopt);

/// Writes a float32 matrix as <dir>/<tag>.f32 plus <dir>/<tag>.json.
void export_features(const std::filesystem::path& dir, const std::string& tag, const torch::Tensor& features);

/// JSON-lines {index, label, confidence} for every image of an IDX file.
void run_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& images, std::ostream& out,
                 std::optional<double> threshold = std::nullopt, std::optional<double> epsilon = std::nullopt);

/// Experiment config recorded in a checkpoint manifest.
ExperimentConfig experiment_of(const nlohmann::json& manifest);

}  // namespace osr
