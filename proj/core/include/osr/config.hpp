#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "osr/data.hpp"
#include "osr/losses.hpp"
#include "osr/models.hpp"
#include "osr/training.hpp"

namespace osr {

struct DataConfig {
  std::string dataset = "mnist";
  std::string root = "data/mnist";
  /// Second source for the composed CIFAR+ splits (CIFAR-100 binaries).
  std::string open_root;
  Protocol protocol = Protocol::Auroc;
  int trial = 0;
  /// 0 keeps every training sample.
  int64_t max_train_per_class = 0;
  double norm_mean = 0.5;
  double norm_std = 0.5;
};

struct InferenceConfig {
  double epsilon = -0.05;
};

struct EvaluationConfig {
  int64_t wasserstein_projections = 128;
  double threshold_step = 0.01;
  /// Fake samples drawn per source by `diagnose`.
  int64_t diagnose_samples = 512;
};

/// The full, serializable description of one run. The JSON form has one
/// object per section (data, models, losses, training, inference,
/// evaluation, output); unknown keys are rejected.
struct ExperimentConfig {
  DataConfig data;
  NetConfig net;
  GanConfig gan;
  LossWeights losses;
  TrainingConfig training;
  InferenceConfig inference;
  EvaluationConfig evaluation;
  std::string output_dir = "runs/default";

  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  void validate() const;

  ImageSpec image_spec() const;
  /// FNV-1a of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
  std::string split_id() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const NetConfig& c);
nlohmann::json to_json(const GanConfig& c);
nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const TrainingConfig& c);
NetConfig net_config_from_json(const nlohmann::json& j);
GanConfig gan_config_from_json(const nlohmann::json& j);
LossWeights loss_weights_from_json(const nlohmann::json& j);
TrainingConfig training_config_from_json(const nlohmann::json& j);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace osr
