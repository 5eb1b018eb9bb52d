#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "osr/data.hpp"
#include "osr/losses.hpp"
#include "osr/models.hpp"

namespace osr {

struct TrainingConfig {
  int64_t epochs = 30;
  int64_t batch_size = 128;
  uint64_t seed = 0;

  // Classifier and Copycat: SGD with momentum and cosine decay.
  double classifier_lr = 0.01;
  double copycat_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine_decay = true;

  // Generator and discriminator: Adam.
  double gan_lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  /// Scale of the Copycat's regularization (cross-entropy) loss.
  double reg_weight = 1.0;

  std::vector<int64_t> hard_groups{1, 2};
  std::vector<int64_t> easy_groups{3};

  /// Checkpoint every N epochs; the final epoch is always checkpointed.
  int64_t checkpoint_every = 10;
  int64_t eval_batch_size = 256;
  /// Samples of the closed training set used to track the imitation loss.
  int64_t probe_size = 128;

  void validate() const;
  GroupIndexSets group_sets(int64_t n_groups) const;
};

struct Batch {
  torch::Tensor images;
  torch::Tensor labels;
};

struct PhaseOneRecord {
  double copy_reg = 0.0;
  double copy_imi = 0.0;
  double copy_total = 0.0;
  double cls_close = 0.0;
  double cls_open = 0.0;
  double cls_total = 0.0;
};

struct PhaseTwoRecord {
  double gen = 0.0;
  double disc = 0.0;
  double d_real = 0.0;  // mean D(x)
  double d_fake = 0.0;  // mean D(G(z))
  double cls_close = 0.0;
  double cls_open = 0.0;
  double cls_total = 0.0;
};

/// All mutable training state: the four networks, their optimizers, the
/// noise RNG and the loop counters.
class Trainer {
 public:
  Trainer(NetConfig net, GanConfig gan, TrainingConfig config, LossWeights weights);

  /// Copycat update on L_reg + L_imi, then classifier update on
  /// L_close + lambda * L_open with the updated Copycat's features.
  PhaseOneRecord phase_one_step(const Batch& batch);

  /// Generator, then discriminator, then classifier update on
  /// L_close + lambda * L_open with fresh generated images.
  PhaseTwoRecord phase_two_step(const Batch& batch);

  /// Enables cosine decay over this many iterations (0 disables it).
  void set_total_iterations(int64_t total) { total_iterations_ = total; }
  void advance_iteration() { ++iteration_; }

  void save(const std::filesystem::path& path, nlohmann::json manifest) const;
  /// Restores networks, optimizers, RNG and counters. Returns the manifest.
  nlohmann::json load(const std::filesystem::path& path);

  GroupedNet& classifier() { return classifier_; }
  GroupedNet& copycat() { return copycat_; }
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }

  const NetConfig& net_config() const { return net_config_; }
  const GanConfig& gan_config() const { return gan_config_; }
  const TrainingConfig& config() const { return config_; }
  const LossWeights& weights() const { return weights_; }
  const GroupIndexSets& groups() const { return groups_; }

  int64_t iteration() const { return iteration_; }
  int64_t epoch() const { return epoch_; }
  int64_t batch_in_epoch() const { return batch_in_epoch_; }
  void set_position(int64_t epoch, int64_t batch_in_epoch) {
    epoch_ = epoch;
    batch_in_epoch_ = batch_in_epoch;
  }

  torch::Tensor sample_noise(int64_t batch);

 private:
  void apply_schedule();

  NetConfig net_config_;
  GanConfig gan_config_;
  TrainingConfig config_;
  LossWeights weights_;
  GroupIndexSets groups_;

  GroupedNet classifier_{nullptr};
  GroupedNet copycat_{nullptr};
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};

  std::unique_ptr<torch::optim::SGD> classifier_opt_;
  std::unique_ptr<torch::optim::SGD> copycat_opt_;
  std::unique_ptr<torch::optim::Adam> generator_opt_;
  std::unique_ptr<torch::optim::Adam> discriminator_opt_;

  at::Generator noise_rng_;
  int64_t iteration_ = 0;
  int64_t epoch_ = 0;
  int64_t batch_in_epoch_ = 0;
  int64_t total_iterations_ = 0;
};

using MetricsSink = std::function<void(const nlohmann::json&)>;

struct TrainOptions {
  /// Checkpoints are written here as epoch_NNN.pt and final.pt when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Extra manifest fields (experiment config, split id, ...).
  nlohmann::json manifest = nlohmann::json::object();
  MetricsSink sink;
  bool log_iterations = true;
  /// Stop after this many iterations in total (used to leave a run mid-way).
  std::optional<int64_t> stop_after_iterations;
};

struct TrainResult {
  std::vector<nlohmann::json> epochs;  // per-epoch records
  std::optional<std::filesystem::path> final_checkpoint;
  int64_t phase_one_updates = 0;
  int64_t phase_two_updates = 0;
};

/// Deterministic per-epoch visiting order of `n` samples.
torch::Tensor epoch_permutation(int64_t n, uint64_t seed, int64_t epoch);

/// Runs the joint loop from the trainer's current position to the configured
/// epoch count. Each mini-batch runs phase one then phase two; each epoch
/// ends with an evaluation on the closed (and, if present, open) test sets.
TrainResult train(Trainer& trainer, const SplitData& split, const TrainOptions& options = {});

/// Imitation loss between Copycat and classifier on `probe`, both in eval mode.
double probe_imitation_loss(Trainer& trainer, const torch::Tensor& probe);

/// Fraction of closed samples whose argmax equals the label.
double closed_accuracy(const torch::Tensor& probs, const torch::Tensor& labels);

struct LoadedClassifier {
  GroupedNet net{nullptr};
  nlohmann::json manifest;
};

/// Reads only the manifest and the classifier of a checkpoint.
LoadedClassifier load_classifier(const std::filesystem::path& path);
nlohmann::json read_manifest(const std::filesystem::path& path);

/// Rebuilds a trainer from the configs recorded in a checkpoint and restores
/// its full state.
std::unique_ptr<Trainer> restore_trainer(const std::filesystem::path& path);

}  // namespace osr
