#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <set>
#include <vector>

namespace osr {

/// Which running-statistics bank a batch-norm layer reads and updates.
enum class BnBank { Real, Fake };

struct NetConfig {
  int64_t in_channels = 1;
  int64_t image_size = 32;
  int64_t num_classes = 6;
  int64_t n_groups = 3;
  int64_t convs_per_group = 3;
  std::vector<int64_t> widths{64, 128, 196};

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

struct GanConfig {
  int64_t in_channels = 1;
  int64_t image_size = 32;
  int64_t z_dim = 100;
  int64_t width = 64;

  void validate() const;
  bool operator==(const GanConfig&) const = default;
};

/// Partition of the 1-based group indices {1..n} into groups whose Copycat
/// features imitate the classifier (hard) and groups that only follow the
/// regularization loss (easy). Easy groups always come last.
class GroupIndexSets {
 public:
  GroupIndexSets(int64_t n_groups, std::set<int64_t> hard, std::set<int64_t> easy);

  /// hard = {1..n-1}, easy = {n}.
  static GroupIndexSets last_easy(int64_t n_groups);

  int64_t n_groups() const { return n_; }
  const std::set<int64_t>& hard() const { return hard_; }
  const std::set<int64_t>& easy() const { return easy_; }
  std::set<int64_t> all() const;
  bool is_hard(int64_t group) const { return hard_.contains(group); }

 private:
  int64_t n_;
  std::set<int64_t> hard_;
  std::set<int64_t> easy_;
};

/// Batch normalization with shared affine parameters and two independent
/// running-statistics banks.
class DualBatchNormImpl : public torch::nn::Module {
 public:
  explicit DualBatchNormImpl(int64_t channels, double momentum = 0.1, double eps = 1e-5);

  torch::Tensor forward(const torch::Tensor& x, BnBank bank);

  const torch::Tensor& running_mean(BnBank bank) const;
  const torch::Tensor& running_var(BnBank bank) const;

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double momentum_;
  double eps_;
  torch::Tensor mean_real_, var_real_, mean_fake_, var_fake_;
};
TORCH_MODULE(DualBatchNorm);

/// convs_per_group 3x3 convolutions; the first one halves the resolution.
/// Each convolution is followed by dual batch-norm and leaky-ReLU(0.2).
class ConvGroupImpl : public torch::nn::Module {
 public:
  ConvGroupImpl(int64_t in_channels, int64_t out_channels, int64_t n_convs);

  torch::Tensor forward(torch::Tensor x, BnBank bank);

 private:
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<DualBatchNorm> norms_;
};
TORCH_MODULE(ConvGroup);

/// A classifier (or its Copycat) decomposed into n convolutional groups and a
/// pooled linear/softmax head. Group indices are 1-based throughout.
class GroupedNetImpl : public torch::nn::Module {
 public:
  explicit GroupedNetImpl(NetConfig config);

  /// Class probabilities, one row per sample.
  torch::Tensor forward(const torch::Tensor& x, BnBank bank = BnBank::Real);

  /// Outputs of groups 1..n.
  std::vector<torch::Tensor> features(const torch::Tensor& x, BnBank bank = BnBank::Real);

  /// Applies groups i+1..n and the head to a tensor shaped like the output
  /// of group i. i == n applies the head only.
  torch::Tensor forward_from_group(int64_t i, const torch::Tensor& feature,
                                   BnBank bank = BnBank::Real);

  /// Globally pooled output of the last group (the head's input).
  torch::Tensor embedding(const torch::Tensor& x, BnBank bank = BnBank::Real);
  torch::Tensor embedding_from_group(int64_t i, const torch::Tensor& feature,
                                     BnBank bank = BnBank::Real);

  torch::Tensor head_logits(const torch::Tensor& last_feature);
  torch::Tensor head(const torch::Tensor& last_feature);

  /// Per-sample shape {C, H, W} of the output of group i (1-based).
  std::vector<int64_t> group_output_shape(int64_t i) const;

  const NetConfig& config() const { return config_; }
  int64_t n_groups() const { return config_.n_groups; }
  int64_t num_classes() const { return config_.num_classes; }

  torch::nn::Linear& classifier_layer() { return linear_; }

 private:
  void check_input(const torch::Tensor& x) const;
  torch::Tensor run_groups(int64_t from, torch::Tensor x, BnBank bank);

  NetConfig config_;
  std::vector<ConvGroup> groups_;
  torch::nn::Linear linear_{nullptr};
};
TORCH_MODULE(GroupedNet);

/// DCGAN-style generator: four transposed-convolution blocks, z -> image in
/// [-1, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GanConfig config);

  torch::Tensor forward(const torch::Tensor& z);

  const GanConfig& config() const { return config_; }

 private:
  GanConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Generator);

/// Four stride-2 convolution blocks ending in a sigmoid; one scalar per image.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(GanConfig config);

  torch::Tensor forward(const torch::Tensor& x);

  const GanConfig& config() const { return config_; }

 private:
  GanConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Convolution weights ~ N(0, 0.02), batch-norm affine at (1, 0).
void initialize_weights(torch::nn::Module& module);

int64_t parameter_count(const torch::nn::Module& module);

/// Copies parameters and buffers by name; shapes must match.
void copy_state(const torch::nn::Module& from, torch::nn::Module& to);

/// Restores the module's training flag on destruction.
class EvalModeGuard {
 public:
  explicit EvalModeGuard(torch::nn::Module& module)
      : module_(module), was_training_(module.is_training()) {
    module_.eval();
  }
  ~EvalModeGuard() { module_.train(was_training_); }
  EvalModeGuard(const EvalModeGuard&) = delete;
  EvalModeGuard& operator=(const EvalModeGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

}  // namespace osr
