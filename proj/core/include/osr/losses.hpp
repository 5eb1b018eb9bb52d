#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "osr/models.hpp"

namespace osr {

/// Probabilities below this are clamped before taking a log.
inline constexpr double kLogClamp = 1e-12;

enum class TargetKind { OneHot, Smoothed, Uniform };

/// A length-K target distribution.
struct TargetDistribution {
  std::vector<double> values;
  TargetKind kind = TargetKind::OneHot;
  double alpha = 0.0;

  double max() const;
};

struct LossWeights {
  double lambda = 0.1;  // open-loss scale in the classifier objective
  double beta = 0.1;    // classifier term scale in the generator objective
  double alpha_hard = 0.5;
  double alpha_easy = 1.0;

  void validate() const;
};

/// (1 - alpha) * onehot(y) + alpha / K.
TargetDistribution smooth_label(int64_t y, int64_t num_classes, double alpha);
TargetDistribution one_hot(int64_t y, int64_t num_classes);
TargetDistribution uniform_target(int64_t num_classes);

/// Stacks smooth_label(labels[b], K, alpha) into a [B, K] tensor.
torch::Tensor smoothed_targets(const torch::Tensor& labels, int64_t num_classes, double alpha,
                               torch::ScalarType dtype = torch::kFloat);
torch::Tensor uniform_targets(int64_t batch, int64_t num_classes, torch::ScalarType dtype = torch::kFloat);

/// mean_b( -sum_k target[b,k] * log(max(probs[b,k], 1e-12)) ).
torch::Tensor cross_entropy(const torch::Tensor& target, const torch::Tensor& probs);

/// Sum over hard groups of the per-sample L1 distance (summed over elements,
/// averaged over the batch). Classifier features are detached.
torch::Tensor imitation_loss(std::span<const torch::Tensor> copy_features,
                             std::span<const torch::Tensor> classifier_features,
                             const GroupIndexSets& groups);

torch::Tensor copycat_loss(const torch::Tensor& reg, const torch::Tensor& imi);

/// -mean(log D(x)) - mean(log(1 - D(G(z)))), the discriminator's objective
/// turned into a minimization.
torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// mean(log(1 - D(G(z)))) - (beta / K) * mean_b sum_k log C_k(G(z)).
torch::Tensor generator_loss(const torch::Tensor& d_fake, const torch::Tensor& classifier_probs, double beta);

/// Sum over all groups i of CE(smoothed target, p_copy^i), with alpha_hard
/// for hard groups and alpha_easy for easy groups. `copy_probs[i - 1]` holds
/// the classifier's prediction on Copycat features injected after group i.
torch::Tensor open_loss_copycat(std::span<const torch::Tensor> copy_probs, const torch::Tensor& labels,
                                const GroupIndexSets& groups, const LossWeights& weights);

/// CE(uniform, p_gan).
torch::Tensor open_loss_gan(const torch::Tensor& gan_probs);

torch::Tensor classifier_loss(const torch::Tensor& close, const torch::Tensor& open, double lambda);

}  // namespace osr
