#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "osr/models.hpp"

namespace osr {

inline constexpr double kDefaultEpsilon = -0.05;

struct OpenSetPrediction {
  int64_t label = 0;  // 0..K-1, or K for unknown
  double confidence = 0.0;
  double threshold_used = 0.0;
};

/// Peak of the hard-fake smoothed target, (1 - alpha_hard) + alpha_hard / K,
/// shifted by epsilon.
double inherent_threshold(int64_t num_classes, double alpha_hard, double epsilon = kDefaultEpsilon);

/// Class probabilities in eval mode through the real batch-norm bank.
torch::Tensor predict_probs(GroupedNet& net, const torch::Tensor& x, int64_t batch_size = 256);

/// Max softmax probability per row.
std::vector<double> scores_from_probs(const torch::Tensor& probs);
std::vector<double> score(GroupedNet& net, const torch::Tensor& x, int64_t batch_size = 256);

/// Unknown (label K) iff the max probability is strictly below `threshold`.
std::vector<OpenSetPrediction> predict_from_probs(const torch::Tensor& probs, double threshold);
std::vector<OpenSetPrediction> predict(GroupedNet& net, const torch::Tensor& x, double threshold,
                                       int64_t batch_size = 256);

}  // namespace osr
