#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "osr/inference.hpp"

namespace osr {

/// P(known score > unknown score) with ties counted 1/2, computed from
/// midranks in O(n log n).
double auroc(std::span<const double> known_scores, std::span<const double> unknown_scores);

/// Unweighted mean of per-class F1 over classes 0..K (K = unknown). A class
/// whose precision or recall is undefined gets that quantity as 0.
double macro_f1(std::span<const int64_t> predicted, std::span<const int64_t> truth, int64_t num_known);
double macro_f1(std::span<const OpenSetPrediction> predictions, std::span<const int64_t> truth, int64_t num_known);

/// 1 - sqrt(K / (K + K_hat)).
double openness(int64_t num_known, int64_t num_unknown);

/// Per-row sum_k p_k log(p_k K), with 0 log 0 = 0.
std::vector<double> kl_to_uniform(const torch::Tensor& probs);

/// Exact 1-D Wasserstein-1 distance between two empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// `count` unit vectors of dimension `dim`, deterministic in `seed`. Rows are
/// projections.
torch::Tensor random_projections(int64_t dim, int64_t count, uint64_t seed);

/// Mean over projections of the 1-D distance between projected sets.
/// `a` and `b` are [N, D] feature matrices.
double sliced_wasserstein(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& projections);

struct WassersteinDifficulty {
  double raw = 0.0;        // fake vs closed
  double reference = 0.0;  // held-out closed vs closed
  double normalized = 0.0; // raw / reference
};

WassersteinDifficulty wasserstein_difficulty(const torch::Tensor& fake_features, const torch::Tensor& closed_features,
                                             const torch::Tensor& reference_features, int64_t projections = 128,
                                             uint64_t seed = 0);

struct MetricsRecord {
  double auroc = 0.0;
  double macro_f1 = 0.0;
  double openness = 0.0;
  double threshold = 0.0;
  double closed_accuracy = 0.0;
  std::map<int64_t, double> per_class_auroc;  // keyed by original open-class index
  std::string split_id;
  uint64_t seed = 0;

  // Filled by a threshold sweep.
  std::optional<double> best_threshold;
  std::optional<double> best_macro_f1;

  nlohmann::json to_json() const;
};

struct ThresholdSweep {
  double best_threshold = 0.0;
  double best_macro_f1 = 0.0;
  std::vector<std::pair<double, double>> curve;  // (threshold, macro-F1)
};

/// Grid {0, step, ..., 1}; ties keep the smallest threshold.
ThresholdSweep sweep_thresholds(const torch::Tensor& probs, std::span<const int64_t> truth, int64_t num_known,
                                double step = 0.01);

struct DifficultyBin {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<int64_t> classes;
  double mean_baseline_auroc = 0.0;
  double mean_auroc = 0.0;
  double mean_improvement = 0.0;
};

struct FakeSetDifficulty {
  std::string name;  // "copycat-hard", "gan-moderate", "copycat-easy"
  int64_t samples = 0;
  WassersteinDifficulty wasserstein;
  double auroc_vs_closed = 0.0;
};

struct DifficultyReport {
  std::vector<FakeSetDifficulty> fake_sets;
  std::map<int64_t, double> class_auroc;
  std::map<int64_t, double> baseline_auroc;
  std::map<int64_t, int64_t> class_bin;  // class -> bin index
  std::vector<DifficultyBin> bins;       // only non-empty bins
  double bin_width = 0.05;

  nlohmann::json to_json() const;
};

/// 5%-wide bin index of an AUROC value in [0, 1]; 1.0 falls in the last bin.
int64_t difficulty_bin(double auroc_value, double bin_width = 0.05);

/// Per open class AUROC(closed scores vs that class), bucketed by the
/// baseline's AUROC for the same class.
DifficultyReport classwise_difficulty(std::span<const double> closed_scores,
                                      const std::map<int64_t, std::vector<double>>& open_scores_by_class,
                                      const std::map<int64_t, double>& baseline_auroc_by_class,
                                      double bin_width = 0.05);

/// Per-class AUROC of closed scores against each open class's scores.
std::map<int64_t, double> per_class_auroc(std::span<const double> closed_scores,
                                          const std::map<int64_t, std::vector<double>>& open_scores_by_class);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  bool single = false;
};

MeanStd mean_std(std::span<const double> values);
/// "0.953 ± 0.015"
std::string format_mean_std(const MeanStd& ms, int digits = 3);

}  // namespace osr
