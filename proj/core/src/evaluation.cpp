#include "osr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "osr/error.hpp"

namespace osr {

double auroc(std::span<const double> known_scores, std::span<const double> unknown_scores) {
  if (known_scores.empty() || unknown_scores.empty()) fail(ErrorKind::Input, "auroc: both score sets must be non-empty");
  const size_t n_known = known_scores.size();
  const size_t n = n_known + unknown_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (auto s : known_scores) all.emplace_back(s, true);
  for (auto s : unknown_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of 1-based midranks of the known scores.
  double rank_sum = 0.0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    size_t known_in_tie = 0;
    while (j < n && all[j].first == all[i].first) known_in_tie += all[j++].second ? 1 : 0;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(known_in_tie);
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n_known) * static_cast<double>(n_known + 1);
  return u / (static_cast<double>(n_known) * static_cast<double>(unknown_scores.size()));
}

double macro_f1(std::span<const int64_t> predicted, std::span<const int64_t> truth, int64_t num_known) {
  if (predicted.size() != truth.size()) fail(ErrorKind::Input, "macro_f1: prediction and truth lengths differ");
  const auto classes = static_cast<size_t>(num_known + 1);
  std::vector<double> tp(classes), fp(classes), fn(classes);
  for (size_t s = 0; s < truth.size(); ++s) {
    auto p = predicted[s];
    auto t = truth[s];
    if (p < 0 || p > num_known || t < 0 || t > num_known)
      fail(ErrorKind::Input, "macro_f1: label outside 0.." + std::to_string(num_known));
    if (p == t) {
      tp[static_cast<size_t>(t)] += 1;
    } else {
      fp[static_cast<size_t>(p)] += 1;
      fn[static_cast<size_t>(t)] += 1;
    }
  }
  double sum = 0.0;
  for (size_t c = 0; c < classes; ++c) {
    const double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    sum += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(classes);
}

double macro_f1(std::span<const OpenSetPrediction> predictions, std::span<const int64_t> truth, int64_t num_known) {
  std::vector<int64_t> labels;
  labels.reserve(predictions.size());
  for (const auto& p : predictions) labels.push_back(p.label);
  return macro_f1(labels, truth, num_known);
}

double openness(int64_t num_known, int64_t num_unknown) {
  if (num_known < 1 || num_unknown < 0) fail(ErrorKind::Input, "openness: need K >= 1 and K_hat >= 0");
  return 1.0 - std::sqrt(static_cast<double>(num_known) / static_cast<double>(num_known + num_unknown));
}

std::vector<double> kl_to_uniform(const torch::Tensor& probs) {
  if (probs.dim() != 2) fail(ErrorKind::Input, "kl_to_uniform: expected [B, K]");
  auto p = probs.to(torch::kDouble).contiguous();
  const auto rows = p.size(0);
  const auto k = p.size(1);
  const auto* data = p.data_ptr<double>();
  std::vector<double> out(static_cast<size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < k; ++c) {
      const double v = data[r * k + c];
      if (v > 0.0) out[static_cast<size_t>(r)] += v * std::log(v * static_cast<double>(k));
    }
  return out;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::Input, "wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a^-1(u) - F_b^-1(u)| over u; breakpoints at i/n and j/m,
  // compared in integer arithmetic.
  const auto n = static_cast<int64_t>(a.size());
  const auto m = static_cast<int64_t>(b.size());
  int64_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < n && j < m) {
    const int64_t lhs = (i + 1) * m;
    const int64_t rhs = (j + 1) * n;
    const double next = lhs <= rhs ? static_cast<double>(i + 1) / static_cast<double>(n)
                                   : static_cast<double>(j + 1) / static_cast<double>(m);
    total += (next - u) * std::abs(a[static_cast<size_t>(i)] - b[static_cast<size_t>(j)]);
    u = next;
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return total;
}

torch::Tensor random_projections(int64_t dim, int64_t count, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto p = torch::randn({count, dim}, gen, torch::TensorOptions(torch::kDouble));
  return p / p.norm(2, 1, /*keepdim=*/true);
}

double sliced_wasserstein(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& projections) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1) || projections.size(1) != a.size(1))
    fail(ErrorKind::Input, "sliced_wasserstein: feature dimensions disagree");
  auto pa = a.to(torch::kDouble).matmul(projections.to(torch::kDouble).t()).t().contiguous();
  auto pb = b.to(torch::kDouble).matmul(projections.to(torch::kDouble).t()).t().contiguous();
  double total = 0.0;
  for (int64_t p = 0; p < projections.size(0); ++p) {
    const auto* ra = pa[p].data_ptr<double>();
    const auto* rb = pb[p].data_ptr<double>();
    total += wasserstein_1d({ra, ra + pa.size(1)}, {rb, rb + pb.size(1)});
  }
  return total / static_cast<double>(projections.size(0));
}

WassersteinDifficulty wasserstein_difficulty(const torch::Tensor& fake_features, const torch::Tensor& closed_features,
                                             const torch::Tensor& reference_features, int64_t projections,
                                             uint64_t seed) {
  for (const auto* t : {&fake_features, &closed_features, &reference_features})
    if (t->dim() != 2 || t->size(0) < 2) fail(ErrorKind::Input, "wasserstein_difficulty: every set needs >= 2 samples");
  auto proj = random_projections(closed_features.size(1), projections, seed);
  WassersteinDifficulty out;
  out.raw = sliced_wasserstein(fake_features, closed_features, proj);
  out.reference = sliced_wasserstein(reference_features, closed_features, proj);
  out.normalized = out.reference > 0.0 ? out.raw / out.reference : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json per_class = nlohmann::json::object();
  for (auto [c, v] : per_class_auroc) per_class[std::to_string(c)] = v;
  nlohmann::json j{{"auroc", auroc},
                   {"macro_f1", macro_f1},
                   {"openness", openness},
                   {"threshold", threshold},
                   {"closed_accuracy", closed_accuracy},
                   {"per_class_auroc", per_class},
                   {"split_id", split_id},
                   {"seed", seed}};
  if (best_threshold) {
    j["sweep"] = {{"best_threshold", *best_threshold},
                  {"best_macro_f1", *best_macro_f1},
                  {"gap", *best_macro_f1 - macro_f1}};
  }
  return j;
}

ThresholdSweep sweep_thresholds(const torch::Tensor& probs, std::span<const int64_t> truth, int64_t num_known,
                                double step) {
  if (!(step > 0.0 && step <= 1.0)) fail(ErrorKind::Input, "sweep_thresholds: step must be in (0, 1]");
  ThresholdSweep out;
  const auto points = static_cast<int64_t>(std::llround(1.0 / step));
  out.best_macro_f1 = -1.0;
  for (int64_t k = 0; k <= points; ++k) {
    const double t = static_cast<double>(k) * step;
    const double f1 = macro_f1(predict_from_probs(probs, t), truth, num_known);
    out.curve.emplace_back(t, f1);
    if (f1 > out.best_macro_f1) {
      out.best_macro_f1 = f1;
      out.best_threshold = t;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

int64_t difficulty_bin(double auroc_value, double bin_width) {
  const auto bins = static_cast<int64_t>(std::llround(1.0 / bin_width));
  auto b = static_cast<int64_t>(std::floor(auroc_value / bin_width + 1e-12));
  return std::clamp<int64_t>(b, 0, bins - 1);
}

std::map<int64_t, double> per_class_auroc(std::span<const double> closed_scores,
                                          const std::map<int64_t, std::vector<double>>& open_scores_by_class) {
  std::map<int64_t, double> out;
  for (const auto& [c, scores] : open_scores_by_class) out[c] = auroc(closed_scores, scores);
  return out;
}

DifficultyReport classwise_difficulty(std::span<const double> closed_scores,
                                      const std::map<int64_t, std::vector<double>>& open_scores_by_class,
                                      const std::map<int64_t, double>& baseline_auroc_by_class, double bin_width) {
  DifficultyReport report;
  report.bin_width = bin_width;
  report.class_auroc = per_class_auroc(closed_scores, open_scores_by_class);
  std::map<int64_t, DifficultyBin> bins;
  for (const auto& [c, value] : report.class_auroc) {
    auto it = baseline_auroc_by_class.find(c);
    if (it == baseline_auroc_by_class.end())
      fail(ErrorKind::Input, "classwise_difficulty: missing baseline AUROC for class " + std::to_string(c));
    report.baseline_auroc[c] = it->second;
    const auto b = difficulty_bin(it->second, bin_width);
    report.class_bin[c] = b;
    auto& bin = bins[b];
    bin.lower = static_cast<double>(b) * bin_width;
    bin.upper = static_cast<double>(b + 1) * bin_width;
    bin.classes.push_back(c);
    bin.mean_baseline_auroc += it->second;
    bin.mean_auroc += value;
  }
  for (auto& [b, bin] : bins) {
    const auto n = static_cast<double>(bin.classes.size());
    bin.mean_baseline_auroc /= n;
    bin.mean_auroc /= n;
    bin.mean_improvement = bin.mean_auroc - bin.mean_baseline_auroc;
    report.bins.push_back(bin);
  }
  return report;
}

nlohmann::json DifficultyReport::to_json() const {
  auto keyed = [](const auto& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
  };
  nlohmann::json fakes = nlohmann::json::array();
  for (const auto& f : fake_sets)
    fakes.push_back({{"name", f.name},
                     {"samples", f.samples},
                     {"wasserstein_raw", f.wasserstein.raw},
                     {"wasserstein_reference", f.wasserstein.reference},
                     {"wasserstein_normalized", f.wasserstein.normalized},
                     {"auroc_vs_closed", f.auroc_vs_closed}});
  nlohmann::json bin_list = nlohmann::json::array();
  for (const auto& b : bins)
    bin_list.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"classes", b.classes},
                        {"mean_baseline_auroc", b.mean_baseline_auroc},
                        {"mean_auroc", b.mean_auroc},
                        {"mean_improvement", b.mean_improvement}});
  return {{"fake_sets", fakes},
          {"class_auroc", keyed(class_auroc)},
          {"baseline_auroc", keyed(baseline_auroc)},
          {"class_bin", keyed(class_bin)},
          {"bins", bin_list},
          {"bin_width", bin_width}};
}

// ---------------------------------------------------------------------------

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::Input, "mean_std: no values");
  MeanStd out;
  const auto n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  out.single = values.size() == 1;
  if (!out.single) {
    double ss = 0.0;
    for (auto v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

std::string format_mean_std(const MeanStd& ms, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", digits, ms.mean, digits, ms.std);
  return buf;
}

}  // namespace osr
