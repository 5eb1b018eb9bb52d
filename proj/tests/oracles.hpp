#pragma once

#include <cstdint>
#include <vector>

namespace osr::testing {

/// Fraction of (known, unknown) pairs ordered correctly, ties counted half.
inline double pairwise_auroc(const std::vector<double>& known, const std::vector<double>& unknown) {
  double wins = 0.0;
  for (double k : known)
    for (double u : unknown) wins += k > u ? 1.0 : (k == u ? 0.5 : 0.0);
  return wins / static_cast<double>(known.size() * unknown.size());
}

/// Macro-F1 over K+1 classes from an explicit confusion matrix.
inline double confusion_f1(const std::vector<int64_t>& pred, const std::vector<int64_t>& truth, int64_t k) {
  std::vector<std::vector<double>> m(k + 1, std::vector<double>(k + 1, 0.0));
  for (size_t i = 0; i < pred.size(); ++i) m[truth[i]][pred[i]] += 1.0;
  double total = 0.0;
  for (int64_t c = 0; c <= k; ++c) {
    double tp = m[c][c], col = 0.0, row = 0.0;
    for (int64_t j = 0; j <= k; ++j) {
      col += m[j][c];
      row += m[c][j];
    }
    const double p = col > 0 ? tp / col : 0.0;
    const double r = row > 0 ? tp / row : 0.0;
    total += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(k + 1);
}

}  // namespace osr::testing
