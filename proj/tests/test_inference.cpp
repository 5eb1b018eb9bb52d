#include <gtest/gtest.h>

#include "osr/inference.hpp"
#include "osr/losses.hpp"

using namespace osr;

namespace {

torch::Tensor rows(std::vector<std::vector<double>> r) {
  std::vector<torch::Tensor> out;
  for (auto& v : r) out.push_back(torch::tensor(v, torch::kDouble));
  return torch::stack(out);
}

}  // namespace

TEST(InherentThreshold, KnownValues) {
  EXPECT_NEAR(inherent_threshold(6, 0.5, 0.0), 0.583333, 1e-6);
  EXPECT_NEAR(inherent_threshold(6, 0.5), 0.533333, 1e-6);
  EXPECT_DOUBLE_EQ(inherent_threshold(9, 0.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(inherent_threshold(4, 0.5, 0.0), 0.625);
}

TEST(InherentThreshold, EqualsPeakOfHardTargetOverGrid) {
  for (int64_t k : {2, 6, 20})
    for (int a = 0; a <= 10; ++a) {
      const double alpha = a / 10.0;
      EXPECT_NEAR(inherent_threshold(k, alpha, 0.0), smooth_label(0, k, alpha).max(), 1e-9);
      EXPECT_NEAR(inherent_threshold(k, alpha, -0.05), (1 - alpha) + alpha / k - 0.05, 1e-9);
    }
}

TEST(InherentThreshold, StrictlyDecreasingInAlpha) {
  for (int64_t k : {2, 6, 20})
    for (int a = 0; a < 10; ++a) EXPECT_GT(inherent_threshold(k, a / 10.0), inherent_threshold(k, (a + 1) / 10.0));
}

TEST(Predict, KnownValues) {
  const double t = inherent_threshold(6, 0.5);
  auto p = rows({{0.9, 0.02, 0.02, 0.02, 0.02, 0.02}, std::vector<double>(6, 1.0 / 6)});
  auto pred = predict_from_probs(p, t);
  EXPECT_EQ(pred[0].label, 0);
  EXPECT_DOUBLE_EQ(pred[0].confidence, 0.9);
  EXPECT_EQ(pred[1].label, 6);
  EXPECT_DOUBLE_EQ(pred[1].threshold_used, t);
}

TEST(Predict, TieGoesToKnown) {
  auto pred = predict_from_probs(rows({{0.5, 0.25, 0.25}}), 0.5);
  EXPECT_EQ(pred[0].label, 0);
  pred = predict_from_probs(rows({{0.5, 0.25, 0.25}}), std::nextafter(0.5, 1.0));
  EXPECT_EQ(pred[0].label, 3);
}

TEST(Predict, ConsistentWithScoresAndMonotone) {
  torch::manual_seed(0);
  auto p = torch::softmax(torch::randn({200, 6}, torch::kDouble) * 2, 1);
  auto s = scores_from_probs(p);
  int64_t prev_known = -1;
  for (int i = 100; i >= 0; --i) {
    const double t = i / 100.0;
    auto pred = predict_from_probs(p, t);
    int64_t known = 0;
    for (size_t r = 0; r < pred.size(); ++r) {
      EXPECT_EQ(pred[r].label == 6, s[r] < t);
      EXPECT_EQ(pred[r].label == 6 ? 6 : pred[r].label, pred[r].label == 6 ? 6 : p[r].argmax().item<int64_t>());
      known += pred[r].label != 6;
    }
    EXPECT_GE(known, prev_known);
    prev_known = known;
  }
}

TEST(Score, RowMaxOfForward) {
  torch::manual_seed(2);
  NetConfig cfg;
  cfg.widths = {4, 4, 4};
  GroupedNet net(cfg);
  net->train();
  auto x = torch::randn({10, 1, 32, 32});
  auto s = score(net, x, 3);
  EXPECT_TRUE(net->is_training());  // mode restored
  net->eval();
  auto expected = std::get<0>(net->forward(x).max(1));
  for (int64_t i = 0; i < 10; ++i) EXPECT_NEAR(s[i], expected[i].item<double>(), 1e-6);

  EXPECT_NEAR(scores_from_probs(rows({std::vector<double>(6, 1.0 / 6)}))[0], 1.0 / 6, 1e-12);
  EXPECT_NEAR(scores_from_probs(rows({{0.999, 0.001}}))[0], 0.999, 1e-12);
}

TEST(Predict, NetworkPathUsesEvalMode) {
  torch::manual_seed(3);
  NetConfig cfg;
  cfg.widths = {4, 4, 4};
  GroupedNet net(cfg);
  auto x = torch::randn({5, 1, 32, 32});
  auto preds = predict(net, x, 0.3);
  auto probs = predict_probs(net, x);
  auto expected = predict_from_probs(probs, 0.3);
  for (size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(preds[i].label, expected[i].label);
    EXPECT_DOUBLE_EQ(preds[i].confidence, expected[i].confidence);
  }
}
