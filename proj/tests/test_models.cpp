#include <gtest/gtest.h>

#include "osr/error.hpp"
#include "osr/models.hpp"
#include "test_util.hpp"

using namespace osr;
using osr::testing::identical;
using osr::testing::snapshot;

namespace {

NetConfig small_net() {
  NetConfig c;
  c.widths = {8, 12, 16};
  return c;
}

}  // namespace

TEST(GroupIndexSets, AcceptsPartitionWithEasyLast) {
  GroupIndexSets g(3, {1, 2}, {3});
  EXPECT_EQ(g.all(), (std::set<int64_t>{1, 2, 3}));
  EXPECT_TRUE(g.is_hard(2));
  EXPECT_FALSE(g.is_hard(3));
  auto d = GroupIndexSets::last_easy(4);
  EXPECT_EQ(d.hard(), (std::set<int64_t>{1, 2, 3}));
  EXPECT_EQ(d.easy(), (std::set<int64_t>{4}));
}

TEST(GroupIndexSets, RejectsInvalidPartitions) {
  EXPECT_THROW(GroupIndexSets(3, {1, 2}, {2, 3}), Error);  // overlap
  EXPECT_THROW(GroupIndexSets(3, {1}, {3}), Error);         // no cover
  EXPECT_THROW(GroupIndexSets(3, {1, 3}, {2}), Error);      // easy not last
  EXPECT_THROW(GroupIndexSets(3, {1, 2, 3}, {}), Error);    // no easy group
  EXPECT_THROW(GroupIndexSets(3, {0, 1}, {3}), Error);      // out of range
}

TEST(GroupedNet, GroupShapesHalveResolution) {
  GroupedNet net(small_net());
  auto f = net->features(torch::randn({2, 1, 32, 32}));
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].sizes(), (std::vector<int64_t>{2, 8, 16, 16}));
  EXPECT_EQ(f[1].sizes(), (std::vector<int64_t>{2, 12, 8, 8}));
  EXPECT_EQ(f[2].sizes(), (std::vector<int64_t>{2, 16, 4, 4}));
  EXPECT_EQ(net->group_output_shape(2), (std::vector<int64_t>{12, 8, 8}));
}

TEST(GroupedNet, NineConvolutionsByDefault) {
  GroupedNet net(NetConfig{});
  int convs = 0;
  for (const auto& m : net->modules(false))
    if (dynamic_cast<torch::nn::Conv2dImpl*>(m.get())) ++convs;
  EXPECT_EQ(convs, 9);
}

TEST(GroupedNet, ProbabilityRows) {
  torch::manual_seed(0);
  GroupedNet net(small_net());
  for (bool train : {true, false}) {
    net->train(train);
    auto p = net->forward(torch::randn({5, 1, 32, 32}));
    EXPECT_TRUE((p >= 0).all().item<bool>());
    EXPECT_LT((p.sum(1) - 1).abs().max().item<double>(), 1e-6);
  }
}

TEST(GroupedNet, ZeroHeadGivesUniform) {
  GroupedNet net(small_net());
  {
    torch::NoGradGuard g;
    net->classifier_layer()->weight.zero_();
    net->classifier_layer()->bias.zero_();
  }
  auto p = net->forward(torch::randn({3, 1, 32, 32}));
  EXPECT_TRUE(torch::allclose(p, torch::full_like(p, 1.0 / 6)));
}

TEST(GroupedNet, DominantLogit) {
  GroupedNet net(small_net());
  {
    torch::NoGradGuard g;
    net->classifier_layer()->weight.zero_();
    net->classifier_layer()->bias.copy_(torch::tensor({10.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f}));
  }
  auto p = net->forward(torch::randn({1, 1, 32, 32}));
  EXPECT_EQ(p.argmax(1).item<int64_t>(), 0);
  EXPECT_GT(p.max().item<double>(), 0.99);
}

TEST(GroupedNet, MatchesIndependentLayerByLayerRecomputation) {
  torch::manual_seed(7);
  GroupedNet net(small_net());
  net->eval();
  auto x = torch::randn({3, 1, 32, 32});
  auto expected = net->forward(x);

  // Walk the registered submodules in order with torch's own functional ops.
  torch::Tensor h = x;
  auto modules = net->named_modules("", false);
  for (int g = 1; g <= 3; ++g) {
    for (int c = 1; c <= 3; ++c) {
      const auto prefix = "group" + std::to_string(g) + ".";
      auto* conv = modules[prefix + "conv" + std::to_string(c)]->as<torch::nn::Conv2d>();
      auto* bn = modules[prefix + "bn" + std::to_string(c)]->as<DualBatchNorm>();
      ASSERT_NE(conv, nullptr);
      ASSERT_NE(bn, nullptr);
      h = torch::conv2d(h, conv->weight, {}, conv->options.stride(), at::IntArrayRef{1, 1});
      auto shape = std::vector<int64_t>{1, -1, 1, 1};
      h = (h - bn->running_mean(BnBank::Real).view(shape)) /
              torch::sqrt(bn->running_var(BnBank::Real).view(shape) + 1e-5) * bn->weight.view(shape) +
          bn->bias.view(shape);
      h = torch::leaky_relu(h, 0.2);
    }
  }
  auto& lin = net->classifier_layer();
  auto manual = torch::softmax(torch::linear(h.mean({2, 3}), lin->weight, lin->bias), 1);
  EXPECT_TRUE(torch::allclose(manual, expected, 1e-5, 1e-6));
}

TEST(GroupedNet, CompositionIdentityIsExactInEvalMode) {
  torch::manual_seed(1);
  GroupedNet net(small_net());
  net->eval();
  auto x = torch::randn({4, 1, 32, 32});
  auto p = net->forward(x);
  auto f = net->features(x);
  for (int64_t i = 1; i <= 3; ++i) EXPECT_TRUE(torch::equal(net->forward_from_group(i, f[i - 1]), p)) << i;
  EXPECT_TRUE(torch::equal(net->head(f[2]), p));
  EXPECT_TRUE(torch::equal(net->embedding(x), f[2].mean({2, 3})));
}

TEST(GroupedNet, ForwardFromGroupValidatesInput) {
  GroupedNet net(small_net());
  EXPECT_THROW(net->forward_from_group(0, torch::zeros({1, 8, 16, 16})), Error);
  EXPECT_THROW(net->forward_from_group(4, torch::zeros({1, 16, 4, 4})), Error);
  EXPECT_THROW(net->forward_from_group(2, torch::zeros({1, 8, 16, 16})), Error);
  EXPECT_THROW(net->forward(torch::zeros({1, 3, 32, 32})), Error);
  EXPECT_THROW(net->forward(torch::zeros({1, 1, 28, 28})), Error);
  net->eval();
  auto p = net->forward_from_group(2, torch::zeros({2, 12, 8, 8}));
  EXPECT_TRUE(torch::isfinite(p).all().item<bool>());
}

TEST(GroupedNet, CopycatTwinHasIdenticalShapes) {
  GroupedNet cls(small_net());
  GroupedNet copy(small_net());
  EXPECT_EQ(parameter_count(*cls), parameter_count(*copy));
  auto a = cls->named_parameters();
  auto b = copy->named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value().sizes(), b[i].value().sizes());

  copy_state(*cls, *copy);
  cls->eval();
  copy->eval();
  auto x = torch::randn({2, 1, 32, 32});
  auto fa = cls->features(x);
  auto fb = copy->features(x);
  for (size_t i = 0; i < fa.size(); ++i) EXPECT_LT((fa[i] - fb[i]).abs().max().item<double>(), 1e-6);
}

TEST(DualBatchNorm, BankIsolation) {
  torch::manual_seed(2);
  DualBatchNorm bn(4);
  bn->train();
  auto real_mean = bn->running_mean(BnBank::Real).clone();
  auto real_var = bn->running_var(BnBank::Real).clone();
  bn->forward(torch::randn({8, 4, 3, 3}) * 3 + 2, BnBank::Fake);
  EXPECT_TRUE(torch::equal(bn->running_mean(BnBank::Real), real_mean));
  EXPECT_TRUE(torch::equal(bn->running_var(BnBank::Real), real_var));
  EXPECT_FALSE(torch::equal(bn->running_mean(BnBank::Fake), real_mean));

  auto fake_mean = bn->running_mean(BnBank::Fake).clone();
  bn->forward(torch::randn({8, 4, 3, 3}), BnBank::Real);
  EXPECT_TRUE(torch::equal(bn->running_mean(BnBank::Fake), fake_mean));
}

TEST(DualBatchNorm, FakeForwardsLeaveRealBankOfWholeNetUntouched) {
  GroupedNet net(small_net());
  net->train();
  std::vector<torch::Tensor> before;
  for (const auto& item : net->named_modules("", false))
    if (auto* bn = item.value()->as<DualBatchNorm>()) before.push_back(bn->running_mean(BnBank::Real).clone());
  for (int i = 0; i < 3; ++i) net->forward(torch::rand({4, 1, 32, 32}) * 2 - 1, BnBank::Fake);
  size_t k = 0;
  for (const auto& item : net->named_modules("", false))
    if (auto* bn = item.value()->as<DualBatchNorm>()) EXPECT_TRUE(torch::equal(bn->running_mean(BnBank::Real), before[k++]));
  EXPECT_EQ(k, 9u);
}

TEST(DualBatchNorm, SharesAffineParameters) {
  DualBatchNorm bn(3);
  bn->eval();
  {
    torch::NoGradGuard g;
    bn->weight.fill_(2.0);
    bn->bias.fill_(0.5);
  }
  auto x = torch::randn({2, 3, 2, 2});
  // Fresh banks hold identical statistics, so only the shared affine matters.
  EXPECT_TRUE(torch::equal(bn->forward(x, BnBank::Real), bn->forward(x, BnBank::Fake)));
}

TEST(Generator, ShapeRangeAndDeterminism) {
  GanConfig cfg;
  cfg.width = 16;
  Generator g(cfg);
  g->eval();
  torch::manual_seed(4);
  auto z = torch::randn({6, cfg.z_dim});
  auto a = g->forward(z);
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{6, 1, 32, 32}));
  EXPECT_GE(a.min().item<double>(), -1.0);
  EXPECT_LE(a.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(a, g->forward(z)));
}

TEST(Discriminator, OutputsProbabilities) {
  GanConfig cfg;
  cfg.width = 8;
  Discriminator d(cfg);
  auto out = d->forward(torch::randn({5, 1, 32, 32}));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{5}));
  EXPECT_GE(out.min().item<double>(), 0.0);
  EXPECT_LE(out.max().item<double>(), 1.0);
}

TEST(Models, InitializationScheme) {
  torch::manual_seed(0);
  NetConfig cfg;
  GroupedNet net(cfg);
  for (const auto& item : net->named_modules("", false)) {
    if (auto* conv = item.value()->as<torch::nn::Conv2d>()) {
      EXPECT_NEAR(conv->weight.std().item<double>(), 0.02, 0.004) << item.key();
    } else if (auto* bn = item.value()->as<DualBatchNorm>()) {
      EXPECT_TRUE(torch::equal(bn->weight, torch::ones_like(bn->weight)));
      EXPECT_TRUE(torch::equal(bn->bias, torch::zeros_like(bn->bias)));
    }
  }
}

TEST(Models, ConfigValidation) {
  NetConfig c;
  c.widths = {8, 8};
  EXPECT_THROW(c.validate(), Error);
  c = NetConfig{};
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), Error);
  GanConfig g;
  g.image_size = 64;
  EXPECT_THROW(g.validate(), Error);
}
