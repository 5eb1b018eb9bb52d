#include "osr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "osr/error.hpp"

namespace osr {

namespace {

void check_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) fail(ErrorKind::NonFinite, std::string(what) + ": non-finite input");
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Input, "smoothing ratio must lie in [0, 1]");
}

torch::Tensor clamped_log(const torch::Tensor& p) { return torch::log(p.clamp_min(kLogClamp)); }

}  // namespace

double TargetDistribution::max() const { return *std::max_element(values.begin(), values.end()); }

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(beta >= 0.0)) fail(ErrorKind::Config, "losses: lambda and beta must be non-negative");
  if (!(alpha_hard >= 0.0 && alpha_hard <= 1.0) || !(alpha_easy >= 0.0 && alpha_easy <= 1.0))
    fail(ErrorKind::Config, "losses: alpha_hard and alpha_easy must lie in [0, 1]");
}

TargetDistribution smooth_label(int64_t y, int64_t num_classes, double alpha) {
  if (num_classes < 1 || y < 0 || y >= num_classes)
    fail(ErrorKind::Input, "smooth_label: class " + std::to_string(y) + " outside 0.." + std::to_string(num_classes - 1));
  check_alpha(alpha);
  const double off = alpha / static_cast<double>(num_classes);
  TargetDistribution t;
  t.values.assign(static_cast<size_t>(num_classes), off);
  t.values[static_cast<size_t>(y)] = (1.0 - alpha) + off;
  t.alpha = alpha;
  t.kind = alpha == 0.0 ? TargetKind::OneHot : alpha == 1.0 ? TargetKind::Uniform : TargetKind::Smoothed;
  return t;
}

TargetDistribution one_hot(int64_t y, int64_t num_classes) { return smooth_label(y, num_classes, 0.0); }

TargetDistribution uniform_target(int64_t num_classes) {
  if (num_classes < 1) fail(ErrorKind::Input, "uniform_target: num_classes must be positive");
  TargetDistribution t;
  t.values.assign(static_cast<size_t>(num_classes), 1.0 / static_cast<double>(num_classes));
  t.kind = TargetKind::Uniform;
  t.alpha = 1.0;
  return t;
}

torch::Tensor smoothed_targets(const torch::Tensor& labels, int64_t num_classes, double alpha,
                               torch::ScalarType dtype) {
  check_alpha(alpha);
  if (labels.dim() != 1) fail(ErrorKind::Input, "smoothed_targets: labels must be 1-D");
  auto lbl = labels.to(torch::kLong);
  if (lbl.numel() > 0 && (lbl.min().item<int64_t>() < 0 || lbl.max().item<int64_t>() >= num_classes))
    fail(ErrorKind::Input, "smoothed_targets: label out of range");
  auto onehot = torch::one_hot(lbl, num_classes).to(dtype);
  return onehot * (1.0 - alpha) + alpha / static_cast<double>(num_classes);
}

torch::Tensor uniform_targets(int64_t batch, int64_t num_classes, torch::ScalarType dtype) {
  return torch::full({batch, num_classes}, 1.0 / static_cast<double>(num_classes), torch::TensorOptions(dtype));
}

torch::Tensor cross_entropy(const torch::Tensor& target, const torch::Tensor& probs) {
  if (target.sizes() != probs.sizes() || probs.dim() != 2)
    fail(ErrorKind::Input, "cross_entropy: target and probs must both be [B, K] of equal shape");
  return -(target * clamped_log(probs)).sum(1).mean();
}

torch::Tensor imitation_loss(std::span<const torch::Tensor> copy_features,
                             std::span<const torch::Tensor> classifier_features, const GroupIndexSets& groups) {
  const auto n = static_cast<size_t>(groups.n_groups());
  if (copy_features.size() != n || classifier_features.size() != n)
    fail(ErrorKind::Input, "imitation_loss: expected one feature tensor per group");
  torch::Tensor total;
  for (auto j : groups.hard()) {
    const auto& copy = copy_features[static_cast<size_t>(j - 1)];
    const auto& cls = classifier_features[static_cast<size_t>(j - 1)];
    if (copy.sizes() != cls.sizes())
      fail(ErrorKind::Input, "imitation_loss: shape mismatch at group " + std::to_string(j));
    auto term = (copy - cls.detach()).abs().sum() / static_cast<double>(copy.size(0));
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) {
    auto options = copy_features.empty() ? torch::TensorOptions() : copy_features[0].options();
    return torch::zeros({}, options);
  }
  return total;
}

torch::Tensor copycat_loss(const torch::Tensor& reg, const torch::Tensor& imi) {
  check_finite(reg, "copycat_loss");
  check_finite(imi, "copycat_loss");
  return reg + imi;
}

torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  for (const auto* d : {&d_real, &d_fake})
    if (d->numel() == 0 || d->min().item<double>() < 0.0 || d->max().item<double>() > 1.0)
      fail(ErrorKind::Input, "discriminator_loss: outputs must lie in [0, 1]");
  auto real = d_real.clamp(kLogClamp, 1.0 - kLogClamp);
  auto fake = d_fake.clamp(kLogClamp, 1.0 - kLogClamp);
  return -torch::log(real).mean() - torch::log(1.0 - fake).mean();
}

torch::Tensor generator_loss(const torch::Tensor& d_fake, const torch::Tensor& classifier_probs, double beta) {
  if (classifier_probs.dim() != 2 || classifier_probs.size(0) != d_fake.size(0))
    fail(ErrorKind::Input, "generator_loss: classifier_probs must be [B, K] with B matching d_fake");
  const auto k = static_cast<double>(classifier_probs.size(1));
  auto fake = d_fake.clamp(kLogClamp, 1.0 - kLogClamp);
  auto loss = torch::log(1.0 - fake).mean() - (beta / k) * clamped_log(classifier_probs).sum(1).mean();
  check_finite(loss, "generator_loss");
  return loss;
}

torch::Tensor open_loss_copycat(std::span<const torch::Tensor> copy_probs, const torch::Tensor& labels,
                                const GroupIndexSets& groups, const LossWeights& weights) {
  torch::Tensor total;
  for (auto i : groups.all()) {
    if (static_cast<size_t>(i) > copy_probs.size() || !copy_probs[static_cast<size_t>(i - 1)].defined())
      fail(ErrorKind::Input, "open_loss_copycat: missing prediction for group " + std::to_string(i));
    const auto& p = copy_probs[static_cast<size_t>(i - 1)];
    const double alpha = groups.is_hard(i) ? weights.alpha_hard : weights.alpha_easy;
    auto term = cross_entropy(smoothed_targets(labels, p.size(1), alpha, p.scalar_type()), p);
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor open_loss_gan(const torch::Tensor& gan_probs) {
  if (gan_probs.dim() != 2) fail(ErrorKind::Input, "open_loss_gan: probs must be [B, K]");
  return cross_entropy(uniform_targets(gan_probs.size(0), gan_probs.size(1), gan_probs.scalar_type()), gan_probs);
}

torch::Tensor classifier_loss(const torch::Tensor& close, const torch::Tensor& open, double lambda) {
  check_finite(close, "classifier_loss");
  check_finite(open, "classifier_loss");
  return close + lambda * open;
}

}  // namespace osr
