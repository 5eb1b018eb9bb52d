#include "osr/models.hpp"

#include <sstream>

#include "osr/error.hpp"

namespace osr {

namespace {

std::string shape_str(at::IntArrayRef sizes) {
  std::ostringstream os;
  os << sizes;
  return os.str();
}

}  // namespace

void NetConfig::validate() const {
  if (in_channels < 1 || num_classes < 2 || n_groups < 1 || convs_per_group < 1)
    fail(ErrorKind::Config, "models: in_channels, convs_per_group, n_groups >= 1 and num_classes >= 2 required");
  if (static_cast<int64_t>(widths.size()) != n_groups)
    fail(ErrorKind::Config, "models.widths: expected " + std::to_string(n_groups) + " entries, got " +
                                std::to_string(widths.size()));
  for (auto w : widths)
    if (w < 1) fail(ErrorKind::Config, "models.widths: entries must be positive");
  if (image_size % (int64_t{1} << n_groups) != 0)
    fail(ErrorKind::Config, "models: image_size must be divisible by 2^n_groups");
}

void GanConfig::validate() const {
  if (image_size != 32) fail(ErrorKind::Config, "models: the GAN nets are built for 32x32 images");
  if (z_dim < 1 || width < 1 || in_channels < 1)
    fail(ErrorKind::Config, "models: z_dim, gan_width and in_channels must be positive");
}

// ---------------------------------------------------------------------------

GroupIndexSets::GroupIndexSets(int64_t n_groups, std::set<int64_t> hard, std::set<int64_t> easy)
    : n_(n_groups), hard_(std::move(hard)), easy_(std::move(easy)) {
  if (n_ < 1) fail(ErrorKind::Config, "group index sets: n_groups must be >= 1");
  if (easy_.empty()) fail(ErrorKind::Config, "group index sets: easy set must contain group n");
  for (auto j : hard_)
    if (easy_.contains(j)) fail(ErrorKind::Config, "group index sets: group " + std::to_string(j) + " is both hard and easy");
  if (hard_.size() + easy_.size() != static_cast<size_t>(n_))
    fail(ErrorKind::Config, "group index sets: hard and easy must cover 1.." + std::to_string(n_));
  for (auto j : hard_)
    if (j < 1 || j > n_) fail(ErrorKind::Config, "group index sets: index out of range");
  for (auto j : easy_)
    if (j < 1 || j > n_) fail(ErrorKind::Config, "group index sets: index out of range");
  if (!hard_.empty() && *hard_.rbegin() >= *easy_.begin())
    fail(ErrorKind::Config, "group index sets: easy groups must come after every hard group");
}

GroupIndexSets GroupIndexSets::last_easy(int64_t n_groups) {
  std::set<int64_t> hard;
  for (int64_t j = 1; j < n_groups; ++j) hard.insert(j);
  return GroupIndexSets(n_groups, std::move(hard), {n_groups});
}

std::set<int64_t> GroupIndexSets::all() const {
  std::set<int64_t> out = hard_;
  out.insert(easy_.begin(), easy_.end());
  return out;
}

// ---------------------------------------------------------------------------

DualBatchNormImpl::DualBatchNormImpl(int64_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
  mean_real_ = register_buffer("running_mean_real", torch::zeros({channels}));
  var_real_ = register_buffer("running_var_real", torch::ones({channels}));
  mean_fake_ = register_buffer("running_mean_fake", torch::zeros({channels}));
  var_fake_ = register_buffer("running_var_fake", torch::ones({channels}));
}

torch::Tensor DualBatchNormImpl::forward(const torch::Tensor& x, BnBank bank) {
  // The running-stat tensors are updated in place by batch_norm in training mode.
  auto& mean = bank == BnBank::Real ? mean_real_ : mean_fake_;
  auto& var = bank == BnBank::Real ? var_real_ : var_fake_;
  return torch::batch_norm(x, weight, bias, mean, var, is_training(), momentum_, eps_,
                           /*cudnn_enabled=*/false);
}

const torch::Tensor& DualBatchNormImpl::running_mean(BnBank bank) const {
  return bank == BnBank::Real ? mean_real_ : mean_fake_;
}

const torch::Tensor& DualBatchNormImpl::running_var(BnBank bank) const {
  return bank == BnBank::Real ? var_real_ : var_fake_;
}

// ---------------------------------------------------------------------------

ConvGroupImpl::ConvGroupImpl(int64_t in_channels, int64_t out_channels, int64_t n_convs) {
  for (int64_t k = 0; k < n_convs; ++k) {
    auto options = torch::nn::Conv2dOptions(k == 0 ? in_channels : out_channels, out_channels, 3)
                       .stride(k == 0 ? 2 : 1)
                       .padding(1)
                       .bias(false);
    convs_.push_back(register_module("conv" + std::to_string(k + 1), torch::nn::Conv2d(options)));
    norms_.push_back(register_module("bn" + std::to_string(k + 1), DualBatchNorm(out_channels)));
  }
}

torch::Tensor ConvGroupImpl::forward(torch::Tensor x, BnBank bank) {
  for (size_t k = 0; k < convs_.size(); ++k)
    x = torch::leaky_relu(norms_[k]->forward(convs_[k]->forward(x), bank), 0.2);
  return x;
}

// ---------------------------------------------------------------------------

GroupedNetImpl::GroupedNetImpl(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  int64_t in = config_.in_channels;
  for (int64_t i = 0; i < config_.n_groups; ++i) {
    auto out = config_.widths[static_cast<size_t>(i)];
    groups_.push_back(register_module("group" + std::to_string(i + 1),
                                      ConvGroup(in, out, config_.convs_per_group)));
    in = out;
  }
  linear_ = register_module("head", torch::nn::Linear(in, config_.num_classes));
  initialize_weights(*this);
}

void GroupedNetImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != config_.in_channels || x.size(2) != config_.image_size ||
      x.size(3) != config_.image_size)
    fail(ErrorKind::Input, "grouped net: expected input [B, " + std::to_string(config_.in_channels) + ", " +
                               std::to_string(config_.image_size) + ", " + std::to_string(config_.image_size) +
                               "], got " + shape_str(x.sizes()));
}

std::vector<int64_t> GroupedNetImpl::group_output_shape(int64_t i) const {
  if (i < 1 || i > config_.n_groups)
    fail(ErrorKind::Input, "group index " + std::to_string(i) + " outside 1.." + std::to_string(config_.n_groups));
  auto side = config_.image_size >> i;
  return {config_.widths[static_cast<size_t>(i - 1)], side, side};
}

torch::Tensor GroupedNetImpl::run_groups(int64_t from, torch::Tensor x, BnBank bank) {
  for (auto i = from; i < config_.n_groups; ++i) x = groups_[static_cast<size_t>(i)]->forward(x, bank);
  return x;
}

torch::Tensor GroupedNetImpl::head_logits(const torch::Tensor& last_feature) {
  return linear_->forward(last_feature.mean({2, 3}));
}

torch::Tensor GroupedNetImpl::head(const torch::Tensor& last_feature) {
  return torch::softmax(head_logits(last_feature), 1);
}

torch::Tensor GroupedNetImpl::forward(const torch::Tensor& x, BnBank bank) {
  check_input(x);
  return head(run_groups(0, x, bank));
}

std::vector<torch::Tensor> GroupedNetImpl::features(const torch::Tensor& x, BnBank bank) {
  check_input(x);
  std::vector<torch::Tensor> out;
  out.reserve(groups_.size());
  auto h = x;
  for (auto& group : groups_) {
    h = group->forward(h, bank);
    out.push_back(h);
  }
  return out;
}

torch::Tensor GroupedNetImpl::forward_from_group(int64_t i, const torch::Tensor& feature, BnBank bank) {
  auto expected = group_output_shape(i);
  if (feature.dim() != 4 || feature.sizes().slice(1) != at::IntArrayRef(expected))
    fail(ErrorKind::Input, "forward_from_group(" + std::to_string(i) + "): expected per-sample shape " +
                               shape_str(expected) + ", got " + shape_str(feature.sizes()));
  return head(run_groups(i, feature, bank));
}

torch::Tensor GroupedNetImpl::embedding(const torch::Tensor& x, BnBank bank) {
  check_input(x);
  return run_groups(0, x, bank).mean({2, 3});
}

torch::Tensor GroupedNetImpl::embedding_from_group(int64_t i, const torch::Tensor& feature, BnBank bank) {
  auto expected = group_output_shape(i);
  if (feature.dim() != 4 || feature.sizes().slice(1) != at::IntArrayRef(expected))
    fail(ErrorKind::Input, "embedding_from_group(" + std::to_string(i) + "): shape mismatch, got " +
                               shape_str(feature.sizes()));
  return run_groups(i, feature, bank).mean({2, 3});
}

// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(GanConfig config) : config_(std::move(config)) {
  config_.validate();
  namespace nn = torch::nn;
  const auto w = config_.width;
  body_ = register_module(
      "body",
      nn::Sequential(
          nn::ConvTranspose2d(nn::ConvTranspose2dOptions(config_.z_dim, 4 * w, 4).bias(false)),  // 4x4
          nn::BatchNorm2d(4 * w), nn::ReLU(),
          nn::ConvTranspose2d(nn::ConvTranspose2dOptions(4 * w, 2 * w, 4).stride(2).padding(1).bias(false)),  // 8x8
          nn::BatchNorm2d(2 * w), nn::ReLU(),
          nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * w, w, 4).stride(2).padding(1).bias(false)),  // 16x16
          nn::BatchNorm2d(w), nn::ReLU(),
          nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w, config_.in_channels, 4).stride(2).padding(1).bias(false)),
          nn::Tanh()));
  initialize_weights(*this);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != config_.z_dim)
    fail(ErrorKind::Input, "generator: expected z of shape [B, " + std::to_string(config_.z_dim) + "], got " +
                               shape_str(z.sizes()));
  return body_->forward(z.view({z.size(0), config_.z_dim, 1, 1}));
}

DiscriminatorImpl::DiscriminatorImpl(GanConfig config) : config_(std::move(config)) {
  config_.validate();
  namespace nn = torch::nn;
  const auto w = config_.width;
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  body_ = register_module(
      "body",
      nn::Sequential(
          nn::Conv2d(nn::Conv2dOptions(config_.in_channels, w, 4).stride(2).padding(1).bias(false)),  // 16x16
          lrelu(),
          nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 4).stride(2).padding(1).bias(false)),  // 8x8
          nn::BatchNorm2d(2 * w), lrelu(),
          nn::Conv2d(nn::Conv2dOptions(2 * w, 4 * w, 4).stride(2).padding(1).bias(false)),  // 4x4
          nn::BatchNorm2d(4 * w), lrelu(),
          nn::Conv2d(nn::Conv2dOptions(4 * w, 1, 4).bias(false)),  // 1x1
          nn::Sigmoid()));
  initialize_weights(*this);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels || x.size(2) != config_.image_size ||
      x.size(3) != config_.image_size)
    fail(ErrorKind::Input, "discriminator: unexpected input shape " + shape_str(x.sizes()));
  return body_->forward(x).view({x.size(0)});
}

// ---------------------------------------------------------------------------

void initialize_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_modules("", /*include_self=*/false)) {
    auto* m = item.value().get();
    if (auto* conv = dynamic_cast<torch::nn::Conv2dImpl*>(m)) {
      conv->weight.normal_(0.0, 0.02);
    } else if (auto* deconv = dynamic_cast<torch::nn::ConvTranspose2dImpl*>(m)) {
      deconv->weight.normal_(0.0, 0.02);
    } else if (auto* bn = dynamic_cast<torch::nn::BatchNorm2dImpl*>(m)) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    } else if (auto* dbn = dynamic_cast<DualBatchNormImpl*>(m)) {
      dbn->weight.fill_(1.0);
      dbn->bias.zero_();
    }
  }
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

void copy_state(const torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src_params = from.named_parameters();
  for (auto& item : to.named_parameters()) {
    const auto* src = src_params.find(item.key());
    if (src == nullptr || !src->sizes().equals(item.value().sizes()))
      fail(ErrorKind::Input, "copy_state: parameter mismatch at " + item.key());
    item.value().copy_(*src);
  }
  auto src_buffers = from.named_buffers();
  for (auto& item : to.named_buffers()) {
    const auto* src = src_buffers.find(item.key());
    if (src == nullptr || !src->sizes().equals(item.value().sizes()))
      fail(ErrorKind::Input, "copy_state: buffer mismatch at " + item.key());
    item.value().copy_(*src);
  }
}

}  // namespace osr
