#include "osr/training.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "osr/config.hpp"
#include "osr/error.hpp"
#include "osr/evaluation.hpp"
#include "osr/inference.hpp"

namespace osr {

namespace {

/// Turns off requires_grad on every parameter for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& module) {
    for (auto& p : module.parameters())
      if (p.requires_grad()) {
        p.set_requires_grad(false);
        frozen_.push_back(p);
      }
  }
  ~FreezeGuard() {
    for (auto& p : frozen_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> frozen_;
};

double value_of(const torch::Tensor& t) { return t.item<double>(); }

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) group.options().set_lr(lr);
}

}  // namespace

void TrainingConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "training.epochs must be >= 1");
  if (batch_size < 2) fail(ErrorKind::Config, "training.batch_size must be >= 2 (batch-norm)");
  if (!(classifier_lr > 0.0) || !(copycat_lr > 0.0) || !(gan_lr > 0.0))
    fail(ErrorKind::Config, "training learning rates must be positive");
  if (!(reg_weight >= 0.0)) fail(ErrorKind::Config, "training.reg_weight must be non-negative");
  if (checkpoint_every < 0 || eval_batch_size < 1 || probe_size < 2)
    fail(ErrorKind::Config, "training: checkpoint_every >= 0, eval_batch_size >= 1, probe_size >= 2 required");
}

GroupIndexSets TrainingConfig::group_sets(int64_t n_groups) const {
  return GroupIndexSets(n_groups, std::set<int64_t>(hard_groups.begin(), hard_groups.end()),
                        std::set<int64_t>(easy_groups.begin(), easy_groups.end()));
}

// ---------------------------------------------------------------------------

Trainer::Trainer(NetConfig net, GanConfig gan, TrainingConfig config, LossWeights weights)
    : net_config_(std::move(net)),
      gan_config_(std::move(gan)),
      config_(std::move(config)),
      weights_(weights),
      groups_(config_.group_sets(net_config_.n_groups)),
      noise_rng_(at::make_generator<at::CPUGeneratorImpl>(config_.seed ^ 0x9E3779B97F4A7C15ULL)) {
  config_.validate();
  weights_.validate();
  if (gan_config_.in_channels != net_config_.in_channels || gan_config_.image_size != net_config_.image_size)
    fail(ErrorKind::Config, "generator output must match the classifier input");

  torch::manual_seed(config_.seed);
  classifier_ = GroupedNet(net_config_);
  copycat_ = GroupedNet(net_config_);
  generator_ = Generator(gan_config_);
  discriminator_ = Discriminator(gan_config_);

  auto sgd = [&](torch::nn::Module& m, double lr) {
    return std::make_unique<torch::optim::SGD>(
        m.parameters(), torch::optim::SGDOptions(lr).momentum(config_.momentum).weight_decay(config_.weight_decay));
  };
  auto adam = [&](torch::nn::Module& m) {
    return std::make_unique<torch::optim::Adam>(
        m.parameters(), torch::optim::AdamOptions(config_.gan_lr).betas({config_.adam_beta1, config_.adam_beta2}));
  };
  classifier_opt_ = sgd(*classifier_, config_.classifier_lr);
  copycat_opt_ = sgd(*copycat_, config_.copycat_lr);
  generator_opt_ = adam(*generator_);
  discriminator_opt_ = adam(*discriminator_);
}

torch::Tensor Trainer::sample_noise(int64_t batch) {
  return torch::randn({batch, gan_config_.z_dim}, noise_rng_, torch::TensorOptions(torch::kFloat));
}

void Trainer::apply_schedule() {
  if (!config_.cosine_decay || total_iterations_ <= 0) return;
  const double progress = std::min(1.0, static_cast<double>(iteration_) / static_cast<double>(total_iterations_));
  const double factor = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  set_lr(*classifier_opt_, config_.classifier_lr * factor);
  set_lr(*copycat_opt_, config_.copycat_lr * factor);
}

PhaseOneRecord Trainer::phase_one_step(const Batch& batch) {
  apply_schedule();
  classifier_->train();
  copycat_->train();
  const auto& x = batch.images;
  const auto& y = batch.labels;
  const auto k = net_config_.num_classes;
  PhaseOneRecord rec;

  // The classifier's parameters stay fixed until its own update below, so a
  // single forward pass serves both the imitation targets and L_close.
  auto cls_features = classifier_->features(x, BnBank::Real);
  auto cls_probs = classifier_->head(cls_features.back());

  // Copycat: L_reg over all groups, L_imi against detached classifier features.
  {
    auto copy_features = copycat_->features(x, BnBank::Real);
    auto copy_probs = copycat_->head(copy_features.back());
    auto reg = config_.reg_weight * cross_entropy(smoothed_targets(y, k, 0.0, copy_probs.scalar_type()), copy_probs);
    auto imi = imitation_loss(copy_features, cls_features, groups_);
    auto loss = copycat_loss(reg, imi);
    copycat_opt_->zero_grad();
    loss.backward();
    copycat_opt_->step();
    rec.copy_reg = value_of(reg);
    rec.copy_imi = value_of(imi);
    rec.copy_total = value_of(loss);
  }

  // Classifier: close + lambda * sum_i CE(smoothed, p_copy^i), Copycat
  // features treated as constants.
  std::vector<torch::Tensor> fresh;
  {
    torch::NoGradGuard no_grad;
    fresh = copycat_->features(x, BnBank::Real);
  }
  std::vector<torch::Tensor> p_copy;
  p_copy.reserve(fresh.size());
  for (int64_t i = 1; i <= net_config_.n_groups; ++i)
    p_copy.push_back(classifier_->forward_from_group(i, fresh[static_cast<size_t>(i - 1)], BnBank::Real));
  auto close = cross_entropy(smoothed_targets(y, k, 0.0, cls_probs.scalar_type()), cls_probs);
  auto open = open_loss_copycat(p_copy, y, groups_, weights_);
  auto loss = classifier_loss(close, open, weights_.lambda);
  classifier_opt_->zero_grad();
  loss.backward();
  classifier_opt_->step();
  rec.cls_close = value_of(close);
  rec.cls_open = value_of(open);
  rec.cls_total = value_of(loss);
  return rec;
}

PhaseTwoRecord Trainer::phase_two_step(const Batch& batch) {
  apply_schedule();
  classifier_->train();
  generator_->train();
  discriminator_->train();
  const auto& x = batch.images;
  const auto& y = batch.labels;
  const auto b = x.size(0);
  const auto k = net_config_.num_classes;
  PhaseTwoRecord rec;

  // Generator, with the discriminator and classifier frozen. Generated
  // images go through the classifier's fake batch-norm bank.
  auto z = sample_noise(b);
  {
    FreezeGuard freeze_d(*discriminator_);
    FreezeGuard freeze_c(*classifier_);
    auto fake = generator_->forward(z);
    auto d_fake = discriminator_->forward(fake);
    auto cls_probs = classifier_->forward(fake, BnBank::Fake);
    auto loss = generator_loss(d_fake, cls_probs, weights_.beta);
    generator_opt_->zero_grad();
    loss.backward();
    generator_opt_->step();
    rec.gen = value_of(loss);
  }

  // Discriminator against the updated generator.
  {
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = generator_->forward(z);
    }
    auto d_real = discriminator_->forward(x);
    auto d_fake = discriminator_->forward(fake);
    auto loss = discriminator_loss(d_real, d_fake);
    discriminator_opt_->zero_grad();
    loss.backward();
    discriminator_opt_->step();
    rec.disc = value_of(loss);
    rec.d_real = value_of(d_real.mean());
    rec.d_fake = value_of(d_fake.mean());
  }

  // Classifier: close + lambda * CE(uniform, p_gan) on a fresh noise batch.
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_->forward(sample_noise(b));
  }
  auto cls_probs = classifier_->forward(x, BnBank::Real);
  auto gan_probs = classifier_->forward(fake, BnBank::Fake);
  auto close = cross_entropy(smoothed_targets(y, k, 0.0, cls_probs.scalar_type()), cls_probs);
  auto open = open_loss_gan(gan_probs);
  auto loss = classifier_loss(close, open, weights_.lambda);
  classifier_opt_->zero_grad();
  loss.backward();
  classifier_opt_->step();
  rec.cls_close = value_of(close);
  rec.cls_open = value_of(open);
  rec.cls_total = value_of(loss);
  return rec;
}

// ---------------------------------------------------------------------------

torch::Tensor epoch_permutation(int64_t n, uint64_t seed, int64_t epoch) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed * 1000003ULL + static_cast<uint64_t>(epoch) + 1ULL);
  return torch::randperm(n, gen, torch::TensorOptions(torch::kLong));
}

double closed_accuracy(const torch::Tensor& probs, const torch::Tensor& labels) {
  if (labels.numel() == 0) return 0.0;
  return probs.argmax(1).eq(labels).to(torch::kDouble).mean().item<double>();
}

double probe_imitation_loss(Trainer& trainer, const torch::Tensor& probe) {
  torch::NoGradGuard no_grad;
  EvalModeGuard eval_cls(*trainer.classifier());
  EvalModeGuard eval_copy(*trainer.copycat());
  auto cls = trainer.classifier()->features(probe, BnBank::Real);
  auto copy = trainer.copycat()->features(probe, BnBank::Real);
  return imitation_loss(copy, cls, trainer.groups()).item<double>();
}

namespace {

nlohmann::json to_json(const PhaseOneRecord& r, int64_t epoch, int64_t iteration) {
  return {{"type", "iter"},       {"epoch", epoch},         {"iter", iteration},
          {"phase", 1},           {"copy_reg", r.copy_reg}, {"copy_imi", r.copy_imi},
          {"copy_total", r.copy_total}, {"cls_close", r.cls_close}, {"cls_open", r.cls_open},
          {"cls_total", r.cls_total}};
}

nlohmann::json to_json(const PhaseTwoRecord& r, int64_t epoch, int64_t iteration) {
  return {{"type", "iter"},     {"epoch", epoch},       {"iter", iteration},
          {"phase", 2},         {"gen", r.gen},         {"disc", r.disc},
          {"d_real", r.d_real}, {"d_fake", r.d_fake},   {"cls_close", r.cls_close},
          {"cls_open", r.cls_open}, {"cls_total", r.cls_total}};
}

}  // namespace

TrainResult train(Trainer& trainer, const SplitData& split, const TrainOptions& options) {
  const auto& data = split.closed_train;
  const auto& cfg = trainer.config();
  const auto k = trainer.net_config().num_classes;
  if (data.size() == 0) fail(ErrorKind::Input, "train: empty training set");
  if (split.num_known() != k)
    fail(ErrorKind::Input, "train: split has " + std::to_string(split.num_known()) + " known classes, network expects " +
                               std::to_string(k));
  if (data.labels.min().item<int64_t>() < 0 || data.labels.max().item<int64_t>() >= k)
    fail(ErrorKind::Input, "train: training labels outside 0.." + std::to_string(k - 1));

  const int64_t n = data.size();
  const int64_t batches = n / cfg.batch_size;
  if (batches == 0) fail(ErrorKind::Input, "train: fewer samples than one batch");
  trainer.set_total_iterations(cfg.epochs * batches);

  auto emit = [&](const nlohmann::json& record) {
    if (options.sink) options.sink(record);
  };
  auto probe = data.images.slice(0, 0, std::min(cfg.probe_size, n));

  auto save = [&](const std::filesystem::path& path) {
    auto manifest = options.manifest;
    trainer.save(path, manifest);
  };

  TrainResult result;
  for (int64_t epoch = trainer.epoch(); epoch < cfg.epochs; ++epoch) {
    auto order = epoch_permutation(n, cfg.seed, epoch);
    for (int64_t b = trainer.batch_in_epoch(); b < batches; ++b) {
      if (options.stop_after_iterations && trainer.iteration() >= *options.stop_after_iterations) return result;
      auto rows = order.slice(0, b * cfg.batch_size, (b + 1) * cfg.batch_size);
      Batch batch{data.images.index_select(0, rows), data.labels.index_select(0, rows)};
      PhaseOneRecord r1;
      PhaseTwoRecord r2;
      try {
        r1 = trainer.phase_one_step(batch);
        ++result.phase_one_updates;
        r2 = trainer.phase_two_step(batch);
        ++result.phase_two_updates;
      } catch (const Error& e) {
        emit({{"type", "abort"}, {"epoch", epoch}, {"iter", trainer.iteration()}, {"kind", std::string(to_string(e.kind()))},
              {"message", e.what()}});
        throw;
      }
      if (options.log_iterations) {
        emit(to_json(r1, epoch, trainer.iteration()));
        emit(to_json(r2, epoch, trainer.iteration()));
      }
      trainer.advance_iteration();
      trainer.set_position(epoch, b + 1);
    }
    trainer.set_position(epoch + 1, 0);

    nlohmann::json record{{"type", "epoch"}, {"epoch", epoch}, {"iter", trainer.iteration()}};
    auto closed_probs = predict_probs(trainer.classifier(), split.closed_test.images, cfg.eval_batch_size);
    record["closed_accuracy"] = closed_accuracy(closed_probs, split.closed_test.labels);
    if (split.open_test.size() > 0 && split.closed_test.size() > 0) {
      auto open_scores = score(trainer.classifier(), split.open_test.images, cfg.eval_batch_size);
      record["auroc"] = auroc(scores_from_probs(closed_probs), open_scores);
    }
    record["probe_imitation"] = probe_imitation_loss(trainer, probe);
    emit(record);
    result.epochs.push_back(record);

    const bool last = epoch + 1 == cfg.epochs;
    if (options.checkpoint_dir) {
      if (last) {
        auto path = *options.checkpoint_dir / "final.pt";
        save(path);
        result.final_checkpoint = path;
      } else if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%03lld.pt", static_cast<long long>(epoch + 1));
        save(*options.checkpoint_dir / name);
      }
    }
  }
  return result;
}

}  // namespace osr
