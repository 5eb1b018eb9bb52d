#include "osr/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "osr/error.hpp"

namespace osr {

using nlohmann::json;

namespace {

/// Reads keys from one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      if (!doc.at(name_).is_object()) fail(ErrorKind::Config, "config section '" + name_ + "' must be an object");
      obj_ = &doc.at(name_);
    }
  }
  Section(const json& obj, std::string name, bool /*direct*/) : name_(std::move(name)), obj_(&obj) {}

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (obj_ == nullptr || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    if (obj_ == nullptr) return;
    for (const auto& item : obj_->items())
      if (!seen_.contains(item.key())) fail(ErrorKind::Config, "unknown config key '" + name_ + "." + item.key() + "'");
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- per-struct manifest forms --------------------------------------------

json to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels}, {"image_size", c.image_size},
          {"num_classes", c.num_classes}, {"n_groups", c.n_groups},
          {"convs_per_group", c.convs_per_group}, {"widths", c.widths}};
}

json to_json(const GanConfig& c) {
  return {{"in_channels", c.in_channels}, {"image_size", c.image_size}, {"z_dim", c.z_dim}, {"width", c.width}};
}

json to_json(const LossWeights& w) {
  return {{"lambda", w.lambda}, {"beta", w.beta}, {"alpha_hard", w.alpha_hard}, {"alpha_easy", w.alpha_easy}};
}

json to_json(const TrainingConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"classifier_lr", c.classifier_lr},
          {"copycat_lr", c.copycat_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"cosine_decay", c.cosine_decay},
          {"gan_lr", c.gan_lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"reg_weight", c.reg_weight},
          {"hard_groups", c.hard_groups},
          {"easy_groups", c.easy_groups},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_batch_size", c.eval_batch_size},
          {"probe_size", c.probe_size}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  Section s(j, "models", true);
  s.get("in_channels", c.in_channels);
  s.get("image_size", c.image_size);
  s.get("num_classes", c.num_classes);
  s.get("n_groups", c.n_groups);
  s.get("convs_per_group", c.convs_per_group);
  s.get("widths", c.widths);
  s.finish();
  return c;
}

GanConfig gan_config_from_json(const json& j) {
  GanConfig c;
  Section s(j, "gan", true);
  s.get("in_channels", c.in_channels);
  s.get("image_size", c.image_size);
  s.get("z_dim", c.z_dim);
  s.get("width", c.width);
  s.finish();
  return c;
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  Section s(j, "losses", true);
  s.get("lambda", w.lambda);
  s.get("beta", w.beta);
  s.get("alpha_hard", w.alpha_hard);
  s.get("alpha_easy", w.alpha_easy);
  s.finish();
  return w;
}

TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig c;
  Section s(j, "training", true);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("seed", c.seed);
  s.get("classifier_lr", c.classifier_lr);
  s.get("copycat_lr", c.copycat_lr);
  s.get("momentum", c.momentum);
  s.get("weight_decay", c.weight_decay);
  s.get("cosine_decay", c.cosine_decay);
  s.get("gan_lr", c.gan_lr);
  s.get("adam_beta1", c.adam_beta1);
  s.get("adam_beta2", c.adam_beta2);
  s.get("reg_weight", c.reg_weight);
  s.get("hard_groups", c.hard_groups);
  s.get("easy_groups", c.easy_groups);
  s.get("checkpoint_every", c.checkpoint_every);
  s.get("eval_batch_size", c.eval_batch_size);
  s.get("probe_size", c.probe_size);
  s.finish();
  return c;
}

// --- experiment document --------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
  static const std::set<std::string> sections{"data", "models", "losses", "training", "inference", "evaluation", "output"};
  for (const auto& item : doc.items())
    if (!sections.contains(item.key())) fail(ErrorKind::Config, "unknown config key '" + item.key() + "'");

  ExperimentConfig c;
  {
    Section s(doc, "data");
    std::string protocol{to_string(c.data.protocol)};
    s.get("dataset", c.data.dataset);
    s.get("root", c.data.root);
    s.get("open_root", c.data.open_root);
    s.get("protocol", protocol);
    s.get("trial", c.data.trial);
    s.get("max_train_per_class", c.data.max_train_per_class);
    s.get("norm_mean", c.data.norm_mean);
    s.get("norm_std", c.data.norm_std);
    s.finish();
    c.data.protocol = parse_protocol(protocol);
  }
  {
    Section s(doc, "models");
    s.get("in_channels", c.net.in_channels);
    s.get("image_size", c.net.image_size);
    s.get("num_classes", c.net.num_classes);
    s.get("n_groups", c.net.n_groups);
    s.get("convs_per_group", c.net.convs_per_group);
    s.get("widths", c.net.widths);
    s.get("z_dim", c.gan.z_dim);
    s.get("gan_width", c.gan.width);
    s.finish();
    c.gan.in_channels = c.net.in_channels;
    c.gan.image_size = c.net.image_size;
  }
  if (doc.contains("losses")) c.losses = loss_weights_from_json(doc.at("losses"));
  if (doc.contains("training")) c.training = training_config_from_json(doc.at("training"));
  {
    Section s(doc, "inference");
    s.get("epsilon", c.inference.epsilon);
    s.finish();
  }
  {
    Section s(doc, "evaluation");
    s.get("wasserstein_projections", c.evaluation.wasserstein_projections);
    s.get("threshold_step", c.evaluation.threshold_step);
    s.get("diagnose_samples", c.evaluation.diagnose_samples);
    s.finish();
  }
  {
    Section s(doc, "output");
    s.get("dir", c.output_dir);
    s.finish();
  }
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  return {{"data",
           {{"dataset", data.dataset},
            {"root", data.root},
            {"open_root", data.open_root},
            {"protocol", std::string(osr::to_string(data.protocol))},
            {"trial", data.trial},
            {"max_train_per_class", data.max_train_per_class},
            {"norm_mean", data.norm_mean},
            {"norm_std", data.norm_std}}},
          {"models",
           {{"in_channels", net.in_channels},
            {"image_size", net.image_size},
            {"num_classes", net.num_classes},
            {"n_groups", net.n_groups},
            {"convs_per_group", net.convs_per_group},
            {"widths", net.widths},
            {"z_dim", gan.z_dim},
            {"gan_width", gan.width}}},
          {"losses", osr::to_json(losses)},
          {"training", osr::to_json(training)},
          {"inference", {{"epsilon", inference.epsilon}}},
          {"evaluation",
           {{"wasserstein_projections", evaluation.wasserstein_projections},
            {"threshold_step", evaluation.threshold_step},
            {"diagnose_samples", evaluation.diagnose_samples}}},
          {"output", {{"dir", output_dir}}}};
}

void ExperimentConfig::validate() const {
  net.validate();
  gan.validate();
  losses.validate();
  training.validate();
  training.group_sets(net.n_groups);
  if (!(data.norm_std > 0.0)) fail(ErrorKind::Config, "data.norm_std must be positive");
  if (data.max_train_per_class < 0) fail(ErrorKind::Config, "data.max_train_per_class must be >= 0");
  if (evaluation.wasserstein_projections < 1) fail(ErrorKind::Config, "evaluation.wasserstein_projections must be >= 1");
  if (!(evaluation.threshold_step > 0.0 && evaluation.threshold_step <= 1.0))
    fail(ErrorKind::Config, "evaluation.threshold_step must lie in (0, 1]");
  if (evaluation.diagnose_samples < 2) fail(ErrorKind::Config, "evaluation.diagnose_samples must be >= 2");
}

ImageSpec ExperimentConfig::image_spec() const {
  return ImageSpec{net.in_channels, net.image_size, Normalization{data.norm_mean, data.norm_std}};
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

std::string ExperimentConfig::split_id() const {
  return std::string(osr::to_string(data.protocol)) + "/" + data.dataset + "/" + std::to_string(data.trial);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

}  // namespace osr
