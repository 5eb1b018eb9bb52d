// Checkpoint archive layout (torch zip archive):
//   manifest               string, JSON document (format, version, counters, configs)
//   classifier, copycat,   nested archives with every parameter and buffer,
//   generator, discriminator   including both batch-norm banks
//   optim/<net>            optimizer state
//   noise_rng              state of the generator-noise RNG
#include <fstream>

#include "osr/config.hpp"
#include "osr/error.hpp"
#include "osr/training.hpp"

namespace osr {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kFormat = "osr-checkpoint";

void save_module(torch::serialize::OutputArchive& archive, const std::string& key, const torch::nn::Module& module) {
  torch::serialize::OutputArchive sub;
  module.save(sub);
  archive.write(key, sub);
}

void load_module(torch::serialize::InputArchive& archive, const std::string& key, torch::nn::Module& module) {
  torch::serialize::InputArchive sub;
  if (!archive.try_read(key, sub)) fail(ErrorKind::Io, "checkpoint is missing '" + key + "'");
  module.load(sub);
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::NotFound, "checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Io, "cannot read checkpoint " + path.string());
  }
  return archive;
}

nlohmann::json manifest_of(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  c10::IValue value;
  if (!archive.try_read("manifest", value) || !value.isString())
    fail(ErrorKind::Io, path.string() + ": no manifest");
  auto manifest = nlohmann::json::parse(value.toStringRef());
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kCheckpointVersion)
    fail(ErrorKind::Io, path.string() + ": unsupported checkpoint format/version");
  return manifest;
}

}  // namespace

void Trainer::save(const std::filesystem::path& path, nlohmann::json manifest) const {
  manifest["format"] = kFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["epoch"] = epoch_;
  manifest["batch_in_epoch"] = batch_in_epoch_;
  manifest["iteration"] = iteration_;
  manifest["total_iterations"] = total_iterations_;
  manifest["seed"] = config_.seed;
  manifest["net"] = to_json(net_config_);
  manifest["gan"] = to_json(gan_config_);
  manifest["training"] = to_json(config_);
  manifest["losses"] = to_json(weights_);
  if (!manifest.contains("config_hash"))
    manifest["config_hash"] = fnv1a_hex(manifest["net"].dump() + manifest["gan"].dump() + manifest["training"].dump() +
                                        manifest["losses"].dump());

  torch::serialize::OutputArchive archive;
  archive.write("manifest", c10::IValue(manifest.dump()));
  save_module(archive, "classifier", *classifier_);
  save_module(archive, "copycat", *copycat_);
  save_module(archive, "generator", *generator_);
  save_module(archive, "discriminator", *discriminator_);
  auto save_optim = [&](const std::string& key, const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    archive.write("optim_" + key, sub);
  };
  save_optim("classifier", *classifier_opt_);
  save_optim("copycat", *copycat_opt_);
  save_optim("generator", *generator_opt_);
  save_optim("discriminator", *discriminator_opt_);
  archive.write("noise_rng", noise_rng_.get_state());

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  try {
    archive.save_to(path.string());
  } catch (const c10::Error&) {
    fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  }
}

nlohmann::json Trainer::load(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  auto manifest = manifest_of(archive, path);
  if (net_config_from_json(manifest.at("net")) != net_config_ || gan_config_from_json(manifest.at("gan")) != gan_config_)
    fail(ErrorKind::Input, path.string() + ": architecture differs from this trainer");
  load_module(archive, "classifier", *classifier_);
  load_module(archive, "copycat", *copycat_);
  load_module(archive, "generator", *generator_);
  load_module(archive, "discriminator", *discriminator_);
  auto load_optim = [&](const std::string& key, torch::optim::Optimizer& opt) {
    torch::serialize::InputArchive sub;
    if (!archive.try_read("optim_" + key, sub)) fail(ErrorKind::Io, "checkpoint is missing optimizer " + key);
    opt.load(sub);
  };
  load_optim("classifier", *classifier_opt_);
  load_optim("copycat", *copycat_opt_);
  load_optim("generator", *generator_opt_);
  load_optim("discriminator", *discriminator_opt_);
  torch::Tensor rng;
  archive.read("noise_rng", rng);
  noise_rng_.set_state(rng);
  epoch_ = manifest.at("epoch").get<int64_t>();
  batch_in_epoch_ = manifest.at("batch_in_epoch").get<int64_t>();
  iteration_ = manifest.at("iteration").get<int64_t>();
  total_iterations_ = manifest.at("total_iterations").get<int64_t>();
  return manifest;
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  return manifest_of(archive, path);
}

LoadedClassifier load_classifier(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  LoadedClassifier out;
  out.manifest = manifest_of(archive, path);
  out.net = GroupedNet(net_config_from_json(out.manifest.at("net")));
  load_module(archive, "classifier", *out.net);
  out.net->eval();
  return out;
}

std::unique_ptr<Trainer> restore_trainer(const std::filesystem::path& path) {
  auto manifest = read_manifest(path);
  auto trainer = std::make_unique<Trainer>(net_config_from_json(manifest.at("net")),
                                           gan_config_from_json(manifest.at("gan")),
                                           training_config_from_json(manifest.at("training")),
                                           loss_weights_from_json(manifest.at("losses")));
  trainer->load(path);
  return trainer;
}

}  // namespace osr
