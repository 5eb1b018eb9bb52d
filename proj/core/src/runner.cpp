#include "osr/runner.hpp"

#include <fstream>
#include <ostream>
#include <set>

#include "osr/error.hpp"
#include "osr/inference.hpp"

#ifndef OSR_VERSION_HASH
#define OSR_VERSION_HASH "unknown"
#endif

namespace osr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return OSR_VERSION_HASH; }

// --- data -------------------------------------------------------------------

namespace {

struct SourcePair {
  Dataset train;
  Dataset test;
  std::optional<Dataset> open;
};

SourcePair load_sources(const ExperimentConfig& config) {
  const auto spec = config.image_spec();
  const auto& id = config.data.dataset;
  const fs::path root = config.data.root;
  if (id == "mnist") return {load_mnist(root, Part::Train, spec), load_mnist(root, Part::Test, spec), std::nullopt};
  if (id == "cifar10") return {load_cifar10(root, Part::Train, spec), load_cifar10(root, Part::Test, spec), std::nullopt};
  if (id == "cifar+10" || id == "cifar+50") {
    if (config.data.open_root.empty()) fail(ErrorKind::Config, "data.open_root must point at CIFAR-100 for " + id);
    return {load_cifar10(root, Part::Train, spec), load_cifar10(root, Part::Test, spec),
            load_cifar100(config.data.open_root, Part::Test, spec)};
  }
  // Anything else is read from IDX files named like MNIST's under data.root.
  auto train = load_mnist(root, Part::Train, spec);
  auto test = load_mnist(root, Part::Test, spec);
  train.name = test.name = id;
  return {std::move(train), std::move(test), std::nullopt};
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create output directory " + dir.string());
  return dir;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

template <typename Fn>
torch::Tensor batched(const torch::Tensor& x, int64_t batch, Fn&& fn) {
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < x.size(0); i += batch) parts.push_back(fn(x.slice(0, i, std::min(i + batch, x.size(0)))));
  return torch::cat(parts);
}

std::vector<int64_t> to_vector(const torch::Tensor& t) {
  auto c = t.to(torch::kLong).contiguous();
  return {c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + c.numel()};
}

std::map<int64_t, std::vector<double>> scores_by_class(const std::vector<double>& scores, const torch::Tensor& labels) {
  std::map<int64_t, std::vector<double>> out;
  auto l = to_vector(labels);
  for (size_t i = 0; i < l.size(); ++i) out[l[i]].push_back(scores[i]);
  return out;
}

}  // namespace

SplitData load_split_data(const ExperimentConfig& config, const SplitSpec& spec) {
  auto sources = load_sources(config);
  auto split = build_split(sources.train, sources.test, spec, sources.open ? &*sources.open : nullptr);
  if (config.data.max_train_per_class > 0)
    split.closed_train = cap_per_class(split.closed_train, config.data.max_train_per_class);
  return split;
}

SplitData load_split_data(const ExperimentConfig& config) {
  return load_split_data(config, registry_lookup(config.data.protocol, config.data.dataset, config.data.trial));
}

ExperimentConfig experiment_of(const json& manifest) {
  if (!manifest.contains("experiment")) fail(ErrorKind::Input, "checkpoint manifest has no experiment config");
  return ExperimentConfig::from_json(manifest.at("experiment"));
}

UnknownSource parse_unknown_source(std::string_view text) {
  if (text == "split") return UnknownSource::Split;
  if (text == "noise") return UnknownSource::Noise;
  if (text == "mnist-noise") return UnknownSource::MnistNoise;
  fail(ErrorKind::Input, "unknown-source must be split, noise or mnist-noise, got '" + std::string(text) + "'");
}

// --- evaluation -------------------------------------------------------------

MetricsRecord evaluate_classifier(GroupedNet& net, const SplitData& split, const ExperimentConfig& config,
                                  ThresholdMode mode, std::optional<double> threshold, std::optional<double> epsilon) {
  const int64_t k = split.num_known();
  if (net->num_classes() != k)
    fail(ErrorKind::Input, "checkpoint has " + std::to_string(net->num_classes()) + " classes, split has " +
                               std::to_string(k) + " known classes");
  if (split.closed_test.size() == 0 || split.open_test.size() == 0)
    fail(ErrorKind::Input, "evaluation needs non-empty closed and open test sets");

  const auto bs = config.training.eval_batch_size;
  auto closed_probs = predict_probs(net, split.closed_test.images, bs);
  auto open_probs = predict_probs(net, split.open_test.images, bs);
  auto closed_scores = scores_from_probs(closed_probs);
  auto open_scores = scores_from_probs(open_probs);

  MetricsRecord rec;
  rec.split_id = config.split_id();
  rec.seed = config.training.seed;
  rec.threshold = threshold.value_or(
      inherent_threshold(k, config.losses.alpha_hard, epsilon.value_or(config.inference.epsilon)));
  rec.auroc = auroc(closed_scores, open_scores);
  rec.closed_accuracy = closed_accuracy(closed_probs, split.closed_test.labels);

  auto open_labels = to_vector(split.open_test.labels);
  rec.openness = openness(k, static_cast<int64_t>(std::set<int64_t>(open_labels.begin(), open_labels.end()).size()));
  rec.per_class_auroc = per_class_auroc(closed_scores, scores_by_class(open_scores, split.open_test.labels));

  auto probs = torch::cat({closed_probs, open_probs});
  auto truth = to_vector(split.closed_test.labels);
  truth.resize(truth.size() + open_labels.size(), k);
  rec.macro_f1 = macro_f1(predict_from_probs(probs, rec.threshold), truth, k);
  if (mode == ThresholdMode::Sweep) {
    auto sweep = sweep_thresholds(probs, truth, k, config.evaluation.threshold_step);
    rec.best_threshold = sweep.best_threshold;
    rec.best_macro_f1 = sweep.best_macro_f1;
  }
  return rec;
}

MetricsRecord run_eval(const fs::path& checkpoint, const EvalOptions& options) {
  auto loaded = load_classifier(checkpoint);
  auto config = experiment_of(loaded.manifest);
  if (options.trial) config.data.trial = *options.trial;
  auto split = load_split_data(config);
  switch (options.unknown) {
    case UnknownSource::Split: break;
    case UnknownSource::Noise:
      split.open_test = make_noise_dataset(split.closed_test.size(), config.training.seed, config.image_spec());
      break;
    case UnknownSource::MnistNoise:
      split.open_test = make_mnist_noise(split.closed_test, config.training.seed);
      break;
  }
  return evaluate_classifier(loaded.net, split, config, options.mode, options.threshold, options.epsilon);
}

// --- training -----------------------------------------------------------------

RunTrainResult run_train(ExperimentConfig config, const std::optional<fs::path>& resume) {
  config.validate();
  const fs::path dir = ensure_dir(config.output_dir);
  auto split = load_split_data(config);
  config.net.num_classes = split.num_known();

  const auto& spec = registry_lookup(config.data.protocol, config.data.dataset, config.data.trial);
  write_json(dir / "config.json", config.to_json());
  write_json(dir / "run.json", {{"code_version", code_version()},
                                {"config_hash", config.hash()},
                                {"seed", config.training.seed},
                                {"split_id", config.split_id()},
                                {"known", spec.known},
                                {"open", spec.open},
                                {"train_samples", split.closed_train.size()}});

  std::unique_ptr<Trainer> trainer;
  if (resume) {
    trainer = restore_trainer(*resume);
    auto recorded = read_manifest(*resume);
    if (recorded.value("config_hash", "") != config.hash())
      fail(ErrorKind::Input, "resume checkpoint was written with a different config");
  } else {
    trainer = std::make_unique<Trainer>(config.net, config.gan, config.training, config.losses);
  }

  std::ofstream metrics(dir / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!metrics) fail(ErrorKind::Io, "cannot write " + (dir / "metrics.jsonl").string());

  TrainOptions options;
  options.checkpoint_dir = dir / "checkpoints";
  options.manifest = {{"experiment", config.to_json()},
                      {"config_hash", config.hash()},
                      {"split_id", config.split_id()},
                      {"known", split.known},
                      {"code_version", code_version()}};
  options.sink = [&](const json& record) { metrics << record.dump() << "\n" << std::flush; };

  RunTrainResult result;
  result.run_dir = dir;
  result.train = train(*trainer, split, options);
  result.final_metrics = evaluate_classifier(trainer->classifier(), split, config, ThresholdMode::Sweep);
  write_json(dir / "metrics_record.json", result.final_metrics.to_json());
  return result;
}

// --- suite ----------------------------------------------------------------------

std::map<std::string, MeanStd> summarize(const std::vector<MetricsRecord>& records) {
  std::map<std::string, std::vector<double>> columns;
  for (const auto& r : records) {
    columns["auroc"].push_back(r.auroc);
    columns["macro_f1"].push_back(r.macro_f1);
    columns["closed_accuracy"].push_back(r.closed_accuracy);
    columns["openness"].push_back(r.openness);
    if (r.best_macro_f1) columns["best_macro_f1"].push_back(*r.best_macro_f1);
  }
  std::map<std::string, MeanStd> out;
  for (const auto& [name, values] : columns) out[name] = mean_std(values);
  return out;
}

json SuiteSummary::to_json() const {
  json doc{{"trials", trials}, {"failures", failures}};
  doc["records"] = json::array();
  for (const auto& r : records) doc["records"].push_back(r.to_json());
  for (const auto& [name, ms] : stats)
    doc["stats"][name] = {{"mean", ms.mean}, {"std", ms.std}, {"single_trial", ms.single},
                          {"formatted", format_mean_std(ms)}};
  return doc;
}

SuiteSummary run_suite(const ExperimentConfig& config, const std::vector<int>& trials) {
  if (trials.empty()) fail(ErrorKind::Input, "suite needs at least one trial");
  const fs::path base = ensure_dir(config.output_dir);
  SuiteSummary summary;
  for (int t : trials) {
    auto cfg = config;
    cfg.data.trial = t;
    cfg.output_dir = (base / ("trial_" + std::to_string(t))).string();
    try {
      summary.records.push_back(run_train(cfg).final_metrics);
      summary.trials.push_back(t);
    } catch (const Error& e) {
      summary.failures.push_back({{"trial", t}, {"kind", std::string(to_string(e.kind()))}, {"message", e.what()}});
    } catch (const std::exception& e) {
      summary.failures.push_back({{"trial", t}, {"kind", "internal"}, {"message", e.what()}});
    }
  }
  summary.stats = summarize(summary.records);
  write_json(base / "summary.json", summary.to_json());
  return summary;
}

// --- diagnostics ------------------------------------------------------------------

void export_features(const fs::path& dir, const std::string& tag, const torch::Tensor& features) {
  ensure_dir(dir);
  auto f = features.detach().to(torch::kFloat32).contiguous().view({features.size(0), -1});
  const auto bin = dir / (tag + ".f32");
  std::ofstream out(bin, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + bin.string());
  out.write(reinterpret_cast<const char*>(f.data_ptr<float>()), static_cast<std::streamsize>(f.numel() * sizeof(float)));
  write_json(dir / (tag + ".json"), {{"samples", f.size(0)},
                                     {"dim", f.size(1)},
                                     {"source", tag},
                                     {"dtype", "float32"},
                                     {"byte_order", "little"},
                                     {"file", bin.filename().string()}});
}

DifficultyReport diagnose(Trainer& trainer, const SplitData& split, const ExperimentConfig& config,
                          GroupedNet* baseline, const std::optional<fs::path>& export_dir) {
  torch::NoGradGuard no_grad;
  auto& net = trainer.classifier();
  auto& copycat = trainer.copycat();
  auto& gen = trainer.generator();
  EvalModeGuard g1(*net), g2(*copycat), g3(*gen);

  const auto n = config.evaluation.diagnose_samples;
  const auto bs = config.training.eval_batch_size;
  auto sample = [&](const Dataset& ds, uint64_t salt) {
    auto gen_rng = at::make_generator<at::CPUGeneratorImpl>(config.training.seed + salt);
    auto perm = torch::randperm(ds.size(), gen_rng, torch::kLong);
    return ds.images.index_select(0, perm.slice(0, 0, std::min(n, ds.size())));
  };
  auto closed_x = sample(split.closed_train, 11);
  auto reference_x = sample(split.closed_test, 13);
  if (closed_x.size(0) < 2 || reference_x.size(0) < 2)
    fail(ErrorKind::Input, "diagnose needs at least two closed training and test samples");

  auto embed = [&](const torch::Tensor& x) {
    return batched(x, bs, [&](const torch::Tensor& b) { return net->embedding(b); });
  };
  // Copycat features at group i, seen through the rest of the classifier.
  auto copycat_embed = [&](const std::vector<int64_t>& groups, const torch::Tensor& x) {
    std::vector<torch::Tensor> parts;
    for (auto i : groups)
      parts.push_back(batched(x, bs, [&](const torch::Tensor& b) {
        return net->embedding_from_group(i, copycat->features(b)[i - 1]);
      }));
    return torch::cat(parts);
  };
  auto scores_of = [&](const torch::Tensor& embedding) {
    return scores_from_probs(net->head(embedding.view({embedding.size(0), -1, 1, 1})));
  };

  auto closed_f = embed(closed_x);
  auto reference_f = embed(reference_x);
  auto hard_f = copycat_embed(trainer.config().hard_groups, reference_x);
  auto easy_f = copycat_embed(trainer.config().easy_groups, reference_x);
  auto z = trainer.sample_noise(reference_x.size(0));
  auto moderate_f = embed(batched(z, bs, [&](const torch::Tensor& b) { return gen->forward(b); }));

  const auto reference_scores = scores_of(reference_f);
  DifficultyReport report;
  if (split.open_test.size() > 0) {
    auto open_by_class = scores_by_class(score(net, split.open_test.images, bs), split.open_test.labels);
    auto closed_scores = score(net, split.closed_test.images, bs);
    if (baseline != nullptr) {
      auto base_closed = score(*baseline, split.closed_test.images, bs);
      auto base_open = scores_by_class(score(*baseline, split.open_test.images, bs), split.open_test.labels);
      report = classwise_difficulty(closed_scores, open_by_class, per_class_auroc(base_closed, base_open));
    } else {
      report.class_auroc = per_class_auroc(closed_scores, open_by_class);
    }
  }

  auto add = [&](const std::string& name, const torch::Tensor& fake) {
    FakeSetDifficulty d;
    d.name = name;
    d.samples = fake.size(0);
    d.wasserstein = wasserstein_difficulty(fake, closed_f, reference_f, config.evaluation.wasserstein_projections,
                                           config.training.seed);
    d.auroc_vs_closed = auroc(reference_scores, scores_of(fake));
    report.fake_sets.push_back(d);
  };
  add("copycat-hard", hard_f);
  add("gan-moderate", moderate_f);
  add("copycat-easy", easy_f);

  if (export_dir) {
    export_features(*export_dir, "closed", closed_f);
    export_features(*export_dir, "reference", reference_f);
    export_features(*export_dir, "copycat-hard", hard_f);
    export_features(*export_dir, "gan-moderate", moderate_f);
    export_features(*export_dir, "copycat-easy", easy_f);
    if (split.open_test.size() > 0) export_features(*export_dir, "open", embed(sample(split.open_test, 17)));
  }
  return report;
}

DifficultyReport run_diagnose(const fs::path& checkpoint, const DiagnoseOptions& options) {
  auto trainer = restore_trainer(checkpoint);
  auto config = experiment_of(read_manifest(checkpoint));
  auto split = load_split_data(config);
  if (split.num_known() != trainer->net_config().num_classes)
    fail(ErrorKind::Input, "checkpoint class count does not match the split");
  std::optional<LoadedClassifier> baseline;
  if (options.baseline_checkpoint) {
    baseline = load_classifier(*options.baseline_checkpoint);
    if (baseline->net->num_classes() != split.num_known())
      fail(ErrorKind::Input, "baseline checkpoint class count does not match the split");
  }
  auto report = diagnose(*trainer, split, config, baseline ? &baseline->net : nullptr, options.export_dir);
  if (options.export_dir) write_json(*options.export_dir / "report.json", report.to_json());
  return report;
}

// --- prediction -------------------------------------------------------------------

void run_predict(const fs::path& checkpoint, const fs::path& images, std::ostream& out, std::optional<double> threshold,
                 std::optional<double> epsilon) {
  auto loaded = load_classifier(checkpoint);
  auto config = experiment_of(loaded.manifest);
  const auto k = loaded.net->num_classes();
  auto known = loaded.manifest.value("known", std::vector<int64_t>{});
  if (static_cast<int64_t>(known.size()) != k) fail(ErrorKind::Input, "checkpoint manifest has no known-class list");

  auto data = load_idx(images, std::nullopt, config.image_spec(), images.filename().string());
  const double t = threshold.value_or(
      inherent_threshold(k, config.losses.alpha_hard, epsilon.value_or(config.inference.epsilon)));
  auto preds = predict_from_probs(predict_probs(loaded.net, data.images, config.training.eval_batch_size), t);
  for (size_t i = 0; i < preds.size(); ++i) {
    json line{{"index", i}, {"confidence", preds[i].confidence}};
    if (preds[i].label == k)
      line["label"] = "unknown";
    else
      line["label"] = known[static_cast<size_t>(preds[i].label)];
    out << line.dump() << "\n";
  }
}

}  // namespace osr
