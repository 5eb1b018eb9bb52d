// osr: command-line front end for training, evaluation and diagnostics.
//
//   osr train    --config cfg.json [--seed N] [--out DIR] [--trial T] [--resume ckpt]
//   osr eval     --checkpoint ckpt [--trial T] [--threshold t] [--epsilon e] [--sweep] [--unknown noise]
//   osr suite    --config cfg.json --trials 0,1,2,3,4 [--out DIR]
//   osr diagnose --checkpoint ckpt [--baseline ckpt] [--out DIR]
//   osr predict  --checkpoint ckpt --input images.idx [--threshold t]
//   osr splits   [--protocol auroc|f1] [--dataset NAME] [--trial T]
//
// Failures exit nonzero and print {"error": {"kind", "message"}} on stderr.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "osr/config.hpp"
#include "osr/error.hpp"
#include "osr/runner.hpp"

namespace {

using nlohmann::json;

int report_error(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

struct Common {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int> trial;
  std::optional<double> threshold;
  std::optional<double> epsilon;
};

osr::ExperimentConfig load_with_overrides(const Common& c) {
  auto config = osr::load_config(c.config);
  if (c.seed) config.training.seed = *c.seed;
  if (c.trial) config.data.trial = *c.trial;
  if (!c.out.empty()) config.output_dir = c.out;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set recognition with Copycat and classifier-aware GAN fakes"};
  app.require_subcommand(1);

  Common c;
  auto* train = app.add_subcommand("train", "train a classifier jointly with its fake generators");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, emits a metrics record");
  auto* suite = app.add_subcommand("suite", "train and evaluate several trials");
  auto* diag = app.add_subcommand("diagnose", "difficulty diagnostics and feature export");
  auto* predict = app.add_subcommand("predict", "open-set predictions as JSON lines");
  auto* splits = app.add_subcommand("splits", "print split registry entries");

  for (auto* sub : {train, suite}) {
    sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "training seed");
    sub->add_option("--out", c.out, "output directory");
  }
  train->add_option("--trial", c.trial, "split trial");
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint of the same run");

  std::vector<int> trials{0, 1, 2, 3, 4};
  suite->add_option("--trials", trials, "trials to run")->delimiter(',');

  for (auto* sub : {eval, diag, predict})
    sub->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required();
  for (auto* sub : {eval, predict}) {
    sub->add_option("--threshold", c.threshold, "fixed rejection threshold");
    sub->add_option("--epsilon", c.epsilon, "offset added to the inherent threshold");
  }
  eval->add_option("--trial", c.trial, "evaluate on another trial of the same dataset");
  bool sweep = false;
  eval->add_flag("--sweep", sweep, "also search the best macro-F1 threshold");
  std::string unknown = "split";
  eval->add_option("--unknown", unknown, "unknown samples: split, noise or mnist-noise");
  eval->add_option("--out", c.out, "write the metrics record here as well");

  std::string baseline;
  diag->add_option("--baseline", baseline, "checkpoint of a cross-entropy-only baseline");
  diag->add_option("--out", c.out, "directory for report.json and feature exports");

  std::string input;
  predict->add_option("--input", input, "IDX images file")->required();

  std::string protocol, dataset;
  splits->add_option("--protocol", protocol, "auroc or f1");
  splits->add_option("--dataset", dataset, "dataset id");
  splits->add_option("--trial", c.trial, "trial index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*train) {
      auto config = load_with_overrides(c);
      auto result = osr::run_train(config, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
      json out = result.final_metrics.to_json();
      out["run_dir"] = result.run_dir.string();
      std::cout << out.dump(2) << "\n";
    } else if (*eval) {
      osr::EvalOptions options;
      options.mode = sweep ? osr::ThresholdMode::Sweep : osr::ThresholdMode::Inherent;
      options.threshold = c.threshold;
      options.epsilon = c.epsilon;
      options.trial = c.trial;
      options.unknown = osr::parse_unknown_source(unknown);
      auto doc = osr::run_eval(c.checkpoint, options).to_json().dump(2);
      if (!c.out.empty()) {
        std::ofstream file(c.out);
        if (!file) osr::fail(osr::ErrorKind::Io, "cannot write " + c.out);
        file << doc << "\n";
      }
      std::cout << doc << "\n";
    } else if (*suite) {
      auto config = load_with_overrides(c);
      std::cout << osr::run_suite(config, trials).to_json().dump(2) << "\n";
    } else if (*diag) {
      osr::DiagnoseOptions options;
      if (!baseline.empty()) options.baseline_checkpoint = baseline;
      if (!c.out.empty()) options.export_dir = c.out;
      std::cout << osr::run_diagnose(c.checkpoint, options).to_json().dump(2) << "\n";
    } else if (*predict) {
      osr::run_predict(c.checkpoint, input, std::cout, c.threshold, c.epsilon);
    } else if (*splits) {
      std::optional<osr::Protocol> proto;
      if (!protocol.empty()) proto = osr::parse_protocol(protocol);
      for (const auto& s : osr::split_registry()) {
        if (proto && s.protocol != *proto) continue;
        if (!dataset.empty() && s.dataset != dataset) continue;
        if (c.trial && s.trial != *c.trial) continue;
        std::cout << json{{"protocol", osr::to_string(s.protocol)}, {"dataset", s.dataset}, {"trial", s.trial},
                          {"known", s.known}, {"open", s.open}}
                         .dump()
                  << "\n";
      }
    }
  } catch (const osr::Error& e) {
    return report_error(osr::to_string(e.kind()), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
