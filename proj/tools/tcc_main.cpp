/* Copyright 2026 The TCC Segmentation Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
// Command-line entry point: gen-data, train, eval, plot, ablate.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tcc/ablation.hpp"
#include "tcc/config.hpp"
#include "tcc/data.hpp"
#include "tcc/evaluation.hpp"
#include "tcc/plot.hpp"
#include "tcc/training.hpp"

namespace fs = std::filesystem;
using namespace tcc;

namespace {

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct GenDataArgs {
  std::int64_t n = 200;
  std::int64_t eval_n = 100;
  std::int64_t size = 64;
  std::int64_t classes = 4;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
};

int GenData(const GenDataArgs& a) {
  if (a.classes < 2) throw ConfigError("--classes must be >= 2");
  if (a.n < 1) throw ConfigError("--n must be >= 1");
  if (a.eval_n < 0) throw ConfigError("--eval-n must be >= 0");
  const fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force) {
      throw ConfigError("output directory " + a.out +
                        " is not empty (use --force to overwrite)");
    }
    fs::remove_all(out / "images");
    fs::remove_all(out / "masks");
    fs::remove(out / "manifest.json");
  }
  auto dataset = MakeShapesDataset(a.n, a.eval_n, a.size, a.classes, a.seed);
  SaveDataset(dataset, out);
  std::cout << "wrote " << dataset.train.size() << " training and "
            << dataset.eval.size() << " held-out samples to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string dataset;
  std::string mode;
  std::string ratio;
  std::int64_t seed = -1;
  std::int64_t iterations = -1;
  bool cutmix = false;
  bool resume = false;
  std::vector<std::string> overrides;
};

TrainConfig BuildConfig(const std::string& path,
                        const std::vector<std::string>& overrides) {
  TrainConfig config = path.empty() ? TrainConfig{} : LoadConfig(path);
  for (const auto& o : overrides) ApplyOverride(config, o);
  return config;
}

int TrainCommand(const TrainArgs& a) {
  auto config = BuildConfig(a.config, a.overrides);
  if (!a.dataset.empty()) config.data.dataset = a.dataset;
  if (!a.mode.empty()) config.training.mode = ParseTrainMode(a.mode);
  if (!a.ratio.empty()) config.data.ratio = Ratio::Parse(a.ratio);
  if (a.seed >= 0) config.training.seed = static_cast<std::uint64_t>(a.seed);
  if (a.iterations > 0) config.training.max_iterations = a.iterations;
  if (a.cutmix) config.data.cutmix = true;
  config.Validate();
  const fs::path run = a.out.empty()
                           ? fs::path("runs") / (ToString(config.training.mode) +
                                                 "_seed" +
                                                 std::to_string(config.training.seed))
                           : fs::path(a.out);
  auto result = Train(config, run, a.resume);
  std::cout << "attention mIoU " << result.attention.miou << ", conv mIoU "
            << result.conv.miou << "; run directory " << run.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "eval";
  std::string config;
  std::string out;
};

int EvalCommand(const EvalArgs& a) {
  const fs::path ckpt(a.checkpoint);
  if (!fs::exists(ckpt)) throw RuntimeFailure("missing checkpoint " + a.checkpoint);
  fs::path config_path = a.config;
  if (config_path.empty()) {
    config_path = ckpt.parent_path().parent_path() / "config.resolved";
  }
  if (!fs::exists(config_path)) {
    throw ConfigError("no config for checkpoint; pass --config (looked for " +
                      config_path.string() + ")");
  }
  auto config = LoadConfig(config_path);
  const std::string dataset_dir = a.dataset.empty() ? config.data.dataset : a.dataset;
  auto dataset = LoadDataset(dataset_dir);
  const std::vector<SegSample>* samples = nullptr;
  if (a.split == "eval") {
    samples = &dataset.eval;
  } else if (a.split == "train") {
    samples = &dataset.train;
  } else {
    throw ConfigError("--split must be train or eval");
  }
  auto state = MakeTrainState(config, dataset.num_classes, dataset.height);
  LoadCheckpoint(state, ckpt);
  ReportFile report;
  report.Set("checkpoint", ckpt.string());
  report.Set("dataset", dataset_dir);
  report.Set("split", a.split);
  report.Set("iteration", state.iteration);
  report.Set("reported_student", std::string("attention"));
  auto attention = Evaluate(*state.cohort.attention, *samples);
  auto conv = Evaluate(*state.cohort.conv, *samples);
  report.Set("miou", attention.miou);
  report.Set("zero_union_classes", std::string("excluded from mean"));
  AppendReport(report, "attention", attention);
  AppendReport(report, "conv", conv);
  const fs::path out = a.out.empty()
                           ? ckpt.parent_path().parent_path() /
                                 ("eval_" + a.split + ".txt")
                           : fs::path(a.out);
  report.Save(out);
  std::cout << report.ToString();
  return 0;
}

struct PlotArgs {
  std::vector<std::string> csvs;
  std::string out = "plots";
};

int PlotCommand(const PlotArgs& a) {
  std::vector<fs::path> csvs(a.csvs.begin(), a.csvs.end());
  for (const auto& p : PlotMetrics(csvs, a.out)) std::cout << p.string() << "\n";
  return 0;
}

struct AblateArgs {
  std::string config;
  std::string dataset;
  std::string ratios = "1/8";
  std::string seeds = "0,1,2";
  std::string modes = "supervised,ccd,tcc";
  std::string out = "ablation";
  std::int64_t iterations = -1;
  std::vector<std::string> overrides;
};

int AblateCommand(const AblateArgs& a) {
  auto config = BuildConfig(a.config, a.overrides);
  if (!a.dataset.empty()) config.data.dataset = a.dataset;
  if (a.iterations > 0) config.training.max_iterations = a.iterations;
  config.Validate();
  std::vector<Ratio> ratios;
  for (const auto& r : SplitList(a.ratios)) ratios.push_back(Ratio::Parse(r));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : SplitList(a.seeds)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed '" + s + "'");
    }
  }
  std::vector<TrainMode> modes;
  for (const auto& m : SplitList(a.modes)) modes.push_back(ParseTrainMode(m));
  if (ratios.empty() || seeds.empty() || modes.empty()) {
    throw ConfigError("ratios, seeds and modes must be non-empty");
  }
  if (config.data.dataset.empty()) throw ConfigError("no dataset given");
  auto dataset = LoadDataset(config.data.dataset);
  auto result = RunAblation(config, dataset, ratios, seeds, modes, a.out);
  fs::create_directories(a.out);
  std::ofstream(fs::path(a.out) / "table.md") << result.table;
  std::cout << result.table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-CNN cohort semi-supervised segmentation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic shapes dataset");
  gen_cmd->add_option("--n", gen.n, "training samples")->capture_default_str();
  gen_cmd->add_option("--eval-n", gen.eval_n, "held-out samples")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "image side")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "classes incl. background")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "overwrite a non-empty directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the cohort");
  train_cmd->add_option("--config", train.config, "run config file");
  train_cmd->add_option("--out", train.out, "run directory");
  train_cmd->add_option("--dataset", train.dataset, "dataset directory");
  train_cmd->add_option("--mode", train.mode, "supervised | ccd | tcc");
  train_cmd->add_option("--ratio", train.ratio, "labeled fraction, e.g. 1/8");
  train_cmd->add_option("--seed", train.seed, "run seed");
  train_cmd->add_option("--iterations", train.iterations, "max iterations");
  train_cmd->add_flag("--cutmix", train.cutmix, "CutMix on unlabeled batches");
  train_cmd->add_flag("--resume", train.resume, "continue from checkpoints/last.ckpt");
  train_cmd->add_option("--set", train.overrides, "section.key=value override");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "dataset directory");
  eval_cmd->add_option("--split", eval.split, "train | eval")->capture_default_str();
  eval_cmd->add_option("--config", eval.config, "run config (default: beside the run)");
  eval_cmd->add_option("--out", eval.out, "report file");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "render metrics curves as PNG");
  plot_cmd->add_option("csv", plot.csvs, "metrics.csv files")->required();
  plot_cmd->add_option("--out", plot.out, "output directory")->capture_default_str();

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "loss-combination sweep");
  ablate_cmd->add_option("--config", ablate.config, "base run config");
  ablate_cmd->add_option("--dataset", ablate.dataset, "dataset directory");
  ablate_cmd->add_option("--ratios", ablate.ratios, "comma list")->capture_default_str();
  ablate_cmd->add_option("--seeds", ablate.seeds, "comma list")->capture_default_str();
  ablate_cmd->add_option("--modes", ablate.modes, "comma list")->capture_default_str();
  ablate_cmd->add_option("--iterations", ablate.iterations, "max iterations");
  ablate_cmd->add_option("--out", ablate.out, "output directory")->capture_default_str();
  ablate_cmd->add_option("--set", ablate.overrides, "section.key=value override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) return GenData(gen);
    if (*train_cmd) return TrainCommand(train);
    if (*eval_cmd) return EvalCommand(eval);
    if (*plot_cmd) return PlotCommand(plot);
    if (*ablate_cmd) return AblateCommand(ablate);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
