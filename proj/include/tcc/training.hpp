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
#ifndef TCC_TRAINING_HPP_
#define TCC_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "tcc/data.hpp"
#include "tcc/evaluation.hpp"
#include "tcc/losses.hpp"
#include "tcc/prototype.hpp"
#include "tcc/students.hpp"

namespace tcc {

// Loss-combination rows: {L_s}, {L_s, L_d}, {L_s, L_d, L_f}.
enum class TrainMode { kSupervised, kCcd, kTcc };

std::string ToString(TrainMode mode);
TrainMode ParseTrainMode(const std::string& text);

// How the unlabeled CCD term is normalized: by the unlabeled batch's own
// size, or (literal reading of the printed formula) by the labeled batch
// size.
enum class UnlabeledNormalizer { kOwnBatch, kLabeledBatch };

struct StudentsSection {
  ConvStudentConfig conv;
  AttentionStudentConfig attention;
};

struct LossesSection {
  double lambda = kDefaultLambda;
  // Negative means 40% of max_iterations.
  std::int64_t ramp_iterations = -1;
  PrototypeScope prototype_scope = PrototypeScope::kImage;
  UnlabeledNormalizer unlabeled_normalizer = UnlabeledNormalizer::kOwnBatch;
};

struct DataSection {
  std::string dataset;
  Ratio ratio{1, 8};
  std::string partition;  // empty: derived from the seed
  std::int64_t batch_size = 8;
  std::int64_t unlabeled_batch_size = 8;
  bool cutmix = false;
};

struct TrainingSection {
  TrainMode mode = TrainMode::kTcc;
  std::int64_t max_iterations = 3000;
  double base_lr = 3e-4;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t eval_interval = 500;
  std::int64_t checkpoint_interval = 500;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainConfig {
  StudentsSection students;
  LossesSection losses;
  DataSection data;
  TrainingSection training;

  std::int64_t ramp_iterations() const;
  // Student configs completed with the dataset's geometry.
  StudentConfig ConvConfig(std::int64_t num_classes, std::int64_t image_size) const;
  StudentConfig AttentionConfig(std::int64_t num_classes,
                                std::int64_t image_size) const;
  void Validate() const;
};

// alpha * (1 - t/T)^0.9 for 0 <= t <= T.
double PolyLr(std::int64_t t, std::int64_t max_iterations, double base_lr);

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct Cohort {
  ConvStudent conv{nullptr};
  AttentionStudent attention{nullptr};

  // "conv.<name>" and "attention.<name>", in registration order.
  NamedTensors NamedParameters() const;
};

// Seeds the torch generator from the config seed, then builds both students.
Cohort MakeCohort(const TrainConfig& config, std::int64_t num_classes,
                  std::int64_t image_size);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay over one shared parameter list.
class AdamW {
 public:
  AdamW(NamedTensors params, AdamWOptions options);

  void ZeroGrad();
  void Step(double lr);

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }
  // "adamw.m.<param>" / "adamw.v.<param>".
  NamedTensors NamedState() const;

 private:
  NamedTensors params_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  AdamWOptions options_;
  std::int64_t step_count_ = 0;
};

struct TrainState {
  Cohort cohort;
  std::unique_ptr<AdamW> optimizer;
  std::int64_t iteration = 0;
  double best_miou = -1.0;
};

TrainState MakeTrainState(const TrainConfig& config, std::int64_t num_classes,
                          std::int64_t image_size);

struct MetricsRecord {
  std::int64_t iter = 0;
  double lr = 0.0;
  LossBundle losses;
  std::optional<double> miou_cnn;
  std::optional<double> miou_vit;
};

// Header: iter,lr,g,loss_sup,loss_ccd,loss_cfcd,loss_total,miou_cnn,miou_vit
std::string MetricsCsvHeader();
std::string ToCsvRow(const MetricsRecord& record);
MetricsRecord ParseCsvRow(const std::string& line);
std::vector<MetricsRecord> ReadMetricsCsv(const std::filesystem::path& path);

// The loss terms of one iteration before they are combined.
struct StepTerms {
  LossTerms terms;
  double g = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
};

// Forward passes and loss terms for iteration state.iteration, no update.
StepTerms ComputeStepTerms(TrainState& state, const TrainConfig& config,
                           const PairedBatch& batch);

// One AdamW update of both students from the single total objective.
MetricsRecord TrainStep(TrainState& state, const TrainConfig& config,
                        const PairedBatch& batch);

// Checkpoint file: "TCCK", u32 version, u64 iteration, f64 best mIoU,
// u32 block count, then per block u32 name length, name, u8 dtype, u32 rank,
// i64 dims, u64 byte length, raw data; trailing u32 CRC-32 of all prior
// bytes.
constexpr std::uint32_t kCheckpointVersion = 1;

void SaveCheckpoint(const TrainState& state, const std::filesystem::path& path);
// Restores parameters, optimizer moments and the iteration into `state`,
// which must have been built from the same config.
void LoadCheckpoint(TrainState& state, const std::filesystem::path& path);

struct CheckpointContents {
  std::uint32_t version = 0;
  std::int64_t iteration = 0;
  double best_miou = -1.0;
  std::map<std::string, torch::Tensor> tensors;
};
CheckpointContents ReadCheckpoint(const std::filesystem::path& path);

struct TrainResult {
  std::filesystem::path run_dir;
  EvalReport conv;
  EvalReport attention;
  std::vector<MetricsRecord> records;
};

// Runs max_iterations iterations (resuming from checkpoints/last.ckpt when
// `resume` is set and it exists). Writes config.resolved, metrics.csv,
// checkpoints/{last,best}.ckpt and report.txt under run_dir.
TrainResult Train(const TrainConfig& config, const ShapesDataset& dataset,
                  const Partition& partition,
                  const std::filesystem::path& run_dir, bool resume = false);

// Loads the dataset and partition named by the config, then trains.
TrainResult Train(const TrainConfig& config, const std::filesystem::path& run_dir,
                  bool resume = false);

}  // namespace tcc

#endif  // TCC_TRAINING_HPP_
