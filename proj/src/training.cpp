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
#include "tcc/training.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tcc/common.hpp"
#include "tcc/config.hpp"

namespace tcc {
namespace fs = std::filesystem;

std::string ToString(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kCcd: return "ccd";
    case TrainMode::kTcc: return "tcc";
  }
  return "?";
}

TrainMode ParseTrainMode(const std::string& text) {
  if (text == "supervised") return TrainMode::kSupervised;
  if (text == "ccd") return TrainMode::kCcd;
  if (text == "tcc") return TrainMode::kTcc;
  throw ConfigError("unknown training mode '" + text +
                    "' (expected supervised|ccd|tcc)");
}

std::int64_t TrainConfig::ramp_iterations() const {
  if (losses.ramp_iterations >= 0) return losses.ramp_iterations;
  return (training.max_iterations * 2) / 5;
}

StudentConfig TrainConfig::ConvConfig(std::int64_t num_classes,
                                      std::int64_t image_size) const {
  StudentConfig c;
  c.kind = StudentKind::kConv;
  c.num_classes = num_classes;
  c.image_size = image_size;
  c.conv = students.conv;
  return c;
}

StudentConfig TrainConfig::AttentionConfig(std::int64_t num_classes,
                                           std::int64_t image_size) const {
  StudentConfig c;
  c.kind = StudentKind::kAttention;
  c.num_classes = num_classes;
  c.image_size = image_size;
  c.attention = students.attention;
  return c;
}

void TrainConfig::Validate() const {
  if (data.batch_size < 1 || data.unlabeled_batch_size < 1) {
    throw ConfigError("batch sizes must be >= 1");
  }
  if (training.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (training.eval_interval < 1 || training.checkpoint_interval < 1) {
    throw ConfigError("eval_interval and checkpoint_interval must be >= 1");
  }
  if (!(training.base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (training.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (losses.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (training.threads < 1) throw ConfigError("threads must be >= 1");
  // Geometry is only known once the dataset is loaded; a patch-sized image
  // is enough to check the structural fields.
  ConvConfig(2, 1).Validate();
  AttentionConfig(2, std::max<std::int64_t>(1, students.attention.patch_size))
      .Validate();
}

double PolyLr(std::int64_t t, std::int64_t max_iterations, double base_lr) {
  if (max_iterations <= 0) throw std::invalid_argument("poly_lr: T must be > 0");
  if (t < 0 || t > max_iterations) {
    throw std::invalid_argument("poly_lr: t outside [0, T]");
  }
  return base_lr * std::pow(1.0 - static_cast<double>(t) / max_iterations, 0.9);
}

NamedTensors Cohort::NamedParameters() const {
  NamedTensors out;
  for (const auto& p : conv->named_parameters()) {
    out.emplace_back("conv." + p.key(), p.value());
  }
  for (const auto& p : attention->named_parameters()) {
    out.emplace_back("attention." + p.key(), p.value());
  }
  return out;
}

Cohort MakeCohort(const TrainConfig& config, std::int64_t num_classes,
                  std::int64_t image_size) {
  torch::manual_seed(DeriveSeed(config.training.seed, SeedStream::kInit));
  Cohort cohort;
  cohort.conv = ConvStudent(config.ConvConfig(num_classes, image_size));
  cohort.attention =
      AttentionStudent(config.AttentionConfig(num_classes, image_size));
  return cohort;
}

AdamW::AdamW(NamedTensors params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& [name, p] : params_) {
    exp_avg_.push_back(torch::zeros_like(p));
    exp_avg_sq_.push_back(torch::zeros_like(p));
  }
}

void AdamW::ZeroGrad() {
  for (auto& [name, p] : params_) p.mutable_grad().reset();
}

void AdamW::Step(double lr) {
  torch::NoGradGuard no_grad;
  ++step_count_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    auto grad = p.grad().defined() ? p.grad() : torch::zeros_like(p);
    p.mul_(1.0 - lr * options_.weight_decay);
    exp_avg_[i].mul_(b1).add_(grad, 1.0 - b1);
    exp_avg_sq_[i].mul_(b2).addcmul_(grad, grad, 1.0 - b2);
    auto denom = (exp_avg_sq_[i] / bias2).sqrt_().add_(options_.eps);
    p.addcdiv_(exp_avg_[i], denom, -lr / bias1);
  }
}

NamedTensors AdamW::NamedState() const {
  NamedTensors out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("adamw.m." + params_[i].first, exp_avg_[i]);
    out.emplace_back("adamw.v." + params_[i].first, exp_avg_sq_[i]);
  }
  return out;
}

TrainState MakeTrainState(const TrainConfig& config, std::int64_t num_classes,
                          std::int64_t image_size) {
  TrainState state;
  state.cohort = MakeCohort(config, num_classes, image_size);
  AdamWOptions opts;
  opts.beta1 = config.training.adam_beta1;
  opts.beta2 = config.training.adam_beta2;
  opts.eps = config.training.adam_eps;
  opts.weight_decay = config.training.weight_decay;
  state.optimizer =
      std::make_unique<AdamW>(state.cohort.NamedParameters(), opts);
  return state;
}

namespace {

std::optional<double> OptionalNum(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

std::string MetricsCsvHeader() {
  return "iter,lr,g,loss_sup,loss_ccd,loss_cfcd,loss_total,miou_cnn,miou_vit";
}

std::string ToCsvRow(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.iter << "," << FormatDouble(r.lr) << "," << FormatDouble(r.losses.g)
     << "," << FormatDouble(r.losses.l_sup) << ","
     << FormatDouble(r.losses.l_ccd) << "," << FormatDouble(r.losses.l_cfcd)
     << "," << FormatDouble(r.losses.total) << ","
     << (r.miou_cnn ? FormatDouble(*r.miou_cnn) : "") << ","
     << (r.miou_vit ? FormatDouble(*r.miou_vit) : "");
  return os.str();
}

MetricsRecord ParseCsvRow(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  if (cells.size() != 9) {
    throw RuntimeFailure("metrics row has " + std::to_string(cells.size()) +
                         " cells, expected 9: " + line);
  }
  MetricsRecord r;
  try {
    r.iter = std::stoll(cells[0]);
    r.lr = std::stod(cells[1]);
    r.losses.g = std::stod(cells[2]);
    r.losses.l_sup = std::stod(cells[3]);
    r.losses.l_ccd = std::stod(cells[4]);
    r.losses.l_cfcd = std::stod(cells[5]);
    r.losses.total = std::stod(cells[6]);
    r.miou_cnn = OptionalNum(cells[7]);
    r.miou_vit = OptionalNum(cells[8]);
  } catch (const std::logic_error&) {
    throw RuntimeFailure("unparseable metrics row: " + line);
  }
  return r;
}

std::vector<MetricsRecord> ReadMetricsCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot read metrics " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != MetricsCsvHeader()) {
    throw RuntimeFailure("metrics file lacks the expected header: " +
                         path.string());
  }
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(ParseCsvRow(line));
  }
  return records;
}

StepTerms ComputeStepTerms(TrainState& state, const TrainConfig& config,
                           const PairedBatch& batch) {
  const auto t = state.iteration;
  const auto mode = config.training.mode;
  StepTerms step;
  step.lr = PolyLr(t, config.training.max_iterations, config.training.base_lr);
  step.g = mode == TrainMode::kSupervised
               ? 0.0
               : Rampup(t, config.ramp_iterations());
  step.lambda = mode == TrainMode::kTcc ? config.losses.lambda : 0.0;

  auto& conv = *state.cohort.conv;
  auto& attention = *state.cohort.attention;
  const auto& images = batch.labeled.images;
  auto labeled_conv = conv.forward(images);
  auto labeled_attention = attention.forward(images);
  step.terms.sup =
      SupervisedLoss(labeled_conv, labeled_attention, batch.labeled.masks);
  if (mode == TrainMode::kSupervised) return step;

  step.terms.ccd = CcdLoss(labeled_conv, labeled_attention);
  if (!batch.unlabeled) return step;

  const auto& u = batch.unlabeled->images;
  const auto normalizer =
      config.losses.unlabeled_normalizer == UnlabeledNormalizer::kOwnBatch
          ? u.size(0)
          : images.size(0);
  const auto num_classes = conv.config().num_classes;
  const auto scope = config.losses.prototype_scope;

  if (!config.data.cutmix) {
    auto u_conv = conv.forward(u);
    auto u_attention = attention.forward(u);
    step.terms.ccd = step.terms.ccd + CcdLoss(u_conv, u_attention, normalizer);
    if (mode == TrainMode::kTcc) {
      step.terms.cfcd = CfcdPipeline(u_conv, u_attention, num_classes, scope);
    }
    return step;
  }

  // CutMix: each unlabeled image is mixed with its neighbour in the batch;
  // the teachers' predictions on the clean images are mixed with the same
  // boxes and serve as targets for the students on the mixed images.
  std::mt19937_64 rng(DeriveSeed(config.training.seed, SeedStream::kCutMix,
                                 static_cast<std::uint64_t>(t)));
  std::vector<MixBox> boxes;
  for (std::int64_t i = 0; i < u.size(0); ++i) {
    boxes.push_back(SampleMixBox(u.size(2), u.size(3), rng));
  }
  auto partner = [](const torch::Tensor& x) { return torch::roll(x, {1}, {0}); };
  torch::Tensor conv_target, attention_target;
  {
    torch::NoGradGuard no_grad;
    auto c = conv.forward(u).logits;
    auto a = attention.forward(u).logits;
    conv_target = ApplyMix(c, partner(c), boxes);
    attention_target = ApplyMix(a, partner(a), boxes);
  }
  auto mixed = ApplyMix(u, partner(u), boxes);
  auto m_conv = conv.forward(mixed);
  auto m_attention = attention.forward(mixed);
  step.terms.ccd =
      step.terms.ccd + CrossDistill(conv_target, attention_target,
                                    m_conv.logits, m_attention.logits,
                                    normalizer);
  if (mode == TrainMode::kTcc) {
    step.terms.cfcd = CfcdPipeline(
        CfcdInputs{m_conv.features, m_attention.features,
                   PseudoLabels(conv_target), PseudoLabels(attention_target)},
        num_classes, scope);
  }
  return step;
}

MetricsRecord TrainStep(TrainState& state, const TrainConfig& config,
                        const PairedBatch& batch) {
  auto step = ComputeStepTerms(state, config, batch);
  auto objective = TotalLoss(step.terms, step.g, step.lambda);
  state.optimizer->ZeroGrad();
  objective.value.backward();
  state.optimizer->Step(step.lr);
  MetricsRecord record;
  record.iter = state.iteration;
  record.lr = step.lr;
  record.losses = objective.bundle;
  ++state.iteration;
  return record;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'T', 'C', 'C', 'K'};

enum DtypeCode : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

template <typename T>
void Put(std::string& buf, T value) {
  buf.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <typename T>
  T Get() {
    T value;
    Need(sizeof(T));
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string Bytes(std::size_t n) {
    Need(n);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > end_) throw RuntimeFailure("checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void PutTensor(std::string& buf, const std::string& name,
               const torch::Tensor& tensor) {
  auto t = tensor.detach().contiguous();
  DtypeCode code;
  switch (t.scalar_type()) {
    case torch::kFloat: code = kF32; break;
    case torch::kDouble: code = kF64; break;
    case torch::kLong: code = kI64; break;
    default: throw RuntimeFailure("checkpoint: unsupported dtype for " + name);
  }
  Put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
  buf.append(name);
  Put<std::uint8_t>(buf, code);
  Put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.dim()));
  for (auto d : t.sizes()) Put<std::int64_t>(buf, d);
  const auto nbytes = static_cast<std::uint64_t>(t.nbytes());
  Put<std::uint64_t>(buf, nbytes);
  buf.append(static_cast<const char*>(t.data_ptr()), nbytes);
}

}  // namespace

void SaveCheckpoint(const TrainState& state, const fs::path& path) {
  std::string buf;
  buf.append(kMagic, 4);
  Put<std::uint32_t>(buf, kCheckpointVersion);
  Put<std::uint64_t>(buf, static_cast<std::uint64_t>(state.iteration));
  Put<double>(buf, state.best_miou);
  auto params = state.cohort.NamedParameters();
  auto moments = state.optimizer->NamedState();
  Put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size() + moments.size()));
  for (const auto& [name, t] : params) PutTensor(buf, name, t);
  for (const auto& [name, t] : moments) PutTensor(buf, name, t);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  Put<std::uint32_t>(buf, crc);

  // Write-then-rename so an interrupted save leaves the old file intact.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw RuntimeFailure("cannot write checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointContents ReadCheckpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 + 4 + 8 + 8 + 4 + 4 ||
      std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw RuntimeFailure("not a checkpoint file: " + path.string());
  }
  Reader header(buf, buf.size() - 4);
  header.Bytes(4);
  CheckpointContents c;
  c.version = header.Get<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw RuntimeFailure("checkpoint version " + std::to_string(c.version) +
                         " unsupported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) {
    throw RuntimeFailure("checkpoint corrupt (CRC mismatch): " + path.string());
  }
  c.iteration = static_cast<std::int64_t>(header.Get<std::uint64_t>());
  c.best_miou = header.Get<double>();
  const auto blocks = header.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < blocks; ++i) {
    const auto name = header.Bytes(header.Get<std::uint32_t>());
    const auto code = header.Get<std::uint8_t>();
    const auto rank = header.Get<std::uint32_t>();
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = header.Get<std::int64_t>();
    const auto nbytes = header.Get<std::uint64_t>();
    torch::ScalarType dtype;
    switch (code) {
      case kF32: dtype = torch::kFloat; break;
      case kF64: dtype = torch::kDouble; break;
      case kI64: dtype = torch::kLong; break;
      default: throw RuntimeFailure("checkpoint: bad dtype in block " + name);
    }
    auto t = torch::empty(dims, dtype);
    if (static_cast<std::uint64_t>(t.nbytes()) != nbytes) {
      throw RuntimeFailure("checkpoint: size mismatch in block " + name);
    }
    const auto data = header.Bytes(nbytes);
    std::memcpy(t.data_ptr(), data.data(), nbytes);
    c.tensors.emplace(name, t);
  }
  if (header.pos() != buf.size() - 4) {
    throw RuntimeFailure("checkpoint has trailing bytes: " + path.string());
  }
  return c;
}

void LoadCheckpoint(TrainState& state, const fs::path& path) {
  auto contents = ReadCheckpoint(path);
  torch::NoGradGuard no_grad;
  auto restore = [&](const NamedTensors& targets) {
    for (const auto& [name, target] : targets) {
      auto it = contents.tensors.find(name);
      if (it == contents.tensors.end()) {
        throw RuntimeFailure("checkpoint lacks tensor '" + name + "'");
      }
      if (it->second.sizes() != target.sizes() ||
          it->second.scalar_type() != target.scalar_type()) {
        throw RuntimeFailure("checkpoint tensor '" + name +
                             "' does not match the model");
      }
      const_cast<torch::Tensor&>(target).copy_(it->second);
    }
  };
  restore(state.cohort.NamedParameters());
  restore(state.optimizer->NamedState());
  state.iteration = contents.iteration;
  state.best_miou = contents.best_miou;
  state.optimizer->set_step_count(contents.iteration);
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult Train(const TrainConfig& config, const ShapesDataset& dataset,
                  const Partition& partition, const fs::path& run_dir,
                  bool resume) {
  config.Validate();
  const auto started = std::chrono::steady_clock::now();
  torch::set_num_threads(config.training.threads);
  if (dataset.eval.empty()) {
    throw RuntimeFailure("dataset has no held-out evaluation split");
  }
  fs::create_directories(run_dir / "checkpoints");
  {
    std::ofstream out(run_dir / "config.resolved");
    out << ResolvedConfigText(config);
  }
  SavePartition(partition, run_dir / "partition.txt");

  const bool semi = config.training.mode != TrainMode::kSupervised;
  BatchIterator batches(
      SelectSamples(dataset.train, partition.labeled_ids),
      semi ? SelectSamples(dataset.train, partition.unlabeled_ids)
           : std::vector<SegSample>{},
      config.data.batch_size, config.training.seed,
      config.data.unlabeled_batch_size);
  if (semi && !batches.semi_supervised()) {
    throw ConfigError("mode " + ToString(config.training.mode) +
                      " needs a non-empty unlabeled set");
  }

  auto state = MakeTrainState(config, dataset.num_classes, dataset.height);
  const auto last_path = run_dir / "checkpoints" / "last.ckpt";
  const auto best_path = run_dir / "checkpoints" / "best.ckpt";
  const auto metrics_path = run_dir / "metrics.csv";

  TrainResult result;
  result.run_dir = run_dir;
  if (resume && fs::exists(last_path)) {
    LoadCheckpoint(state, last_path);
    // Keep only rows the checkpoint has already accounted for.
    for (auto& r : ReadMetricsCsv(metrics_path)) {
      if (r.iter < state.iteration) result.records.push_back(r);
    }
  }
  {
    std::ofstream out(metrics_path, std::ios::trunc);
    out << MetricsCsvHeader() << "\n";
    for (const auto& r : result.records) out << ToCsvRow(r) << "\n";
  }
  std::ofstream metrics(metrics_path, std::ios::app);

  const auto total = config.training.max_iterations;
  const auto& eval_set = dataset.eval;
  while (state.iteration < total) {
    auto record = TrainStep(state, config, batches.At(state.iteration));
    const auto done = state.iteration;
    if (done % config.training.eval_interval == 0 || done == total) {
      result.conv = Evaluate(*state.cohort.conv, eval_set);
      result.attention = Evaluate(*state.cohort.attention, eval_set);
      record.miou_cnn = result.conv.miou;
      record.miou_vit = result.attention.miou;
      if (result.attention.miou > state.best_miou) {
        state.best_miou = result.attention.miou;
        SaveCheckpoint(state, best_path);
      }
    }
    metrics << ToCsvRow(record) << "\n";
    metrics.flush();
    result.records.push_back(record);
    if (done % config.training.checkpoint_interval == 0 || done == total) {
      SaveCheckpoint(state, last_path);
    }
  }
  if (result.attention.images == 0) {
    result.conv = Evaluate(*state.cohort.conv, eval_set);
    result.attention = Evaluate(*state.cohort.attention, eval_set);
  }

  ReportFile report;
  report.Set("reported_student", std::string("attention"));
  report.Set("miou", result.attention.miou);
  report.Set("mode", ToString(config.training.mode));
  report.Set("ratio", config.data.ratio.ToString());
  report.Set("seed", static_cast<std::int64_t>(config.training.seed));
  report.Set("iterations", state.iteration);
  report.Set("best_miou_attention", state.best_miou);
  report.Set("zero_union_classes", std::string("excluded from mean"));
  // Time spent in this invocation only; a resumed run reports its tail.
  report.Set("wall_seconds",
             std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                 .count());
  AppendReport(report, "attention", result.attention);
  AppendReport(report, "conv", result.conv);
  report.Save(run_dir / "report.txt");
  return result;
}

TrainResult Train(const TrainConfig& config, const fs::path& run_dir,
                  bool resume) {
  if (config.data.dataset.empty()) throw ConfigError("data.dataset is not set");
  if (!fs::exists(fs::path(config.data.dataset) / "manifest.json")) {
    throw RuntimeFailure("missing dataset: " + config.data.dataset);
  }
  auto dataset = LoadDataset(config.data.dataset);
  std::vector<std::int64_t> ids;
  for (const auto& s : dataset.train) ids.push_back(s.id);
  auto partition = config.data.partition.empty()
                       ? MakePartition(ids, config.data.ratio, config.training.seed)
                       : LoadPartition(config.data.partition);
  return Train(config, dataset, partition, run_dir, resume);
}

}  // namespace tcc
