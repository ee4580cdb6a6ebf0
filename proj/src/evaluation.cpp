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
#include "tcc/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "tcc/common.hpp"

namespace tcc {
ConfusionMatrix::ConfusionMatrix(std::int64_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
}

void ConfusionMatrix::Accumulate(const torch::Tensor& pred,
                                 const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) {
    throw std::invalid_argument("prediction and ground truth differ in shape");
  }
  auto p = pred.reshape({-1}).to(torch::kLong);
  auto g = gt.reshape({-1}).to(torch::kLong);
  auto keep = p.ne(kIgnoreLabel).logical_and(g.ne(kIgnoreLabel));
  p = p.masked_select(keep);
  g = g.masked_select(keep);
  if (p.numel() == 0) return;
  const auto lo = std::min(p.min().item<std::int64_t>(), g.min().item<std::int64_t>());
  const auto hi = std::max(p.max().item<std::int64_t>(), g.max().item<std::int64_t>());
  if (lo < 0 || hi >= num_classes_) {
    throw std::invalid_argument("class index outside [0," +
                                std::to_string(num_classes_) + ")");
  }
  auto bins = torch::bincount(g * num_classes_ + p, {},
                              num_classes_ * num_classes_)
                  .contiguous();
  const auto* b = bins.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += b[i];
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw std::invalid_argument("cannot merge confusion matrices of different K");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

MiouResult Miou(const ConfusionMatrix& conf) {
  const auto k = conf.num_classes();
  MiouResult result;
  result.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int valid = 0;
  for (std::int64_t c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (std::int64_t j = 0; j < k; ++j) {
      row += conf.at(c, j);
      col += conf.at(j, c);
    }
    const auto inter = conf.at(c, c);
    const auto uni = row + col - inter;
    if (uni == 0) continue;
    result.per_class[c] = static_cast<double>(inter) / static_cast<double>(uni);
    sum += result.per_class[c];
    ++valid;
  }
  if (valid == 0) throw std::domain_error("mIoU undefined: every union is empty");
  result.mean = sum / valid;
  return result;
}

double PixelAccuracy(const ConfusionMatrix& conf) {
  std::int64_t diag = 0;
  for (std::int64_t c = 0; c < conf.num_classes(); ++c) diag += conf.at(c, c);
  const auto total = conf.total();
  return total == 0 ? 0.0 : static_cast<double>(diag) / total;
}

ConfusionMatrix EvaluateConfusion(StudentImpl& student,
                                  const std::vector<SegSample>& samples,
                                  std::int64_t batch_size) {
  torch::NoGradGuard no_grad;
  ConfusionMatrix conf(student.config().num_classes);
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto end = std::min(samples.size(), start + batch_size);
    std::vector<torch::Tensor> images, masks;
    for (auto i = start; i < end; ++i) {
      images.push_back(samples[i].image);
      masks.push_back(samples[i].mask);
    }
    auto out = student.forward(torch::stack(images));
    conf.Accumulate(out.pseudo_labels, torch::stack(masks));
  }
  return conf;
}

EvalReport Evaluate(StudentImpl& student, const std::vector<SegSample>& samples,
                    std::int64_t batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluation set is empty");
  auto conf = EvaluateConfusion(student, samples, batch_size);
  auto m = Miou(conf);
  EvalReport report;
  report.student = ToString(student.config().kind);
  report.images = static_cast<std::int64_t>(samples.size());
  report.miou = m.mean;
  report.pixel_acc = PixelAccuracy(conf);
  report.per_class = m.per_class;
  return report;
}

void ReportFile::Set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find(':') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw std::invalid_argument("bad report entry '" + key + "'");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void ReportFile::Set(const std::string& key, double value) {
  Set(key, FormatDouble(value));
}

void ReportFile::Set(const std::string& key, std::int64_t value) {
  Set(key, std::to_string(value));
}

bool ReportFile::Has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& ReportFile::Get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw RuntimeFailure("report has no key '" + key + "'");
}

double ReportFile::GetDouble(const std::string& key) const {
  const auto& v = Get(key);
  if (v == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw RuntimeFailure("report key '" + key + "' is not a number: " + v);
  }
}

std::string ReportFile::ToString() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << ": " << v << "\n";
  return os.str();
}

ReportFile ReportFile::Parse(const std::string& text) {
  ReportFile file;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) {
      throw RuntimeFailure("report line without 'key: value': " + line);
    }
    file.Set(line.substr(0, colon), line.substr(colon + 2));
  }
  return file;
}

void ReportFile::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << ToString();
  if (!out) throw RuntimeFailure("cannot write " + path.string());
}

ReportFile ReportFile::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

void AppendReport(ReportFile& file, const std::string& prefix,
                  const EvalReport& report) {
  file.Set(prefix + ".student", report.student);
  file.Set(prefix + ".images", report.images);
  file.Set(prefix + ".miou", report.miou);
  file.Set(prefix + ".pixel_acc", report.pixel_acc);
  file.Set(prefix + ".num_classes",
           static_cast<std::int64_t>(report.per_class.size()));
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    file.Set(prefix + ".iou." + std::to_string(c), report.per_class[c]);
  }
}

EvalReport ReadReport(const ReportFile& file, const std::string& prefix) {
  EvalReport r;
  r.student = file.Get(prefix + ".student");
  r.images = static_cast<std::int64_t>(file.GetDouble(prefix + ".images"));
  r.miou = file.GetDouble(prefix + ".miou");
  r.pixel_acc = file.GetDouble(prefix + ".pixel_acc");
  const auto k = static_cast<std::int64_t>(file.GetDouble(prefix + ".num_classes"));
  for (std::int64_t c = 0; c < k; ++c) {
    r.per_class.push_back(file.GetDouble(prefix + ".iou." + std::to_string(c)));
  }
  return r;
}

}  // namespace tcc
