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
#ifndef TCC_EVALUATION_HPP_
#define TCC_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "tcc/data.hpp"
#include "tcc/students.hpp"

namespace tcc {

// Pixels whose ground truth or prediction equals this value are skipped.
constexpr std::int64_t kIgnoreLabel = 255;

// counts[g][p] = number of pixels with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t num_classes);

  // pred and gt: integer tensors of identical shape. Throws
  // std::invalid_argument on classes outside [0,K) other than kIgnoreLabel.
  void Accumulate(const torch::Tensor& pred, const torch::Tensor& gt);
  void Merge(const ConfusionMatrix& other);

  std::int64_t num_classes() const { return num_classes_; }
  std::int64_t at(std::int64_t gt, std::int64_t pred) const {
    return counts_[gt * num_classes_ + pred];
  }
  std::int64_t& at(std::int64_t gt, std::int64_t pred) {
    return counts_[gt * num_classes_ + pred];
  }
  std::int64_t total() const;
  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::int64_t num_classes_;
  std::vector<std::int64_t> counts_;
};

struct MiouResult {
  double mean = 0.0;
  // IoU per class; classes with an empty union are excluded from the mean
  // and reported as NaN here.
  std::vector<double> per_class;
};

// Throws std::domain_error when every class has an empty union.
MiouResult Miou(const ConfusionMatrix& conf);

double PixelAccuracy(const ConfusionMatrix& conf);

struct EvalReport {
  std::string student;
  std::int64_t images = 0;
  double miou = 0.0;
  double pixel_acc = 0.0;
  std::vector<double> per_class;
};

// Single-scale forward, argmax, confusion, mIoU. No test-time augmentation.
EvalReport Evaluate(StudentImpl& student, const std::vector<SegSample>& samples,
                    std::int64_t batch_size = 16);
ConfusionMatrix EvaluateConfusion(StudentImpl& student,
                                  const std::vector<SegSample>& samples,
                                  std::int64_t batch_size = 16);

// Ordered `key: value` lines.
class ReportFile {
 public:
  void Set(const std::string& key, const std::string& value);
  void Set(const std::string& key, double value);
  void Set(const std::string& key, std::int64_t value);
  const std::string& Get(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  bool Has(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  void Save(const std::filesystem::path& path) const;
  static ReportFile Load(const std::filesystem::path& path);
  std::string ToString() const;
  static ReportFile Parse(const std::string& text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Keys are written as <prefix>.miou, <prefix>.pixel_acc, <prefix>.iou.<c>.
void AppendReport(ReportFile& file, const std::string& prefix,
                  const EvalReport& report);
EvalReport ReadReport(const ReportFile& file, const std::string& prefix);

}  // namespace tcc

#endif  // TCC_EVALUATION_HPP_
