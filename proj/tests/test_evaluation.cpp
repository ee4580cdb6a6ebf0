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
#include "testing.hpp"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tcc/evaluation.hpp"

using namespace tcc;

namespace {

ConfusionMatrix FromCounts(std::int64_t k, const std::vector<std::int64_t>& counts) {
  ConfusionMatrix m(k);
  for (std::int64_t g = 0; g < k; ++g) {
    for (std::int64_t p = 0; p < k; ++p) m.at(g, p) = counts[g * k + p];
  }
  return m;
}

}  // namespace

TEST_CASE("miou hand examples") {
  auto m = FromCounts(2, {3, 1, 1, 3});
  // IoU = diag / (row + col - diag) = 3 / (4 + 4 - 3).
  auto r = Miou(m);
  CHECK(r.per_class[0] == 0.6);
  CHECK(r.per_class[1] == 0.6);
  CHECK(r.mean == 0.6);
  CHECK(PixelAccuracy(m) == doctest::Approx(0.75));

  auto perfect = FromCounts(3, {5, 0, 0, 0, 2, 0, 0, 0, 9});
  CHECK(Miou(perfect).mean == 1.0);

  // Class 2 never in gt and never predicted: excluded, not counted as 0.
  auto absent = FromCounts(3, {3, 1, 0, 1, 3, 0, 0, 0, 0});
  auto ra = Miou(absent);
  CHECK(std::isnan(ra.per_class[2]));
  CHECK(ra.mean == 0.6);

  // Predicted but absent from gt: IoU 0 and included.
  auto false_pos = FromCounts(2, {2, 2, 0, 0});
  CHECK(Miou(false_pos).mean == doctest::Approx(0.25));

  CHECK_THROWS_AS(Miou(ConfusionMatrix(3)), std::domain_error);
}

TEST_CASE("confusion accumulation matches the pixel loop") {
  torch::manual_seed(21);
  for (int rep = 0; rep < 10; ++rep) {
    auto pred = torch::randint(0, 5, {3, 7, 9}, torch::kLong);
    auto gt = torch::randint(0, 5, {3, 7, 9}, torch::kLong);
    ConfusionMatrix m(5);
    m.Accumulate(pred, gt);
    CHECK(m == FromCounts(5, oracle::Confusion(pred, gt, 5)));
    CHECK(m.total() == 3 * 7 * 9);
  }
}

TEST_CASE("confusion is additive over shards and invariant to order") {
  torch::manual_seed(22);
  auto pred = torch::randint(0, 4, {12, 6, 6}, torch::kLong);
  auto gt = torch::randint(0, 4, {12, 6, 6}, torch::kLong);
  ConfusionMatrix whole(4);
  whole.Accumulate(pred, gt);

  ConfusionMatrix merged(4);
  for (std::int64_t start : {0, 5, 7}) {
    const std::int64_t stop = start == 0 ? 5 : (start == 5 ? 7 : 12);
    ConfusionMatrix part(4);
    part.Accumulate(pred.slice(0, start, stop), gt.slice(0, start, stop));
    merged.Merge(part);
  }
  CHECK(merged == whole);

  auto perm = torch::randperm(12);
  ConfusionMatrix shuffled(4);
  shuffled.Accumulate(pred.index_select(0, perm), gt.index_select(0, perm));
  CHECK(shuffled == whole);
  CHECK(Miou(shuffled).mean == Miou(whole).mean);

  CHECK_THROWS_AS(merged.Merge(ConfusionMatrix(3)), std::invalid_argument);
}

TEST_CASE("ignore label and range checks") {
  auto pred = torch::tensor(std::vector<std::int64_t>{0, 1, 1, 0});
  auto gt = torch::tensor(std::vector<std::int64_t>{0, kIgnoreLabel, 1, 1});
  ConfusionMatrix m(2);
  m.Accumulate(pred, gt);
  CHECK(m.total() == 3);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.at(1, 0) == 1);
  CHECK_THROWS_AS(m.Accumulate(pred, torch::tensor(std::vector<std::int64_t>{0, 2, 1, 1})),
                  std::invalid_argument);
  CHECK_THROWS_AS(m.Accumulate(pred + 2, gt), std::invalid_argument);
  CHECK_THROWS_AS(m.Accumulate(pred, gt.slice(0, 0, 3)), std::invalid_argument);
}

TEST_CASE("student evaluation streams identically to one pass") {
  torch::manual_seed(23);
  StudentConfig cfg;
  cfg.num_classes = 3;
  cfg.image_size = 16;
  auto student = MakeStudent(cfg);
  auto samples = GenerateShapesDataset({7, 16, 16, 3, 1, 0});

  auto streamed = EvaluateConfusion(*student, samples, 2);
  auto single = EvaluateConfusion(*student, samples, 16);
  CHECK(streamed == single);
  CHECK(streamed.total() == 7 * 16 * 16);

  std::vector<torch::Tensor> images, masks;
  for (const auto& s : samples) {
    images.push_back(s.image);
    masks.push_back(s.mask);
  }
  torch::NoGradGuard no_grad;
  student->eval();
  auto logits = student->forward(torch::stack(images)).logits;
  auto expected = FromCounts(3, oracle::Confusion(oracle::Argmax(logits),
                                                  torch::stack(masks), 3));
  CHECK(single == expected);

  auto report = Evaluate(*student, samples, 4);
  CHECK(report.images == 7);
  CHECK(report.miou == Miou(expected).mean);
  CHECK(report.pixel_acc == PixelAccuracy(expected));
}

TEST_CASE("report file round trip") {
  EvalReport r{"attention", 100, 0.6180339887498949, 0.9, {0.5, std::nan(""), 0.75}};
  ReportFile f;
  f.Set("mode", "tcc");
  AppendReport(f, "attention", r);
  auto text = f.ToString();
  auto parsed = ReportFile::Parse(text);
  CHECK(parsed.Get("mode") == "tcc");
  auto back = ReadReport(parsed, "attention");
  CHECK(back.student == "attention");
  CHECK(back.images == 100);
  CHECK(back.miou == r.miou);
  CHECK(back.pixel_acc == r.pixel_acc);
  REQUIRE(back.per_class.size() == 3);
  CHECK(back.per_class[0] == 0.5);
  CHECK(std::isnan(back.per_class[1]));
  CHECK(parsed.ToString() == text);

  auto path = std::filesystem::temp_directory_path() / "tcc_test_report.txt";
  f.Save(path);
  CHECK(ReportFile::Load(path).ToString() == text);
  std::filesystem::remove(path);

  CHECK_FALSE(parsed.Has("missing"));
  CHECK_THROWS(parsed.Get("missing"));
  CHECK_THROWS(ReportFile::Parse("no separator here\n"));
}
