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
#include "tcc/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "tcc/evaluation.hpp"

namespace tcc {
namespace fs = std::filesystem;

fs::path CellDir(const fs::path& out, TrainMode mode, Ratio ratio,
                 std::uint64_t seed) {
  return out / ToString(mode) /
         ("ratio_" + std::to_string(ratio.num) + "_" + std::to_string(ratio.den)) /
         ("seed_" + std::to_string(seed));
}

AblationResult RunAblation(const TrainConfig& base, const ShapesDataset& dataset,
                           const std::vector<Ratio>& ratios,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<TrainMode>& modes,
                           const fs::path& out_dir) {
  std::vector<std::int64_t> ids;
  for (const auto& s : dataset.train) ids.push_back(s.id);
  AblationResult result;
  for (const auto& ratio : ratios) {
    for (auto seed : seeds) {
      const auto partition = MakePartition(ids, ratio, seed);
      for (auto mode : modes) {
        AblationCell cell;
        cell.mode = mode;
        cell.ratio = ratio;
        cell.seed = seed;
        cell.run_dir = CellDir(out_dir, mode, ratio, seed);
        const auto report_path = cell.run_dir / "report.txt";
        if (fs::exists(report_path)) {
          auto report = ReportFile::Load(report_path);
          cell.miou_attention = report.GetDouble("attention.miou");
          cell.miou_conv = report.GetDouble("conv.miou");
          cell.reused = true;
        } else {
          // A cell interrupted mid-run continues from its last checkpoint.
          auto config = base;
          config.training.mode = mode;
          config.training.seed = seed;
          config.data.ratio = ratio;
          std::cerr << "ablation: " << ToString(mode) << " ratio "
                    << ratio.ToString() << " seed " << seed << "\n";
          auto run = Train(config, dataset, partition, cell.run_dir, true);
          cell.miou_attention = run.attention.miou;
          cell.miou_conv = run.conv.miou;
        }
        auto report = ReportFile::Load(report_path);
        if (report.Has("wall_seconds")) {
          cell.wall_seconds = report.GetDouble("wall_seconds");
        }
        result.cells.push_back(cell);
      }
    }
  }
  result.table = AblationTable(result.cells);
  return result;
}

double MeanMiou(const std::vector<AblationCell>& cells, TrainMode mode,
                Ratio ratio) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.mode == mode && c.ratio.num * ratio.den == ratio.num * c.ratio.den) {
      sum += c.miou_attention;
      ++n;
    }
  }
  return n == 0 ? std::nan("") : 100.0 * sum / n;
}

std::string AblationTable(const std::vector<AblationCell>& cells) {
  std::vector<TrainMode> modes;
  std::vector<Ratio> ratios;
  for (const auto& c : cells) {
    bool seen = false;
    for (auto m : modes) seen |= m == c.mode;
    if (!seen) modes.push_back(c.mode);
    seen = false;
    for (auto r : ratios) seen |= r.num * c.ratio.den == c.ratio.num * r.den;
    if (!seen) ratios.push_back(c.ratio);
  }
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "mIoU (%) of the attention student, mean over seeds\n\n";
  os << "| L_s | L_d | L_f |";
  for (auto r : ratios) os << " " << r.ToString() << " |";
  os << "\n|:---:|:---:|:---:|";
  for (std::size_t i = 0; i < ratios.size(); ++i) os << "---:|";
  os << "\n";
  for (auto m : modes) {
    os << "| x | " << (m != TrainMode::kSupervised ? "x" : " ") << " | "
       << (m == TrainMode::kTcc ? "x" : " ") << " |";
    for (auto r : ratios) os << " " << fmt(MeanMiou(cells, m, r)) << " |";
    os << "\n";
  }
  os << "\n| mode | ratio | seed | mIoU attention | mIoU conv |\n"
     << "|---|---|---:|---:|---:|\n";
  for (const auto& c : cells) {
    os << "| " << ToString(c.mode) << " | " << c.ratio.ToString() << " | "
       << c.seed << " | " << fmt(100.0 * c.miou_attention) << " | "
       << fmt(100.0 * c.miou_conv) << " |\n";
  }
  return os.str();
}

}  // namespace tcc
