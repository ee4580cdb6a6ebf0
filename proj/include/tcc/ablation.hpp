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
#ifndef TCC_ABLATION_HPP_
#define TCC_ABLATION_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcc/data.hpp"
#include "tcc/training.hpp"

namespace tcc {

struct AblationCell {
  TrainMode mode = TrainMode::kSupervised;
  Ratio ratio;
  std::uint64_t seed = 0;
  double miou_attention = 0.0;
  double miou_conv = 0.0;
  std::filesystem::path run_dir;
  bool reused = false;  // report.txt already existed, run skipped
  double wall_seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::string table;  // markdown
};

// Directory of one cell: <out>/<mode>/ratio_<num>_<den>/seed_<seed>.
std::filesystem::path CellDir(const std::filesystem::path& out, TrainMode mode,
                              Ratio ratio, std::uint64_t seed);

// Trains every (mode, ratio, seed) cell from `base`, skipping cells whose
// report.txt exists. For a given seed all modes share partition and
// initialization.
AblationResult RunAblation(const TrainConfig& base, const ShapesDataset& dataset,
                           const std::vector<Ratio>& ratios,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<TrainMode>& modes,
                           const std::filesystem::path& out_dir);

// Seed-mean attention-student mIoU (in points) of one mode at one ratio.
double MeanMiou(const std::vector<AblationCell>& cells, TrainMode mode,
                Ratio ratio);

// Loss-combination rows against ratio columns, plus a per-cell listing.
std::string AblationTable(const std::vector<AblationCell>& cells);

}  // namespace tcc

#endif  // TCC_ABLATION_HPP_
