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
#ifndef TCC_PLOT_HPP_
#define TCC_PLOT_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace tcc {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotPanel {
  std::string name;
  std::vector<Series> series;  // drawn in palette order
};

// Line chart with axes, min/max tick values and a colour key, as 8-bit RGB
// PNG.
void RenderPanel(const PlotPanel& panel, const std::filesystem::path& png,
                 int width = 640, int height = 400);

// One panel per loss component plus one for mIoU; each CSV contributes one
// line per panel (two on the mIoU panel: attention then conv). Returns the
// written files. Throws RuntimeFailure on an empty CSV.
std::vector<std::filesystem::path> PlotMetrics(
    const std::vector<std::filesystem::path>& csvs,
    const std::filesystem::path& out_dir);

}  // namespace tcc

#endif  // TCC_PLOT_HPP_
