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
#include "tcc/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "tcc/common.hpp"
#include "tcc/image_io.hpp"
#include "tcc/training.hpp"

namespace tcc {
namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                              {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
                              {227, 119, 194}, {127, 127, 127}};

// 3x5 glyphs, one row per 3 bits (MSB = left column).
std::array<std::uint8_t, 5> Glyph(char c) {
  switch (c) {
    case '0': return {7, 5, 5, 5, 7};
    case '1': return {2, 6, 2, 2, 7};
    case '2': return {7, 1, 7, 4, 7};
    case '3': return {7, 1, 7, 1, 7};
    case '4': return {5, 5, 7, 1, 1};
    case '5': return {7, 4, 7, 1, 7};
    case '6': return {7, 4, 7, 5, 7};
    case '7': return {7, 1, 1, 1, 1};
    case '8': return {7, 5, 7, 5, 7};
    case '9': return {7, 5, 7, 1, 7};
    case '.': return {0, 0, 0, 0, 2};
    case '-': return {0, 0, 7, 0, 0};
    case '+': return {0, 2, 7, 2, 0};
    case 'e': return {0, 7, 7, 4, 7};
    default: return {0, 0, 0, 0, 0};
  }
}

class Canvas {
 public:
  Canvas(int w, int h) : img_{w, h, 3, std::vector<std::uint8_t>(w * h * 3, 255)} {}

  void Set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto* p = &img_.pixels[(y * img_.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void Line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      Set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void Text(int x, int y, const std::string& s, Color c, int scale = 2) {
    for (char ch : s) {
      const auto g = Glyph(ch);
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (!(g[row] & (4 >> col))) continue;
          for (int a = 0; a < scale; ++a) {
            for (int b = 0; b < scale; ++b) {
              Set(x + col * scale + a, y + row * scale + b, c);
            }
          }
        }
      }
      x += 4 * scale;
    }
  }

  const Image8& image() const { return img_; }

 private:
  Image8 img_;
};

std::string Tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

void RenderPanel(const PlotPanel& panel, const std::filesystem::path& png,
                 int width, int height) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : panel.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) {
    throw RuntimeFailure("plot panel '" + panel.name + "' has no data");
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  const int left = 70, right = 20, top = 20, bottom = 40;
  const int pw = width - left - right, ph = height - top - bottom;
  Canvas canvas(width, height);
  const Color black{0, 0, 0};
  canvas.Line(left, top, left, top + ph, black);
  canvas.Line(left, top + ph, left + pw, top + ph, black);
  canvas.Text(4, top, Tick(ymax), black);
  canvas.Text(4, top + ph - 10, Tick(ymin), black);
  canvas.Text(left, top + ph + 12, Tick(xmin), black);
  const auto xmax_label = Tick(xmax);
  canvas.Text(left + pw - 8 * static_cast<int>(xmax_label.size()), top + ph + 12,
              xmax_label, black);

  auto px = [&](double x) {
    return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * pw));
  };
  auto py = [&](double y) {
    return top + ph - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * ph));
  };
  for (std::size_t s = 0; s < panel.series.size(); ++s) {
    const auto color = kPalette[s % std::size(kPalette)];
    const auto& series = panel.series[s];
    bool have_prev = false;
    int prev_x = 0, prev_y = 0;
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      if (!std::isfinite(series.y[i])) continue;
      const int x = px(series.x[i]), y = py(series.y[i]);
      if (have_prev) {
        canvas.Line(prev_x, prev_y, x, y, color);
      } else {
        canvas.Set(x, y, color);
      }
      prev_x = x;
      prev_y = y;
      have_prev = true;
    }
    // Colour key, top right.
    for (int a = 0; a < 10; ++a) {
      for (int b = 0; b < 10; ++b) {
        canvas.Set(left + pw - 14 - 14 * static_cast<int>(s) + a, top + 4 + b,
                   color);
      }
    }
  }
  WritePng(png, canvas.image());
}

std::vector<std::filesystem::path> PlotMetrics(
    const std::vector<std::filesystem::path>& csvs,
    const std::filesystem::path& out_dir) {
  if (csvs.empty()) throw RuntimeFailure("no metrics files given");
  std::vector<std::vector<MetricsRecord>> runs;
  for (const auto& csv : csvs) {
    auto records = ReadMetricsCsv(csv);
    if (records.empty()) {
      throw RuntimeFailure("metrics file has no rows: " + csv.string());
    }
    runs.push_back(std::move(records));
  }
  struct Column {
    const char* name;
    double (*get)(const MetricsRecord&);
  };
  const Column columns[] = {
      {"loss_sup", [](const MetricsRecord& r) { return r.losses.l_sup; }},
      {"loss_ccd", [](const MetricsRecord& r) { return r.losses.l_ccd; }},
      {"loss_cfcd", [](const MetricsRecord& r) { return r.losses.l_cfcd; }},
      {"loss_total", [](const MetricsRecord& r) { return r.losses.total; }},
  };
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& col : columns) {
    PlotPanel panel{col.name, {}};
    for (const auto& records : runs) {
      Series s;
      for (const auto& r : records) {
        s.x.push_back(static_cast<double>(r.iter));
        s.y.push_back(col.get(r));
      }
      panel.series.push_back(std::move(s));
    }
    const auto path = out_dir / (std::string(col.name) + ".png");
    RenderPanel(panel, path);
    written.push_back(path);
  }
  PlotPanel miou{"miou", {}};
  for (const auto& records : runs) {
    Series vit, cnn;
    for (const auto& r : records) {
      if (r.miou_vit) {
        vit.x.push_back(static_cast<double>(r.iter));
        vit.y.push_back(*r.miou_vit);
      }
      if (r.miou_cnn) {
        cnn.x.push_back(static_cast<double>(r.iter));
        cnn.y.push_back(*r.miou_cnn);
      }
    }
    miou.series.push_back(std::move(vit));
    miou.series.push_back(std::move(cnn));
  }
  bool any_eval = false;
  for (const auto& s : miou.series) any_eval |= !s.x.empty();
  if (any_eval) {
    const auto path = out_dir / "miou.png";
    RenderPanel(miou, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace tcc
