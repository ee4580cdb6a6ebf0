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
#include "tcc/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tcc/common.hpp"
#include "tcc/image_io.hpp"

namespace tcc {
namespace {

constexpr double kNoiseSigma = 0.05;
constexpr double kColorJitter = 0.1;
constexpr int kDatasetFormatVersion = 1;

using Rgb = std::array<double, 3>;

Rgb HsvToRgb(double h, double s, double v) {
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb ClassColor(std::int64_t cls, std::int64_t num_classes) {
  const double hue = static_cast<double>(cls - 1) / (num_classes - 1);
  return HsvToRgb(hue, 0.75, 0.85);
}

enum class ShapeKind { kRectangle, kDisk, kTriangle };

struct Point {
  double y, x;
};

double Cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

struct Shape {
  ShapeKind kind;
  double cy, cx, half;  // centre and half extent
  std::array<Point, 3> tri;

  bool Contains(double y, double x) const {
    switch (kind) {
      case ShapeKind::kRectangle:
        return std::abs(y - cy) <= half && std::abs(x - cx) <= half * 0.7;
      case ShapeKind::kDisk:
        return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= half * half;
      case ShapeKind::kTriangle: {
        const Point p{y, x};
        const double d1 = Cross(tri[0], tri[1], p);
        const double d2 = Cross(tri[1], tri[2], p);
        const double d3 = Cross(tri[2], tri[0], p);
        const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
        const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
        return !(neg && pos);
      }
    }
    return false;
  }
};

SegSample GenerateSample(const ShapesOptions& o, std::int64_t id) {
  std::mt19937_64 rng(DeriveSeed(o.seed, SeedStream::kData,
                                 static_cast<std::uint64_t>(id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto h = o.height, w = o.width, k = o.num_classes;
  const double min_side = static_cast<double>(std::min(h, w));

  // Background: linear gradient between two random colours.
  Rgb c0, c1;
  for (auto& v : c0) v = 0.1 + 0.8 * unit(rng);
  for (auto& v : c1) v = 0.1 + 0.8 * unit(rng);
  const double angle = 2.0 * M_PI * unit(rng);
  const double dy = std::sin(angle), dx = std::cos(angle);

  std::vector<double> rgb(3 * h * w);
  std::vector<std::int64_t> mask(h * w, 0);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double u = 0.5 + 0.5 * ((y / static_cast<double>(h) - 0.5) * dy +
                                    (x / static_cast<double>(w) - 0.5) * dx);
      for (int c = 0; c < 3; ++c) {
        rgb[(c * h + y) * w + x] = c0[c] * (1 - u) + c1[c] * u;
      }
    }
  }

  const int num_shapes = 1 + static_cast<int>(rng() % 3);
  for (int s = 0; s < num_shapes; ++s) {
    const std::int64_t cls =
        s == 0 ? 1 + id % (k - 1) : 1 + static_cast<std::int64_t>(rng() % (k - 1));
    Shape shape;
    shape.kind = static_cast<ShapeKind>(rng() % 3);
    shape.half = min_side * (0.1 + 0.1 * unit(rng));
    shape.cy = shape.half + unit(rng) * (h - 2 * shape.half);
    shape.cx = shape.half + unit(rng) * (w - 2 * shape.half);
    if (shape.kind == ShapeKind::kTriangle) {
      // Vertices around the centre at jittered angles; area stays bounded
      // away from zero because the angles are spread.
      const double base = 2.0 * M_PI * unit(rng);
      for (int v = 0; v < 3; ++v) {
        const double a = base + v * 2.0 * M_PI / 3.0 + 0.4 * (unit(rng) - 0.5);
        const double r = shape.half * (1.0 + 0.3 * unit(rng));
        shape.tri[v] = {shape.cy + r * std::sin(a), shape.cx + r * std::cos(a)};
      }
    }
    Rgb color = ClassColor(cls, k);
    for (auto& v : color) {
      v = std::clamp(v + kColorJitter * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
    }
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        if (!shape.Contains(y + 0.5, x + 0.5)) continue;
        mask[y * w + x] = cls;
        for (int c = 0; c < 3; ++c) rgb[(c * h + y) * w + x] = color[c];
      }
    }
  }

  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  auto image = torch::empty({3, h, w}, torch::kFloat32);
  auto* dst = image.data_ptr<float>();
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const double v = std::clamp(rgb[i] + noise(rng), 0.0, 1.0);
    dst[i] = static_cast<float>(std::round(v * 255.0) / 255.0);
  }
  SegSample sample;
  sample.image = image;
  sample.mask = torch::from_blob(mask.data(), {h, w}, torch::kInt64).clone();
  sample.id = id;
  return sample;
}

Image8 ToImage8(const torch::Tensor& chw) {
  auto t = chw.mul(255.0).round().clamp(0, 255).to(torch::kUInt8);
  if (t.dim() == 2) t = t.unsqueeze(0);
  t = t.permute({1, 2, 0}).contiguous();
  Image8 img;
  img.channels = static_cast<int>(t.size(2));
  img.height = static_cast<int>(t.size(0));
  img.width = static_cast<int>(t.size(1));
  img.pixels.assign(t.data_ptr<std::uint8_t>(),
                    t.data_ptr<std::uint8_t>() + t.numel());
  return img;
}

torch::Tensor FromImage8(const Image8& img) {
  return torch::from_blob(const_cast<std::uint8_t*>(img.pixels.data()),
                          {img.height, img.width, img.channels}, torch::kUInt8)
      .permute({2, 0, 1})
      .clone();
}

std::vector<std::int64_t> IdsOf(const std::vector<SegSample>& samples) {
  std::vector<std::int64_t> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

}  // namespace

std::vector<SegSample> GenerateShapesDataset(const ShapesOptions& options) {
  if (options.num_classes < 2) throw ConfigError("need at least 2 classes");
  if (options.count < 1) throw ConfigError("need at least 1 sample");
  if (options.height < 8 || options.width < 8) {
    throw ConfigError("images must be at least 8x8");
  }
  std::vector<SegSample> samples;
  samples.reserve(options.count);
  for (std::int64_t i = 0; i < options.count; ++i) {
    samples.push_back(GenerateSample(options, options.first_id + i));
  }
  return samples;
}

ShapesDataset MakeShapesDataset(std::int64_t train_count,
                                std::int64_t eval_count, std::int64_t size,
                                std::int64_t num_classes, std::uint64_t seed) {
  ShapesDataset ds;
  ds.num_classes = num_classes;
  ds.height = ds.width = size;
  ds.seed = seed;
  ShapesOptions o{train_count, size, size, num_classes, seed, 0};
  ds.train = GenerateShapesDataset(o);
  if (eval_count > 0) {
    o.count = eval_count;
    o.first_id = train_count;
    ds.eval = GenerateShapesDataset(o);
  }
  return ds;
}

void SaveDataset(const ShapesDataset& dataset,
                 const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  auto write = [&](const std::vector<SegSample>& samples) {
    for (const auto& s : samples) {
      const auto name = std::to_string(s.id) + ".png";
      WritePng(dir / "images" / name, ToImage8(s.image));
      WritePng(dir / "masks" / name,
               ToImage8(s.mask.to(torch::kFloat32).div(255.0)));
    }
  };
  write(dataset.train);
  write(dataset.eval);
  nlohmann::ordered_json manifest;
  manifest["format"] = "tcc-shapes";
  manifest["version"] = kDatasetFormatVersion;
  manifest["num_classes"] = dataset.num_classes;
  manifest["height"] = dataset.height;
  manifest["width"] = dataset.width;
  manifest["seed"] = dataset.seed;
  manifest["train_ids"] = IdsOf(dataset.train);
  manifest["eval_ids"] = IdsOf(dataset.eval);
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw RuntimeFailure("cannot write manifest in " + dir.string());
}

ShapesDataset LoadDataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw RuntimeFailure("no dataset manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("bad manifest in " + dir.string() + ": " + e.what());
  }
  ShapesDataset ds;
  try {
    if (manifest.at("format") != "tcc-shapes" ||
        manifest.at("version").get<int>() != kDatasetFormatVersion) {
      throw RuntimeFailure("unsupported dataset format in " + dir.string());
    }
    ds.num_classes = manifest.at("num_classes").get<std::int64_t>();
    ds.height = manifest.at("height").get<std::int64_t>();
    ds.width = manifest.at("width").get<std::int64_t>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    auto read = [&](const char* key) {
      std::vector<SegSample> samples;
      for (auto id : manifest.at(key).get<std::vector<std::int64_t>>()) {
        const auto name = std::to_string(id) + ".png";
        auto image = ReadPng(dir / "images" / name);
        auto mask = ReadPng(dir / "masks" / name);
        if (image.channels != 3 || mask.channels != 1 ||
            image.height != ds.height || image.width != ds.width ||
            mask.height != ds.height || mask.width != ds.width) {
          throw RuntimeFailure("sample " + name + " does not match manifest");
        }
        SegSample s;
        s.id = id;
        s.image = FromImage8(image).to(torch::kFloat32).div(255.0);
        s.mask = FromImage8(mask).squeeze(0).to(torch::kInt64);
        if (s.mask.max().item<std::int64_t>() >= ds.num_classes) {
          throw RuntimeFailure("mask " + name + " has a class >= num_classes");
        }
        samples.push_back(std::move(s));
      }
      return samples;
    };
    ds.train = read("train_ids");
    ds.eval = read("eval_ids");
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("bad manifest in " + dir.string() + ": " + e.what());
  }
  return ds;
}

Ratio Ratio::Parse(const std::string& text) {
  Ratio r;
  try {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      std::size_t used = 0;
      r.num = std::stoll(text.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument(text);
      const auto rest = text.substr(slash + 1);
      r.den = std::stoll(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(text);
    } else {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      r.den = 1000000;
      r.num = static_cast<std::int64_t>(std::llround(v * r.den));
      const auto g = std::gcd(r.num, r.den);
      if (g > 0) {
        r.num /= g;
        r.den /= g;
      }
    }
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse ratio '" + text + "'");
  }
  if (r.den <= 0 || r.num <= 0 || r.num > r.den) {
    throw ConfigError("ratio '" + text + "' must lie in (0, 1]");
  }
  return r;
}

std::string Ratio::ToString() const {
  return den == 1 ? std::to_string(num)
                  : std::to_string(num) + "/" + std::to_string(den);
}

Partition MakePartition(const std::vector<std::int64_t>& ids, Ratio ratio,
                        std::uint64_t seed) {
  if (ratio.num <= 0 || ratio.den <= 0 || ratio.num > ratio.den) {
    throw ConfigError("partition ratio must lie in (0, 1]");
  }
  std::vector<std::int64_t> order = ids;
  std::mt19937_64 rng(DeriveSeed(seed, SeedStream::kPartition));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_labeled = ratio.LabeledCount(static_cast<std::int64_t>(ids.size()));
  Partition p;
  p.ratio = ratio;
  p.seed = seed;
  p.labeled_ids.assign(order.begin(), order.begin() + n_labeled);
  p.unlabeled_ids.assign(order.begin() + n_labeled, order.end());
  return p;
}

void SavePartition(const Partition& partition,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  for (auto id : partition.labeled_ids) out << id << "\n";
  out << "--\n";
  for (auto id : partition.unlabeled_ids) out << id << "\n";
  if (!out) throw RuntimeFailure("cannot write partition " + path.string());
}

Partition LoadPartition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot read partition " + path.string());
  Partition p;
  bool separator_seen = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "--") {
      if (separator_seen) throw RuntimeFailure("partition: repeated '--'");
      separator_seen = true;
      continue;
    }
    try {
      std::size_t used = 0;
      const auto id = std::stoll(line, &used);
      if (used != line.size()) throw std::invalid_argument(line);
      (separator_seen ? p.unlabeled_ids : p.labeled_ids).push_back(id);
    } catch (const std::logic_error&) {
      throw RuntimeFailure("partition: bad line '" + line + "'");
    }
  }
  if (!separator_seen) throw RuntimeFailure("partition: missing '--' line");
  const auto total =
      static_cast<std::int64_t>(p.labeled_ids.size() + p.unlabeled_ids.size());
  p.ratio = {static_cast<std::int64_t>(p.labeled_ids.size()),
             std::max<std::int64_t>(total, 1)};
  return p;
}

MixBox SampleMixBox(std::int64_t height, std::int64_t width,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = std::sqrt(unit(rng));
  const auto cut_h = static_cast<std::int64_t>(std::llround(height * side));
  const auto cut_w = static_cast<std::int64_t>(std::llround(width * side));
  const auto cy = static_cast<std::int64_t>(unit(rng) * height);
  const auto cx = static_cast<std::int64_t>(unit(rng) * width);
  const auto top = std::clamp<std::int64_t>(cy - cut_h / 2, 0, height);
  const auto bottom = std::clamp<std::int64_t>(cy + cut_h - cut_h / 2, 0, height);
  const auto left = std::clamp<std::int64_t>(cx - cut_w / 2, 0, width);
  const auto right = std::clamp<std::int64_t>(cx + cut_w - cut_w / 2, 0, width);
  return MixBox{top, left, bottom - top, right - left};
}

torch::Tensor BoxMask(const std::vector<MixBox>& boxes, std::int64_t height,
                      std::int64_t width) {
  auto mask = torch::zeros({static_cast<std::int64_t>(boxes.size()), height, width},
                           torch::kBool);
  using torch::indexing::Slice;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    if (b.area() == 0) continue;
    mask.index_put_({static_cast<std::int64_t>(i),
                     Slice(b.top, b.top + b.height),
                     Slice(b.left, b.left + b.width)},
                    true);
  }
  return mask;
}

torch::Tensor ApplyMix(const torch::Tensor& a, const torch::Tensor& b,
                       const std::vector<MixBox>& boxes) {
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument("cutmix: batches differ in shape");
  }
  if (a.dim() < 3 || a.size(0) != static_cast<std::int64_t>(boxes.size())) {
    throw std::invalid_argument("cutmix: one box per sample required");
  }
  auto mask = BoxMask(boxes, a.size(-2), a.size(-1));
  if (a.dim() == 4) mask = mask.unsqueeze(1);
  return torch::where(mask, b, a);
}

MixedBatch CutMix(const torch::Tensor& images_a, const torch::Tensor& masks_a,
                  const torch::Tensor& images_b, const torch::Tensor& masks_b,
                  std::uint64_t seed) {
  if (images_a.sizes() != images_b.sizes() || images_a.dim() != 4) {
    throw std::invalid_argument("cutmix: image batches differ in shape");
  }
  if (masks_a.defined() != masks_b.defined()) {
    throw std::invalid_argument("cutmix: masks given for only one batch");
  }
  std::mt19937_64 rng(seed);
  MixedBatch out;
  for (std::int64_t i = 0; i < images_a.size(0); ++i) {
    out.boxes.push_back(SampleMixBox(images_a.size(2), images_a.size(3), rng));
  }
  out.images = ApplyMix(images_a, images_b, out.boxes);
  if (masks_a.defined()) out.masks = ApplyMix(masks_a, masks_b, out.boxes);
  return out;
}

BatchIterator::BatchIterator(std::vector<SegSample> labeled,
                             std::vector<SegSample> unlabeled,
                             std::int64_t batch_size, std::uint64_t seed,
                             std::int64_t unlabeled_batch_size)
    : labeled_(std::move(labeled)),
      unlabeled_(std::move(unlabeled)),
      batch_size_(batch_size),
      unlabeled_batch_size_(unlabeled_batch_size > 0 ? unlabeled_batch_size
                                                     : batch_size),
      labeled_seed_(DeriveSeed(seed, SeedStream::kLabeledOrder)),
      unlabeled_seed_(DeriveSeed(seed, SeedStream::kUnlabeledOrder)) {
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  if (labeled_.empty()) throw ConfigError("labeled set is empty");
  const bool labeled_short =
      static_cast<std::size_t>(batch_size_) > labeled_.size();
  const bool unlabeled_short =
      !unlabeled_.empty() &&
      static_cast<std::size_t>(unlabeled_batch_size_) > unlabeled_.size();
  if (labeled_short || unlabeled_short) {
    std::cerr << "warning: batch size exceeds the "
              << (labeled_short ? "labeled" : "unlabeled")
              << " set; samples repeat within a batch\n";
  }
}

std::vector<std::int64_t> BatchIterator::Indices(
    std::int64_t t, std::int64_t batch_size, std::int64_t set_size,
    std::uint64_t stream_seed) const {
  std::vector<std::int64_t> out;
  out.reserve(batch_size);
  for (std::int64_t k = t * batch_size; k < (t + 1) * batch_size; ++k) {
    const auto epoch = k / set_size;
    auto key = std::make_pair(stream_seed, epoch);
    auto it = permutations_.find(key);
    if (it == permutations_.end()) {
      std::vector<std::int64_t> perm(set_size);
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(
          DeriveSeed(stream_seed, SeedStream::kLabeledOrder,
                     static_cast<std::uint64_t>(epoch)));
      std::shuffle(perm.begin(), perm.end(), rng);
      it = permutations_.emplace(key, std::move(perm)).first;
    }
    out.push_back(it->second[k % set_size]);
  }
  return out;
}

PairedBatch BatchIterator::At(std::int64_t t) const {
  auto gather = [&](const std::vector<SegSample>& set,
                    const std::vector<std::int64_t>& idx, bool with_masks,
                    std::vector<std::int64_t>& ids, torch::Tensor& masks) {
    std::vector<torch::Tensor> images, labels;
    for (auto i : idx) {
      images.push_back(set[i].image);
      if (with_masks) labels.push_back(set[i].mask);
      ids.push_back(set[i].id);
    }
    if (with_masks) masks = torch::stack(labels);
    return torch::stack(images);
  };
  PairedBatch batch;
  batch.labeled.images =
      gather(labeled_, Indices(t, batch_size_, labeled_.size(), labeled_seed_), true,
             batch.labeled.ids, batch.labeled.masks);
  if (!unlabeled_.empty()) {
    UnlabeledBatch u;
    torch::Tensor unused;
    u.images = gather(unlabeled_, Indices(t, unlabeled_batch_size_, unlabeled_.size(),
                                      unlabeled_seed_),
                      false, u.ids, unused);
    batch.unlabeled = std::move(u);
  }
  return batch;
}

std::vector<SegSample> SelectSamples(const std::vector<SegSample>& pool,
                                     const std::vector<std::int64_t>& ids) {
  std::map<std::int64_t, const SegSample*> by_id;
  for (const auto& s : pool) by_id[s.id] = &s;
  std::vector<SegSample> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw RuntimeFailure("id " + std::to_string(id) + " not in dataset");
    }
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace tcc
