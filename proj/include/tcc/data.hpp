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
#ifndef TCC_DATA_HPP_
#define TCC_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace tcc {

struct SegSample {
  torch::Tensor image;  // [3,H,W] float32 in [0,1], quantized to 1/255 steps
  torch::Tensor mask;   // [H,W] int64 in [0,K)
  std::int64_t id = 0;
};

struct ShapesOptions {
  std::int64_t count = 200;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t num_classes = 4;
  std::uint64_t seed = 0;
  // Ids are first_id, first_id+1, ...; a sample depends only on (seed, id).
  std::int64_t first_id = 0;
};

// Images with 1-3 filled rectangles, disks or triangles on a gradient
// background. Class 0 is background; each shape gets a class with a
// class-specific base colour. Later shapes occlude earlier ones and the mask
// follows the painted geometry. The first shape of sample `id` has class
// 1 + id mod (K-1) so every class appears once K-1 consecutive ids exist.
std::vector<SegSample> GenerateShapesDataset(const ShapesOptions& options);

// A training pool plus a held-out evaluation split.
struct ShapesDataset {
  std::int64_t num_classes = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::uint64_t seed = 0;
  std::vector<SegSample> train;
  std::vector<SegSample> eval;
};

ShapesDataset MakeShapesDataset(std::int64_t train_count,
                                std::int64_t eval_count, std::int64_t size,
                                std::int64_t num_classes, std::uint64_t seed);

// Directory layout: images/<id>.png (RGB), masks/<id>.png (class indices),
// manifest.json.
void SaveDataset(const ShapesDataset& dataset, const std::filesystem::path& dir);
ShapesDataset LoadDataset(const std::filesystem::path& dir);

// Label fraction as an exact rational.
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;

  // Accepts "1/8", "0.125" or "1".
  static Ratio Parse(const std::string& text);
  std::string ToString() const;
  double value() const { return static_cast<double>(num) / den; }
  std::int64_t LabeledCount(std::int64_t total) const {
    return (num * total) / den;
  }
};

struct Partition {
  std::vector<std::int64_t> labeled_ids;
  std::vector<std::int64_t> unlabeled_ids;
  Ratio ratio;
  std::uint64_t seed = 0;
};

// Seeded uniform shuffle; the first floor(ratio * n) ids are labeled.
Partition MakePartition(const std::vector<std::int64_t>& ids, Ratio ratio,
                        std::uint64_t seed);

// Labeled ids, a "--" line, unlabeled ids; one id per line.
void SavePartition(const Partition& partition, const std::filesystem::path& path);
Partition LoadPartition(const std::filesystem::path& path);

struct MixBox {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t area() const { return height * width; }
};

// CutMix box: area fraction beta ~ U(0,1) at the image's aspect ratio,
// uniform centre, clipped to the image.
MixBox SampleMixBox(std::int64_t height, std::int64_t width,
                    std::mt19937_64& rng);

// [B,H,W] bool, true inside each sample's box.
torch::Tensor BoxMask(const std::vector<MixBox>& boxes, std::int64_t height,
                      std::int64_t width);

// Replaces each sample's box region of `a` by `b`. Works on [B,H,W] and
// [B,C,H,W] tensors.
torch::Tensor ApplyMix(const torch::Tensor& a, const torch::Tensor& b,
                       const std::vector<MixBox>& boxes);

struct MixedBatch {
  torch::Tensor images;  // [B,C,H,W]
  torch::Tensor masks;   // [B,H,W], undefined when no masks were given
  std::vector<MixBox> boxes;
};

// masks_a / masks_b may be undefined (image-only mixing).
MixedBatch CutMix(const torch::Tensor& images_a, const torch::Tensor& masks_a,
                  const torch::Tensor& images_b, const torch::Tensor& masks_b,
                  std::uint64_t seed);

struct LabeledBatch {
  torch::Tensor images;  // [B,3,H,W]
  torch::Tensor masks;   // [B,H,W]
  std::vector<std::int64_t> ids;
};

// No mask field: ground truth of unlabeled samples is unreachable from here.
struct UnlabeledBatch {
  torch::Tensor images;
  std::vector<std::int64_t> ids;
};

struct PairedBatch {
  LabeledBatch labeled;
  std::optional<UnlabeledBatch> unlabeled;
};

// Each set is read as an endless stream of per-epoch permutations (seeded
// independently per set and epoch); batch t is stream elements
// [t*bs, (t+1)*bs). Batches are a pure function of t, so resuming needs no
// iterator state.
class BatchIterator {
 public:
  // unlabeled_batch_size <= 0 means "same as batch_size" (1:1 composition).
  BatchIterator(std::vector<SegSample> labeled, std::vector<SegSample> unlabeled,
                std::int64_t batch_size, std::uint64_t seed,
                std::int64_t unlabeled_batch_size = 0);

  PairedBatch At(std::int64_t t) const;
  PairedBatch Next() { return At(position_++); }
  void Seek(std::int64_t t) { position_ = t; }
  std::int64_t position() const { return position_; }
  bool semi_supervised() const { return !unlabeled_.empty(); }

 private:
  std::vector<std::int64_t> Indices(std::int64_t t, std::int64_t batch_size,
                                    std::int64_t set_size,
                                    std::uint64_t stream_seed) const;

  std::vector<SegSample> labeled_;
  std::vector<SegSample> unlabeled_;
  std::int64_t batch_size_;
  std::int64_t unlabeled_batch_size_;
  std::uint64_t labeled_seed_;
  std::uint64_t unlabeled_seed_;
  std::int64_t position_ = 0;
  mutable std::map<std::pair<std::uint64_t, std::int64_t>,
                   std::vector<std::int64_t>>
      permutations_;
};

// Samples whose id is listed, in list order. Throws on unknown ids.
std::vector<SegSample> SelectSamples(const std::vector<SegSample>& pool,
                                     const std::vector<std::int64_t>& ids);

}  // namespace tcc

#endif  // TCC_DATA_HPP_
