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
#ifndef TCC_PROTOTYPE_HPP_
#define TCC_PROTOTYPE_HPP_

#include <cstdint>

#include <torch/torch.h>

#include "tcc/students.hpp"

namespace tcc {

// Prototypes are averaged within each image by default. kBatch pools one
// table over the whole batch.
enum class PrototypeScope { kImage, kBatch };

constexpr double kCosineEpsilon = 1e-8;

// Nearest-neighbour resize of a [B,H,W] map: out[b,i,j] = in[b, iH/h, jW/w]
// with integer division. Works for any dtype.
torch::Tensor NearestResize(const torch::Tensor& map, std::int64_t h,
                            std::int64_t w);

// NearestResize restricted to shrinking integer label maps.
torch::Tensor DownsampleLabels(const torch::Tensor& labels, std::int64_t h,
                               std::int64_t w);

// Class-wise mean features. Row g of `prototypes` belongs to image g (kImage)
// or to the whole batch (kBatch, one row). A class with zero count has no
// prototype; its row holds zeros and must not be read.
struct PrototypeTable {
  torch::Tensor prototypes;  // [G, K, D], differentiable w.r.t. features
  torch::Tensor counts;      // [G, K] int64, |S_c|
  PrototypeScope scope = PrototypeScope::kImage;

  std::int64_t num_classes() const { return counts.size(1); }
  bool Has(std::int64_t image, std::int64_t cls) const;
  torch::Tensor Get(std::int64_t image, std::int64_t cls) const;
};

// features [B,D,h,w], labels [B,h,w] with values in [0, num_classes).
PrototypeTable ClassPrototypes(const torch::Tensor& features,
                               const torch::Tensor& labels,
                               std::int64_t num_classes,
                               PrototypeScope scope = PrototypeScope::kImage);

// Cosine similarity of every pixel feature to the prototype of its label,
// i.e. the prototypes unpooled back onto their masks. Returns [B,h,w].
// Throws std::logic_error if a pixel's label has no prototype.
torch::Tensor CfMap(const torch::Tensor& features, const torch::Tensor& labels,
                    const PrototypeTable& table);

// Mean squared difference of two CF maps of identical shape.
torch::Tensor CfcdLoss(const torch::Tensor& cf_a, const torch::Tensor& cf_b);

// Cross-masked feature consistency: the conv student's features are grouped
// by the attention student's pseudo labels and vice versa. Pseudo labels are
// taken from `labels_for_*` when given (e.g. CutMix-mixed labels), otherwise
// from the outputs themselves.
struct CfcdInputs {
  torch::Tensor conv_features;
  torch::Tensor attention_features;
  torch::Tensor conv_labels;       // [B,H,W] pseudo labels of the conv student
  torch::Tensor attention_labels;  // [B,H,W] pseudo labels of the attention student
};

torch::Tensor CfcdPipeline(const CfcdInputs& in, std::int64_t num_classes,
                           PrototypeScope scope = PrototypeScope::kImage);
torch::Tensor CfcdPipeline(const StudentOutput& conv_out,
                           const StudentOutput& attention_out,
                           std::int64_t num_classes,
                           PrototypeScope scope = PrototypeScope::kImage);

}  // namespace tcc

#endif  // TCC_PROTOTYPE_HPP_
