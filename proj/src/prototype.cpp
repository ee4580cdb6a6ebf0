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
#include "tcc/prototype.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tcc {
namespace {

std::string ShapeString(const torch::Tensor& t) {
  std::string s = "[";
  for (std::int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

// [B,h,w] labels -> [B,K,h*w] float one-hot in the features' dtype.
torch::Tensor OneHot(const torch::Tensor& labels, std::int64_t num_classes,
                     torch::ScalarType dtype) {
  const auto b = labels.size(0);
  auto flat = labels.reshape({b, -1});
  return torch::one_hot(flat, num_classes).permute({0, 2, 1}).to(dtype);
}

}  // namespace

torch::Tensor NearestResize(const torch::Tensor& map, std::int64_t h,
                            std::int64_t w) {
  if (map.dim() != 3) throw std::invalid_argument("expected a [B,H,W] map");
  if (h <= 0 || w <= 0) {
    throw std::invalid_argument("target size must be positive, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  const auto big_h = map.size(1), big_w = map.size(2);
  if (h == big_h && w == big_w) return map;
  auto opts = torch::TensorOptions().dtype(torch::kLong).device(map.device());
  auto rows = torch::arange(h, opts).mul(big_h).floor_divide(h);
  auto cols = torch::arange(w, opts).mul(big_w).floor_divide(w);
  return map.index_select(1, rows).index_select(2, cols);
}

torch::Tensor DownsampleLabels(const torch::Tensor& labels, std::int64_t h,
                               std::int64_t w) {
  if (labels.dim() != 3) throw std::invalid_argument("labels must be [B,H,W]");
  if (h <= 0 || w <= 0) {
    throw std::invalid_argument("downsample target must be positive");
  }
  if (h > labels.size(1) || w > labels.size(2)) {
    throw std::invalid_argument("downsample target " + std::to_string(h) + "x" +
                                std::to_string(w) + " exceeds label map " +
                                ShapeString(labels));
  }
  return NearestResize(labels, h, w);
}

bool PrototypeTable::Has(std::int64_t image, std::int64_t cls) const {
  const auto row = scope == PrototypeScope::kBatch ? 0 : image;
  return counts[row][cls].item<std::int64_t>() > 0;
}

torch::Tensor PrototypeTable::Get(std::int64_t image, std::int64_t cls) const {
  if (!Has(image, cls)) {
    throw std::logic_error("no prototype for class " + std::to_string(cls));
  }
  const auto row = scope == PrototypeScope::kBatch ? 0 : image;
  return prototypes[row][cls];
}

PrototypeTable ClassPrototypes(const torch::Tensor& features,
                               const torch::Tensor& labels,
                               std::int64_t num_classes, PrototypeScope scope) {
  if (features.dim() != 4 || labels.dim() != 3 ||
      features.size(0) != labels.size(0) ||
      features.size(2) != labels.size(1) ||
      features.size(3) != labels.size(2)) {
    throw std::invalid_argument("features " + ShapeString(features) +
                                " and labels " + ShapeString(labels) +
                                " are not spatially aligned");
  }
  const auto b = features.size(0), d = features.size(1);
  auto mask = OneHot(labels, num_classes, features.scalar_type());  // [B,K,N]
  auto flat = features.reshape({b, d, -1}).transpose(1, 2);         // [B,N,D]
  auto sums = torch::bmm(mask, flat);                               // [B,K,D]
  auto counts = mask.sum(2);                                        // [B,K]
  if (scope == PrototypeScope::kBatch) {
    sums = sums.sum(0, /*keepdim=*/true);
    counts = counts.sum(0, /*keepdim=*/true);
  }
  PrototypeTable table;
  table.prototypes = sums / counts.clamp_min(1.0).unsqueeze(-1);
  table.counts = counts.detach().round().to(torch::kLong);
  table.scope = scope;
  return table;
}

torch::Tensor CfMap(const torch::Tensor& features, const torch::Tensor& labels,
                    const PrototypeTable& table) {
  const auto b = features.size(0), d = features.size(1), h = features.size(2),
             w = features.size(3);
  const auto k = table.num_classes();
  auto mask = OneHot(labels, k, features.scalar_type());  // [B,K,N]
  auto counts = table.counts;
  if (table.scope == PrototypeScope::kBatch) counts = counts.expand({b, k});
  auto present = mask.sum(2).gt(0);
  if (present.logical_and(counts.eq(0)).any().item<bool>()) {
    throw std::logic_error("cf_map: a pixel label has no prototype");
  }
  auto protos = table.prototypes;
  if (table.scope == PrototypeScope::kBatch) protos = protos.expand({b, k, d});
  // Unpool: every pixel receives the prototype of its class.
  auto per_pixel = torch::bmm(mask.transpose(1, 2), protos);  // [B,N,D]
  auto flat = features.reshape({b, d, -1}).transpose(1, 2);   // [B,N,D]
  auto dot = (flat * per_pixel).sum(-1);
  auto norms = flat.norm(2, -1) * per_pixel.norm(2, -1);
  return (dot / (norms + kCosineEpsilon)).reshape({b, h, w});
}

torch::Tensor CfcdLoss(const torch::Tensor& cf_a, const torch::Tensor& cf_b) {
  if (cf_a.sizes() != cf_b.sizes()) {
    throw std::invalid_argument("CF maps differ in shape: " +
                                ShapeString(cf_a) + " vs " + ShapeString(cf_b));
  }
  return (cf_a - cf_b).square().mean();
}

torch::Tensor CfcdPipeline(const CfcdInputs& in, std::int64_t num_classes,
                           PrototypeScope scope) {
  auto cf_for = [&](const torch::Tensor& features,
                    const torch::Tensor& other_labels) {
    auto labels = DownsampleLabels(other_labels.detach(), features.size(2),
                                   features.size(3));
    auto table = ClassPrototypes(features, labels, num_classes, scope);
    return CfMap(features, labels, table);
  };
  auto cf_conv = cf_for(in.conv_features, in.attention_labels);
  auto cf_attention = cf_for(in.attention_features, in.conv_labels);
  // Align resolutions by shrinking the finer map.
  const auto h = std::min(cf_conv.size(1), cf_attention.size(1));
  const auto w = std::min(cf_conv.size(2), cf_attention.size(2));
  return CfcdLoss(NearestResize(cf_conv, h, w),
                  NearestResize(cf_attention, h, w));
}

torch::Tensor CfcdPipeline(const StudentOutput& conv_out,
                           const StudentOutput& attention_out,
                           std::int64_t num_classes, PrototypeScope scope) {
  return CfcdPipeline(CfcdInputs{conv_out.features, attention_out.features,
                                 conv_out.pseudo_labels,
                                 attention_out.pseudo_labels},
                      num_classes, scope);
}

}  // namespace tcc
