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
#include "tcc/students.hpp"

#include <cmath>

#include "tcc/common.hpp"

namespace tcc {
namespace {

namespace F = torch::nn::functional;

constexpr double kAttentionInitStd = 0.02;

// Normal(0, std) truncated to two standard deviations by resampling.
void TruncatedNormal(torch::Tensor& t, double std) {
  torch::NoGradGuard no_grad;
  t.normal_(0.0, std);
  for (int round = 0; round < 100; ++round) {
    auto outside = t.abs() > 2.0 * std;
    if (!outside.any().item<bool>()) return;
    t.masked_scatter_(outside, torch::randn_like(t).mul_(std).masked_select(outside));
  }
  t.clamp_(-2.0 * std, 2.0 * std);
}

void InitLinear(torch::nn::Linear& layer) {
  TruncatedNormal(layer->weight, kAttentionInitStd);
  torch::NoGradGuard no_grad;
  if (layer->bias.defined()) layer->bias.zero_();
}

void InitConv(torch::nn::Conv2d& conv) {
  torch::NoGradGuard no_grad;
  const auto& w = conv->weight;
  const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
  w.normal_(0.0, std::sqrt(2.0 / fan_in));
  if (conv->bias.defined()) conv->bias.zero_();
}

torch::Tensor UpsampleTo(const torch::Tensor& x, std::int64_t h,
                         std::int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

std::string ToString(StudentKind kind) {
  return kind == StudentKind::kConv ? "conv" : "attention";
}

std::string ToString(PositionalEmbedding mode) {
  return mode == PositionalEmbedding::kLearned ? "learned" : "none";
}

std::int64_t StudentConfig::feature_dim() const {
  if (kind == StudentKind::kConv) {
    return conv.widths.empty() ? in_channels : conv.widths.back();
  }
  return attention.embed_dim;
}

std::int64_t StudentConfig::feature_stride() const {
  if (kind == StudentKind::kAttention) return attention.patch_size;
  std::int64_t stride = 1;
  for (auto s : conv.strides) stride *= s;
  return stride;
}

void StudentConfig::Validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (image_size < 1) throw ConfigError("image_size must be >= 1");
  if (kind == StudentKind::kConv) {
    if (conv.widths.empty()) throw ConfigError("conv student needs >= 1 stage");
    if (conv.strides.size() != conv.widths.size() ||
        conv.dilations.size() != conv.widths.size()) {
      throw ConfigError("conv widths, strides and dilations differ in length");
    }
    for (std::size_t i = 0; i < conv.widths.size(); ++i) {
      if (conv.widths[i] < 1 || conv.strides[i] < 1 || conv.dilations[i] < 1) {
        throw ConfigError("conv stage " + std::to_string(i) +
                          " has a non-positive width, stride or dilation");
      }
      if (conv.widths[i] % conv.norm_groups != 0) {
        throw ConfigError("conv width " + std::to_string(conv.widths[i]) +
                          " not divisible by norm_groups");
      }
    }
    return;
  }
  const auto& a = attention;
  if (a.patch_size < 1 || a.embed_dim < 1 || a.num_heads < 1 ||
      a.num_blocks < 0 || a.mlp_ratio < 1) {
    throw ConfigError("attention student has a non-positive dimension");
  }
  if (a.embed_dim % a.num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(a.embed_dim) +
                      " not divisible by num_heads " +
                      std::to_string(a.num_heads));
  }
  if (image_size % a.patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " not divisible by patch_size " +
                      std::to_string(a.patch_size));
  }
}

torch::Tensor PseudoLabels(const torch::Tensor& logits) {
  TORCH_CHECK(logits.dim() == 4, "logits must be [B,K,H,W]");
  torch::NoGradGuard no_grad;
  // argmax returns the first maximal index on CPU.
  return logits.detach().argmax(1);
}

torch::Tensor Patchify(const torch::Tensor& images, std::int64_t patch_size) {
  if (images.dim() != 4) throw ConfigError("patchify expects [B,C,H,W]");
  const auto b = images.size(0), c = images.size(1), h = images.size(2),
             w = images.size(3);
  if (patch_size < 1 || h % patch_size != 0 || w % patch_size != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  const auto gh = h / patch_size, gw = w / patch_size;
  return images.reshape({b, c, gh, patch_size, gw, patch_size})
      .permute({0, 2, 4, 1, 3, 5})
      .reshape({b, gh * gw, c * patch_size * patch_size});
}

torch::Tensor Unpatchify(const torch::Tensor& tokens, std::int64_t patch_size,
                         std::int64_t channels, std::int64_t height,
                         std::int64_t width) {
  if (patch_size < 1 || height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError("unpatchify: size not divisible by patch size");
  }
  const auto gh = height / patch_size, gw = width / patch_size;
  if (tokens.dim() != 3 || tokens.size(1) != gh * gw ||
      tokens.size(2) != channels * patch_size * patch_size) {
    throw ConfigError("unpatchify: token array does not match target shape");
  }
  return tokens.reshape({tokens.size(0), gh, gw, channels, patch_size, patch_size})
      .permute({0, 3, 1, 4, 2, 5})
      .reshape({tokens.size(0), channels, height, width});
}

void CheckImageBatch(const torch::Tensor& images, const StudentConfig& config) {
  if (!images.defined() || images.dim() != 4) {
    throw ConfigError("image batch must be [B,C,H,W]");
  }
  if (images.size(1) != config.in_channels) {
    throw ConfigError("image batch has " + std::to_string(images.size(1)) +
                      " channels, student expects " +
                      std::to_string(config.in_channels));
  }
  if (config.kind == StudentKind::kAttention &&
      (images.size(2) != config.image_size ||
       images.size(3) != config.image_size)) {
    throw ConfigError("attention student expects " +
                      std::to_string(config.image_size) + "x" +
                      std::to_string(config.image_size) + " input");
  }
  if (!torch::isfinite(images).all().item<bool>()) {
    throw ConfigError("image batch contains non-finite values");
  }
}

ConvStudentImpl::ConvStudentImpl(StudentConfig config)
    : StudentImpl(std::move(config)) {
  config_.kind = StudentKind::kConv;
  config_.Validate();
  const auto& c = config_.conv;
  backbone_ = torch::nn::Sequential();
  std::int64_t in = config_.in_channels;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c.widths[i], 3)
                                      .stride(c.strides[i])
                                      .padding(c.dilations[i])
                                      .dilation(c.dilations[i])
                                      .bias(false));
    InitConv(conv);
    backbone_->push_back(conv);
    backbone_->push_back(torch::nn::GroupNorm(
        torch::nn::GroupNormOptions(c.norm_groups, c.widths[i])));
    backbone_->push_back(torch::nn::ReLU());
    in = c.widths[i];
  }
  head_ = torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, config_.num_classes, 1).bias(true));
  InitConv(head_);
  register_module("backbone", backbone_);
  register_module("head", head_);
}

StudentOutput ConvStudentImpl::forward(const torch::Tensor& images) {
  CheckImageBatch(images, config_);
  StudentOutput out;
  out.features = backbone_->forward(images);
  out.logits = UpsampleTo(head_->forward(out.features), images.size(2),
                          images.size(3));
  out.pseudo_labels = PseudoLabels(out.logits);
  return out;
}

SelfAttentionImpl::SelfAttentionImpl(std::int64_t dim, std::int64_t heads)
    : heads_(heads) {
  qkv_ = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj_ = register_module("proj", torch::nn::Linear(dim, dim));
  InitLinear(qkv_);
  InitLinear(proj_);
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& tokens) {
  const auto b = tokens.size(0), n = tokens.size(1), d = tokens.size(2);
  const auto head_dim = d / heads_;
  auto qkv = qkv_->forward(tokens)
                 .reshape({b, n, 3, heads_, head_dim})
                 .permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];
  auto scores = torch::matmul(q, k.transpose(-2, -1)) /
                std::sqrt(static_cast<double>(head_dim));
  auto mixed = torch::matmul(scores.softmax(-1), v);
  return proj_->forward(mixed.transpose(1, 2).reshape({b, n, d}));
}

AttentionBlockImpl::AttentionBlockImpl(std::int64_t dim, std::int64_t heads,
                                       std::int64_t mlp_ratio) {
  norm1_ = register_module(
      "norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", SelfAttention(dim, heads));
  norm2_ = register_module(
      "norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  fc1_ = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
  fc2_ = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
  InitLinear(fc1_);
  InitLinear(fc2_);
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& tokens) {
  auto x = tokens + attn_->forward(norm1_->forward(tokens));
  return x + fc2_->forward(F::gelu(fc1_->forward(norm2_->forward(x))));
}

AttentionStudentImpl::AttentionStudentImpl(StudentConfig config)
    : StudentImpl(std::move(config)) {
  config_.kind = StudentKind::kAttention;
  config_.Validate();
  const auto& a = config_.attention;
  grid_ = config_.image_size / a.patch_size;
  const auto token_dim = config_.in_channels * a.patch_size * a.patch_size;
  patch_embed_ = register_module("patch_embed",
                                 torch::nn::Linear(token_dim, a.embed_dim));
  InitLinear(patch_embed_);
  if (a.positional == PositionalEmbedding::kLearned) {
    pos_embed_ = register_parameter(
        "pos_embed", torch::zeros({1, grid_ * grid_, a.embed_dim}));
    TruncatedNormal(pos_embed_, kAttentionInitStd);
  }
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < a.num_blocks; ++i) {
    blocks_->push_back(AttentionBlock(a.embed_dim, a.num_heads, a.mlp_ratio));
  }
  head_norm_ = register_module(
      "head_norm",
      torch::nn::LayerNorm(torch::nn::LayerNormOptions({a.embed_dim})));
  head_ = register_module("head",
                          torch::nn::Linear(a.embed_dim, config_.num_classes));
  InitLinear(head_);
}

torch::Tensor AttentionStudentImpl::Tokens(const torch::Tensor& images) {
  CheckImageBatch(images, config_);
  auto x = patch_embed_->forward(Patchify(images, config_.attention.patch_size));
  if (pos_embed_.defined()) x = x + pos_embed_;
  for (const auto& block : *blocks_) {
    x = block->as<AttentionBlock>()->forward(x);
  }
  return x;
}

StudentOutput AttentionStudentImpl::forward(const torch::Tensor& images) {
  auto tokens = Tokens(images);
  const auto b = tokens.size(0);
  auto to_grid = [&](const torch::Tensor& t) {
    return t.transpose(1, 2).reshape({b, t.size(2), grid_, grid_});
  };
  StudentOutput out;
  out.features = to_grid(tokens);
  auto coarse = to_grid(head_->forward(head_norm_->forward(tokens)));
  out.logits = UpsampleTo(coarse, images.size(2), images.size(3));
  out.pseudo_labels = PseudoLabels(out.logits);
  return out;
}

std::shared_ptr<StudentImpl> MakeStudent(const StudentConfig& config) {
  if (config.kind == StudentKind::kConv) {
    return std::make_shared<ConvStudentImpl>(config);
  }
  return std::make_shared<AttentionStudentImpl>(config);
}

}  // namespace tcc
