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
#ifndef TCC_STUDENTS_HPP_
#define TCC_STUDENTS_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace tcc {

enum class StudentKind { kConv, kAttention };
enum class PositionalEmbedding { kLearned, kNone };

std::string ToString(StudentKind kind);
std::string ToString(PositionalEmbedding mode);

struct ConvStudentConfig {
  // One 3x3 conv + GroupNorm + ReLU per stage.
  std::vector<std::int64_t> widths{32, 64, 64, 64};
  std::vector<std::int64_t> strides{2, 2, 1, 1};
  std::vector<std::int64_t> dilations{1, 1, 2, 2};
  std::int64_t norm_groups = 8;
};

struct AttentionStudentConfig {
  std::int64_t patch_size = 4;
  std::int64_t embed_dim = 64;
  std::int64_t num_heads = 4;
  std::int64_t num_blocks = 4;
  std::int64_t mlp_ratio = 2;
  PositionalEmbedding positional = PositionalEmbedding::kLearned;
};

struct StudentConfig {
  StudentKind kind = StudentKind::kConv;
  std::int64_t num_classes = 4;
  std::int64_t in_channels = 3;
  // Square input side. The attention student sizes its positional table
  // from this.
  std::int64_t image_size = 64;
  ConvStudentConfig conv;
  AttentionStudentConfig attention;

  // Width D of the feature map handed to feature distillation.
  std::int64_t feature_dim() const;
  // Total stride between the input and the feature grid.
  std::int64_t feature_stride() const;
  // Throws ConfigError on an inconsistent configuration.
  void Validate() const;
};

// Features F [B,D,h,w], logits P [B,K,H,W] and pseudo labels L [B,H,W].
// Pseudo labels never carry gradient.
struct StudentOutput {
  torch::Tensor features;
  torch::Tensor logits;
  torch::Tensor pseudo_labels;
};

// Per-pixel argmax over the class dimension of [B,K,H,W] logits. Ties go to
// the lowest class index. The result is an int64 tensor outside the graph.
torch::Tensor PseudoLabels(const torch::Tensor& logits);

// [B,C,H,W] -> [B, (H/p)(W/p), C*p*p]. Tokens are row-major over the patch
// grid; each token is laid out channel-major, then patch row, then column.
torch::Tensor Patchify(const torch::Tensor& images, std::int64_t patch_size);
torch::Tensor Unpatchify(const torch::Tensor& tokens, std::int64_t patch_size,
                         std::int64_t channels, std::int64_t height,
                         std::int64_t width);

// Throws ConfigError unless `images` is a finite [B,C,H,W] batch matching
// the config.
void CheckImageBatch(const torch::Tensor& images, const StudentConfig& config);

class StudentImpl : public torch::nn::Module {
 public:
  explicit StudentImpl(StudentConfig config) : config_(std::move(config)) {}
  virtual StudentOutput forward(const torch::Tensor& images) = 0;
  const StudentConfig& config() const { return config_; }

 protected:
  StudentConfig config_;
};

class ConvStudentImpl : public StudentImpl {
 public:
  explicit ConvStudentImpl(StudentConfig config);
  StudentOutput forward(const torch::Tensor& images) override;

  torch::nn::Conv2d head() const { return head_; }

 private:
  torch::nn::Sequential backbone_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(ConvStudent);

class SelfAttentionImpl : public torch::nn::Module {
 public:
  SelfAttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& tokens);

 private:
  std::int64_t heads_;
  torch::nn::Linear qkv_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(SelfAttention);

// Pre-norm transformer block.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(std::int64_t dim, std::int64_t heads,
                     std::int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& tokens);

 private:
  torch::nn::LayerNorm norm1_{nullptr};
  SelfAttention attn_{nullptr};
  torch::nn::LayerNorm norm2_{nullptr};
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(AttentionBlock);

class AttentionStudentImpl : public StudentImpl {
 public:
  explicit AttentionStudentImpl(StudentConfig config);
  StudentOutput forward(const torch::Tensor& images) override;

  // Token features after the last block, before the head: [B, N_tok, D].
  torch::Tensor Tokens(const torch::Tensor& images);

  torch::Tensor positional_embedding() const { return pos_embed_; }
  torch::nn::Linear head() const { return head_; }

 private:
  std::int64_t grid_ = 0;
  torch::nn::Linear patch_embed_{nullptr};
  torch::Tensor pos_embed_;
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::LayerNorm head_norm_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(AttentionStudent);

// Builds a student of the configured kind. Initialization draws from the
// global torch generator; seed it first for reproducible weights.
std::shared_ptr<StudentImpl> MakeStudent(const StudentConfig& config);

}  // namespace tcc

#endif  // TCC_STUDENTS_HPP_
