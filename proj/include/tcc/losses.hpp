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
#ifndef TCC_LOSSES_HPP_
#define TCC_LOSSES_HPP_

#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "tcc/common.hpp"
#include "tcc/students.hpp"

namespace tcc {

constexpr double kDiceSmoothing = 1.0;
constexpr double kDefaultLambda = 1.0;

// A loss component came out NaN or infinite.
class NonFiniteLoss : public RuntimeFailure {
 public:
  NonFiniteLoss(const std::string& component, double value);
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

// Per-image mean over pixels of KL(softmax(target) || softmax(student)), in
// nats. The target is detached. Returns [B].
torch::Tensor KlPerImage(const torch::Tensor& target_logits,
                         const torch::Tensor& student_logits);

// Mean over all B*H*W pixels; gradient only reaches `student_logits`.
torch::Tensor KlDivergence(const torch::Tensor& target_logits,
                           const torch::Tensor& student_logits);

// Bidirectional cross distillation: each student is the detached teacher of
// the other. The per-image KLs of both directions are summed over the batch
// and divided by `normalizer` (the batch's own size by default).
torch::Tensor CcdLoss(const torch::Tensor& conv_logits,
                      const torch::Tensor& attention_logits,
                      std::int64_t normalizer = 0);
torch::Tensor CcdLoss(const StudentOutput& conv_out,
                      const StudentOutput& attention_out,
                      std::int64_t normalizer = 0);

// Cross distillation with explicit targets, e.g. CutMix-mixed teacher
// predictions: KL(conv_target -> attention_student) +
// KL(attention_target -> conv_student), per-image sums over the batch divided
// by `normalizer` (batch size when 0).
torch::Tensor CrossDistill(const torch::Tensor& conv_target,
                           const torch::Tensor& attention_target,
                           const torch::Tensor& conv_student,
                           const torch::Tensor& attention_student,
                           std::int64_t normalizer = 0);

// Soft Dice with smoothing 1, averaged over the classes present in each
// image's ground truth, then over the batch. gt is [B,H,W] in [0,K).
torch::Tensor DiceLoss(const torch::Tensor& logits, const torch::Tensor& gt);

// Dice of both students against the same ground truth, batch-averaged.
torch::Tensor SupervisedLoss(const StudentOutput& conv_out,
                             const StudentOutput& attention_out,
                             const torch::Tensor& gt);

// exp(-5 (1 - min(t, T)/T)^2); identically 1 when ramp_iterations == 0.
double Rampup(std::int64_t t, std::int64_t ramp_iterations);

struct LossBundle {
  double l_sup = 0.0;
  double l_ccd = 0.0;
  double l_cfcd = 0.0;
  double g = 0.0;
  double lambda = kDefaultLambda;
  double total = 0.0;
};

// The one place the objective is assembled. Recombining the logged
// components with this function reproduces `total` bit for bit.
double CombineObjective(double l_sup, double l_ccd, double l_cfcd, double g,
                        double lambda);

// Undefined tensors count as an absent (zero) term.
struct LossTerms {
  torch::Tensor sup;
  torch::Tensor ccd;
  torch::Tensor cfcd;
};

struct Objective {
  torch::Tensor value;  // differentiable total
  LossBundle bundle;
};

// L = L_s + g (L_d + lambda L_f). Throws NonFiniteLoss naming the first
// non-finite component.
Objective TotalLoss(const LossTerms& terms, double g,
                    double lambda = kDefaultLambda);

}  // namespace tcc

#endif  // TCC_LOSSES_HPP_
