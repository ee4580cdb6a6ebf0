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
#include "tcc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tcc {
namespace {

void CheckSameShape(const torch::Tensor& a, const torch::Tensor& b,
                    const char* what) {
  if (a.dim() != 4 || a.sizes() != b.sizes()) {
    throw std::invalid_argument(std::string(what) +
                                ": logits must share one [B,K,H,W] shape");
  }
}

double ScalarOf(const torch::Tensor& t) {
  return t.defined() ? t.detach().to(torch::kDouble).item<double>() : 0.0;
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(const std::string& component, double value)
    : RuntimeFailure([&] {
        std::ostringstream os;
        os << "non-finite loss component " << component << " = " << value;
        return os.str();
      }()),
      component_(component) {}

torch::Tensor KlPerImage(const torch::Tensor& target_logits,
                         const torch::Tensor& student_logits) {
  CheckSameShape(target_logits, student_logits, "kl_divergence");
  auto log_p = torch::log_softmax(target_logits.detach(), 1);
  auto log_q = torch::log_softmax(student_logits, 1);
  auto kl = (log_p.exp() * (log_p - log_q)).sum(1);  // [B,H,W]
  return kl.flatten(1).mean(1);
}

torch::Tensor KlDivergence(const torch::Tensor& target_logits,
                           const torch::Tensor& student_logits) {
  return KlPerImage(target_logits, student_logits).mean();
}

torch::Tensor CrossDistill(const torch::Tensor& conv_target,
                           const torch::Tensor& attention_target,
                           const torch::Tensor& conv_student,
                           const torch::Tensor& attention_student,
                           std::int64_t normalizer) {
  CheckSameShape(conv_student, attention_student, "ccd_loss");
  const auto n = normalizer > 0 ? normalizer : conv_student.size(0);
  auto to_attention = KlPerImage(conv_target, attention_student);
  auto to_conv = KlPerImage(attention_target, conv_student);
  return (to_attention.sum() + to_conv.sum()) / static_cast<double>(n);
}

torch::Tensor CcdLoss(const torch::Tensor& conv_logits,
                      const torch::Tensor& attention_logits,
                      std::int64_t normalizer) {
  return CrossDistill(conv_logits, attention_logits, conv_logits,
                      attention_logits, normalizer);
}

torch::Tensor CcdLoss(const StudentOutput& conv_out,
                      const StudentOutput& attention_out,
                      std::int64_t normalizer) {
  return CcdLoss(conv_out.logits, attention_out.logits, normalizer);
}

torch::Tensor DiceLoss(const torch::Tensor& logits, const torch::Tensor& gt) {
  if (logits.dim() != 4 || gt.dim() != 3 || logits.size(0) != gt.size(0) ||
      logits.size(2) != gt.size(1) || logits.size(3) != gt.size(2)) {
    throw std::invalid_argument("dice_loss: logits [B,K,H,W] and gt [B,H,W] "
                                "do not match");
  }
  const auto b = logits.size(0), k = logits.size(1);
  if (gt.numel() > 0 &&
      (gt.min().item<std::int64_t>() < 0 || gt.max().item<std::int64_t>() >= k)) {
    throw std::invalid_argument("dice_loss: ground truth class outside [0," +
                                std::to_string(k) + ")");
  }
  auto probs = torch::softmax(logits, 1).reshape({b, k, -1});
  auto onehot = torch::one_hot(gt.reshape({b, -1}).to(torch::kLong), k)
                    .permute({0, 2, 1})
                    .to(probs.scalar_type());
  auto inter = (probs * onehot).sum(2);
  auto pred_sum = probs.sum(2);
  auto gt_sum = onehot.sum(2);
  auto dice = (2.0 * inter + kDiceSmoothing) /
              (pred_sum + gt_sum + kDiceSmoothing);  // [B,K]
  auto present = gt_sum.gt(0).to(dice.scalar_type());
  auto mean_dice = (dice * present).sum(1) / present.sum(1).clamp_min(1.0);
  return (1.0 - mean_dice).mean();
}

torch::Tensor SupervisedLoss(const StudentOutput& conv_out,
                             const StudentOutput& attention_out,
                             const torch::Tensor& gt) {
  return DiceLoss(conv_out.logits, gt) + DiceLoss(attention_out.logits, gt);
}

double Rampup(std::int64_t t, std::int64_t ramp_iterations) {
  if (t < 0) throw std::invalid_argument("rampup: negative iteration");
  if (ramp_iterations <= 0) return 1.0;
  const double phase =
      1.0 - static_cast<double>(std::min(t, ramp_iterations)) /
                static_cast<double>(ramp_iterations);
  return std::exp(-5.0 * phase * phase);
}

double CombineObjective(double l_sup, double l_ccd, double l_cfcd, double g,
                        double lambda) {
  return l_sup + g * (l_ccd + lambda * l_cfcd);
}

Objective TotalLoss(const LossTerms& terms, double g, double lambda) {
  Objective out;
  auto& b = out.bundle;
  b.l_sup = ScalarOf(terms.sup);
  b.l_ccd = ScalarOf(terms.ccd);
  b.l_cfcd = ScalarOf(terms.cfcd);
  b.g = g;
  b.lambda = lambda;
  if (!std::isfinite(b.l_sup)) throw NonFiniteLoss("loss_sup", b.l_sup);
  if (!std::isfinite(b.l_ccd)) throw NonFiniteLoss("loss_ccd", b.l_ccd);
  if (!std::isfinite(b.l_cfcd)) throw NonFiniteLoss("loss_cfcd", b.l_cfcd);
  b.total = CombineObjective(b.l_sup, b.l_ccd, b.l_cfcd, g, lambda);

  if (!terms.sup.defined()) {
    throw std::invalid_argument("total_loss: supervised term is required");
  }
  torch::Tensor unsup;
  if (terms.ccd.defined()) unsup = terms.ccd;
  if (terms.cfcd.defined() && lambda != 0.0) {
    unsup = unsup.defined() ? unsup + lambda * terms.cfcd : lambda * terms.cfcd;
  }
  out.value = (unsup.defined() && g != 0.0) ? terms.sup + g * unsup : terms.sup;
  return out;
}

}  // namespace tcc
