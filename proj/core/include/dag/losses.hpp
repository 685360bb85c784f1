#pragma once

#include <torch/torch.h>

namespace dag {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& gt);

/// 1 - (2 sum(p g) + 1) / (sum p + sum g + 1). A 2-D input is treated as a
/// batch of rows and the per-row losses are averaged.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& gt);

struct LossTerms {
  torch::Tensor bce;
  torch::Tensor dice;
  torch::Tensor total;
};

LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& gt);

struct LossBreakdown {
  double bce = 0.0;
  double dice = 0.0;
  double total = 0.0;  // bce + dice, summed in double
};

LossBreakdown breakdown(const LossTerms& terms);

}  // namespace dag
