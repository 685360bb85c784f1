#include "dag/losses.hpp"

#include "dag/errors.hpp"

namespace dag {
namespace {

void check_shapes(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) {
    fail(ErrorKind::Structural, "loss inputs have different shapes");
  }
}

}  // namespace

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  check_shapes(pred, gt);
  const auto p = pred.clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(gt * torch::log(p) + (1.0 - gt) * torch::log(1.0 - p)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  check_shapes(pred, gt);
  const auto p = pred.dim() == 1 ? pred.unsqueeze(0) : pred.flatten(1);
  const auto g = gt.dim() == 1 ? gt.unsqueeze(0) : gt.flatten(1);
  const auto inter = (p * g).sum(1);
  const auto dice = (2.0 * inter + kDiceSmooth) / (p.sum(1) + g.sum(1) + kDiceSmooth);
  return (1.0 - dice).mean();
}

LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  LossTerms t;
  t.bce = bce_loss(pred, gt);
  t.dice = dice_loss(pred, gt);
  t.total = t.bce + t.dice;
  return t;
}

LossBreakdown breakdown(const LossTerms& terms) {
  LossBreakdown b;
  b.bce = terms.bce.item<double>();
  b.dice = terms.dice.item<double>();
  b.total = b.bce + b.dice;
  return b;
}

}  // namespace dag
