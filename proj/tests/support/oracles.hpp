#pragma once

// Independent brute-force reference implementations used by the unit and
// acceptance tests. Nothing here calls into the library under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace dag::oracle {

inline std::optional<double> auc_pairs(const std::vector<double>& pred, const std::vector<double>& gt,
                                       double gt_threshold = 0.5) {
  double wins = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] < gt_threshold) continue;
    for (size_t j = 0; j < pred.size(); ++j) {
      if (gt[j] >= gt_threshold) continue;
      ++pairs;
      if (pred[i] > pred[j]) {
        wins += 1.0;
      } else if (pred[i] == pred[j]) {
        wins += 0.5;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

inline double iou_direct(const std::vector<double>& pred, const std::vector<double>& gt, double tau,
                         double gt_threshold = 0.5) {
  long inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > tau;
    const bool g = gt[i] >= gt_threshold;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double miou_sweep(const std::vector<double>& pred, const std::vector<double>& gt) {
  double sum = 0.0;
  for (int k = 1; k <= 99; ++k) sum += iou_direct(pred, gt, k / 100.0);
  return sum / 99.0;
}

inline double sim_direct(const std::vector<double>& pred, const std::vector<double>& gt) {
  double sp = 0.0, sg = 0.0;
  for (double v : pred) sp += v;
  for (double v : gt) sg += v;
  if (sp == 0.0 && sg == 0.0) return 1.0;
  if (sp == 0.0 || sg == 0.0) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::min(pred[i] / sp, gt[i] / sg);
  return s;
}

inline double mae_direct(const std::vector<double>& pred, const std::vector<double>& gt) {
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

inline double bce_direct(const std::vector<double>& pred, const std::vector<double>& gt) {
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], 1e-7, 1.0 - 1e-7);
    s -= gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(pred.size());
}

inline double dice_direct(const std::vector<double>& pred, const std::vector<double>& gt) {
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    sp += pred[i];
    sg += gt[i];
  }
  return 1.0 - (2.0 * inter + 1.0) / (sp + sg + 1.0);
}

// Random (pred, gt) instance with deliberate ties: predictions are drawn from
// a coarse grid part of the time.
struct MetricInstance {
  std::vector<double> pred, gt;
};

inline MetricInstance random_instance(std::mt19937_64& rng, int max_n = 200) {
  std::uniform_int_distribution<int> size(1, max_n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 10);
  const int n = size(rng);
  const bool coarse = unit(rng) < 0.5;
  MetricInstance m;
  for (int i = 0; i < n; ++i) {
    m.pred.push_back(coarse ? grid(rng) / 10.0 : unit(rng));
    m.gt.push_back(unit(rng) < 0.3 ? grid(rng) / 10.0 : unit(rng));
  }
  return m;
}

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
};

// Central finite differences of a scalar function of `inputs` (double leaf
// tensors with requires_grad) against autograd.
inline GradCheck finite_difference_check(const std::function<torch::Tensor()>& loss,
                                         const std::vector<torch::Tensor>& inputs, double eps = 1e-6) {
  for (const auto& t : inputs) {
    if (t.grad().defined()) t.grad().zero_();
  }
  loss().backward();
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (const auto& t : inputs) {
    const auto analytic = t.grad().defined() ? t.grad().clone() : torch::zeros_like(t);
    torch::NoGradGuard no_grad;
    auto flat = t.view({-1});
    auto g = analytic.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + eps;
      const double up = loss().item<double>();
      flat[i] = orig - eps;
      const double down = loss().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g[i].item<double>();
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return {std::sqrt(diff2) / denom, std::sqrt(a2)};
}

/// All parameters of a module that take part in optimisation.
inline std::vector<torch::Tensor> trainable(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

/// Randomises every trainable parameter so zero-initialised layers do not
/// hide gradient paths.
inline void randomize(torch::nn::Module& m, std::uint64_t seed, double scale = 0.5) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  for (auto& p : m.parameters()) {
    if (p.requires_grad()) p.copy_(torch::randn(p.sizes(), gen, p.options()) * scale);
  }
}

}  // namespace dag::oracle
