#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "dag/nn.hpp"

namespace dag {

struct PointLevel {
  torch::Tensor coords;  // N_l x 3, rows taken from the input cloud
  torch::Tensor feats;   // N_l x C_l
};

// Hierarchy from full resolution (level 0) to the deepest, coarsest level.
struct PointLevels {
  std::vector<PointLevel> levels;
};

struct PointEncoding {
  torch::Tensor cls;  // 1 x d_p
  PointLevels levels;
};

/// Farthest-point sampling of `count` indices, starting at index 0; ties go
/// to the lowest index. Coincident clouds may yield repeated indices.
std::vector<int64_t> farthest_point_sample(const torch::Tensor& coords, int64_t count);

/// For each centre, the first `group_size` cloud indices (in index order)
/// within `radius`, padded by repeating the first hit. Returns M x group_size.
/// The nearest point is used when the ball is empty.
torch::Tensor ball_query(const torch::Tensor& centers, const torch::Tensor& coords, double radius,
                         int64_t group_size);

struct PointEncoderOptions {
  std::vector<int64_t> level_sizes{512, 128};
  std::vector<double> radii{0.2, 0.4};
  std::vector<int64_t> group_sizes{32, 32};
  // Feature width of level 0 followed by one width per abstraction stage.
  std::vector<int64_t> level_channels{32, 64, 128};
  int64_t cls_dim = 64;
  bool freeze = false;  // emulate a frozen pretrained encoder
};

// Set-abstraction encoder: a per-point stem at level 0, then per stage
// FPS + ball-query grouping + shared perceptron + max-pool. [CLS] is a
// linear map of the concatenated global max- and mean-pool of the deepest level.
class PointEncoderImpl : public torch::nn::Module {
 public:
  explicit PointEncoderImpl(const PointEncoderOptions& options);

  PointEncoding forward(const torch::Tensor& coords);

  const PointEncoderOptions& options() const noexcept { return options_; }
  bool frozen() const noexcept { return options_.freeze; }

 private:
  PointEncoderOptions options_;
  Mlp stem_{nullptr};
  std::vector<Mlp> stages_;
  torch::nn::Linear cls_head_{nullptr};
};
TORCH_MODULE(PointEncoder);

struct InterpolationWeights {
  torch::Tensor indices;  // N_q x k (long)
  torch::Tensor weights;  // N_q x k, non-negative, rows sum to 1
};

/// Inverse-squared-distance weights over the k nearest sources (k clipped to
/// the source count). A query within 1e-10 of a source copies that source.
InterpolationWeights interpolation_weights(const torch::Tensor& query, const torch::Tensor& source,
                                           int64_t k = 3);

torch::Tensor interpolate_features(const torch::Tensor& query, const torch::Tensor& source,
                                   const torch::Tensor& source_feats, int64_t k = 3);

// Hierarchical up-sampling back to full resolution: at every step the coarser
// features are interpolated onto the finer level, concatenated with the finer
// level's own features and passed through a shared perceptron.
class FeaturePropagationImpl : public torch::nn::Module {
 public:
  /// level_channels as in PointEncoderOptions; output width `dim`.
  FeaturePropagationImpl(const std::vector<int64_t>& level_channels, int64_t dim, int64_t k = 3);

  /// Returns N_0 x dim, aligned with the level-0 point order.
  torch::Tensor forward(const PointLevels& levels);

 private:
  std::vector<Mlp> stages_;  // stages_[0] produces level L-1 from level L
  int64_t k_;
};
TORCH_MODULE(FeaturePropagation);

torch::Tensor propagate(const PointLevels& levels, FeaturePropagation& propagation);

}  // namespace dag
