#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "dag/nn.hpp"

namespace dag {

// Aggregated visual features in token form: S = H_1 * W_1 rows of width d.
struct VisualTokens {
  torch::Tensor tokens;  // S x d
  int64_t height = 0;
  int64_t width = 0;
};

/// d x H x W map -> VisualTokens in row-major grid order.
VisualTokens to_visual_tokens(const torch::Tensor& map);

struct AffordanceBlockOptions {
  int64_t dim = 64;
  int64_t text_dim = 32;
  int64_t heads = 1;
  int64_t ffn_mult = 4;
  bool positional_encoding = true;
  bool zero_residual_outputs = false;  // zero-init attention/FFN output projections
};

// Fuses visual tokens with text tokens:
//   modulate:  v' = v * (1 + gamma(mean(lift(text))))
//   v1 = LN(v' + SelfAttn(v'))
//   v2 = LN(v1 + CrossAttn(v1, lift(text)))
//   out = LN(v2 + FFN(v2))
class AffordanceBlockImpl : public torch::nn::Module {
 public:
  explicit AffordanceBlockImpl(const AffordanceBlockOptions& options);

  /// FiLM-style modulation only. `text` is K_txt x d_txt.
  VisualTokens scale_modulate(const VisualTokens& visual, const torch::Tensor& text);

  /// Full block, S x d out. Attention weights of the last call are kept in
  /// last_self_attention / last_cross_attention.
  torch::Tensor forward(const VisualTokens& visual, const torch::Tensor& text);

  const AffordanceBlockOptions& options() const noexcept { return options_; }

  torch::nn::Linear text_lift{nullptr}, gamma{nullptr};
  MultiHeadAttention self_attn{nullptr}, cross_attn{nullptr};
  FeedForward ffn{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};

  torch::Tensor last_self_attention;
  torch::Tensor last_cross_attention;

 private:
  AffordanceBlockOptions options_;
};
TORCH_MODULE(AffordanceBlock);

/// Applies `blocks` in sequence, each seeing the previous block's output on
/// the same grid.
torch::Tensor affordance_block(const VisualTokens& visual, const torch::Tensor& text,
                               std::vector<AffordanceBlock>& blocks);

/// Adaptive average pooling of the S x d token grid to m x m, flattened to
/// m^2 x d affordance tokens.
torch::Tensor pool_tokens(const torch::Tensor& fused, int64_t height, int64_t width, int64_t m);

}  // namespace dag
