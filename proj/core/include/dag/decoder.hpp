#pragma once

#include <cstdint>
#include <optional>

#include <torch/torch.h>

#include "dag/nn.hpp"

namespace dag {

/// Scaled dot-product cross-attention without learned projections.
/// Width mismatches raise a structural error.
torch::Tensor cross_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

struct DecoderOptions {
  int64_t dim = 64;
  int64_t cls_dim = 64;
  int64_t heads = 1;
  int64_t ffn_mult = 4;
  bool use_cls = true;
};

// Fuses the point [CLS] token with the affordance tokens into one query:
//   h = LN(c + Attn(c, A)),  F = LN(h + FFN(h)),  c = lift(cls).
class GlobalFusionImpl : public torch::nn::Module {
 public:
  GlobalFusionImpl(int64_t cls_dim, int64_t dim, int64_t heads, int64_t ffn_mult);

  /// cls: 1 x d_p, aff: M x d -> 1 x d.
  torch::Tensor forward(const torch::Tensor& cls, const torch::Tensor& aff);

  torch::nn::Linear cls_lift{nullptr};
  MultiHeadAttention attn{nullptr};
  FeedForward ffn{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::Tensor last_attention;
};
TORCH_MODULE(GlobalFusion);

// Per-point queries attend to {fused query, affordance tokens}:
//   h = LN(p + Attn(p, KV)),  out = LN(h + FFN(h)).
class PointFusionImpl : public torch::nn::Module {
 public:
  PointFusionImpl(int64_t dim, int64_t heads, int64_t ffn_mult);

  /// point_feats: N x d; fused: 1 x d or undefined; aff: M x d (M may be 0).
  torch::Tensor forward(const torch::Tensor& point_feats, const torch::Tensor& fused,
                        const torch::Tensor& aff);

  MultiHeadAttention attn{nullptr};
  FeedForward ffn{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::Tensor last_attention;
};
TORCH_MODULE(PointFusion);

// Shared per-point two-layer perceptron to a logit, then logistic squashing.
// The output layer starts at zero, so a fresh head predicts 0.5 everywhere.
class MaskHeadImpl : public torch::nn::Module {
 public:
  explicit MaskHeadImpl(int64_t dim);

  torch::Tensor logits(const torch::Tensor& fusion);
  torch::Tensor forward(const torch::Tensor& fusion) { return torch::sigmoid(logits(fusion)); }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(MaskHead);

// Multi-source decoder: optional [CLS] global fusion, per-point fusion and the
// mask head.
class AffordanceDecoderImpl : public torch::nn::Module {
 public:
  explicit AffordanceDecoderImpl(const DecoderOptions& options);

  /// point_feats: N x d, cls: 1 x d_p (ignored when the [CLS] path is off),
  /// aff: M x d. Returns the N-vector mask in [0,1].
  torch::Tensor forward(const torch::Tensor& point_feats, const torch::Tensor& cls,
                        const torch::Tensor& aff);

  const DecoderOptions& options() const noexcept { return options_; }

  GlobalFusion global_fusion{nullptr};
  PointFusion point_fusion{nullptr};
  MaskHead mask_head{nullptr};

 private:
  DecoderOptions options_;
};
TORCH_MODULE(AffordanceDecoder);

torch::Tensor fuse_global(const torch::Tensor& cls, const torch::Tensor& aff, GlobalFusion& fusion);
torch::Tensor fuse_points(const torch::Tensor& point_feats, const torch::Tensor& fused,
                          const torch::Tensor& aff, PointFusion& fusion);
torch::Tensor predict_mask(const torch::Tensor& fusion, MaskHead& head);

}  // namespace dag
