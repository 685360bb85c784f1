#include "dag/decoder.hpp"

#include "dag/errors.hpp"

namespace dag {

torch::Tensor cross_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
  return dag::scaled_dot_product_attention(q, k, v).output;
}

namespace {

torch::nn::LayerNorm layer_norm(int64_t d) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}));
}

}  // namespace

GlobalFusionImpl::GlobalFusionImpl(int64_t cls_dim, int64_t dim, int64_t heads, int64_t ffn_mult) {
  cls_lift = register_module("cls_lift", torch::nn::Linear(cls_dim, dim));
  attn = register_module("attn", MultiHeadAttention(AttentionOptions{dim, dim, dim, heads}));
  ffn = register_module("ffn", FeedForward(dim, ffn_mult * dim));
  norm1 = register_module("norm1", layer_norm(dim));
  norm2 = register_module("norm2", layer_norm(dim));
}

torch::Tensor GlobalFusionImpl::forward(const torch::Tensor& cls, const torch::Tensor& aff) {
  if (aff.size(0) < 1) fail(ErrorKind::Structural, "[CLS] fusion needs at least one affordance token");
  const auto c = cls_lift(cls);
  auto a = attn(c, aff);
  last_attention = a.weights.detach();
  auto h = norm1(c + a.output);
  return norm2(h + ffn(h));
}

PointFusionImpl::PointFusionImpl(int64_t dim, int64_t heads, int64_t ffn_mult) {
  attn = register_module("attn", MultiHeadAttention(AttentionOptions{dim, dim, dim, heads}));
  ffn = register_module("ffn", FeedForward(dim, ffn_mult * dim));
  norm1 = register_module("norm1", layer_norm(dim));
  norm2 = register_module("norm2", layer_norm(dim));
}

torch::Tensor PointFusionImpl::forward(const torch::Tensor& point_feats, const torch::Tensor& fused,
                                       const torch::Tensor& aff) {
  torch::Tensor kv;
  if (fused.defined() && aff.defined() && aff.size(0) > 0) {
    kv = torch::cat({fused, aff}, 0);
  } else if (fused.defined()) {
    kv = fused;
  } else if (aff.defined() && aff.size(0) > 0) {
    kv = aff;
  } else {
    fail(ErrorKind::Structural, "point fusion needs a fused query or affordance tokens");
  }
  auto a = attn(point_feats, kv);
  last_attention = a.weights.detach();
  auto h = norm1(point_feats + a.output);
  return norm2(h + ffn(h));
}

MaskHeadImpl::MaskHeadImpl(int64_t dim) {
  fc1 = register_module("fc1", torch::nn::Linear(dim, dim));
  fc2 = register_module("fc2", torch::nn::Linear(dim, 1));
  zero_(fc2);
}

torch::Tensor MaskHeadImpl::logits(const torch::Tensor& fusion) {
  return fc2(torch::relu(fc1(fusion))).squeeze(1);
}

AffordanceDecoderImpl::AffordanceDecoderImpl(const DecoderOptions& options) : options_(options) {
  if (options.use_cls) {
    global_fusion = register_module(
        "global_fusion", GlobalFusion(options.cls_dim, options.dim, options.heads, options.ffn_mult));
  }
  point_fusion = register_module("point_fusion", PointFusion(options.dim, options.heads, options.ffn_mult));
  mask_head = register_module("mask_head", MaskHead(options.dim));
}

torch::Tensor AffordanceDecoderImpl::forward(const torch::Tensor& point_feats, const torch::Tensor& cls,
                                             const torch::Tensor& aff) {
  torch::Tensor fused;
  if (options_.use_cls) fused = global_fusion->forward(cls, aff);
  return mask_head->forward(point_fusion->forward(point_feats, fused, aff));
}

torch::Tensor fuse_global(const torch::Tensor& cls, const torch::Tensor& aff, GlobalFusion& fusion) {
  return fusion->forward(cls, aff);
}

torch::Tensor fuse_points(const torch::Tensor& point_feats, const torch::Tensor& fused,
                          const torch::Tensor& aff, PointFusion& fusion) {
  return fusion->forward(point_feats, fused, aff);
}

torch::Tensor predict_mask(const torch::Tensor& fusion, MaskHead& head) { return head->forward(fusion); }

}  // namespace dag
