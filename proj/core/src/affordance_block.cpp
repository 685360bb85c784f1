#include "dag/affordance_block.hpp"

#include "dag/errors.hpp"

namespace dag {

VisualTokens to_visual_tokens(const torch::Tensor& map) {
  if (map.dim() != 3) fail(ErrorKind::Shape, "visual feature map must be d x H x W");
  return {map.flatten(1).t(), map.size(1), map.size(2)};
}

AffordanceBlockImpl::AffordanceBlockImpl(const AffordanceBlockOptions& options) : options_(options) {
  const int64_t d = options.dim;
  auto ln = [&] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})); };
  text_lift = register_module("text_lift", torch::nn::Linear(options.text_dim, d));
  gamma = register_module("gamma", torch::nn::Linear(d, d));
  zero_(gamma);
  self_attn = register_module(
      "self_attn", MultiHeadAttention(AttentionOptions{d, d, d, options.heads, options.zero_residual_outputs}));
  cross_attn = register_module(
      "cross_attn", MultiHeadAttention(AttentionOptions{d, d, d, options.heads, options.zero_residual_outputs}));
  ffn = register_module("ffn", FeedForward(d, options.ffn_mult * d, options.zero_residual_outputs));
  norm1 = register_module("norm1", ln());
  norm2 = register_module("norm2", ln());
  norm3 = register_module("norm3", ln());
}

VisualTokens AffordanceBlockImpl::scale_modulate(const VisualTokens& visual, const torch::Tensor& text) {
  const auto condition = text_lift(text).mean(0);  // d
  return {visual.tokens * (1.0 + gamma(condition)), visual.height, visual.width};
}

torch::Tensor AffordanceBlockImpl::forward(const VisualTokens& visual, const torch::Tensor& text) {
  if (visual.tokens.size(0) != visual.height * visual.width) {
    fail(ErrorKind::Structural, "visual token count does not match its grid");
  }
  VisualTokens input = visual;
  if (options_.positional_encoding) {
    input.tokens = input.tokens + positional_encoding_2d(visual.height, visual.width, options_.dim,
                                                         visual.tokens.options());
  }
  const auto lifted = text_lift(text);
  auto x = scale_modulate(input, text).tokens;

  auto sa = self_attn(x, x);
  x = norm1(x + sa.output);
  auto ca = cross_attn(x, lifted);
  x = norm2(x + ca.output);
  x = norm3(x + ffn(x));

  last_self_attention = sa.weights.detach();
  last_cross_attention = ca.weights.detach();
  return x;
}

torch::Tensor affordance_block(const VisualTokens& visual, const torch::Tensor& text,
                               std::vector<AffordanceBlock>& blocks) {
  if (blocks.empty()) fail(ErrorKind::Structural, "at least one affordance block is required");
  VisualTokens current = visual;
  for (auto& block : blocks) current.tokens = block->forward(current, text);
  return current.tokens;
}

torch::Tensor pool_tokens(const torch::Tensor& fused, int64_t height, int64_t width, int64_t m) {
  if (m < 1 || m > std::min(height, width)) {
    fail(ErrorKind::PoolingConfig, "pooling grid " + std::to_string(m) + " must lie in [1, " +
                                       std::to_string(std::min(height, width)) + "]");
  }
  if (fused.size(0) != height * width) fail(ErrorKind::Structural, "token count does not match its grid");
  const int64_t d = fused.size(1);
  auto grid = fused.t().reshape({1, d, height, width});
  auto pooled = torch::adaptive_avg_pool2d(grid, {m, m});
  return pooled.reshape({d, m * m}).t();
}

}  // namespace dag
