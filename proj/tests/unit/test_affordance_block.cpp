#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "dag/affordance_block.hpp"
#include "dag/errors.hpp"

namespace {

dag::AffordanceBlockOptions opts(int64_t d, int64_t text_dim, bool pe) {
  dag::AffordanceBlockOptions o;
  o.dim = d;
  o.text_dim = text_dim;
  o.positional_encoding = pe;
  o.ffn_mult = 2;
  return o;
}

torch::Tensor layer_norm_rows(const torch::Tensor& x, double eps = 1e-5) {
  auto mean = x.mean(1, true);
  auto var = (x - mean).pow(2).mean(1, true);
  return (x - mean) / torch::sqrt(var + eps);
}

}  // namespace

TEST(ScaleModulate, IdentityAtInitAndDoublingWhenGammaIsOne) {
  dag::AffordanceBlock block(opts(4, 3, false));
  dag::VisualTokens v{torch::randn({6, 4}), 2, 3};
  auto text = torch::randn({2, 3});
  const auto same = block->scale_modulate(v, text);
  EXPECT_TRUE(torch::equal(same.tokens, v.tokens));
  EXPECT_EQ(same.height, 2);
  EXPECT_EQ(same.width, 3);
  {
    torch::NoGradGuard g;
    block->gamma->bias.fill_(1.0);
  }
  EXPECT_TRUE(torch::allclose(block->scale_modulate(v, text).tokens, 2.0 * v.tokens, 0, 1e-7));
}

TEST(AffordanceBlock, ShapeAndRowStochasticAttention) {
  dag::AffordanceBlock block(opts(8, 5, true));
  dag::VisualTokens v{torch::randn({12, 8}), 3, 4};
  const auto out = block(v, torch::randn({3, 5}));
  ASSERT_EQ(out.sizes(), (std::vector<int64_t>{12, 8}));
  EXPECT_TRUE(torch::allclose(block->last_self_attention.sum(-1), torch::ones({1, 12}), 0, 1e-5));
  EXPECT_TRUE(torch::allclose(block->last_cross_attention.sum(-1), torch::ones({1, 12}), 0, 1e-5));
}

TEST(AffordanceBlock, TextTokenOrderDoesNotMatter) {
  dag::AffordanceBlock block(opts(8, 5, true));
  block->to(torch::kDouble);
  dag::oracle::randomize(*block, 3);
  dag::VisualTokens v{torch::randn({6, 8}, torch::kDouble), 2, 3};
  auto text = torch::randn({4, 5}, torch::kDouble);
  const auto a = block(v, text);
  const auto b = block(v, text.index_select(0, torch::tensor({2, 0, 3, 1})));
  EXPECT_TRUE(torch::allclose(a, b, 0, 1e-6));
}

TEST(AffordanceBlock, VisualPermutationEquivarianceWithoutPositionalEncoding) {
  dag::AffordanceBlock block(opts(8, 5, false));
  block->to(torch::kDouble);
  dag::oracle::randomize(*block, 4);
  auto tokens = torch::randn({6, 8}, torch::kDouble);
  auto text = torch::randn({2, 5}, torch::kDouble);
  auto perm = torch::tensor({4, 1, 5, 0, 3, 2});
  const auto a = block(dag::VisualTokens{tokens, 2, 3}, text);
  const auto b = block(dag::VisualTokens{tokens.index_select(0, perm), 2, 3}, text);
  EXPECT_TRUE(torch::allclose(a.index_select(0, perm), b, 0, 1e-9));

  dag::AffordanceBlock with_pe(opts(8, 5, true));
  with_pe->to(torch::kDouble);
  dag::oracle::randomize(*with_pe, 4);
  const auto c = with_pe(dag::VisualTokens{tokens, 2, 3}, text);
  const auto d = with_pe(dag::VisualTokens{tokens.index_select(0, perm), 2, 3}, text);
  EXPECT_FALSE(torch::allclose(c.index_select(0, perm), d, 0, 1e-6));
}

TEST(AffordanceBlock, ZeroResidualBranchesReduceToTheNormalisationChain) {
  auto o = opts(3, 2, false);
  o.zero_residual_outputs = true;
  dag::AffordanceBlock block(o);
  block->to(torch::kDouble);
  auto tokens = torch::tensor({0.5, -1.0, 2.0, 1.5, 0.25, -0.75}, torch::kDouble).view({2, 3});
  auto text = torch::randn({2, 2}, torch::kDouble);
  const auto out = block(dag::VisualTokens{tokens, 1, 2}, text);
  // gamma is zero, so the modulated input equals the tokens; each residual
  // branch adds zero and the three default-affine layer norms compose.
  const auto expected = layer_norm_rows(layer_norm_rows(layer_norm_rows(tokens)));
  EXPECT_TRUE(torch::allclose(out, expected, 0, 1e-9));
}

TEST(AffordanceBlock, GradientMatchesFiniteDifferences) {
  dag::AffordanceBlock block(opts(6, 3, false));
  block->to(torch::kDouble);
  dag::oracle::randomize(*block, 7, 0.4);
  auto tokens = torch::randn({4, 6}, torch::kDouble).requires_grad_();
  auto text = torch::randn({2, 3}, torch::kDouble).requires_grad_();
  auto target = torch::randn({4, 6}, torch::kDouble);
  auto loss = [&] { return (block(dag::VisualTokens{tokens, 2, 2}, text) * target).sum(); };
  auto params = dag::oracle::trainable(*block);
  params.push_back(tokens);
  params.push_back(text);
  const auto r = dag::oracle::finite_difference_check(loss, params);
  EXPECT_LE(r.relative_error, 1e-4);
  EXPECT_GT(r.analytic_norm, 0.0);
}

TEST(AffordanceBlock, StackedBlocksKeepTheGrid) {
  std::vector<dag::AffordanceBlock> blocks{dag::AffordanceBlock(opts(8, 4, true)), dag::AffordanceBlock(opts(8, 4, true))};
  const auto out = dag::affordance_block(dag::VisualTokens{torch::randn({16, 8}), 4, 4}, torch::randn({1, 4}), blocks);
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{16, 8}));
}

TEST(PoolTokens, ConstantIdentityAndMean) {
  auto constant = torch::full({16, 3}, 2.5);
  EXPECT_TRUE(torch::allclose(dag::pool_tokens(constant, 4, 4, 2), torch::full({4, 3}, 2.5)));
  EXPECT_EQ(dag::pool_tokens(torch::randn({12, 5}), 3, 4, 3).sizes(), (std::vector<int64_t>{9, 5}));
  auto square = torch::randn({9, 5});
  EXPECT_TRUE(torch::allclose(dag::pool_tokens(square, 3, 3, 3), square, 0, 1e-7));
  auto four = torch::tensor({1.0, 2.0, 3.0, 4.0}).view({4, 1});
  EXPECT_NEAR(dag::pool_tokens(four, 2, 2, 1).item<double>(), 2.5, 1e-7);
}

TEST(PoolTokens, GridLargerThanInputIsAConfigError) {
  try {
    dag::pool_tokens(torch::randn({6, 2}), 2, 3, 3);
    FAIL();
  } catch (const dag::Error& e) {
    EXPECT_EQ(e.kind(), dag::ErrorKind::PoolingConfig);
  }
  EXPECT_THROW(dag::pool_tokens(torch::randn({4, 2}), 2, 2, 0), dag::Error);
}
