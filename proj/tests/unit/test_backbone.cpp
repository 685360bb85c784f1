#include <gtest/gtest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "dag/backbone.hpp"
#include "dag/errors.hpp"
#include "dag/nn.hpp"

namespace {

template <typename Fn>
dag::ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const dag::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a dag::Error";
  return dag::ErrorKind::Io;
}

dag::StubBackboneOptions small_options() {
  dag::StubBackboneOptions o;
  o.channels = {8, 12, 16};
  o.stem_channels = 4;
  o.condition_dim = 6;
  return o;
}

}  // namespace

TEST(NoiseSchedule, StartsAtOneAndDecreases) {
  const auto s = dag::NoiseSchedule::scaled_linear(1000, 0.00085, 0.012);
  EXPECT_EQ(s.t_max(), 1000);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_NEAR(s.alpha_bar(1), 1.0 - 0.00085, 1e-12);
  for (int t = 1; t <= s.t_max(); ++t) ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  EXPECT_EQ(kind_of([&] { s.alpha_bar(1001); }), dag::ErrorKind::Step);
  EXPECT_EQ(kind_of([&] { s.alpha_bar(-1); }), dag::ErrorKind::Step);
  EXPECT_THROW(dag::NoiseSchedule::from_alpha_bar({0.9, 0.5}), dag::Error);
  EXPECT_THROW(dag::NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.6}), dag::Error);
}

TEST(Noising, StepZeroIsBitExactIdentity) {
  const auto s = dag::NoiseSchedule::scaled_linear();
  auto image = torch::rand({3, 16, 16});
  auto noise = torch::randn({3, 16, 16});
  const auto out = dag::sample_noisy_image(image, 0, s, noise);
  EXPECT_TRUE(torch::equal(out, image));
  EXPECT_NE(out.data_ptr(), image.data_ptr());
}

TEST(Noising, QuarterAlphaHandCase) {
  auto image = torch::full({3, 2, 2}, 0.8, torch::kDouble);
  auto noise = torch::full({3, 2, 2}, 0.4, torch::kDouble);
  const auto out = dag::sample_noisy_image(image, 0.25, noise);
  const double expected = 0.5 * 0.8 + std::sqrt(0.75) * 0.4;  // 0.746410...
  EXPECT_NEAR(out[0][0][0].item<double>(), expected, 1e-6);
  EXPECT_NEAR(expected, 0.7464, 1e-4);
  EXPECT_EQ(kind_of([&] { dag::sample_noisy_image(image, 0.25, torch::zeros({3, 2, 3})); }), dag::ErrorKind::Shape);
}

TEST(StubBackbone, PyramidShapesAndAttentionRows) {
  dag::StubDiffusionBackbone bb(small_options());
  EXPECT_EQ(bb.size_multiple(), 16);
  const auto shapes = bb.level_shapes(64, 32);
  ASSERT_EQ(shapes.size(), 3u);
  EXPECT_EQ(shapes[0], (dag::LevelShape{8, 16, 8}));
  EXPECT_EQ(shapes[2], (dag::LevelShape{16, 4, 2}));
  const auto out = dag::extract_pyramid(torch::rand({3, 64, 32}), torch::randn({5, 6}), bb);
  EXPECT_EQ(out.pyramid.shapes(), shapes);
  for (size_t l = 0; l < 3; ++l) {
    const auto& a = out.attention[l];
    ASSERT_EQ(a.size(1), 5);
    EXPECT_TRUE(torch::allclose(a.sum(1), torch::ones({a.size(0)}), 0, 1e-5));
  }
}

TEST(StubBackbone, FrozenAndSeedDetermined) {
  dag::StubDiffusionBackbone a(small_options()), b(small_options());
  EXPECT_TRUE(a.frozen());
  EXPECT_EQ(dag::count_trainable(a), 0);
  EXPECT_EQ(a.checksum(), b.checksum());
  auto other = small_options();
  other.seed = 99;
  EXPECT_NE(a.checksum(), dag::StubDiffusionBackbone(other).checksum());

  auto img = torch::rand({3, 16, 16});
  auto cond = torch::randn({3, 6});
  const auto x = a.extract(img, cond), y = b.extract(img, cond);
  for (size_t l = 0; l < 3; ++l) EXPECT_TRUE(torch::equal(x.pyramid.levels[l], y.pyramid.levels[l]));
}

TEST(StubBackbone, ImageSideMustMatchTheMultiple) {
  dag::StubDiffusionBackbone bb(small_options());
  EXPECT_EQ(kind_of([&] { dag::extract_pyramid(torch::rand({3, 24, 16}), torch::randn({2, 6}), bb); }),
            dag::ErrorKind::Shape);
  EXPECT_EQ(kind_of([&] { dag::extract_pyramid(torch::rand({1, 16, 16}), torch::randn({2, 6}), bb); }),
            dag::ErrorKind::Shape);
}

TEST(StubBackbone, ZeroLogitsGiveUniformWordAttention) {
  auto o = small_options();
  o.zero_attention_logits = true;
  dag::StubDiffusionBackbone bb(o);
  const auto out = bb.extract(torch::rand({3, 32, 32}), torch::randn({4, 6}));
  const auto map = dag::word_attention_map(out, 2, 1);
  ASSERT_EQ(map.sizes(), (std::vector<int64_t>{4, 4}));
  EXPECT_TRUE(torch::allclose(map, torch::full({4, 4}, 0.25), 0, 1e-6));
  EXPECT_EQ(kind_of([&] { dag::word_attention_map(out, 4, 0); }), dag::ErrorKind::Index);
  EXPECT_EQ(kind_of([&] { dag::word_attention_map(out, 0, 3); }), dag::ErrorKind::Index);
}

TEST(Aggregator, UniformMixAtInitMatchesManualComposition) {
  torch::manual_seed(3);
  dag::PyramidAggregator agg(dag::AggregatorOptions{{2, 3}, 4});
  agg->to(torch::kDouble);
  EXPECT_TRUE(torch::allclose(agg->mixing_weights(), torch::full({2}, 0.5, torch::kDouble)));
  dag::FeaturePyramid pyr;
  pyr.levels = {torch::randn({2, 4, 4}, torch::kDouble), torch::randn({3, 2, 2}, torch::kDouble)};
  const auto out = agg->forward(pyr);
  ASSERT_EQ(out.sizes(), (std::vector<int64_t>{4, 4, 4}));

  auto up = torch::nn::functional::interpolate(
                pyr.levels[1].unsqueeze(0),
                torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{4, 4}).mode(torch::kBilinear).align_corners(false))
                .squeeze(0);
  auto proj = [](const torch::nn::Linear& lin, const torch::Tensor& m) {
    return torch::matmul(lin->weight, m.flatten(1)) + lin->bias.unsqueeze(1);
  };
  auto manual = 0.5 * proj(agg->projections[0], pyr.levels[0]) + 0.5 * proj(agg->projections[1], up);
  EXPECT_TRUE(torch::allclose(out.flatten(1), manual, 0, 1e-12));

  pyr.levels.pop_back();
  EXPECT_EQ(kind_of([&] { agg->forward(pyr); }), dag::ErrorKind::Structural);
}

TEST(Aggregator, GradientMatchesFiniteDifferences) {
  torch::manual_seed(5);
  dag::PyramidAggregator agg(dag::AggregatorOptions{{2, 3, 2}, 3});
  agg->to(torch::kDouble);
  dag::oracle::randomize(*agg, 11);
  dag::FeaturePyramid pyr;
  pyr.levels = {torch::randn({2, 4, 4}, torch::kDouble), torch::randn({3, 2, 2}, torch::kDouble),
                torch::randn({2, 1, 1}, torch::kDouble)};
  auto target = torch::randn({3, 4, 4}, torch::kDouble);
  auto loss = [&] { return (agg->forward(pyr) * target).sum(); };
  const auto r = dag::oracle::finite_difference_check(loss, dag::oracle::trainable(*agg));
  EXPECT_LE(r.relative_error, 1e-4);
  EXPECT_GT(r.analytic_norm, 0.0);
}
