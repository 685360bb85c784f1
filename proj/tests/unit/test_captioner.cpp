#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "../support/oracles.hpp"
#include "dag/captioner.hpp"
#include "dag/errors.hpp"
#include "dag/nn.hpp"

namespace {

std::shared_ptr<dag::StubImageEncoder> small_encoder() {
  dag::StubImageEncoderOptions o;
  o.width = 8;
  o.patch_size = 4;
  o.layers = 2;
  return std::make_shared<dag::StubImageEncoder>(o);
}

}  // namespace

TEST(ImageEncoder, PromptedEmbeddingWidthAndFrozenEncoder) {
  auto enc = small_encoder();
  EXPECT_EQ(dag::count_trainable(*enc), 0);
  auto prompts = torch::randn({3, 8});
  const auto e = dag::encode_image_with_prompts(torch::rand({3, 16, 8}), prompts, *enc);
  ASSERT_EQ(e.sizes(), (std::vector<int64_t>{8}));
  try {
    dag::encode_image_with_prompts(torch::rand({3, 10, 8}), prompts, *enc);
    FAIL();
  } catch (const dag::Error& err) {
    EXPECT_EQ(err.kind(), dag::ErrorKind::Shape);
  }
}

TEST(ImageEncoder, PromptPerturbationChangesTheEmbedding) {
  auto enc = small_encoder();
  torch::manual_seed(1);
  auto image = torch::rand({3, 16, 16});
  auto prompts = 0.02 * torch::randn({4, 8});
  const auto base = dag::encode_image_with_prompts(image, prompts, *enc);
  auto bumped = prompts.clone();
  bumped[1][0] += 0.1;  // a uniform shift of the whole token would vanish under layer norm
  const auto moved = dag::encode_image_with_prompts(image, bumped, *enc);
  EXPECT_GT((moved - base).abs().max().item<double>(), 1e-6);
  EXPECT_TRUE(torch::equal(base, dag::encode_image_with_prompts(image, prompts, *enc)));
}

TEST(ImageEncoder, GradientsReachPromptsOnly) {
  auto enc = small_encoder();
  torch::manual_seed(4);
  auto prompts = torch::randn({2, 8}).requires_grad_();
  // Layer-normed rows sum to zero, so a plain sum would have no gradient.
  auto weights = torch::randn({8});
  (dag::encode_image_with_prompts(torch::rand({3, 8, 8}), prompts, *enc) * weights).sum().backward();
  ASSERT_TRUE(prompts.grad().defined());
  EXPECT_GT(prompts.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : enc->parameters()) EXPECT_FALSE(p.grad().defined());
}

TEST(CaptionProjector, ZeroOutputAtInitAndShape) {
  dag::CaptionProjector proj(8, 16, 3, 5);
  const auto out = proj(torch::randn({8}));
  ASSERT_EQ(out.sizes(), (std::vector<int64_t>{3, 5}));
  EXPECT_EQ(out.abs().max().item<double>(), 0.0);
}

TEST(CaptionProjector, GradientMatchesFiniteDifferences) {
  torch::manual_seed(2);
  dag::CaptionProjector proj(4, 6, 2, 3);
  proj->to(torch::kDouble);
  dag::oracle::randomize(*proj, 4);
  auto input = torch::randn({4}, torch::kDouble).requires_grad_();
  auto target = torch::randn({2, 3}, torch::kDouble);
  auto loss = [&] { return (proj(input) * target).sum(); };
  auto params = dag::oracle::trainable(*proj);
  params.push_back(input);
  EXPECT_LE(dag::oracle::finite_difference_check(loss, params).relative_error, 1e-4);
}

TEST(SelfPromptCaptioner, OnlyPromptsAndProjectorAreTrainable) {
  auto enc = small_encoder();
  dag::CaptionerOptions o;
  o.prompt_count = 8;
  o.caption_tokens = 4;
  o.text_dim = 6;
  o.hidden = 10;
  dag::SelfPromptCaptioner cap(enc, o);
  const int64_t expected = 8 * 8 + (8 * 10 + 10) + (10 * 4 * 6 + 4 * 6);
  EXPECT_EQ(dag::count_trainable(*cap), expected);
  const auto tokens = cap(torch::rand({3, 16, 16}));
  EXPECT_EQ(tokens.sizes(), (std::vector<int64_t>{4, 6}));
  EXPECT_EQ(cap(torch::zeros({3, 8, 8})).size(0), 4);
}

TEST(TextEncoder, DeterministicNullAndDistinctVocabulary) {
  dag::TextEncoderOptions o;
  o.width = 16;
  dag::StubTextEncoder enc(o);
  EXPECT_EQ(dag::count_trainable(enc), 0);
  EXPECT_TRUE(torch::equal(enc.encode("grasp").tokens, enc.encode("grasp").tokens));
  EXPECT_TRUE(torch::equal(enc.encode("grasp").tokens, dag::StubTextEncoder(o).encode("grasp").tokens));

  const auto null = enc.encode("  ");
  ASSERT_EQ(null.tokens.sizes(), (std::vector<int64_t>{1, 16}));
  EXPECT_EQ(null.words, std::vector<std::string>{"<null>"});

  const auto& vocab = dag::default_affordance_vocabulary();
  ASSERT_EQ(vocab.size(), 17u);
  std::vector<torch::Tensor> rows;
  for (const auto& w : vocab) rows.push_back(enc.encode(w).tokens[0]);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = i + 1; j < rows.size(); ++j) {
      EXPECT_GT((rows[i] - rows[j]).norm().item<double>(), 0.0) << vocab[i] << " vs " << vocab[j];
    }
  }
  const auto phrase = enc.encode("Grasp the MUG");
  EXPECT_EQ(phrase.words, (std::vector<std::string>{"grasp", "the", "mug"}));
  EXPECT_TRUE(torch::equal(phrase.tokens[0], rows[0]));
  EXPECT_GE(enc.row_of("mug"), 17);
}

TEST(TextEncoder, VocabularyFile) {
  const auto dir = std::filesystem::temp_directory_path() / "dag_unit" / "vocab";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "v.txt") << "kick\n\n  throw \n";
  const auto words = dag::load_vocabulary(dir / "v.txt");
  EXPECT_EQ(words, (std::vector<std::string>{"kick", "throw"}));
  dag::TextEncoderOptions o;
  o.vocabulary = words;
  dag::StubTextEncoder enc(o);
  EXPECT_EQ(enc.row_of("throw"), 1);
}
