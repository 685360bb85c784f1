#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dag/nn.hpp"

namespace dag {

// ---------------------------------------------------------------------------
// Frozen image encoder (CLIP-image role).

class ImageEncoder : public torch::nn::Module {
 public:
  ~ImageEncoder() override = default;

  /// Runs the attention stack over [prompts; patch tokens] and returns the
  /// final states, (P + n_patches) x width.
  virtual torch::Tensor encode(const torch::Tensor& image, const torch::Tensor& prompts) = 0;
  virtual int64_t width() const = 0;
  virtual int64_t patch_size() const = 0;
};

struct StubImageEncoderOptions {
  int64_t width = 32;
  int64_t patch_size = 8;
  int64_t layers = 2;
  int64_t heads = 1;
  std::uint64_t seed = 4321;
};

// Fixed-seed patch embedding + pre-norm self-attention layers, frozen.
class StubImageEncoder : public ImageEncoder {
 public:
  explicit StubImageEncoder(const StubImageEncoderOptions& options);

  torch::Tensor encode(const torch::Tensor& image, const torch::Tensor& prompts) override;
  int64_t width() const override { return options_.width; }
  int64_t patch_size() const override { return options_.patch_size; }

 private:
  struct Layer {
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    MultiHeadAttention attn{nullptr};
    FeedForward ffn{nullptr};
  };
  StubImageEncoderOptions options_;
  torch::nn::Linear patch_embed_{nullptr};
  std::vector<Layer> layers_;
  torch::nn::LayerNorm final_norm_{nullptr};
};

/// Mean over the prompt positions of the encoder's final states: the pooled
/// image embedding I_t (width d_img). Gradients reach `prompts` only.
torch::Tensor encode_image_with_prompts(const torch::Tensor& image, const torch::Tensor& prompts,
                                        ImageEncoder& encoder);

// d_img -> hidden -> K_cap * d_txt perceptron with a zero-initialised output
// layer, so a fresh projector emits all-zero caption tokens.
class CaptionProjectorImpl : public torch::nn::Module {
 public:
  CaptionProjectorImpl(int64_t image_dim, int64_t hidden, int64_t caption_tokens, int64_t text_dim);

  /// image_embedding: d_img -> K_cap x d_txt.
  torch::Tensor forward(const torch::Tensor& image_embedding);

  int64_t caption_tokens() const noexcept { return caption_tokens_; }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  int64_t caption_tokens_;
  int64_t text_dim_;
};
TORCH_MODULE(CaptionProjector);

struct CaptionerOptions {
  int64_t prompt_count = 8;
  int64_t caption_tokens = 4;
  int64_t text_dim = 32;
  int64_t hidden = 64;
};

// Self-prompt implicit captioner: learnable prompt tokens steer a frozen image
// encoder, and the pooled embedding is projected to pseudo-text tokens.
class SelfPromptCaptionerImpl : public torch::nn::Module {
 public:
  SelfPromptCaptionerImpl(std::shared_ptr<ImageEncoder> encoder, const CaptionerOptions& options);

  torch::Tensor encode(const torch::Tensor& image) {
    return encode_image_with_prompts(image, prompts, *encoder);
  }
  /// image -> K_cap x d_txt caption tokens.
  torch::Tensor forward(const torch::Tensor& image) { return projector->forward(encode(image)); }

  std::shared_ptr<ImageEncoder> encoder;
  torch::Tensor prompts;  // P x d_img
  CaptionProjector projector{nullptr};
};
TORCH_MODULE(SelfPromptCaptioner);

// ---------------------------------------------------------------------------
// Frozen text encoder (CLIP-text role).

struct TextEmbedding {
  torch::Tensor tokens;  // K_txt x d_txt
  std::string source_text;
  std::vector<std::string> words;  // one per token; "<null>" for the null token
};

/// The 17 affordance types of the PIAD benchmark.
const std::vector<std::string>& default_affordance_vocabulary();

/// One word per line; blank lines and surrounding whitespace ignored.
std::vector<std::string> load_vocabulary(const std::filesystem::path& path);

/// Lower-cases and splits on anything but letters, digits and '_'.
std::vector<std::string> tokenize(const std::string& text);

struct TextEncoderOptions {
  int64_t width = 32;
  std::vector<std::string> vocabulary = default_affordance_vocabulary();
  int64_t hash_buckets = 64;
  std::uint64_t seed = 2468;
};

// Word-level embedding lookup: in-vocabulary words map to their own row,
// other words to one of `hash_buckets` rows by a stable FNV-1a hash, and empty
// text to a dedicated null row. The table is drawn from the seed and frozen.
class StubTextEncoder : public torch::nn::Module {
 public:
  explicit StubTextEncoder(const TextEncoderOptions& options);

  TextEmbedding encode(const std::string& text) const;
  int64_t width() const noexcept { return options_.width; }
  const std::vector<std::string>& vocabulary() const noexcept { return options_.vocabulary; }
  /// Row of the embedding table used for `word`.
  int64_t row_of(const std::string& word) const;

  torch::Tensor table;

 private:
  TextEncoderOptions options_;
};

TextEmbedding encode_affordance_text(const std::string& text, const StubTextEncoder& encoder);

}  // namespace dag
