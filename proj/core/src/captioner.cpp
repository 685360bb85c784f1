#include "dag/captioner.hpp"

#include <cctype>
#include <fstream>

#include "dag/errors.hpp"

namespace dag {

StubImageEncoder::StubImageEncoder(const StubImageEncoderOptions& options) : options_(options) {
  ScopedSeed seed(options.seed);
  const int64_t d = options.width;
  patch_embed_ = register_module("patch_embed", torch::nn::Linear(3 * options.patch_size * options.patch_size, d));
  for (int64_t i = 0; i < options.layers; ++i) {
    const auto tag = std::to_string(i);
    Layer layer;
    layer.norm1 = register_module("norm1_" + tag, torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    layer.norm2 = register_module("norm2_" + tag, torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    layer.attn = register_module("attn" + tag, MultiHeadAttention(AttentionOptions{d, d, d, options.heads}));
    layer.ffn = register_module("ffn" + tag, FeedForward(d, 4 * d));
    layers_.push_back(std::move(layer));
  }
  final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  freeze(*this);
}

torch::Tensor StubImageEncoder::encode(const torch::Tensor& image, const torch::Tensor& prompts) {
  const int64_t p = options_.patch_size;
  const int64_t h = image.size(1), w = image.size(2);
  if (h % p != 0 || w % p != 0) {
    fail(ErrorKind::Shape, "image sides must be divisible by the patch size " + std::to_string(p));
  }
  if (prompts.dim() != 2 || prompts.size(1) != options_.width) {
    fail(ErrorKind::Structural, "prompt tokens must be P x " + std::to_string(options_.width));
  }
  const int64_t gh = h / p, gw = w / p;
  // 3 x gh x p x gw x p -> (gh*gw) x (3*p*p)
  auto patches = image.reshape({3, gh, p, gw, p}).permute({1, 3, 0, 2, 4}).reshape({gh * gw, 3 * p * p});
  auto tokens = patch_embed_(patches) +
                positional_encoding_2d(gh, gw, options_.width, image.options());
  auto x = torch::cat({prompts, tokens}, 0);
  for (auto& layer : layers_) {
    auto n = layer.norm1(x);
    x = x + layer.attn(n, n).output;
    x = x + layer.ffn(layer.norm2(x));
  }
  return final_norm_(x);
}

torch::Tensor encode_image_with_prompts(const torch::Tensor& image, const torch::Tensor& prompts,
                                        ImageEncoder& encoder) {
  const auto states = encoder.encode(image, prompts);
  return states.slice(0, 0, prompts.size(0)).mean(0);
}

CaptionProjectorImpl::CaptionProjectorImpl(int64_t image_dim, int64_t hidden, int64_t caption_tokens,
                                           int64_t text_dim)
    : caption_tokens_(caption_tokens), text_dim_(text_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(image_dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, caption_tokens * text_dim));
  zero_(fc2);
}

torch::Tensor CaptionProjectorImpl::forward(const torch::Tensor& image_embedding) {
  return fc2(torch::gelu(fc1(image_embedding))).view({caption_tokens_, text_dim_});
}

SelfPromptCaptionerImpl::SelfPromptCaptionerImpl(std::shared_ptr<ImageEncoder> image_encoder,
                                                 const CaptionerOptions& options)
    : encoder(std::move(image_encoder)) {
  if (options.prompt_count < 1) fail(ErrorKind::Validation, "prompt_count must be >= 1");
  register_module("encoder", encoder);
  prompts = register_parameter("prompts", 0.02 * torch::randn({options.prompt_count, encoder->width()}));
  projector = register_module("projector", CaptionProjector(encoder->width(), options.hidden,
                                                            options.caption_tokens, options.text_dim));
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& default_affordance_vocabulary() {
  static const std::vector<std::string> vocab = {
      "grasp", "contain", "lift",    "open", "lay",    "sit",    "support", "wrapgrasp", "pour",
      "move",  "display", "push",    "listen", "wear", "press",  "cut",     "stab"};
  return vocab;
}

std::vector<std::string> load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& w : tokenize(line)) words.push_back(std::move(w));
  }
  if (words.empty()) fail(ErrorKind::Validation, "vocabulary " + path.string() + " is empty");
  return words;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_' || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

StubTextEncoder::StubTextEncoder(const TextEncoderOptions& options) : options_(options) {
  if (options.hash_buckets < 1) fail(ErrorKind::Validation, "text encoder needs >= 1 hash bucket");
  ScopedSeed seed(options.seed);
  const int64_t rows = static_cast<int64_t>(options.vocabulary.size()) + options.hash_buckets + 1;
  table = register_parameter("table", torch::randn({rows, options.width}), /*requires_grad=*/false);
}

int64_t StubTextEncoder::row_of(const std::string& word) const {
  const auto& vocab = options_.vocabulary;
  for (size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == word) return static_cast<int64_t>(i);
  }
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : word) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return static_cast<int64_t>(vocab.size()) +
         static_cast<int64_t>(hash % static_cast<std::uint64_t>(options_.hash_buckets));
}

TextEmbedding StubTextEncoder::encode(const std::string& text) const {
  TextEmbedding out;
  out.source_text = text;
  out.words = tokenize(text);
  std::vector<int64_t> rows;
  for (const auto& w : out.words) rows.push_back(row_of(w));
  if (rows.empty()) {
    rows.push_back(table.size(0) - 1);
    out.words.push_back("<null>");
  }
  out.tokens = table.index_select(0, torch::tensor(rows, torch::kLong));
  return out;
}

TextEmbedding encode_affordance_text(const std::string& text, const StubTextEncoder& encoder) {
  return encoder.encode(text);
}

}  // namespace dag
