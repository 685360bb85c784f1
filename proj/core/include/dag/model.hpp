#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dag/affordance_block.hpp"
#include "dag/backbone.hpp"
#include "dag/captioner.hpp"
#include "dag/config.hpp"
#include "dag/data_model.hpp"
#include "dag/decoder.hpp"
#include "dag/point_backbone.hpp"

namespace dag {

// Tensor form of one sample, ready for the forward pass.
struct PreparedSample {
  torch::Tensor image;   // 3 x H x W
  torch::Tensor coords;  // N x 3, normalised when configured
  torch::Tensor labels;  // N
  std::string text;
};

struct ModelOutput {
  torch::Tensor mask;             // N, in [0,1]
  torch::Tensor condition;        // K x d_txt tokens fed to the backbone
  std::vector<std::string> condition_words;
  torch::Tensor block_text;       // K' x d_txt tokens fed to the affordance block
  torch::Tensor affordance_tokens;  // m^2 x d
  BackboneOutput backbone;
};

struct AttentionExport {
  torch::Tensor map;  // H_l x W_l
  std::string word;
  int64_t word_index = 0;
  int64_t level = 0;
};

// The full grounding pipeline assembled from a RunConfig.
class DagModel : public torch::nn::Module {
 public:
  explicit DagModel(const RunConfig& config);

  PreparedSample prepare(const AffordanceSample& sample) const;
  ModelOutput forward(const PreparedSample& sample);
  torch::Tensor predict(const PreparedSample& sample) { return forward(sample).mask; }

  /// Cross-attention of the backbone from every position of `level` to
  /// condition token `word_index`.
  AttentionExport export_word_attention(const Image& image, const std::string& text, int64_t word_index,
                                        int64_t level);

  /// Parameters the optimiser updates.
  std::vector<torch::Tensor> trainable_parameters() const;
  int64_t trainable_count() const;
  /// Combined checksum of the frozen feature extractor and encoders.
  std::uint64_t frozen_checksum() const;

  /// log2 of the side multiple the images must satisfy.
  int image_depth() const noexcept { return image_depth_; }
  const RunConfig& config() const noexcept { return config_; }

  std::shared_ptr<FeatureExtractor> backbone;
  PyramidAggregator aggregator{nullptr};
  std::shared_ptr<StubImageEncoder> image_encoder;
  SelfPromptCaptioner captioner{nullptr};
  std::shared_ptr<StubTextEncoder> text_encoder;
  std::vector<AffordanceBlock> blocks;
  PointEncoder point_encoder{nullptr};
  FeaturePropagation propagation{nullptr};
  AffordanceDecoder decoder{nullptr};

 private:
  struct Condition {
    torch::Tensor tokens;
    std::vector<std::string> words;
  };
  Condition captioner_tokens(const torch::Tensor& image, const std::string& text);
  torch::Tensor noisy(const torch::Tensor& image);

  RunConfig config_;
  NoiseSchedule schedule_;
  int image_depth_ = 0;
  torch::Generator noise_generator_;
};

}  // namespace dag
