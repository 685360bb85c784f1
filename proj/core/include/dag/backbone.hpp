#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <torch/torch.h>

namespace dag {

// ᾱ_t over t = 0..t_max with ᾱ_0 = 1 (t = 0 leaves the image untouched).
class NoiseSchedule {
 public:
  /// Stable-Diffusion style schedule: betas linear in sqrt-space between
  /// beta_start and beta_end over t_max steps.
  static NoiseSchedule scaled_linear(int t_max = 1000, double beta_start = 0.00085,
                                     double beta_end = 0.012);
  /// Explicit table; entry 0 must be exactly 1 and the table strictly decreasing in (0,1].
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  double alpha_bar(int t) const;
  int t_max() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }

 private:
  explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {}
  std::vector<double> alpha_bar_;
};

/// sqrt(ᾱ) * image + sqrt(1 - ᾱ) * noise, for ᾱ in [0,1]. ᾱ = 1 returns an
/// exact copy of the image.
torch::Tensor sample_noisy_image(const torch::Tensor& image, double alpha_bar,
                                 const torch::Tensor& noise);
torch::Tensor sample_noisy_image(const torch::Tensor& image, int t, const NoiseSchedule& schedule,
                                 const torch::Tensor& noise);

struct LevelShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  bool operator==(const LevelShape&) const = default;
};

// Multi-scale feature maps, level l of shape C_l x H_l x W_l, finest first.
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;

  size_t depth() const noexcept { return levels.size(); }
  std::vector<LevelShape> shapes() const;
};

struct BackboneOutput {
  FeaturePyramid pyramid;
  // Per level: (H_l * W_l) x K cross-attention weights from each spatial
  // position to the K condition tokens.
  std::vector<torch::Tensor> attention;
};

// Conditional denoiser used as a frozen feature extractor. Implementations
// must be deterministic; output shapes depend only on (H, W) and configuration.
class FeatureExtractor : public torch::nn::Module {
 public:
  ~FeatureExtractor() override = default;

  /// noisy_image: 3 x H x W, condition: K x condition_dim tokens.
  virtual BackboneOutput extract(const torch::Tensor& noisy_image, const torch::Tensor& condition) = 0;
  virtual std::vector<LevelShape> level_shapes(int64_t height, int64_t width) const = 0;
  virtual int64_t condition_dim() const = 0;
  /// Image sides must be multiples of this.
  virtual int64_t size_multiple() const = 0;
  virtual std::uint64_t checksum() const;

  bool frozen() const noexcept { return frozen_; }

 protected:
  void mark_frozen();

 private:
  bool frozen_ = false;
};

struct StubBackboneOptions {
  std::vector<int64_t> channels{32, 64, 128};  // one entry per pyramid level
  int64_t stem_channels = 16;
  int64_t condition_dim = 32;
  std::uint64_t seed = 1234;
  bool zero_attention_logits = false;  // uniform cross-attention (for inspection)
  bool frozen = true;
};

// Small fixed-seed stand-in for a diffusion UNet: a stride-2 stem, then per
// level a stride-2 convolution followed by one cross-attention layer over the
// condition tokens. Level l (counting from 0) has spatial size (H, W) / 2^(l+2).
class StubDiffusionBackbone : public FeatureExtractor {
 public:
  explicit StubDiffusionBackbone(const StubBackboneOptions& options);

  BackboneOutput extract(const torch::Tensor& noisy_image, const torch::Tensor& condition) override;
  std::vector<LevelShape> level_shapes(int64_t height, int64_t width) const override;
  int64_t condition_dim() const override { return options_.condition_dim; }
  int64_t size_multiple() const override;

  const StubBackboneOptions& options() const noexcept { return options_; }

 private:
  StubBackboneOptions options_;
  torch::nn::Conv2d stem_{nullptr};
  std::vector<torch::nn::Conv2d> downs_;
  std::vector<torch::nn::Linear> q_, k_, v_, o_;
};

// Adapter seam for an externally prepared denoiser exported as TorchScript.
// The scripted module's forward takes (image: 1x3xHxW, condition: KxD) and
// returns (List[Tensor] features 1xC_lxH_lxW_l, List[Tensor] attention
// (H_l*W_l)xK). Its parameters are never optimised.
class ScriptedBackbone : public FeatureExtractor {
 public:
  ScriptedBackbone(const std::filesystem::path& path, int64_t condition_dim, int64_t size_multiple);
  ~ScriptedBackbone() override;

  BackboneOutput extract(const torch::Tensor& noisy_image, const torch::Tensor& condition) override;
  std::vector<LevelShape> level_shapes(int64_t height, int64_t width) const override;
  int64_t condition_dim() const override { return condition_dim_; }
  int64_t size_multiple() const override { return size_multiple_; }
  std::uint64_t checksum() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int64_t condition_dim_;
  int64_t size_multiple_;
};

/// Runs the extractor after checking the image against its size constraint.
BackboneOutput extract_pyramid(const torch::Tensor& noisy_image, const torch::Tensor& condition,
                               FeatureExtractor& backbone);

/// Attention from every spatial position of `level` to token `word_index`,
/// as an H_l x W_l map.
torch::Tensor word_attention_map(const BackboneOutput& output, int64_t word_index, int64_t level);

struct AggregatorOptions {
  std::vector<int64_t> level_channels;
  int64_t dim = 64;
};

// Learned layer mixing: each level is bilinearly resized to the finest
// level's grid, projected to `dim` channels by a per-level 1x1 linear map and
// summed with softmax(logits) weights.
class PyramidAggregatorImpl : public torch::nn::Module {
 public:
  explicit PyramidAggregatorImpl(const AggregatorOptions& options);

  /// Returns dim x H_1 x W_1.
  torch::Tensor forward(const FeaturePyramid& pyramid);
  torch::Tensor mixing_weights() const { return torch::softmax(logits, 0); }
  size_t depth() const noexcept { return projections.size(); }

  torch::Tensor logits;
  std::vector<torch::nn::Linear> projections;
};
TORCH_MODULE(PyramidAggregator);

torch::Tensor aggregate_pyramid(const FeaturePyramid& pyramid, PyramidAggregator& aggregator);

}  // namespace dag
