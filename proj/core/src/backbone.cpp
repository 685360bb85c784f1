#include "dag/backbone.hpp"

#include <torch/script.h>

#include <cmath>

#include "dag/errors.hpp"
#include "dag/nn.hpp"

namespace dag {

NoiseSchedule NoiseSchedule::scaled_linear(int t_max, double beta_start, double beta_end) {
  if (t_max < 1) fail(ErrorKind::Validation, "noise schedule needs t_max >= 1");
  std::vector<double> alpha_bar(static_cast<size_t>(t_max) + 1);
  alpha_bar[0] = 1.0;
  const double a = std::sqrt(beta_start);
  const double b = std::sqrt(beta_end);
  for (int t = 1; t <= t_max; ++t) {
    const double frac = t_max == 1 ? 0.0 : static_cast<double>(t - 1) / (t_max - 1);
    const double root = a + (b - a) * frac;
    alpha_bar[t] = alpha_bar[t - 1] * (1.0 - root * root);
  }
  return NoiseSchedule(std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.size() < 2) fail(ErrorKind::Validation, "noise schedule needs at least two steps");
  if (alpha_bar[0] != 1.0) fail(ErrorKind::Validation, "noise schedule must start at exactly 1");
  for (size_t t = 1; t < alpha_bar.size(); ++t) {
    if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < alpha_bar[t - 1])) {
      fail(ErrorKind::Validation, "noise schedule must be strictly decreasing within (0,1]");
    }
  }
  return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > t_max()) {
    fail(ErrorKind::Step, "diffusion step " + std::to_string(t) + " outside [0, " +
                              std::to_string(t_max()) + "]");
  }
  return alpha_bar_[static_cast<size_t>(t)];
}

torch::Tensor sample_noisy_image(const torch::Tensor& image, double alpha_bar,
                                 const torch::Tensor& noise) {
  if (image.sizes() != noise.sizes()) fail(ErrorKind::Shape, "noise shape must match the image");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) fail(ErrorKind::Step, "alpha_bar must lie in [0,1]");
  if (alpha_bar == 1.0) return image.clone();
  return std::sqrt(alpha_bar) * image + std::sqrt(1.0 - alpha_bar) * noise;
}

torch::Tensor sample_noisy_image(const torch::Tensor& image, int t, const NoiseSchedule& schedule,
                                 const torch::Tensor& noise) {
  return sample_noisy_image(image, schedule.alpha_bar(t), noise);
}

std::vector<LevelShape> FeaturePyramid::shapes() const {
  std::vector<LevelShape> out;
  out.reserve(levels.size());
  for (const auto& l : levels) out.push_back({l.size(0), l.size(1), l.size(2)});
  return out;
}

std::uint64_t FeatureExtractor::checksum() const { return parameter_checksum(*this); }

void FeatureExtractor::mark_frozen() {
  freeze(*this);
  frozen_ = true;
}

// ---------------------------------------------------------------------------

StubDiffusionBackbone::StubDiffusionBackbone(const StubBackboneOptions& options) : options_(options) {
  if (options.channels.size() < 2) fail(ErrorKind::Structural, "feature pyramid needs at least 2 levels");
  ScopedSeed seed(options.seed);
  auto conv = [](int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1));
  };
  stem_ = register_module("stem", conv(3, options.stem_channels));
  int64_t in = options.stem_channels;
  for (size_t l = 0; l < options.channels.size(); ++l) {
    const int64_t c = options.channels[l];
    const auto tag = std::to_string(l);
    downs_.push_back(register_module("down" + tag, conv(in, c)));
    q_.push_back(register_module("attn" + tag + "_q", torch::nn::Linear(c, c)));
    k_.push_back(register_module("attn" + tag + "_k", torch::nn::Linear(options.condition_dim, c)));
    v_.push_back(register_module("attn" + tag + "_v", torch::nn::Linear(options.condition_dim, c)));
    o_.push_back(register_module("attn" + tag + "_o", torch::nn::Linear(c, c)));
    if (options.zero_attention_logits) zero_(q_.back());
    in = c;
  }
  if (options.frozen) mark_frozen();
}

int64_t StubDiffusionBackbone::size_multiple() const {
  return int64_t{1} << (options_.channels.size() + 1);
}

std::vector<LevelShape> StubDiffusionBackbone::level_shapes(int64_t height, int64_t width) const {
  std::vector<LevelShape> out;
  for (size_t l = 0; l < options_.channels.size(); ++l) {
    const int64_t div = int64_t{1} << (l + 2);
    out.push_back({options_.channels[l], height / div, width / div});
  }
  return out;
}

BackboneOutput StubDiffusionBackbone::extract(const torch::Tensor& noisy_image,
                                              const torch::Tensor& condition) {
  if (condition.dim() != 2 || condition.size(1) != options_.condition_dim) {
    fail(ErrorKind::Structural, "condition tokens must be K x " + std::to_string(options_.condition_dim));
  }
  BackboneOutput out;
  auto x = torch::silu(stem_(noisy_image.unsqueeze(0)));
  for (size_t l = 0; l < downs_.size(); ++l) {
    x = torch::silu(downs_[l](x));
    const int64_t c = x.size(1), h = x.size(2), w = x.size(3);
    auto tokens = x.view({c, h * w}).t();  // (h*w) x c
    auto attn = dag::scaled_dot_product_attention(q_[l](tokens), k_[l](condition), v_[l](condition));
    tokens = tokens + o_[l](attn.output);
    x = tokens.t().reshape({1, c, h, w});
    out.pyramid.levels.push_back(x.squeeze(0));
    out.attention.push_back(attn.weights);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ScriptedBackbone::Impl {
  torch::jit::script::Module module;
};

ScriptedBackbone::ScriptedBackbone(const std::filesystem::path& path, int64_t condition_dim,
                                   int64_t size_multiple)
    : impl_(std::make_unique<Impl>()), condition_dim_(condition_dim), size_multiple_(size_multiple) {
  try {
    impl_->module = torch::jit::load(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Io, "cannot load scripted backbone " + path.string() + ": " + e.what_without_backtrace());
  }
  impl_->module.eval();
  for (auto p : impl_->module.parameters()) p.set_requires_grad(false);
  mark_frozen();
}

ScriptedBackbone::~ScriptedBackbone() = default;

BackboneOutput ScriptedBackbone::extract(const torch::Tensor& noisy_image,
                                         const torch::Tensor& condition) {
  torch::ScalarType module_dtype = torch::kFloat;
  for (const auto& p : impl_->module.parameters()) {
    module_dtype = p.scalar_type();
    break;
  }
  const auto dtype = noisy_image.scalar_type();
  std::vector<torch::jit::IValue> inputs{noisy_image.unsqueeze(0).to(module_dtype),
                                         condition.to(module_dtype)};
  auto result = impl_->module.forward(inputs);
  if (!result.isTuple()) fail(ErrorKind::Structural, "scripted backbone must return a tuple");
  const auto elements = result.toTuple()->elements();
  if (elements.size() != 2) fail(ErrorKind::Structural, "scripted backbone must return two lists");
  BackboneOutput out;
  for (const auto& f : elements[0].toTensorVector()) out.pyramid.levels.push_back(f.squeeze(0).to(dtype));
  for (const auto& a : elements[1].toTensorVector()) out.attention.push_back(a.to(dtype));
  if (out.pyramid.levels.size() < 2 || out.attention.size() != out.pyramid.levels.size()) {
    fail(ErrorKind::Structural, "scripted backbone must return >= 2 levels with matching attention");
  }
  return out;
}

std::vector<LevelShape> ScriptedBackbone::level_shapes(int64_t height, int64_t width) const {
  torch::NoGradGuard guard;
  auto probe = const_cast<ScriptedBackbone*>(this)->extract(torch::zeros({3, height, width}),
                                                            torch::zeros({1, condition_dim_}));
  return probe.pyramid.shapes();
}

std::uint64_t ScriptedBackbone::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& p : impl_->module.parameters()) {
    const auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const size_t n = static_cast<size_t>(c.numel()) * c.element_size();
    for (size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

// ---------------------------------------------------------------------------

BackboneOutput extract_pyramid(const torch::Tensor& noisy_image, const torch::Tensor& condition,
                               FeatureExtractor& backbone) {
  if (noisy_image.dim() != 3 || noisy_image.size(0) != 3) {
    fail(ErrorKind::Shape, "image must be 3 x H x W");
  }
  const int64_t m = backbone.size_multiple();
  if (noisy_image.size(1) % m != 0 || noisy_image.size(2) % m != 0) {
    fail(ErrorKind::Shape, "image sides " + std::to_string(noisy_image.size(1)) + "x" +
                               std::to_string(noisy_image.size(2)) + " must be divisible by " +
                               std::to_string(m));
  }
  return backbone.extract(noisy_image, condition);
}

torch::Tensor word_attention_map(const BackboneOutput& output, int64_t word_index, int64_t level) {
  if (level < 0 || level >= static_cast<int64_t>(output.attention.size())) {
    fail(ErrorKind::Index, "pyramid level " + std::to_string(level) + " out of range [0, " +
                               std::to_string(output.attention.size()) + ")");
  }
  const auto& attn = output.attention[static_cast<size_t>(level)];
  if (word_index < 0 || word_index >= attn.size(1)) {
    fail(ErrorKind::Index, "word index " + std::to_string(word_index) + " out of range [0, " +
                               std::to_string(attn.size(1)) + ")");
  }
  const auto& feat = output.pyramid.levels[static_cast<size_t>(level)];
  return attn.select(1, word_index).reshape({feat.size(1), feat.size(2)});
}

// ---------------------------------------------------------------------------

PyramidAggregatorImpl::PyramidAggregatorImpl(const AggregatorOptions& options) {
  if (options.level_channels.size() < 2) fail(ErrorKind::Structural, "aggregation needs >= 2 levels");
  logits = register_parameter("logits", torch::zeros({static_cast<int64_t>(options.level_channels.size())}));
  for (size_t l = 0; l < options.level_channels.size(); ++l) {
    projections.push_back(register_module("proj" + std::to_string(l),
                                          torch::nn::Linear(options.level_channels[l], options.dim)));
  }
}

torch::Tensor PyramidAggregatorImpl::forward(const FeaturePyramid& pyramid) {
  if (pyramid.depth() != projections.size()) {
    fail(ErrorKind::Structural, "pyramid has " + std::to_string(pyramid.depth()) +
                                    " levels but the aggregator expects " +
                                    std::to_string(projections.size()));
  }
  const auto& finest = pyramid.levels.front();
  const int64_t h = finest.size(1), w = finest.size(2);
  const auto weights = mixing_weights();
  torch::Tensor sum;
  for (size_t l = 0; l < projections.size(); ++l) {
    auto level = pyramid.levels[l];
    if (level.size(1) != h || level.size(2) != w) {
      level = torch::nn::functional::interpolate(
                  level.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                          .size(std::vector<int64_t>{h, w})
                                          .mode(torch::kBilinear)
                                          .align_corners(false))
                  .squeeze(0);
    }
    // 1x1 projection: (h*w) x C_l -> (h*w) x d
    auto projected = projections[l](level.flatten(1).t());
    auto term = weights[static_cast<int64_t>(l)] * projected;
    sum = sum.defined() ? sum + term : term;
  }
  return sum.t().reshape({-1, h, w});
}

torch::Tensor aggregate_pyramid(const FeaturePyramid& pyramid, PyramidAggregator& aggregator) {
  return aggregator->forward(pyramid);
}

}  // namespace dag
