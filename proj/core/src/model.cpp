#include "dag/model.hpp"

#include <bit>

#include "dag/errors.hpp"
#include "dag/nn.hpp"

namespace dag {
namespace {

std::shared_ptr<FeatureExtractor> make_backbone(const RunConfig& c) {
  if (c.toggles.extractor == ExtractorKind::Adapter) {
    return std::make_shared<ScriptedBackbone>(c.adapter_path, c.widths.d_txt, c.adapter_size_multiple);
  }
  StubBackboneOptions o;
  o.channels = c.pyramid_channels;
  o.stem_channels = c.stem_channels;
  o.condition_dim = c.widths.d_txt;
  o.seed = c.backbone_seed;
  return std::make_shared<StubDiffusionBackbone>(o);
}

std::vector<int64_t> pyramid_channels(const RunConfig& c, FeatureExtractor& backbone) {
  if (c.toggles.extractor == ExtractorKind::StubDiffusion) return c.pyramid_channels;
  const int64_t side = backbone.size_multiple() * 2;
  std::vector<int64_t> channels;
  for (const auto& s : backbone.level_shapes(side, side)) channels.push_back(s.channels);
  return channels;
}

int log2_exact(int64_t value) {
  if (value < 1 || !std::has_single_bit(static_cast<uint64_t>(value))) {
    fail(ErrorKind::Validation, "image size multiple must be a power of two, got " + std::to_string(value));
  }
  return std::countr_zero(static_cast<uint64_t>(value));
}

}  // namespace

DagModel::DagModel(const RunConfig& config)
    : config_(config),
      schedule_(NoiseSchedule::scaled_linear()),
      noise_generator_(at::detail::createCPUGenerator(config.seed)) {
  config_.validate();
  if (config_.diffusion_step_t > schedule_.t_max()) {
    fail(ErrorKind::Step, "diffusion_step_t exceeds the schedule length " + std::to_string(schedule_.t_max()));
  }
  const auto& c = config_;
  const auto& w = c.widths;

  backbone = register_module("backbone", make_backbone(c));
  image_depth_ = log2_exact(backbone->size_multiple());

  TextEncoderOptions text_options;
  text_options.width = w.d_txt;
  text_options.seed = c.text_encoder_seed;
  if (!c.vocab_path.empty()) text_options.vocabulary = load_vocabulary(c.vocab_path);
  text_encoder = register_module("text_encoder", std::make_shared<StubTextEncoder>(text_options));

  if (c.toggles.captioner == CaptionerKind::Implicit) {
    StubImageEncoderOptions image_options;
    image_options.width = w.d_img;
    image_options.patch_size = c.patch_size;
    image_options.layers = c.image_encoder_layers;
    image_options.heads = c.heads;
    image_options.seed = c.image_encoder_seed;
    image_encoder = std::make_shared<StubImageEncoder>(image_options);
  }

  // Trainable parts draw from the run seed.
  ScopedSeed seed(c.seed);
  if (image_encoder) {
    CaptionerOptions caption_options;
    caption_options.prompt_count = c.prompt_count;
    caption_options.caption_tokens = c.caption_tokens;
    caption_options.text_dim = w.d_txt;
    captioner = register_module("captioner", SelfPromptCaptioner(image_encoder, caption_options));
  }

  aggregator = register_module("aggregator",
                               PyramidAggregator(AggregatorOptions{pyramid_channels(c, *backbone), w.d}));

  if (c.toggles.affordance_block) {
    AffordanceBlockOptions block_options;
    block_options.dim = w.d;
    block_options.text_dim = w.d_txt;
    block_options.heads = c.heads;
    block_options.positional_encoding = c.positional_encoding;
    for (int b = 0; b < c.blocks; ++b) {
      blocks.push_back(register_module("block" + std::to_string(b), AffordanceBlock(block_options)));
    }
  }

  PointEncoderOptions point_options;
  point_options.level_sizes = c.level_sizes;
  point_options.radii = c.radii;
  point_options.group_sizes = c.group_sizes;
  point_options.level_channels = c.point_channels;
  point_options.cls_dim = w.d_p;
  point_options.freeze = c.freeze_point_encoder;
  point_encoder = register_module("point_encoder", PointEncoder(point_options));
  propagation = register_module("propagation", FeaturePropagation(c.point_channels, w.d));

  DecoderOptions decoder_options;
  decoder_options.dim = w.d;
  decoder_options.cls_dim = w.d_p;
  decoder_options.heads = c.heads;
  decoder_options.use_cls = c.toggles.cls_token;
  decoder = register_module("decoder", AffordanceDecoder(decoder_options));
}

PreparedSample DagModel::prepare(const AffordanceSample& sample) const {
  validate_sample(sample, image_depth_);
  PreparedSample out;
  out.image = torch::tensor(sample.image.pixels, torch::kDouble)
                  .view({3, sample.image.height, sample.image.width})
                  .to(torch::kFloat);
  const auto points = config_.normalize_points ? normalize_points(sample.points) : sample.points;
  auto coords = torch::empty({static_cast<int64_t>(points.size()), 3}, torch::kDouble);
  auto acc = coords.accessor<double, 2>();
  for (size_t i = 0; i < points.size(); ++i) {
    for (int j = 0; j < 3; ++j) acc[static_cast<int64_t>(i)][j] = points[i][static_cast<size_t>(j)];
  }
  out.coords = coords.to(torch::kFloat);
  out.labels = torch::tensor(sample.labels, torch::kDouble).to(torch::kFloat);
  out.text = sample.text;
  return out;
}

torch::Tensor DagModel::noisy(const torch::Tensor& image) {
  const int t = config_.diffusion_step_t;
  if (t == 0) return sample_noisy_image(image, 1.0, torch::zeros_like(image));
  auto noise = torch::randn(image.sizes(), noise_generator_, image.options());
  return sample_noisy_image(image, t, schedule_, noise);
}

DagModel::Condition DagModel::captioner_tokens(const torch::Tensor& image, const std::string& text) {
  switch (config_.toggles.captioner) {
    case CaptionerKind::Empty: {
      auto e = text_encoder->encode("");
      return {e.tokens, e.words};
    }
    case CaptionerKind::Verb: {
      auto e = encode_affordance_text(text, *text_encoder);
      return {e.tokens, e.words};
    }
    case CaptionerKind::Implicit: {
      Condition out{captioner->forward(image), {}};
      for (int64_t k = 0; k < out.tokens.size(0); ++k) out.words.push_back("caption_" + std::to_string(k));
      return out;
    }
  }
  fail(ErrorKind::UnsupportedVariant, "unknown captioner variant");
}

ModelOutput DagModel::forward(const PreparedSample& sample) {
  ModelOutput out;
  const auto caption = captioner_tokens(sample.image, sample.text);
  const auto explicit_text = encode_affordance_text(sample.text, *text_encoder);
  if (config_.swap_text_sources) {
    out.condition = explicit_text.tokens;
    out.condition_words = explicit_text.words;
    out.block_text = caption.tokens;
  } else {
    out.condition = caption.tokens;
    out.condition_words = caption.words;
    out.block_text = explicit_text.tokens;
  }

  out.backbone = extract_pyramid(noisy(sample.image), out.condition, *backbone);
  const auto visual = to_visual_tokens(aggregator->forward(out.backbone.pyramid));
  const auto fused = blocks.empty() ? visual.tokens : affordance_block(visual, out.block_text, blocks);
  out.affordance_tokens = pool_tokens(fused, visual.height, visual.width, config_.pooling_m);

  const auto encoding = point_encoder->forward(sample.coords);
  const auto point_feats = propagation->forward(encoding.levels);
  out.mask = decoder->forward(point_feats, encoding.cls, out.affordance_tokens);
  return out;
}

AttentionExport DagModel::export_word_attention(const Image& image, const std::string& text,
                                                int64_t word_index, int64_t level) {
  AffordanceSample probe;
  probe.points = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  probe.labels = {0, 0, 0};
  probe.image = image;
  probe.text = text;
  validate_sample(probe, image_depth_);
  torch::NoGradGuard no_grad;
  const auto prepared = prepare(probe);
  const auto caption = captioner_tokens(prepared.image, text);
  Condition condition = caption;
  if (config_.swap_text_sources) {
    const auto e = encode_affordance_text(text, *text_encoder);
    condition = {e.tokens, e.words};
  }
  const auto output = extract_pyramid(noisy(prepared.image), condition.tokens, *backbone);
  AttentionExport out;
  out.map = word_attention_map(output, word_index, level);
  out.word = condition.words.at(static_cast<size_t>(word_index));
  out.word_index = word_index;
  out.level = level;
  return out;
}

std::vector<torch::Tensor> DagModel::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

int64_t DagModel::trainable_count() const { return count_trainable(*this); }

std::uint64_t DagModel::frozen_checksum() const {
  std::uint64_t h = backbone->checksum();
  auto mix = [&h](std::uint64_t v) { h = (h ^ v) * 0x100000001b3ULL; };
  mix(parameter_checksum(*text_encoder));
  if (image_encoder) mix(parameter_checksum(*image_encoder));
  if (config_.freeze_point_encoder) mix(parameter_checksum(*point_encoder));
  return h;
}

}  // namespace dag
