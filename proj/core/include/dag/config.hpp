#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dag/data_model.hpp"

namespace dag {

enum class CaptionerKind { Empty, Verb, Implicit };
enum class ExtractorKind { StubDiffusion, Adapter };

const char* to_string(CaptionerKind kind) noexcept;
const char* to_string(ExtractorKind kind) noexcept;
/// Throws UnsupportedVariant for known-but-excluded captioners (e.g. blip).
CaptionerKind parse_captioner(const std::string& text);
ExtractorKind parse_extractor(const std::string& text);

// Architecture switches that mirror the ablation axes.
struct Toggles {
  bool affordance_block = true;
  bool cls_token = true;
  CaptionerKind captioner = CaptionerKind::Implicit;
  ExtractorKind extractor = ExtractorKind::StubDiffusion;
};

struct Widths {
  int64_t d = 64;      // common fusion width
  int64_t d_txt = 32;  // text / condition token width
  int64_t d_img = 32;  // image-encoder width
  int64_t d_p = 64;    // point [CLS] width
};

struct RunConfig {
  // Optimisation.
  double learning_rate = 1e-4;
  int epochs = 80;
  int batch_size = 4;
  int max_steps = 0;  // 0: no cap beyond epochs
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int checkpoint_every = 0;  // epochs between periodic checkpoints, 0 disables

  // Diffusion feature extraction.
  int diffusion_step_t = 0;
  std::vector<int64_t> pyramid_channels{32, 64, 128};
  int64_t stem_channels = 16;
  std::uint64_t backbone_seed = 1234;
  std::string adapter_path;  // TorchScript module for extractor = adapter
  int64_t adapter_size_multiple = 16;

  // Captioner and encoders.
  Toggles toggles;
  Widths widths;
  int prompt_count = 8;
  int caption_tokens = 4;
  int64_t patch_size = 8;
  int64_t image_encoder_layers = 2;
  std::uint64_t image_encoder_seed = 4321;
  std::uint64_t text_encoder_seed = 2468;
  std::string vocab_path;  // empty: built-in affordance vocabulary
  // Feed the explicit text to the backbone and the implicit caption to the
  // block instead of the default assignment.
  bool swap_text_sources = false;

  // Fusion.
  int pooling_m = 4;
  int heads = 1;
  int blocks = 1;
  bool positional_encoding = true;

  // Points.
  std::vector<int64_t> level_sizes{512, 128};
  std::vector<double> radii{0.2, 0.4};
  std::vector<int64_t> group_sizes{32, 32};
  std::vector<int64_t> point_channels{32, 64, 128};
  bool freeze_point_encoder = false;
  bool normalize_points = true;

  // Evaluation.
  double gt_threshold = 0.5;
  std::string miou_mode = "sweep";  // sweep | single
  double miou_threshold = 0.5;

  void validate() const;
};

/// Sets one field from its textual form; unknown keys are usage errors.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);
/// Parses "key = value" lines ('#' starts a comment).
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// DAG_SEED, when set, replaces the configured seed.
void apply_environment(RunConfig& config);

/// Canonical "key = value" text covering every field, in a fixed order.
std::string serialize(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);
/// Hash over the fields that determine the parameter layout only.
std::uint64_t architecture_hash(const RunConfig& config);

std::vector<std::string> run_config_keys();

SyntheticConfig parse_synthetic_config(const std::string& text);
SyntheticConfig load_synthetic_config(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view text);

}  // namespace dag
