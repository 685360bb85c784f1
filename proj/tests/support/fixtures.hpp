#pragma once

#include <filesystem>
#include <string>

#include "dag/config.hpp"
#include "dag/data_model.hpp"

namespace dag::fixture {

// A configuration small enough for many end-to-end runs per test.
inline RunConfig tiny_config() {
  RunConfig c;
  c.pyramid_channels = {8, 12, 16};
  c.stem_channels = 4;
  c.widths = {16, 8, 8, 8};
  c.prompt_count = 2;
  c.caption_tokens = 2;
  c.image_encoder_layers = 1;
  c.pooling_m = 2;
  c.level_sizes = {32, 8};
  c.radii = {0.4, 0.8};
  c.group_sizes = {8, 8};
  c.point_channels = {8, 16, 16};
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.seed = 1;
  return c;
}

inline SyntheticConfig tiny_synthetic(std::uint64_t seed = 0) {
  SyntheticConfig s;
  s.n_points = 64;
  s.image_size = 32;
  s.region_radius = 1.0;
  s.seed = seed;
  return s;
}

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dag_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dag::fixture
