#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dag/config.hpp"
#include "dag/model.hpp"

namespace dag {

// A checkpoint is a directory holding the parameter archive and a text
// manifest that ties the archive to the configuration that produced it.
inline constexpr const char* kCheckpointBlob = "checkpoint.pt";
inline constexpr const char* kCheckpointManifest = "checkpoint.manifest";

struct CheckpointInfo {
  std::string format;
  std::uint64_t config_hash = 0;
  std::uint64_t blob_hash = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  int step = 0;
  std::vector<double> loss_tail;
  RunConfig config;
};

void save_checkpoint(DagModel& model, const std::filesystem::path& dir, int epoch, int step,
                     const std::vector<double>& loss_tail);

/// Reads and verifies the manifest and the archive hash.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Rebuilds the model from the stored configuration.
std::shared_ptr<DagModel> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

/// Loads onto a model built from `expected`; a different parameter layout is
/// a checkpoint error.
std::shared_ptr<DagModel> load_checkpoint(const std::filesystem::path& dir, const RunConfig& expected,
                                          CheckpointInfo* info = nullptr);

}  // namespace dag
