#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dag/config.hpp"
#include "dag/data_model.hpp"
#include "dag/losses.hpp"
#include "dag/metrics.hpp"
#include "dag/model.hpp"

namespace dag {

struct TrainOptions {
  // Called after every optimiser step with the 1-based step index.
  std::function<void(int step, const LossBreakdown& loss)> on_step;
  // Periodic checkpoints, the loss log and the final checkpoint go here;
  // empty keeps everything in memory.
  std::filesystem::path out_dir;
};

struct TrainResult {
  std::vector<LossBreakdown> trace;  // one entry per optimiser step
  int steps = 0;
  int epochs = 0;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
  std::filesystem::path checkpoint;  // empty when no out_dir was given
};

/// Adam over the trainable parameters with the mean batch loss.
TrainResult train(DagModel& model, const std::vector<AffordanceSample>& samples, const TrainOptions& options = {});

/// Builds the model from `config`, loads the manifest and trains.
TrainResult train(const RunConfig& config, const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                  std::shared_ptr<DagModel>* trained = nullptr);

metrics::MetricOptions metric_options(const RunConfig& config);

/// Per-point masks for every sample, in sample order.
std::vector<std::vector<double>> predict_masks(DagModel& model, const std::vector<AffordanceSample>& samples);

metrics::MetricsReport evaluate(DagModel& model, const std::vector<AffordanceSample>& samples, Split split);
metrics::MetricsReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest);

/// Writes one mask value per line, aligned with the point file. Point files
/// may omit labels.
std::vector<double> infer(const std::filesystem::path& checkpoint, const std::filesystem::path& points,
                          const std::filesystem::path& image, const std::string& text,
                          const std::filesystem::path& out);

struct AblationResult {
  RunConfig config;
  int64_t trainable_parameters = 0;
  TrainResult training;
  metrics::MetricsReport report;
};

/// Applies key=value overrides, trains and evaluates on the same manifest.
AblationResult ablate(RunConfig config, const std::vector<std::pair<std::string, std::string>>& overrides,
                      const DatasetManifest& manifest, const std::filesystem::path& out_dir = {});

/// Writes sample_XXXX.pts / sample_XXXX.ppm and manifest.tsv; returns the
/// manifest path.
std::filesystem::path make_synthetic(const SyntheticConfig& config, int count, const std::filesystem::path& out_dir);

/// Writes the attention map as text (a "#" metadata line, then one row per
/// line) and an 8-bit PGM next to it.
AttentionExport export_attention(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                                 const std::string& text, int64_t word_index, int64_t level,
                                 const std::filesystem::path& out);

void write_mask(const std::filesystem::path& path, const std::vector<double>& mask);

}  // namespace dag
