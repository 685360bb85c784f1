#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dag::metrics {

enum class MiouMode {
  Sweep,   // mean IoU over thresholds 0.01, 0.02, ..., 0.99
  Single,  // IoU at one threshold
};

struct MetricOptions {
  double gt_threshold = 0.5;  // ground truth >= threshold is positive
  MiouMode miou_mode = MiouMode::Sweep;
  double single_threshold = 0.5;
};

/// Tie-corrected rank AUC, (wins + 0.5 ties) / (positives * negatives).
/// Empty when the binarized ground truth is all-positive or all-negative.
std::optional<double> auc(std::span<const double> pred, std::span<const double> gt,
                          double gt_threshold = 0.5);

/// IoU between {pred > threshold} and the binarized ground truth; two empty
/// sets score 1, exactly one empty set scores 0.
double iou_at(std::span<const double> pred, std::span<const double> gt, double threshold,
              double gt_threshold = 0.5);

double miou(std::span<const double> pred, std::span<const double> gt,
            const MetricOptions& options = {});

/// Histogram intersection of the two sum-normalized maps.
double sim(std::span<const double> pred, std::span<const double> gt);

double mae(std::span<const double> pred, std::span<const double> gt);

struct SampleMetrics {
  std::optional<double> auc;
  double miou = 0.0;
  double sim = 0.0;
  double mae = 0.0;
};

SampleMetrics evaluate_sample(std::span<const double> pred, std::span<const double> gt,
                              const MetricOptions& options = {});

struct MetricsReport {
  std::optional<double> auc;  // empty when every sample was skipped
  double miou = 0.0;
  double sim = 0.0;
  double mae = 0.0;
  int n_samples = 0;
  int n_auc_skipped = 0;
  std::string split;  // "seen"/"unseen", empty when unknown
};

// Order-independent fold of per-sample metrics into dataset means.
class MetricsAccumulator {
 public:
  void add(const SampleMetrics& sample);
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;

 private:
  double auc_sum_ = 0.0;
  double miou_sum_ = 0.0;
  double sim_sum_ = 0.0;
  double mae_sum_ = 0.0;
  int n_ = 0;
  int n_auc_ = 0;
};

/// "metric<TAB>value" lines: split (when set), auc, miou, sim, mae,
/// n_samples, n_auc_skipped. An undefined AUC is written as "undefined".
std::string serialize(const MetricsReport& report);
MetricsReport parse_report(const std::string& text);

struct MetricSpread {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over seeds
};

struct SeedSummary {
  MetricSpread auc, miou, sim, mae;
  int n_seeds = 0;
};

/// Mean and spread of each metric across per-seed reports. Seeds with an
/// undefined AUC are left out of the AUC spread.
SeedSummary summarize_seeds(std::span<const MetricsReport> reports);

}  // namespace dag::metrics
