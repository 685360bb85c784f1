#include "dag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dag/errors.hpp"

namespace dag::metrics {
namespace {

void check_shapes(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) {
    fail(ErrorKind::Structural, "prediction has " + std::to_string(pred.size()) +
                                    " values but ground truth has " + std::to_string(gt.size()));
  }
}

}  // namespace

std::optional<double> auc(std::span<const double> pred, std::span<const double> gt,
                          double gt_threshold) {
  check_shapes(pred, gt);
  const size_t n = pred.size();

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return pred[a] < pred[b]; });

  // Mann-Whitney: sum of mid-ranks of the positives.
  double positive_rank_sum = 0.0;
  size_t positives = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && pred[order[j]] == pred[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k) {
      if (gt[order[k]] >= gt_threshold) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

double iou_at(std::span<const double> pred, std::span<const double> gt, double threshold,
              double gt_threshold) {
  check_shapes(pred, gt);
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > threshold;
    const bool g = gt[i] >= gt_threshold;
    inter += static_cast<size_t>(p && g);
    uni += static_cast<size_t>(p || g);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(std::span<const double> pred, std::span<const double> gt, const MetricOptions& options) {
  check_shapes(pred, gt);
  if (options.miou_mode == MiouMode::Single) {
    return iou_at(pred, gt, options.single_threshold, options.gt_threshold);
  }

  // Sorted sweep: for each threshold count predictions above it, split by
  // ground-truth class, with two binary searches instead of a full pass.
  std::vector<double> pos_scores, neg_scores;
  for (size_t i = 0; i < pred.size(); ++i) {
    (gt[i] >= options.gt_threshold ? pos_scores : neg_scores).push_back(pred[i]);
  }
  std::sort(pos_scores.begin(), pos_scores.end());
  std::sort(neg_scores.begin(), neg_scores.end());
  const auto above = [](const std::vector<double>& sorted, double t) {
    return static_cast<size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
  };

  double total = 0.0;
  for (int k = 1; k <= 99; ++k) {
    const double t = k / 100.0;
    const size_t tp = above(pos_scores, t);
    const size_t fp = above(neg_scores, t);
    const size_t uni = pos_scores.size() + fp;
    total += uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
  }
  return total / 99.0;
}

double sim(std::span<const double> pred, std::span<const double> gt) {
  check_shapes(pred, gt);
  double sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0.0 || gt[i] < 0.0) fail(ErrorKind::Validation, "SIM requires non-negative maps");
    sp += pred[i];
    sg += gt[i];
  }
  if (sp == 0.0 && sg == 0.0) return 1.0;
  if (sp == 0.0 || sg == 0.0) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::min(pred[i] / sp, gt[i] / sg);
  return s;
}

double mae(std::span<const double> pred, std::span<const double> gt) {
  check_shapes(pred, gt);
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

SampleMetrics evaluate_sample(std::span<const double> pred, std::span<const double> gt,
                              const MetricOptions& options) {
  SampleMetrics m;
  m.auc = auc(pred, gt, options.gt_threshold);
  m.miou = miou(pred, gt, options);
  m.sim = sim(pred, gt);
  m.mae = mae(pred, gt);
  return m;
}

void MetricsAccumulator::add(const SampleMetrics& sample) {
  if (sample.auc) {
    auc_sum_ += *sample.auc;
    ++n_auc_;
  }
  miou_sum_ += sample.miou;
  sim_sum_ += sample.sim;
  mae_sum_ += sample.mae;
  ++n_;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  auc_sum_ += other.auc_sum_;
  miou_sum_ += other.miou_sum_;
  sim_sum_ += other.sim_sum_;
  mae_sum_ += other.mae_sum_;
  n_ += other.n_;
  n_auc_ += other.n_auc_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.n_samples = n_;
  r.n_auc_skipped = n_ - n_auc_;
  if (n_auc_ > 0) r.auc = auc_sum_ / n_auc_;
  if (n_ > 0) {
    r.miou = miou_sum_ / n_;
    r.sim = sim_sum_ / n_;
    r.mae = mae_sum_ / n_;
  }
  return r;
}

std::string serialize(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(10);
  if (!report.split.empty()) out << "split\t" << report.split << '\n';
  out << "auc\t";
  if (report.auc) {
    out << *report.auc;
  } else {
    out << "undefined";
  }
  out << '\n';
  out << "miou\t" << report.miou << '\n';
  out << "sim\t" << report.sim << '\n';
  out << "mae\t" << report.mae << '\n';
  out << "n_samples\t" << report.n_samples << '\n';
  out << "n_auc_skipped\t" << report.n_auc_skipped << '\n';
  return out.str();
}

MetricsReport parse_report(const std::string& text) {
  MetricsReport r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    try {
      if (key == "split") {
        r.split = value;
      } else if (key == "auc") {
        if (value != "undefined") r.auc = std::stod(value);
      } else if (key == "miou") {
        r.miou = std::stod(value);
      } else if (key == "sim") {
        r.sim = std::stod(value);
      } else if (key == "mae") {
        r.mae = std::stod(value);
      } else if (key == "n_samples") {
        r.n_samples = std::stoi(value);
      } else if (key == "n_auc_skipped") {
        r.n_auc_skipped = std::stoi(value);
      } else {
        fail(ErrorKind::Parse, "unknown metrics key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Parse, "bad value for metrics key '" + key + "'");
    }
  }
  return r;
}

SeedSummary summarize_seeds(std::span<const MetricsReport> reports) {
  auto spread = [](const std::vector<double>& v) {
    MetricSpread s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(v.size()));
    return s;
  };
  std::vector<double> a, m, si, ma;
  for (const auto& r : reports) {
    if (r.auc) a.push_back(*r.auc);
    m.push_back(r.miou);
    si.push_back(r.sim);
    ma.push_back(r.mae);
  }
  SeedSummary out;
  out.auc = spread(a);
  out.miou = spread(m);
  out.sim = spread(si);
  out.mae = spread(ma);
  out.n_seeds = static_cast<int>(reports.size());
  return out;
}

}  // namespace dag::metrics
