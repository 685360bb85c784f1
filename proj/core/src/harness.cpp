#include "dag/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "dag/checkpoint.hpp"
#include "dag/errors.hpp"
#include "dag/image_io.hpp"

namespace dag {
namespace {

constexpr size_t kLossTail = 10;

std::vector<size_t> epoch_order(size_t n, std::uint64_t seed, int epoch, bool deterministic) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(deterministic ? seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch)
                                    : std::random_device{}());
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

std::string sample_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d.%s", index, ext);
  return buf;
}

std::vector<double> tail_of(const std::vector<LossBreakdown>& trace) {
  std::vector<double> out;
  const size_t from = trace.size() > kLossTail ? trace.size() - kLossTail : 0;
  for (size_t i = from; i < trace.size(); ++i) out.push_back(trace[i].total);
  return out;
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto d = t.detach().to(torch::kDouble).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

}  // namespace

TrainResult train(DagModel& model, const std::vector<AffordanceSample>& samples, const TrainOptions& options) {
  if (samples.empty()) fail(ErrorKind::Dataset, "training set is empty");
  const auto& config = model.config();
  if (config.deterministic) {
    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
    torch::set_num_threads(1);
  }

  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(model.prepare(s));

  const bool write = !options.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory " + options.out_dir.string());
    log.open(options.out_dir / "loss_log.tsv");
    if (!log) fail(ErrorKind::Io, "cannot write loss log in " + options.out_dir.string());
    log << "step\tepoch\tbce\tdice\ttotal\n";
  }

  auto params = model.trainable_parameters();
  torch::optim::Adam optimizer(params,
                               torch::optim::AdamOptions(config.learning_rate).weight_decay(config.weight_decay));
  model.train();

  TrainResult result;
  result.frozen_before = model.frozen_checksum();
  const size_t batch = static_cast<size_t>(config.batch_size);
  bool done = false;
  for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
    const auto order = epoch_order(prepared.size(), config.seed, epoch, config.deterministic);
    for (size_t start = 0; start < order.size() && !done; start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      optimizer.zero_grad();
      torch::Tensor bce = torch::zeros({}), dice = torch::zeros({});
      for (size_t i = start; i < end; ++i) {
        const auto& sample = prepared[order[i]];
        const auto terms = total_loss(model.predict(sample), sample.labels);
        bce = bce + terms.bce;
        dice = dice + terms.dice;
      }
      const double count = static_cast<double>(end - start);
      LossTerms terms{bce / count, dice / count, (bce + dice) / count};
      const auto loss = breakdown(terms);
      const int step = result.steps + 1;
      if (!std::isfinite(loss.total)) {
        std::string indices;
        for (size_t i = start; i < end; ++i) indices += (indices.empty() ? "" : ",") + std::to_string(order[i]);
        const std::string message = "non-finite loss at step " + std::to_string(step) + ", epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(start / batch) +
                                    " (samples " + indices + ")";
        if (write) {
          std::ofstream dump(options.out_dir / "nan_dump.txt");
          dump << message << "\nbce\t" << loss.bce << "\ndice\t" << loss.dice << '\n';
        }
        fail(ErrorKind::Numeric, message);
      }
      terms.total.backward();
      optimizer.step();

      result.trace.push_back(loss);
      result.steps = step;
      result.epochs = epoch;
      if (write) log << step << '\t' << epoch << '\t' << loss.bce << '\t' << loss.dice << '\t' << loss.total << '\n';
      if (options.on_step) options.on_step(step, loss);
      if (config.max_steps > 0 && step >= config.max_steps) done = true;
    }
    if (write && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && !done) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
      save_checkpoint(model, options.out_dir / name, epoch, result.steps, tail_of(result.trace));
    }
  }
  model.eval();
  result.frozen_after = model.frozen_checksum();
  if (write) {
    result.checkpoint = options.out_dir / "checkpoint";
    save_checkpoint(model, result.checkpoint, result.epochs, result.steps, tail_of(result.trace));
  }
  return result;
}

TrainResult train(const RunConfig& config, const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                  std::shared_ptr<DagModel>* trained) {
  if (manifest.entries.empty()) fail(ErrorKind::Dataset, "dataset manifest is empty");
  auto model = std::make_shared<DagModel>(config);
  const auto samples = load_dataset(manifest, model->image_depth());
  TrainOptions options;
  options.out_dir = out_dir;
  auto result = train(*model, samples, options);
  if (trained) *trained = model;
  return result;
}

metrics::MetricOptions metric_options(const RunConfig& config) {
  metrics::MetricOptions o;
  o.gt_threshold = config.gt_threshold;
  o.miou_mode = config.miou_mode == "single" ? metrics::MiouMode::Single : metrics::MiouMode::Sweep;
  o.single_threshold = config.miou_threshold;
  return o;
}

std::vector<std::vector<double>> predict_masks(DagModel& model, const std::vector<AffordanceSample>& samples) {
  torch::NoGradGuard no_grad;
  model.eval();
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(to_vector(model.predict(model.prepare(s))));
  return out;
}

metrics::MetricsReport evaluate(DagModel& model, const std::vector<AffordanceSample>& samples, Split split) {
  const auto options = metric_options(model.config());
  const auto masks = predict_masks(model, samples);
  metrics::MetricsAccumulator acc;
  for (size_t i = 0; i < samples.size(); ++i) {
    acc.add(metrics::evaluate_sample(masks[i], samples[i].labels, options));
  }
  auto report = acc.report();
  report.split = to_string(split);
  return report;
}

metrics::MetricsReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest) {
  auto model = load_checkpoint(checkpoint);
  return evaluate(*model, load_dataset(manifest, model->image_depth()), manifest.split);
}

void write_mask(const std::filesystem::path& path, const std::vector<double>& mask) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write mask " + path.string());
  char buf[32];
  for (double v : mask) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
    out.put('\n');
  }
}

std::vector<double> infer(const std::filesystem::path& checkpoint, const std::filesystem::path& points,
                          const std::filesystem::path& image, const std::string& text,
                          const std::filesystem::path& out) {
  auto model = load_checkpoint(checkpoint);
  auto records = read_points(points, /*require_labels=*/false);
  AffordanceSample sample;
  sample.points = std::move(records.points);
  sample.labels = std::move(records.labels);
  sample.image = read_image(image);
  sample.text = text;
  auto mask = predict_masks(*model, {sample}).front();
  write_mask(out, mask);
  return mask;
}

AblationResult ablate(RunConfig config, const std::vector<std::pair<std::string, std::string>>& overrides,
                      const DatasetManifest& manifest, const std::filesystem::path& out_dir) {
  for (const auto& [key, value] : overrides) apply_override(config, key, value);
  config.validate();
  if (manifest.entries.empty()) fail(ErrorKind::Dataset, "dataset manifest is empty");
  AblationResult result;
  result.config = config;
  DagModel model(config);
  result.trainable_parameters = model.trainable_count();
  const auto samples = load_dataset(manifest, model.image_depth());
  TrainOptions options;
  options.out_dir = out_dir;
  result.training = train(model, samples, options);
  result.report = evaluate(model, samples, manifest.split);
  return result;
}

std::filesystem::path make_synthetic(const SyntheticConfig& config, int count, const std::filesystem::path& out_dir) {
  const auto samples = generate_synthetic(config, count);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + out_dir.string());
  DatasetManifest manifest;
  manifest.split = config.split;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto pts = out_dir / sample_name(static_cast<int>(i), "pts");
    const auto ppm = out_dir / sample_name(static_cast<int>(i), "ppm");
    write_sample(samples[i], pts, ppm);
    manifest.entries.push_back({pts, ppm, samples[i].text, samples[i].category});
  }
  const auto path = out_dir / "manifest.tsv";
  write_manifest(manifest, path);
  return path;
}

AttentionExport export_attention(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                                 const std::string& text, int64_t word_index, int64_t level,
                                 const std::filesystem::path& out) {
  auto model = load_checkpoint(checkpoint);
  auto result = model->export_word_attention(read_image(image), text, word_index, level);
  const auto values = to_vector(result.map);
  const int h = static_cast<int>(result.map.size(0));
  const int w = static_cast<int>(result.map.size(1));

  std::ofstream file(out);
  if (!file) fail(ErrorKind::Io, "cannot write attention map " + out.string());
  file << "# word=" << result.word << " index=" << word_index << " level=" << level << " height=" << h
       << " width=" << w << '\n';
  char buf[32];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), values[static_cast<size_t>(y * w + x)]);
      if (x) file.put(' ');
      file.write(buf, ptr - buf);
    }
    file.put('\n');
  }
  auto pgm = out;
  pgm.replace_extension(".pgm");
  if (pgm == out) pgm += ".pgm";
  write_pgm(pgm, values, h, w);
  return result;
}

}  // namespace dag
