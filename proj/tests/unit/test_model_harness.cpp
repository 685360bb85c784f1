#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "../support/fixtures.hpp"
#include "dag/checkpoint.hpp"
#include "dag/errors.hpp"
#include "dag/harness.hpp"
#include "dag/image_io.hpp"
#include "dag/model.hpp"

namespace fs = std::filesystem;

namespace {

template <typename Fn>
dag::ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const dag::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a dag::Error";
  return dag::ErrorKind::Io;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(DagModel, ForwardShapesAcrossCaptioners) {
  const auto sample = dag::generate_synthetic(dag::fixture::tiny_synthetic(), 1).front();
  for (auto kind : {dag::CaptionerKind::Empty, dag::CaptionerKind::Verb, dag::CaptionerKind::Implicit}) {
    auto config = dag::fixture::tiny_config();
    config.toggles.captioner = kind;
    dag::DagModel model(config);
    const auto out = model.forward(model.prepare(sample));
    ASSERT_EQ(out.mask.sizes(), (std::vector<int64_t>{64}));
    EXPECT_GE(out.mask.min().item<float>(), 0.0f);
    EXPECT_LE(out.mask.max().item<float>(), 1.0f);
    EXPECT_EQ(out.affordance_tokens.size(0), 4);
    EXPECT_EQ(out.condition.size(1), config.widths.d_txt);
    if (kind == dag::CaptionerKind::Implicit) EXPECT_EQ(out.condition.size(0), config.caption_tokens);
  }
}

TEST(DagModel, AblationTogglesChangeTheTrainableCount) {
  auto base = dag::fixture::tiny_config();
  auto no_block = base;
  no_block.toggles.affordance_block = false;
  auto no_cls = base;
  no_cls.toggles.cls_token = false;
  const auto full = dag::DagModel(base).trainable_count();
  EXPECT_GT(full, dag::DagModel(no_block).trainable_count());
  EXPECT_GT(full, dag::DagModel(no_cls).trainable_count());
}

TEST(DagModel, SameSeedSameParameters) {
  const auto config = dag::fixture::tiny_config();
  dag::DagModel a(config), b(config);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
  EXPECT_EQ(a.frozen_checksum(), b.frozen_checksum());
}

TEST(DagModel, ImageSideMustMatchThePyramid) {
  auto sample = dag::generate_synthetic(dag::fixture::tiny_synthetic(), 1).front();
  sample.image = dag::Image(36, 36, 0.5);
  dag::DagModel model(dag::fixture::tiny_config());
  EXPECT_EQ(kind_of([&] { model.prepare(sample); }), dag::ErrorKind::Shape);
}

TEST(Checkpoint, RoundTripReproducesPredictions) {
  const auto dir = dag::fixture::scratch("ckpt_roundtrip");
  const auto sample = dag::generate_synthetic(dag::fixture::tiny_synthetic(), 1).front();
  auto config = dag::fixture::tiny_config();
  config.seed = 11;
  dag::DagModel model(config);
  {
    torch::NoGradGuard g;
    for (auto& p : model.trainable_parameters()) p.add_(0.01);
  }
  dag::save_checkpoint(model, dir, 3, 42, {0.5, 0.25});
  dag::CheckpointInfo info;
  auto loaded = dag::load_checkpoint(dir, &info);
  EXPECT_EQ(info.epoch, 3);
  EXPECT_EQ(info.step, 42);
  EXPECT_EQ(info.seed, 11u);
  EXPECT_EQ(info.loss_tail, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(info.config_hash, dag::config_hash(config));
  const auto a = model.predict(model.prepare(sample));
  const auto b = loaded->predict(loaded->prepare(sample));
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(Checkpoint, CorruptionAndLayoutMismatchAreCheckpointErrors) {
  const auto dir = dag::fixture::scratch("ckpt_corrupt");
  const auto config = dag::fixture::tiny_config();
  dag::DagModel model(config);
  dag::save_checkpoint(model, dir, 1, 1, {});

  auto other = config;
  other.toggles.cls_token = false;
  EXPECT_EQ(kind_of([&] { dag::load_checkpoint(dir, other); }), dag::ErrorKind::Checkpoint);
  EXPECT_NO_THROW(dag::load_checkpoint(dir, config));

  auto blob = slurp(dir / dag::kCheckpointBlob);
  blob[blob.size() / 2] ^= 0x5a;
  std::ofstream(dir / dag::kCheckpointBlob, std::ios::binary) << blob;
  EXPECT_EQ(kind_of([&] { dag::read_checkpoint_info(dir); }), dag::ErrorKind::Checkpoint);
  EXPECT_EQ(kind_of([&] { dag::load_checkpoint(fs::path(dir) / "missing"); }), dag::ErrorKind::Checkpoint);
}

TEST(Synthetic, FilesAreByteIdenticalAcrossRuns) {
  const auto a = dag::fixture::scratch("synth_a"), b = dag::fixture::scratch("synth_b");
  const auto ma = dag::make_synthetic(dag::fixture::tiny_synthetic(3), 3, a);
  const auto mb = dag::make_synthetic(dag::fixture::tiny_synthetic(3), 3, b);
  EXPECT_EQ(slurp(ma), slurp(mb));
  for (const auto& name : {"sample_0000.pts", "sample_0002.ppm"}) EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;

  const auto manifest = dag::load_manifest(ma);
  ASSERT_EQ(manifest.entries.size(), 3u);
  const auto loaded = dag::load_dataset(manifest);
  const auto direct = dag::generate_synthetic(dag::fixture::tiny_synthetic(3), 3);
  ASSERT_EQ(loaded.size(), direct.size());
  EXPECT_EQ(loaded[1].text, direct[1].text);
  EXPECT_EQ(loaded[1].points.size(), direct[1].points.size());
  EXPECT_EQ(kind_of([&] { dag::make_synthetic(dag::fixture::tiny_synthetic(), 0, a); }), dag::ErrorKind::Validation);
}

TEST(Harness, EmptyDatasetIsADatasetError) {
  dag::DagModel model(dag::fixture::tiny_config());
  EXPECT_EQ(kind_of([&] { dag::train(model, {}); }), dag::ErrorKind::Dataset);
  const auto dir = dag::fixture::scratch("empty_manifest");
  std::ofstream(dir / "manifest.tsv") << "split=seen\n";
  EXPECT_EQ(kind_of([&] { dag::train(dag::fixture::tiny_config(), dag::load_manifest(dir / "manifest.tsv"), dir); }),
            dag::ErrorKind::Dataset);
}

TEST(Harness, TrainWritesLogAndCheckpointAndImproves) {
  const auto dir = dag::fixture::scratch("train_small");
  const auto manifest_path = dag::make_synthetic(dag::fixture::tiny_synthetic(5), 4, dir / "data");
  auto config = dag::fixture::tiny_config();
  config.epochs = 15;
  std::shared_ptr<dag::DagModel> trained;
  const auto manifest = dag::load_manifest(manifest_path);
  const auto result = dag::train(config, manifest, dir / "run", &trained);
  EXPECT_EQ(result.steps, 30);
  EXPECT_EQ(result.frozen_before, result.frozen_after);
  EXPECT_LT(result.trace.back().total, result.trace.front().total);
  EXPECT_EQ(lines_of(dir / "run" / "loss_log.tsv").size(), 31u);
  ASSERT_TRUE(fs::exists(result.checkpoint / dag::kCheckpointManifest));

  const auto samples = dag::load_dataset(manifest);
  dag::DagModel fresh(config);
  const auto before = dag::evaluate(fresh, samples, manifest.split);
  const auto after = dag::evaluate(result.checkpoint, manifest);
  EXPECT_EQ(after.n_samples, 4);
  EXPECT_EQ(after.split, "seen");
  EXPECT_LT(after.mae, before.mae);

  // Inference on a label-free point file.
  const auto sample = samples.front();
  std::ofstream pts(dir / "query.pts");
  for (const auto& p : sample.points) pts << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  pts.close();
  const auto mask = dag::infer(result.checkpoint, dir / "query.pts", dir / "data" / "sample_0000.ppm", sample.text,
                               dir / "mask.txt");
  const auto written = lines_of(dir / "mask.txt");
  ASSERT_EQ(written.size(), sample.points.size());
  ASSERT_EQ(mask.size(), sample.points.size());
  for (double v : mask) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }

  const auto attn = dag::export_attention(result.checkpoint, dir / "data" / "sample_0000.ppm", sample.text, 0, 0,
                                          dir / "attn.txt");
  const auto grid = lines_of(dir / "attn.txt");
  ASSERT_FALSE(grid.empty());
  EXPECT_EQ(grid.front().rfind("# word=", 0), 0u);
  EXPECT_EQ(static_cast<int64_t>(grid.size()) - 1, attn.map.size(0));
  EXPECT_TRUE(fs::exists(dir / "attn.pgm"));
  EXPECT_EQ(kind_of([&] {
              dag::export_attention(result.checkpoint, dir / "data" / "sample_0000.ppm", sample.text, 99, 0,
                                    dir / "bad.txt");
            }),
            dag::ErrorKind::Index);
}

TEST(Harness, NonFiniteLossAbortsWithADump) {
  const auto dir = dag::fixture::scratch("nan_abort");
  const auto samples = dag::generate_synthetic(dag::fixture::tiny_synthetic(), 2);
  auto config = dag::fixture::tiny_config();
  config.epochs = 2;
  dag::DagModel model(config);
  {
    torch::NoGradGuard g;
    model.decoder->mask_head->fc2->weight.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  dag::TrainOptions options;
  options.out_dir = dir;
  EXPECT_EQ(kind_of([&] { dag::train(model, samples, options); }), dag::ErrorKind::Numeric);
  EXPECT_TRUE(fs::exists(dir / "nan_dump.txt"));
}

TEST(Harness, PartialCloudStillGivesAValidMask) {
  auto sample = dag::generate_synthetic(dag::fixture::tiny_synthetic(), 1).front();
  dag::AffordanceSample half = sample;
  half.points.clear();
  half.labels.clear();
  for (size_t i = 0; i < sample.points.size(); ++i) {
    if (sample.points[i][2] >= 0.0) {
      half.points.push_back(sample.points[i]);
      half.labels.push_back(sample.labels[i]);
    }
  }
  ASSERT_GE(half.points.size(), 8u);
  dag::DagModel model(dag::fixture::tiny_config());
  const auto mask = model.predict(model.prepare(half));
  EXPECT_EQ(mask.size(0), static_cast<int64_t>(half.points.size()));
  EXPECT_TRUE(torch::isfinite(mask).all().item<bool>());
}
