#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dag/checkpoint.hpp"
#include "dag/config.hpp"
#include "dag/errors.hpp"
#include "dag/harness.hpp"
#include "dag/metrics.hpp"

namespace {

dag::RunConfig load_config(const std::string& path) {
  dag::RunConfig config = path.empty() ? dag::RunConfig{} : dag::load_run_config(path);
  dag::apply_environment(config);
  config.validate();
  return config;
}

std::vector<std::pair<std::string, std::string>> split_overrides(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) dag::fail(dag::ErrorKind::Usage, "--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    out.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D affordance grounding from an image and an affordance phrase"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, ckpt_path, points_path, image_path, text;
  int64_t word = 0, level = 0;
  int count = 0;
  std::vector<std::string> sets;

  auto* train = app.add_subcommand("train", "Train a model on a dataset manifest");
  train->add_option("--config", config_path, "RunConfig file (key = value lines)");
  train->add_option("--data", data_path, "Dataset manifest")->required();
  train->add_option("--out", out_path, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset manifest");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  eval->add_option("--data", data_path, "Dataset manifest")->required();

  auto* infer = app.add_subcommand("infer", "Predict a per-point affordance mask");
  infer->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  infer->add_option("--points", points_path, "Point file (x y z [label] per line)")->required();
  infer->add_option("--image", image_path, "Interaction image (PPM/PGM)")->required();
  infer->add_option("--text", text, "Affordance text")->required();
  infer->add_option("--out", out_path, "Mask output file")->required();

  auto* attn = app.add_subcommand("export-attn", "Export a backbone word-attention map");
  attn->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  attn->add_option("--image", image_path, "Interaction image (PPM/PGM)")->required();
  attn->add_option("--text", text, "Affordance text")->required();
  attn->add_option("--word", word, "Condition token index")->required();
  attn->add_option("--level", level, "Pyramid level")->required();
  attn->add_option("--out", out_path, "Output text grid (a .pgm is written next to it)")->required();

  auto* synth = app.add_subcommand("make-synth", "Generate a synthetic dataset");
  synth->add_option("--config", config_path, "Synthetic config file")->required();
  synth->add_option("--count", count, "Number of samples")->required();
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one ablation variant");
  ablate->add_option("--config", config_path, "Base RunConfig file")->required();
  ablate->add_option("--set", sets, "Override key=value (repeatable)");
  ablate->add_option("--data", data_path, "Dataset manifest")->required();
  ablate->add_option("--out", out_path, "Optional output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      const auto config = load_config(config_path);
      const auto result = dag::train(config, dag::load_manifest(data_path), out_path);
      std::cout << "steps\t" << result.steps << "\nepochs\t" << result.epochs << "\nfinal_loss\t"
                << result.trace.back().total << "\ncheckpoint\t" << result.checkpoint.string() << '\n';
    } else if (*eval) {
      std::cout << dag::metrics::serialize(dag::evaluate(ckpt_path, dag::load_manifest(data_path)));
    } else if (*infer) {
      const auto mask = dag::infer(ckpt_path, points_path, image_path, text, out_path);
      std::cerr << "wrote " << mask.size() << " mask values to " << out_path << '\n';
    } else if (*attn) {
      const auto result = dag::export_attention(ckpt_path, image_path, text, word, level, out_path);
      std::cerr << "word '" << result.word << "' level " << level << ": " << result.map.size(0) << "x"
                << result.map.size(1) << " map written to " << out_path << '\n';
    } else if (*synth) {
      const auto manifest = dag::make_synthetic(dag::load_synthetic_config(config_path), count, out_path);
      std::cout << manifest.string() << '\n';
    } else if (*ablate) {
      const auto result = dag::ablate(load_config(config_path), split_overrides(sets),
                                      dag::load_manifest(data_path), out_path);
      std::cout << "trainable_parameters\t" << result.trainable_parameters << "\nsteps\t" << result.training.steps
                << "\nfinal_loss\t" << result.training.trace.back().total << '\n'
                << dag::metrics::serialize(result.report);
    }
  } catch (const dag::Error& e) {
    std::cerr << "error (" << dag::to_string(e.kind()) << "): " << e.what() << '\n';
    return dag::exit_code(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error (numeric backend): " << e.what_without_backtrace() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
