#include "dag/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dag/errors.hpp"
#include "dag/nn.hpp"

namespace dag {
namespace {

constexpr const char* kFormat = "dag-checkpoint-1";
constexpr const char* kConfigMarker = "[config]";

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Checkpoint, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t parse_hex(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorKind::Checkpoint, "malformed hash '" + text + "' in checkpoint manifest");
  }
  return v;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorKind::Checkpoint, "malformed '" + key + "' in checkpoint manifest");
  }
  return v;
}

std::string format_tail(const std::vector<double>& tail) {
  std::string out;
  char buf[32];
  for (size_t i = 0; i < tail.size(); ++i) {
    if (i) out += ',';
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), tail[i]);
    out.append(buf, ptr);
  }
  return out;
}

}  // namespace

void save_checkpoint(DagModel& model, const std::filesystem::path& dir, int epoch, int step,
                     const std::vector<double>& loss_tail) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create checkpoint directory " + dir.string());
  const auto blob_path = dir / kCheckpointBlob;
  {
    torch::serialize::OutputArchive archive;
    model.save(archive);
    archive.save_to(blob_path.string());
  }
  const auto& config = model.config();
  std::ofstream out(dir / kCheckpointManifest, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint manifest in " + dir.string());
  out << "format = " << kFormat << '\n'
      << "config_hash = " << hex64(config_hash(config)) << '\n'
      << "blob_hash = " << hex64(fnv1a(read_bytes(blob_path))) << '\n'
      << "seed = " << config.seed << '\n'
      << "epoch = " << epoch << '\n'
      << "step = " << step << '\n'
      << "loss_tail = " << format_tail(loss_tail) << '\n'
      << kConfigMarker << '\n'
      << serialize(config);
  if (!out) fail(ErrorKind::Io, "failed writing checkpoint manifest in " + dir.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Checkpoint, "no checkpoint at " + dir.string());
  std::istringstream in(read_bytes(dir / kCheckpointManifest));
  CheckpointInfo info;
  std::string line;
  bool header_done = false;
  bool have_config_hash = false, have_blob_hash = false;
  std::string config_text;
  while (std::getline(in, line)) {
    if (header_done) {
      config_text += line + '\n';
      continue;
    }
    if (line == kConfigMarker) {
      header_done = true;
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) fail(ErrorKind::Checkpoint, "malformed checkpoint manifest line: " + line);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 3);
    if (key == "format") {
      info.format = value;
    } else if (key == "config_hash") {
      info.config_hash = parse_hex(value);
      have_config_hash = true;
    } else if (key == "blob_hash") {
      info.blob_hash = parse_hex(value);
      have_blob_hash = true;
    } else if (key == "seed") {
      info.seed = parse_value<std::uint64_t>(key, value);
    } else if (key == "epoch") {
      info.epoch = parse_value<int>(key, value);
    } else if (key == "step") {
      info.step = parse_value<int>(key, value);
    } else if (key == "loss_tail") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) info.loss_tail.push_back(parse_value<double>(key, item));
    }
  }
  if (info.format != kFormat) fail(ErrorKind::Checkpoint, "unrecognised checkpoint format '" + info.format + "'");
  if (!header_done || !have_config_hash || !have_blob_hash) {
    fail(ErrorKind::Checkpoint, "checkpoint manifest is incomplete");
  }
  try {
    info.config = parse_run_config(config_text);
  } catch (const Error& e) {
    fail(ErrorKind::Checkpoint, std::string("checkpoint configuration is invalid: ") + e.what());
  }
  if (config_hash(info.config) != info.config_hash) {
    fail(ErrorKind::Checkpoint, "checkpoint manifest config hash does not match its configuration");
  }
  if (fnv1a(read_bytes(dir / kCheckpointBlob)) != info.blob_hash) {
    fail(ErrorKind::Checkpoint, "checkpoint parameter blob is corrupted (hash mismatch)");
  }
  return info;
}

namespace {

std::shared_ptr<DagModel> load_into(const std::filesystem::path& dir, const RunConfig& config) {
  auto model = std::make_shared<DagModel>(config);
  try {
    torch::serialize::InputArchive archive;
    archive.load_from((dir / kCheckpointBlob).string());
    model->load(archive);
  } catch (const c10::Error& e) {
    fail(ErrorKind::Checkpoint, std::string("cannot restore parameters: ") + e.what_without_backtrace());
  }
  return model;
}

}  // namespace

std::shared_ptr<DagModel> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  auto read = read_checkpoint_info(dir);
  auto model = load_into(dir, read.config);
  if (info) *info = std::move(read);
  return model;
}

std::shared_ptr<DagModel> load_checkpoint(const std::filesystem::path& dir, const RunConfig& expected,
                                          CheckpointInfo* info) {
  auto read = read_checkpoint_info(dir);
  if (architecture_hash(read.config) != architecture_hash(expected)) {
    fail(ErrorKind::Checkpoint, "checkpoint was produced by a different model configuration");
  }
  auto model = load_into(dir, expected);
  if (info) *info = std::move(read);
  return model;
}

}  // namespace dag
