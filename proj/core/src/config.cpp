#include "dag/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dag/errors.hpp"

namespace dag {

const char* to_string(CaptionerKind kind) noexcept {
  switch (kind) {
    case CaptionerKind::Empty: return "empty";
    case CaptionerKind::Verb: return "verb";
    case CaptionerKind::Implicit: return "implicit";
  }
  return "?";
}

const char* to_string(ExtractorKind kind) noexcept {
  return kind == ExtractorKind::StubDiffusion ? "stub_diffusion" : "adapter";
}

CaptionerKind parse_captioner(const std::string& text) {
  if (text == "empty") return CaptionerKind::Empty;
  if (text == "verb") return CaptionerKind::Verb;
  if (text == "implicit") return CaptionerKind::Implicit;
  if (text == "blip") {
    fail(ErrorKind::UnsupportedVariant,
         "captioner 'blip' needs an external captioning model and is not supported; "
         "choose empty, verb or implicit");
  }
  fail(ErrorKind::Usage, "unknown captioner '" + text + "' (empty, verb, implicit)");
}

ExtractorKind parse_extractor(const std::string& text) {
  if (text == "stub_diffusion") return ExtractorKind::StubDiffusion;
  if (text == "adapter") return ExtractorKind::Adapter;
  if (text == "resnet" || text == "clip" || text == "dinov2") {
    fail(ErrorKind::UnsupportedVariant,
         "extractor '" + text + "' is not bundled; export it as TorchScript and use extractor = adapter");
  }
  fail(ErrorKind::Usage, "unknown extractor '" + text + "' (stub_diffusion, adapter)");
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::Usage, "invalid value '" + value + "' for config key '" + key + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) bad_value(key, value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  bad_value(key, value);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) bad_value(key, value);
  return out;
}

std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_real(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  const char* key;
  bool architecture;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define DAG_INT_FIELD(name, member, arch)                                                     \
  Field {                                                                                     \
    name, arch, [](const RunConfig& c) { return std::to_string(c.member); },                  \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<decltype(c.member)>(name, v); } \
  }
#define DAG_REAL_FIELD(name, member, arch)                                         \
  Field {                                                                          \
    name, arch, [](const RunConfig& c) { return format_real(c.member); },          \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); } \
  }
#define DAG_BOOL_FIELD(name, member, arch)                                              \
  Field {                                                                               \
    name, arch, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }      \
  }
#define DAG_LIST_FIELD(name, member, arch, T)                                          \
  Field {                                                                              \
    name, arch, [](const RunConfig& c) { return format_list(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = parse_list<T>(name, v); }  \
  }
#define DAG_STRING_FIELD(name, member, arch)                              \
  Field {                                                                 \
    name, arch, [](const RunConfig& c) { return c.member; },              \
        [](RunConfig& c, const std::string& v) { c.member = v; }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DAG_REAL_FIELD("learning_rate", learning_rate, false),
      DAG_INT_FIELD("epochs", epochs, false),
      DAG_INT_FIELD("batch_size", batch_size, false),
      DAG_INT_FIELD("max_steps", max_steps, false),
      DAG_REAL_FIELD("weight_decay", weight_decay, false),
      DAG_INT_FIELD("seed", seed, false),
      DAG_BOOL_FIELD("deterministic", deterministic, false),
      DAG_INT_FIELD("checkpoint_every", checkpoint_every, false),
      DAG_INT_FIELD("diffusion_step_t", diffusion_step_t, false),
      DAG_LIST_FIELD("pyramid_channels", pyramid_channels, true, int64_t),
      DAG_INT_FIELD("stem_channels", stem_channels, true),
      DAG_INT_FIELD("backbone_seed", backbone_seed, true),
      DAG_STRING_FIELD("adapter_path", adapter_path, true),
      DAG_INT_FIELD("adapter_size_multiple", adapter_size_multiple, true),
      DAG_BOOL_FIELD("affordance_block", toggles.affordance_block, true),
      DAG_BOOL_FIELD("cls_token", toggles.cls_token, true),
      Field{"captioner", true, [](const RunConfig& c) { return std::string(to_string(c.toggles.captioner)); },
            [](RunConfig& c, const std::string& v) { c.toggles.captioner = parse_captioner(v); }},
      Field{"extractor", true, [](const RunConfig& c) { return std::string(to_string(c.toggles.extractor)); },
            [](RunConfig& c, const std::string& v) { c.toggles.extractor = parse_extractor(v); }},
      DAG_INT_FIELD("d", widths.d, true),
      DAG_INT_FIELD("d_txt", widths.d_txt, true),
      DAG_INT_FIELD("d_img", widths.d_img, true),
      DAG_INT_FIELD("d_p", widths.d_p, true),
      DAG_INT_FIELD("prompt_count", prompt_count, true),
      DAG_INT_FIELD("caption_tokens", caption_tokens, true),
      DAG_INT_FIELD("patch_size", patch_size, true),
      DAG_INT_FIELD("image_encoder_layers", image_encoder_layers, true),
      DAG_INT_FIELD("image_encoder_seed", image_encoder_seed, true),
      DAG_INT_FIELD("text_encoder_seed", text_encoder_seed, true),
      DAG_STRING_FIELD("vocab_path", vocab_path, true),
      DAG_BOOL_FIELD("swap_text_sources", swap_text_sources, true),
      DAG_INT_FIELD("pooling_m", pooling_m, true),
      DAG_INT_FIELD("heads", heads, true),
      DAG_INT_FIELD("blocks", blocks, true),
      DAG_BOOL_FIELD("positional_encoding", positional_encoding, true),
      DAG_LIST_FIELD("level_sizes", level_sizes, true, int64_t),
      DAG_LIST_FIELD("radii", radii, true, double),
      DAG_LIST_FIELD("group_sizes", group_sizes, true, int64_t),
      DAG_LIST_FIELD("point_channels", point_channels, true, int64_t),
      DAG_BOOL_FIELD("freeze_point_encoder", freeze_point_encoder, true),
      DAG_BOOL_FIELD("normalize_points", normalize_points, true),
      DAG_REAL_FIELD("gt_threshold", gt_threshold, false),
      DAG_STRING_FIELD("miou_mode", miou_mode, false),
      DAG_REAL_FIELD("miou_threshold", miou_threshold, false),
  };
  return table;
}

#undef DAG_INT_FIELD
#undef DAG_REAL_FIELD
#undef DAG_BOOL_FIELD
#undef DAG_LIST_FIELD
#undef DAG_STRING_FIELD

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Usage, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Usage, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Usage, "invalid config: " + what);
  };
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_steps >= 0, "max_steps must be non-negative");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(diffusion_step_t >= 0, "diffusion_step_t must be non-negative");
  require(pyramid_channels.size() >= 2, "pyramid_channels needs at least two levels");
  require(widths.d > 0 && widths.d_txt > 0 && widths.d_img > 0 && widths.d_p > 0, "widths must be positive");
  require(widths.d % heads == 0 && widths.d_img % heads == 0, "widths must be divisible by heads");
  require(!positional_encoding || widths.d % 4 == 0, "d must be divisible by 4 with positional encoding");
  require(widths.d_img % 4 == 0, "d_img must be divisible by 4");
  require(prompt_count >= 1, "prompt_count must be >= 1");
  require(caption_tokens >= 1, "caption_tokens must be >= 1");
  require(pooling_m >= 1, "pooling_m must be >= 1");
  require(heads >= 1 && blocks >= 1, "heads and blocks must be >= 1");
  require(!level_sizes.empty(), "level_sizes must not be empty");
  require(radii.size() == level_sizes.size() && group_sizes.size() == level_sizes.size(),
          "radii and group_sizes need one entry per level size");
  require(point_channels.size() == level_sizes.size() + 1, "point_channels needs level_sizes + 1 entries");
  for (size_t i = 1; i < level_sizes.size(); ++i) {
    require(level_sizes[i] < level_sizes[i - 1], "level_sizes must be strictly decreasing");
  }
  require(miou_mode == "sweep" || miou_mode == "single", "miou_mode must be sweep or single");
  require(toggles.extractor != ExtractorKind::Adapter || !adapter_path.empty(),
          "extractor = adapter needs adapter_path");
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  fail(ErrorKind::Usage, "unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  for_each_line(text, [&](const std::string& k, const std::string& v) { apply_override(config, k, v); });
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text(path)); }

void apply_environment(RunConfig& config) {
  if (const char* env = std::getenv("DAG_SEED"); env && *env) {
    apply_override(config, "seed", env);
  }
}

std::string serialize(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a(serialize(config)); }

std::uint64_t architecture_hash(const RunConfig& config) {
  std::string text;
  for (const auto& f : fields()) {
    if (!f.architecture) continue;
    text += f.key;
    text += '=';
    text += f.get(config);
    text += '\n';
  }
  return fnv1a(text);
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

SyntheticConfig parse_synthetic_config(const std::string& text) {
  SyntheticConfig c;
  for_each_line(text, [&](const std::string& k, const std::string& v) {
    try {
      if (k == "shape_kind") {
        c.shape_kind = parse_shape_kind(v);
      } else if (k == "n_points") {
        c.n_points = parse_number<int>(k, v);
      } else if (k == "region_radius") {
        c.region_radius = parse_number<double>(k, v);
      } else if (k == "image_size") {
        c.image_size = parse_number<int>(k, v);
      } else if (k == "seed") {
        c.seed = parse_number<std::uint64_t>(k, v);
      } else if (k == "affordance") {
        c.affordance = v;
      } else if (k == "split") {
        c.split = parse_split(v);
      } else {
        fail(ErrorKind::Usage, "unknown synthetic config key '" + k + "'");
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Usage) throw;
      fail(ErrorKind::Usage, e.what());
    }
  });
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Usage, e.what());
  }
  return c;
}

SyntheticConfig load_synthetic_config(const std::filesystem::path& path) {
  return parse_synthetic_config(read_text(path));
}

}  // namespace dag
