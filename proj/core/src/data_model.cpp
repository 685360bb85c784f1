#include "dag/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dag/errors.hpp"
#include "dag/image_io.hpp"

namespace dag {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Structural: return "structural error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Step: return "step error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::DegenerateCloud: return "degenerate-cloud error";
    case ErrorKind::Size: return "size error";
    case ErrorKind::PoolingConfig: return "pooling-config error";
    case ErrorKind::Dataset: return "dataset error";
    case ErrorKind::Checkpoint: return "checkpoint error";
    case ErrorKind::Numeric: return "numeric abort";
    case ErrorKind::UnsupportedVariant: return "unsupported-variant error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

const char* to_string(Split split) noexcept { return split == Split::Seen ? "seen" : "unseen"; }

Split parse_split(const std::string& text) {
  if (text == "seen") return Split::Seen;
  if (text == "unseen") return Split::Unseen;
  fail(ErrorKind::Validation, "split must be 'seen' or 'unseen', got '" + text + "'");
}

const char* to_string(ShapeKind kind) noexcept {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& text) {
  if (text == "sphere") return ShapeKind::Sphere;
  if (text == "box") return ShapeKind::Box;
  if (text == "cylinder") return ShapeKind::Cylinder;
  fail(ErrorKind::Validation, "unknown shape kind '" + text + "' (sphere, box, cylinder)");
}

double shape_bounding_radius(ShapeKind) noexcept { return 1.0; }

void SyntheticConfig::validate() const {
  if (n_points < 8) fail(ErrorKind::Validation, "synthetic n_points must be >= 8");
  if (!(region_radius > 0.0) || region_radius > shape_bounding_radius(shape_kind)) {
    fail(ErrorKind::Validation, "synthetic region_radius must lie in (0, shape bounding radius]");
  }
  if (image_size <= 0) fail(ErrorKind::Validation, "synthetic image_size must be positive");
}

// ---------------------------------------------------------------------------

namespace {

bool parse_real(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

void append_real(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

PointRecords read_points(const std::filesystem::path& path, bool require_labels) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open point file " + path.string());

  PointRecords records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const bool labelled = fields.size() == 4;
    if (!labelled && (require_labels || fields.size() != 3)) {
      if (fields.size() == 3) {
        fail(ErrorKind::Structural, path.string() + ":" + std::to_string(line_no) +
                                        ": coordinate record without a label");
      }
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": expected 4 fields, got " +
                                 std::to_string(fields.size()));
    }
    double v[4] = {0, 0, 0, 0};
    for (size_t k = 0; k < fields.size(); ++k) {
      if (!parse_real(fields[k], v[k])) {
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": not a real number '" +
                                   std::string(fields[k]) + "'");
      }
    }
    if (labelled && !(v[3] >= 0.0 && v[3] <= 1.0)) {
      fail(ErrorKind::Validation, path.string() + ":" + std::to_string(line_no) +
                                      ": label outside [0,1]");
    }
    records.points.push_back({v[0], v[1], v[2]});
    records.labels.push_back(v[3]);
  }
  return records;
}

void write_points(const std::filesystem::path& path, std::span<const Vec3> points,
                  std::span<const double> labels) {
  if (points.size() != labels.size()) {
    fail(ErrorKind::Structural, "point and label counts differ");
  }
  std::string text;
  text.reserve(points.size() * 64);
  for (size_t i = 0; i < points.size(); ++i) {
    append_real(text, points[i][0]);
    text += ' ';
    append_real(text, points[i][1]);
    text += ' ';
    append_real(text, points[i][2]);
    text += ' ';
    append_real(text, labels[i]);
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write point file " + path.string());
  out << text;
}

void validate_sample(const AffordanceSample& sample, int image_depth) {
  if (sample.points.size() != sample.labels.size()) {
    fail(ErrorKind::Structural, "sample has " + std::to_string(sample.points.size()) + " points but " +
                                    std::to_string(sample.labels.size()) + " labels");
  }
  if (sample.points.empty()) fail(ErrorKind::Structural, "sample has no points");
  for (const auto& p : sample.points) {
    for (double c : p) {
      if (!std::isfinite(c)) fail(ErrorKind::Validation, "non-finite point coordinate");
    }
  }
  for (double l : sample.labels) {
    if (!(l >= 0.0 && l <= 1.0)) fail(ErrorKind::Validation, "label outside [0,1]");
  }
  const Image& img = sample.image;
  if (img.height <= 0 || img.width <= 0 ||
      img.pixels.size() != static_cast<size_t>(3) * img.height * img.width) {
    fail(ErrorKind::Structural, "image buffer does not match 3xHxW");
  }
  const int multiple = 1 << image_depth;
  if (img.height % multiple != 0 || img.width % multiple != 0) {
    fail(ErrorKind::Shape, "image sides " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                               " must be divisible by " + std::to_string(multiple));
  }
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::Validation, "image value outside [0,1]");
  }
}

AffordanceSample load_sample(const std::filesystem::path& points_path,
                             const std::filesystem::path& image_path, const std::string& text,
                             const std::string& category, int image_depth) {
  PointRecords records = read_points(points_path, /*require_labels=*/true);
  AffordanceSample sample;
  sample.points = std::move(records.points);
  sample.labels = std::move(records.labels);
  sample.image = read_image(image_path);
  sample.text = text;
  sample.category = category;
  validate_sample(sample, image_depth);
  return sample;
}

void write_sample(const AffordanceSample& sample, const std::filesystem::path& points_path,
                  const std::filesystem::path& image_path) {
  write_points(points_path, sample.points, sample.labels);
  write_ppm(image_path, sample.image);
}

std::vector<Vec3> normalize_points(std::span<const Vec3> points) {
  if (points.empty()) fail(ErrorKind::Structural, "cannot normalize an empty cloud");
  Vec3 centroid{0, 0, 0};
  for (const auto& p : points) {
    for (int k = 0; k < 3; ++k) centroid[k] += p[k];
  }
  for (auto& c : centroid) c /= static_cast<double>(points.size());

  std::vector<Vec3> out(points.begin(), points.end());
  double radius = 0.0;
  for (auto& p : out) {
    for (int k = 0; k < 3; ++k) p[k] -= centroid[k];
    radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (radius < 1e-12) fail(ErrorKind::DegenerateCloud, "all points coincide; cannot normalize");
  for (auto& p : out) {
    for (auto& c : p) c /= radius;
  }
  return out;
}

// ---------------------------------------------------------------------------

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Dataset, "cannot open manifest " + path.string());
  const auto base = path.parent_path();

  DatasetManifest manifest;
  std::string line;
  size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line.rfind("split=", 0) != 0) {
        fail(ErrorKind::Dataset, path.string() + ":" + std::to_string(line_no) +
                                     ": first line must be split=<seen|unseen>");
      }
      try {
        manifest.split = parse_split(line.substr(6));
      } catch (const Error& e) {
        fail(ErrorKind::Dataset, path.string() + ": " + e.what());
      }
      have_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) {
      fail(ErrorKind::Dataset, path.string() + ":" + std::to_string(line_no) +
                                   ": expected 4 tab-separated fields");
    }
    ManifestEntry entry;
    entry.points_path = fields[0];
    entry.image_path = fields[1];
    if (entry.points_path.is_relative()) entry.points_path = base / entry.points_path;
    if (entry.image_path.is_relative()) entry.image_path = base / entry.image_path;
    entry.text = fields[2];
    entry.category = fields[3];
    for (const auto& p : {entry.points_path, entry.image_path}) {
      if (!std::filesystem::exists(p)) {
        fail(ErrorKind::Dataset, path.string() + ":" + std::to_string(line_no) + ": missing file " +
                                     p.string());
      }
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!have_header) fail(ErrorKind::Dataset, "manifest " + path.string() + " is empty");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path.string());
  const auto base = path.parent_path();
  out << "split=" << to_string(manifest.split) << '\n';
  for (const auto& e : manifest.entries) {
    auto rel = [&](const std::filesystem::path& p) {
      const auto abs_base = std::filesystem::absolute(base.empty() ? "." : base);
      return std::filesystem::absolute(p).lexically_normal().lexically_relative(abs_base.lexically_normal())
          .generic_string();
    };
    out << rel(e.points_path) << '\t' << rel(e.image_path) << '\t' << e.text << '\t' << e.category
        << '\n';
  }
}

std::vector<AffordanceSample> load_dataset(const DatasetManifest& manifest, int image_depth) {
  std::vector<AffordanceSample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    samples.push_back(load_sample(e.points_path, e.image_path, e.text, e.category, image_depth));
  }
  return samples;
}

}  // namespace dag
