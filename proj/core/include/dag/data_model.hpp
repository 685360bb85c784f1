#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dag {

using Vec3 = std::array<double, 3>;

// RGB image with values in [0,1], stored channel-major (c, y, x).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // 3 * height * width

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<size_t>(3) * h * w, fill) {}

  double& at(int c, int y, int x) { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }

  bool operator==(const Image&) const = default;
};

// One grounding example: a point cloud with per-point affordance strength,
// the interaction image and the affordance phrase.
struct AffordanceSample {
  std::vector<Vec3> points;
  std::vector<double> labels;  // in [0,1], one per point
  Image image;
  std::string text;
  std::string category;

  size_t size() const noexcept { return points.size(); }
  bool operator==(const AffordanceSample&) const = default;
};

enum class Split { Seen, Unseen };

const char* to_string(Split split) noexcept;
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::filesystem::path points_path;
  std::filesystem::path image_path;
  std::string text;
  std::string category;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Split split = Split::Seen;
};

enum class ShapeKind { Sphere, Box, Cylinder };

const char* to_string(ShapeKind kind) noexcept;
ShapeKind parse_shape_kind(const std::string& text);

struct SyntheticConfig {
  ShapeKind shape_kind = ShapeKind::Sphere;
  int n_points = 2048;
  double region_radius = 0.5;
  int image_size = 64;
  std::uint64_t seed = 0;
  std::string affordance = "grasp";
  Split split = Split::Seen;

  void validate() const;
};

/// Radius of the smallest origin-centred ball containing the primitive.
/// Every generated primitive is scaled so that this is 1.
double shape_bounding_radius(ShapeKind kind) noexcept;

// ---------------------------------------------------------------------------
// Point files: one "x y z label" record per line.

struct PointRecords {
  std::vector<Vec3> points;
  std::vector<double> labels;
};

/// Parses a point file. With `require_labels` false, three-column lines are
/// accepted and receive label 0 (used for inference inputs).
PointRecords read_points(const std::filesystem::path& path, bool require_labels = true);
void write_points(const std::filesystem::path& path, std::span<const Vec3> points,
                  std::span<const double> labels);

/// Checks every AffordanceSample invariant. `image_depth` is the pyramid depth
/// the image sides must be divisible by (2^image_depth).
void validate_sample(const AffordanceSample& sample, int image_depth = 3);

AffordanceSample load_sample(const std::filesystem::path& points_path,
                             const std::filesystem::path& image_path, const std::string& text,
                             const std::string& category, int image_depth = 3);
void write_sample(const AffordanceSample& sample, const std::filesystem::path& points_path,
                  const std::filesystem::path& image_path);

/// Centres the cloud on its centroid and scales it to unit maximum norm.
std::vector<Vec3> normalize_points(std::span<const Vec3> points);

/// Label assigned to a point at Euclidean `distance` from the affordance seed:
/// exp(-d^2 / (2 sigma^2)) with sigma = region_radius / 2.
double affordance_profile(double distance, double region_radius) noexcept;

struct SyntheticRecord {
  AffordanceSample sample;
  Vec3 seed_point;  // centre of the affordance region, on the primitive surface
};

/// Deterministic synthetic dataset: labels follow affordance_profile around a
/// camera-visible seed point, images are orthographic depth renders with the
/// affordance region (label > 0.5) brightened by 0.5. Sample i depends only on
/// (config, i), so a longer run extends a shorter one.
std::vector<SyntheticRecord> generate_synthetic_records(const SyntheticConfig& config, int count);
std::vector<AffordanceSample> generate_synthetic(const SyntheticConfig& config, int count);

// ---------------------------------------------------------------------------
// Manifests: first line "split=<seen|unseen>", then tab-separated records.
// Relative paths are resolved against the manifest's directory.

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::vector<AffordanceSample> load_dataset(const DatasetManifest& manifest, int image_depth = 3);

}  // namespace dag
