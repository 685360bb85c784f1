#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "dag/data_model.hpp"
#include "dag/errors.hpp"

namespace dag {
namespace {

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 unit(const Vec3& a) { return (1.0 / norm(a)) * a; }

// Primitive dimensions, each scaled to a unit bounding radius.
const Vec3 kBoxHalf = unit(Vec3{0.8, 0.5, 0.33});
constexpr double kCylRadius = 0.6;
constexpr double kCylHalfHeight = 0.8;

// Orthographic camera looking at the origin from +kViewDir.
struct Camera {
  Vec3 view = unit(Vec3{1.0, 0.8, 1.2});
  Vec3 right = unit(cross(Vec3{0, 0, 1}, view));
  Vec3 up = cross(view, right);
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class SurfaceSampler {
 public:
  SurfaceSampler(ShapeKind kind, std::mt19937_64& rng) : kind_(kind), rng_(rng) {}

  Vec3 operator()() {
    switch (kind_) {
      case ShapeKind::Sphere: return sphere();
      case ShapeKind::Box: return box();
      case ShapeKind::Cylinder: return cylinder();
    }
    return {0, 0, 0};
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Vec3 sphere() {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec3 p;
    double n = 0.0;
    do {
      p = {normal(rng_), normal(rng_), normal(rng_)};
      n = norm(p);
    } while (n < 1e-12);
    return (1.0 / n) * p;
  }

  Vec3 box() {
    const auto& h = kBoxHalf;
    // Face pairs perpendicular to x, y, z with area proportional to the other two extents.
    const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
    const double total = areas[0] + areas[1] + areas[2];
    double pick = uniform(0.0, total);
    int axis = 0;
    while (axis < 2 && pick >= areas[axis]) pick -= areas[axis++];
    Vec3 p{uniform(-h[0], h[0]), uniform(-h[1], h[1]), uniform(-h[2], h[2])};
    p[axis] = uniform(0.0, 1.0) < 0.5 ? -h[axis] : h[axis];
    return p;
  }

  Vec3 cylinder() {
    const double side = 2.0 * std::numbers::pi * kCylRadius * 2.0 * kCylHalfHeight;
    const double cap = std::numbers::pi * kCylRadius * kCylRadius;
    const double pick = uniform(0.0, side + 2.0 * cap);
    if (pick < side) {
      const double theta = uniform(0.0, 2.0 * std::numbers::pi);
      return {kCylRadius * std::cos(theta), kCylRadius * std::sin(theta),
              uniform(-kCylHalfHeight, kCylHalfHeight)};
    }
    const double r = kCylRadius * std::sqrt(uniform(0.0, 1.0));
    const double theta = uniform(0.0, 2.0 * std::numbers::pi);
    const double z = pick < side + cap ? kCylHalfHeight : -kCylHalfHeight;
    return {r * std::cos(theta), r * std::sin(theta), z};
  }

  ShapeKind kind_;
  std::mt19937_64& rng_;
};

// Nearest intersection of the ray origin + t * dir (t > 0) with the primitive.
std::optional<Vec3> intersect(ShapeKind kind, const Vec3& origin, const Vec3& dir) {
  auto nearest_root = [](double a, double b, double c) -> std::optional<double> {
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0 || a == 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / (2.0 * a);
    const double t1 = (-b + s) / (2.0 * a);
    if (t0 > 0.0) return t0;
    if (t1 > 0.0) return t1;
    return std::nullopt;
  };

  switch (kind) {
    case ShapeKind::Sphere: {
      auto t = nearest_root(dot(dir, dir), 2.0 * dot(origin, dir), dot(origin, origin) - 1.0);
      if (!t) return std::nullopt;
      return origin + *t * dir;
    }
    case ShapeKind::Box: {
      double tmin = -1e300, tmax = 1e300;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(dir[k]) < 1e-15) {
          if (std::abs(origin[k]) > kBoxHalf[k]) return std::nullopt;
          continue;
        }
        double t1 = (-kBoxHalf[k] - origin[k]) / dir[k];
        double t2 = (kBoxHalf[k] - origin[k]) / dir[k];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
      }
      if (tmin > tmax || tmax <= 0.0) return std::nullopt;
      return origin + (tmin > 0.0 ? tmin : tmax) * dir;
    }
    case ShapeKind::Cylinder: {
      std::optional<double> best;
      auto consider = [&](double t) {
        if (t > 0.0 && (!best || t < *best)) best = t;
      };
      const double a = dir[0] * dir[0] + dir[1] * dir[1];
      const double b = 2.0 * (origin[0] * dir[0] + origin[1] * dir[1]);
      const double c = origin[0] * origin[0] + origin[1] * origin[1] - kCylRadius * kCylRadius;
      const double disc = b * b - 4.0 * a * c;
      if (a > 0.0 && disc >= 0.0) {
        for (double sign : {-1.0, 1.0}) {
          const double t = (-b + sign * std::sqrt(disc)) / (2.0 * a);
          const double z = origin[2] + t * dir[2];
          if (std::abs(z) <= kCylHalfHeight) consider(t);
        }
      }
      if (std::abs(dir[2]) > 1e-15) {
        for (double zc : {-kCylHalfHeight, kCylHalfHeight}) {
          const double t = (zc - origin[2]) / dir[2];
          const Vec3 p = origin + t * dir;
          if (p[0] * p[0] + p[1] * p[1] <= kCylRadius * kCylRadius) consider(t);
        }
      }
      if (!best) return std::nullopt;
      return origin + *best * dir;
    }
  }
  return std::nullopt;
}

bool visible(ShapeKind kind, const Camera& cam, const Vec3& p) {
  const Vec3 origin = dot(p, cam.right) * cam.right + dot(p, cam.up) * cam.up + 3.0 * cam.view;
  const auto hit = intersect(kind, origin, -1.0 * cam.view);
  return hit && norm(*hit - p) < 1e-6;
}

Image render(ShapeKind kind, const Camera& cam, int size, const Vec3& seed, double region_radius) {
  Image image(size, size, 0.0);
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double s = 2.0 * (px + 0.5) / size - 1.0;
      const double t = 1.0 - 2.0 * (py + 0.5) / size;
      const Vec3 origin = s * cam.right + t * cam.up + 3.0 * cam.view;
      const auto hit = intersect(kind, origin, -1.0 * cam.view);
      if (!hit) continue;
      double v = 0.25 + 0.25 * (dot(*hit, cam.view) + 1.0);
      if (affordance_profile(norm(*hit - seed), region_radius) > 0.5) v = std::min(1.0, v + 0.5);
      for (int c = 0; c < 3; ++c) image.at(c, py, px) = v;
    }
  }
  return image;
}

}  // namespace

double affordance_profile(double distance, double region_radius) noexcept {
  const double sigma = region_radius / 2.0;
  return std::exp(-distance * distance / (2.0 * sigma * sigma));
}

std::vector<SyntheticRecord> generate_synthetic_records(const SyntheticConfig& config, int count) {
  config.validate();
  if (count <= 0) fail(ErrorKind::Validation, "synthetic sample count must be positive");

  const Camera cam;
  std::vector<SyntheticRecord> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(i))));
    SurfaceSampler sample_surface(config.shape_kind, rng);

    Vec3 seed = sample_surface();
    for (int tries = 0; tries < 10000 && !visible(config.shape_kind, cam, seed); ++tries) {
      seed = sample_surface();
    }

    SyntheticRecord record;
    record.seed_point = seed;
    auto& s = record.sample;
    s.points.reserve(static_cast<size_t>(config.n_points));
    s.labels.reserve(static_cast<size_t>(config.n_points));
    for (int n = 0; n < config.n_points; ++n) {
      const Vec3 p = sample_surface();
      s.points.push_back(p);
      s.labels.push_back(affordance_profile(norm(p - seed), config.region_radius));
    }
    s.image = render(config.shape_kind, cam, config.image_size, seed, config.region_radius);
    s.text = config.affordance;
    s.category = to_string(config.shape_kind);
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<AffordanceSample> generate_synthetic(const SyntheticConfig& config, int count) {
  auto records = generate_synthetic_records(config, count);
  std::vector<AffordanceSample> out;
  out.reserve(records.size());
  for (auto& r : records) out.push_back(std::move(r.sample));
  return out;
}

}  // namespace dag
