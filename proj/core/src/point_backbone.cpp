#include "dag/point_backbone.hpp"

#include <algorithm>
#include <limits>

#include "dag/errors.hpp"

namespace dag {
namespace {

torch::Tensor as_double_contiguous(const torch::Tensor& coords) {
  if (coords.dim() != 2 || coords.size(1) != 3) fail(ErrorKind::Shape, "coordinates must be N x 3");
  return coords.detach().to(torch::kDouble).contiguous();
}

double sq_dist(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<int64_t> farthest_point_sample(const torch::Tensor& coords, int64_t count) {
  const auto c = as_double_contiguous(coords);
  const int64_t n = c.size(0);
  if (count < 1 || count > n) {
    fail(ErrorKind::Size, "cannot sample " + std::to_string(count) + " of " + std::to_string(n) + " points");
  }
  const double* p = c.data_ptr<double>();
  std::vector<double> min_d(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(count));
  int64_t current = 0;
  for (int64_t s = 0; s < count; ++s) {
    picked.push_back(current);
    int64_t best = 0;
    double best_d = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = sq_dist(p + 3 * i, p + 3 * current);
      if (d < min_d[i]) min_d[i] = d;
      if (min_d[i] > best_d) {  // strict: lowest index wins ties
        best_d = min_d[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

torch::Tensor ball_query(const torch::Tensor& centers, const torch::Tensor& coords, double radius,
                         int64_t group_size) {
  const auto q = as_double_contiguous(centers);
  const auto c = as_double_contiguous(coords);
  const int64_t m = q.size(0), n = c.size(0);
  const double r2 = radius * radius;
  auto out = torch::empty({m, group_size}, torch::kLong);
  auto acc = out.accessor<int64_t, 2>();
  const double* qp = q.data_ptr<double>();
  const double* cp = c.data_ptr<double>();
  for (int64_t j = 0; j < m; ++j) {
    int64_t found = 0;
    int64_t nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n && found < group_size; ++i) {
      const double d = sq_dist(qp + 3 * j, cp + 3 * i);
      if (d < nearest_d) {
        nearest_d = d;
        nearest = i;
      }
      if (d <= r2) acc[j][found++] = i;
    }
    if (found == 0) {
      for (int64_t i = 0; i < n; ++i) {
        const double d = sq_dist(qp + 3 * j, cp + 3 * i);
        if (d < nearest_d) {
          nearest_d = d;
          nearest = i;
        }
      }
      acc[j][found++] = nearest;
    }
    for (int64_t s = found; s < group_size; ++s) acc[j][s] = acc[j][0];
  }
  return out;
}

// ---------------------------------------------------------------------------

PointEncoderImpl::PointEncoderImpl(const PointEncoderOptions& options) : options_(options) {
  const size_t stages = options.level_sizes.size();
  if (stages < 1) fail(ErrorKind::Structural, "point encoder needs at least one abstraction stage");
  if (options.radii.size() != stages || options.group_sizes.size() != stages ||
      options.level_channels.size() != stages + 1) {
    fail(ErrorKind::Structural, "point encoder options disagree on the number of stages");
  }
  for (size_t s = 1; s < stages; ++s) {
    if (options.level_sizes[s] >= options.level_sizes[s - 1]) {
      fail(ErrorKind::Structural, "point level sizes must be strictly decreasing");
    }
  }
  const auto& ch = options.level_channels;
  stem_ = register_module("stem", Mlp(std::vector<int64_t>{3, ch[0]}, /*activate_last=*/true));
  for (size_t s = 0; s < stages; ++s) {
    stages_.push_back(register_module("sa" + std::to_string(s),
                                      Mlp(std::vector<int64_t>{3 + ch[s], ch[s + 1], ch[s + 1]}, true)));
  }
  cls_head_ = register_module("cls_head", torch::nn::Linear(2 * ch.back(), options.cls_dim));
  if (options.freeze) freeze(*this);
}

PointEncoding PointEncoderImpl::forward(const torch::Tensor& coords) {
  const int64_t n = coords.size(0);
  if (n < options_.level_sizes.back()) {
    fail(ErrorKind::Size, "cloud has " + std::to_string(n) + " points; the deepest level needs " +
                              std::to_string(options_.level_sizes.back()));
  }
  PointEncoding out;
  auto& levels = out.levels.levels;
  levels.push_back({coords, stem_(coords)});

  for (size_t s = 0; s < stages_.size(); ++s) {
    const auto& prev = levels.back();
    const int64_t count = std::min(options_.level_sizes[s], prev.coords.size(0));
    const auto picked = farthest_point_sample(prev.coords, count);
    const auto idx = torch::tensor(picked, torch::kLong);
    auto centers = prev.coords.index_select(0, idx);

    const auto groups = ball_query(centers, prev.coords, options_.radii[s], options_.group_sizes[s]);
    const int64_t g = groups.size(1);
    const auto flat = groups.reshape({-1});
    auto rel = prev.coords.index_select(0, flat).view({count, g, 3}) - centers.unsqueeze(1);
    auto feats = prev.feats.index_select(0, flat).view({count, g, prev.feats.size(1)});
    auto pooled = std::get<0>(stages_[s](torch::cat({rel, feats}, 2)).max(1));
    levels.push_back({centers, pooled});
  }

  const auto& deepest = levels.back().feats;
  out.cls = cls_head_(torch::cat({std::get<0>(deepest.max(0)), deepest.mean(0)}, 0)).unsqueeze(0);
  return out;
}

// ---------------------------------------------------------------------------

InterpolationWeights interpolation_weights(const torch::Tensor& query, const torch::Tensor& source,
                                           int64_t k) {
  const auto q = as_double_contiguous(query);
  const auto s = as_double_contiguous(source);
  const int64_t nq = q.size(0), ns = s.size(0);
  if (ns < 1) fail(ErrorKind::Size, "interpolation needs at least one source point");
  k = std::min(k, ns);

  auto indices = torch::empty({nq, k}, torch::kLong);
  auto weights = torch::empty({nq, k}, torch::kDouble);
  auto ia = indices.accessor<int64_t, 2>();
  auto wa = weights.accessor<double, 2>();
  const double* qp = q.data_ptr<double>();
  const double* sp = s.data_ptr<double>();

  std::vector<std::pair<double, int64_t>> dist(static_cast<size_t>(ns));
  for (int64_t j = 0; j < nq; ++j) {
    for (int64_t i = 0; i < ns; ++i) dist[i] = {sq_dist(qp + 3 * j, sp + 3 * i), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    if (dist[0].first < 1e-20) {  // within 1e-10: copy the coincident source
      for (int64_t t = 0; t < k; ++t) {
        ia[j][t] = dist[t].second;
        wa[j][t] = t == 0 ? 1.0 : 0.0;
      }
      continue;
    }
    double total = 0.0;
    for (int64_t t = 0; t < k; ++t) total += 1.0 / dist[t].first;
    for (int64_t t = 0; t < k; ++t) {
      ia[j][t] = dist[t].second;
      wa[j][t] = (1.0 / dist[t].first) / total;
    }
  }
  return {indices, weights};
}

torch::Tensor interpolate_features(const torch::Tensor& query, const torch::Tensor& source,
                                   const torch::Tensor& source_feats, int64_t k) {
  const auto w = interpolation_weights(query, source, k);
  const int64_t nq = w.indices.size(0), kk = w.indices.size(1);
  auto gathered = source_feats.index_select(0, w.indices.reshape({-1})).view({nq, kk, source_feats.size(1)});
  return (gathered * w.weights.to(source_feats.scalar_type()).unsqueeze(2)).sum(1);
}

FeaturePropagationImpl::FeaturePropagationImpl(const std::vector<int64_t>& level_channels, int64_t dim,
                                               int64_t k)
    : k_(k) {
  if (level_channels.size() < 2) fail(ErrorKind::Structural, "propagation needs at least two levels");
  int64_t coarse = level_channels.back();
  for (size_t l = level_channels.size() - 1; l-- > 0;) {
    const bool last = l == 0;
    stages_.push_back(register_module("fp" + std::to_string(l),
                                      Mlp(std::vector<int64_t>{coarse + level_channels[l], dim, dim}, !last)));
    coarse = dim;
  }
}

torch::Tensor FeaturePropagationImpl::forward(const PointLevels& levels) {
  const auto& lv = levels.levels;
  if (lv.size() < 2) fail(ErrorKind::Structural, "propagation needs at least two levels");
  if (lv.size() != stages_.size() + 1) fail(ErrorKind::Structural, "level count does not match propagation");
  torch::Tensor feats = lv.back().feats;
  for (size_t step = 0; step < stages_.size(); ++step) {
    const auto& coarse = lv[lv.size() - 1 - step];
    const auto& fine = lv[lv.size() - 2 - step];
    auto up = interpolate_features(fine.coords, coarse.coords, feats, k_);
    feats = stages_[step](torch::cat({up, fine.feats}, 1));
  }
  return feats;
}

torch::Tensor propagate(const PointLevels& levels, FeaturePropagation& propagation) {
  return propagation->forward(levels);
}

}  // namespace dag
