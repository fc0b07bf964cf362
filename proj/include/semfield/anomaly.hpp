#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <unordered_map>
#include <vector>

#include "semfield/bundle.hpp"
#include "semfield/error.hpp"
#include "semfield/grid.hpp"

namespace semfield {

struct AnomalyConfig {
  int window = 3;
  double threshold = 0.8;

  void validate() const {
    if (window < 3 || window % 2 == 0) throw Error("anomaly window must be odd and >= 3");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("anomaly threshold must lie in [0, 1]");
  }
};

struct DistanceMap {
  Grid<float> distance;
  /// 1 where the window held no other pixel with the same label.
  Grid<std::uint8_t> isolated;
};

/// Mean 3D distance from each pixel to the same-label pixels of its k x k
/// window (the pixel itself excluded, window clipped at the border). Labels
/// compare by value, so unlabeled pixels group with each other.
inline DistanceMap neighborhood_semantic_distance(const Grid<Vec3f>& points, const Grid<std::uint32_t>& labels,
                                                  const AnomalyConfig& cfg) {
  cfg.validate();
  if (!points.same_shape(labels)) throw Error("neighborhood_semantic_distance: pointmap and label map shapes differ");
  const auto h = static_cast<std::ptrdiff_t>(points.height);
  const auto w = static_cast<std::ptrdiff_t>(points.width);
  const std::ptrdiff_t r = cfg.window / 2;

  DistanceMap out{Grid<float>(points.height, points.width, 0.0f), Grid<std::uint8_t>(points.height, points.width, 0)};
  for (std::ptrdiff_t i = 0; i < h; ++i) {
    const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, i - r), i1 = std::min(h - 1, i + r);
    for (std::ptrdiff_t j = 0; j < w; ++j) {
      const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, j - r), j1 = std::min(w - 1, j + r);
      const auto label = labels.data[static_cast<std::size_t>(i * w + j)];
      const auto& p = points.data[static_cast<std::size_t>(i * w + j)];
      double sum = 0.0;
      std::size_t count = 0;
      for (std::ptrdiff_t y = i0; y <= i1; ++y) {
        const std::size_t row = static_cast<std::size_t>(y * w);
        for (std::ptrdiff_t x = j0; x <= j1; ++x) {
          if (y == i && x == j) continue;
          if (labels.data[row + static_cast<std::size_t>(x)] != label) continue;
          const auto& q = points.data[row + static_cast<std::size_t>(x)];
          const double dx = static_cast<double>(p[0]) - q[0];
          const double dy = static_cast<double>(p[1]) - q[1];
          const double dz = static_cast<double>(p[2]) - q[2];
          sum += std::sqrt(dx * dx + dy * dy + dz * dz);
          ++count;
        }
      }
      const auto idx = static_cast<std::size_t>(i * w + j);
      if (count == 0) {
        out.isolated.data[idx] = 1;
      } else {
        out.distance.data[idx] = static_cast<float>(sum / static_cast<double>(count));
      }
    }
  }
  return out;
}

struct AnomalyMap {
  Grid<float> normalized;
  Grid<std::uint8_t> anomaly;

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(anomaly.data.begin(), anomaly.data.end(), 1));
  }
};

/// Min-max normalizes the distance map over its non-isolated pixels (constant
/// map -> zeros) and flags pixels whose normalized score exceeds the threshold.
/// Isolated pixels score 0 and are never anomalous.
inline AnomalyMap detect_anomalies(const DistanceMap& dist, const AnomalyConfig& cfg) {
  cfg.validate();
  const auto& L = dist.distance;
  const bool have_isolated = dist.isolated.same_shape(L);
  auto counts = [&](std::size_t p) { return !have_isolated || dist.isolated.data[p] == 0; };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < L.size(); ++p) {
    if (!counts(p)) continue;
    if (!std::isfinite(L.data[p])) throw Error("detect_anomalies: non-finite distance");
    lo = std::min<double>(lo, L.data[p]);
    hi = std::max<double>(hi, L.data[p]);
  }

  AnomalyMap out{Grid<float>(L.height, L.width, 0.0f), Grid<std::uint8_t>(L.height, L.width, 0)};
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t p = 0; p < L.size(); ++p) {
    if (!counts(p)) continue;
    const auto v = static_cast<float>((L.data[p] - lo) / range);
    out.normalized.data[p] = std::clamp(v, 0.0f, 1.0f);
    // Decide on the stored value so the flag always agrees with the score.
    out.anomaly.data[p] = static_cast<double>(out.normalized.data[p]) > cfg.threshold ? 1 : 0;
  }
  return out;
}

inline AnomalyMap detect_anomalies(const Grid<float>& distance, const AnomalyConfig& cfg) {
  return detect_anomalies(DistanceMap{distance, {}}, cfg);
}

/// Replaces anomalous pixels by the rounded (half-up) per-channel mean of
/// their label's mask, computed over the original image. Unlabeled pixels are
/// left alone.
inline Image semantic_smooth_image(const Image& image, const Grid<std::uint32_t>& labels,
                                   const Grid<std::uint8_t>& anomaly, const std::vector<const MaskRecord*>& masks) {
  if (!labels.same_shape(image.height, image.width) || !anomaly.same_shape(labels)) {
    throw Error("semantic_smooth_image: inputs are not index-aligned");
  }
  Image out = image;
  std::unordered_map<std::uint32_t, Rgb> means;
  auto mean_of = [&](std::uint32_t id) -> const Rgb* {
    if (auto it = means.find(id); it != means.end()) return &it->second;
    const MaskRecord* mask = nullptr;
    for (const auto* m : masks) {
      if (m->mask_id == id) mask = m;
    }
    if (!mask || mask->area == 0) return nullptr;
    std::array<std::uint64_t, 3> sum{0, 0, 0};
    for (std::size_t i = 0; i < image.height; ++i) {
      for (std::size_t j = 0; j < image.width; ++j) {
        if (!mask->bitmap(i, j)) continue;
        for (std::size_t c = 0; c < 3; ++c) sum[c] += image.at(c, i, j);
      }
    }
    Rgb rgb;
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[c] = static_cast<std::uint8_t>((2 * sum[c] + mask->area) / (2 * mask->area));
    }
    return &means.emplace(id, rgb).first->second;
  };

  for (std::size_t i = 0; i < image.height; ++i) {
    for (std::size_t j = 0; j < image.width; ++j) {
      if (!anomaly(i, j) || labels(i, j) == kUnlabeled) continue;
      if (const Rgb* rgb = mean_of(labels(i, j))) out.set_pixel(i, j, *rgb);
    }
  }
  return out;
}

/// Recomputes distance scores and anomaly flags on one pointmap in place.
inline void annotate_pointmap(Pointmap& pm, const Grid<std::uint32_t>& labels, const AnomalyConfig& cfg) {
  auto dist = neighborhood_semantic_distance(pm.points, labels, cfg);
  auto am = detect_anomalies(dist, cfg);
  pm.distance_score = std::move(am.normalized);
  pm.anomaly = std::move(am.anomaly);
}

/// Annotates every pointmap of the bundle, one task per view. Needs label maps and pointmaps.
inline void annotate_anomalies(SceneBundle& bundle, const AnomalyConfig& cfg) {
  if (bundle.label_maps.size() != bundle.views.size()) throw Error("anomaly detection needs label maps for every view");
  if (bundle.pointmaps.size() != bundle.views.size()) throw Error("anomaly detection needs pointmaps for every view");
  std::vector<std::future<void>> jobs;
  for (std::size_t v = 0; v < bundle.views.size(); ++v) {
    jobs.push_back(std::async(std::launch::async, [&bundle, &cfg, v] {
      annotate_pointmap(bundle.pointmaps[v], bundle.label_maps[v], cfg);
    }));
  }
  for (auto& j : jobs) j.get();
}

inline std::size_t total_anomalies(const SceneBundle& bundle) {
  std::size_t n = 0;
  for (const auto& pm : bundle.pointmaps) n += pm.anomaly_count();
  return n;
}

}  // namespace semfield
