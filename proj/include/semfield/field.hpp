#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "semfield/anomaly.hpp"
#include "semfield/backend.hpp"
#include "semfield/bundle.hpp"

namespace semfield {

struct PixelRef {
  std::uint32_t view_id = 0;
  std::uint32_t pixel = 0;  // row-major index within the view

  bool operator==(const PixelRef&) const = default;
};

/// Fused points from every view, view-major then row-major.
struct SemanticField {
  std::vector<Vec3f> points;
  std::vector<Rgb> colors;
  /// Object id of the source pixel's mask, kUnlabeled for uncovered pixels.
  std::vector<std::uint32_t> labels;
  /// Row of the bundle's active embedding table, kUnlabeled for uncovered pixels.
  std::vector<std::uint32_t> embedding_rows;
  std::vector<PixelRef> sources;
  std::vector<std::uint8_t> anomalous;
  std::size_t view_count = 0;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  bool operator==(const SemanticField&) const = default;
};

inline SemanticField fuse_views(const SceneBundle& bundle) {
  if (bundle.views.empty()) throw Error("no views");
  if (bundle.label_maps.size() != bundle.views.size()) throw Error("fuse_views: bundle has no label maps (run the ensemble first)");
  for (std::size_t v = 0; v < bundle.views.size(); ++v) {
    if (v >= bundle.pointmaps.size()) throw Error("fuse_views: missing pointmap for view " + std::to_string(v));
  }
  const auto& table = bundle.active_embeddings();
  const auto rows = rows_by_mask(table);
  const auto masks = bundle.mask_index();
  const std::size_t hw = bundle.manifest.height * bundle.manifest.width;

  SemanticField f;
  f.view_count = bundle.views.size();
  const std::size_t n = hw * bundle.views.size();
  f.points.reserve(n);
  f.colors.reserve(n);
  f.labels.reserve(n);
  f.embedding_rows.reserve(n);
  f.sources.reserve(n);
  f.anomalous.reserve(n);
  for (std::size_t v = 0; v < bundle.views.size(); ++v) {
    const auto& img = bundle.views[v].image;
    const auto& pm = bundle.pointmaps[v];
    const auto& lm = bundle.label_maps[v];
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = p / img.width, j = p % img.width;
      f.points.push_back(pm.points.data[p]);
      f.colors.push_back(img.pixel(i, j));
      const auto id = lm.data[p];
      if (id == kUnlabeled) {
        f.labels.push_back(kUnlabeled);
        f.embedding_rows.push_back(kUnlabeled);
      } else {
        f.labels.push_back(bundle.masks[masks.at(id)].object_id);
        f.embedding_rows.push_back(static_cast<std::uint32_t>(rows.at(id)));
      }
      f.sources.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(p)});
      f.anomalous.push_back(pm.anomaly.data[p]);
    }
  }
  return f;
}

/// Tensors and manifest entry persisting a field next to its bundle.
inline std::pair<ExtraTensors, json> field_tensors(const SemanticField& f) {
  const std::uint64_t n = f.size();
  std::vector<float> pts;
  std::vector<std::uint8_t> cols;
  std::vector<std::uint32_t> src;
  pts.reserve(3 * n);
  cols.reserve(3 * n);
  src.reserve(2 * n);
  for (std::size_t p = 0; p < n; ++p) {
    pts.insert(pts.end(), f.points[p].begin(), f.points[p].end());
    cols.insert(cols.end(), f.colors[p].begin(), f.colors[p].end());
    src.push_back(f.sources[p].view_id);
    src.push_back(f.sources[p].pixel);
  }
  ExtraTensors t;
  t.emplace_back("field/points.pe3r", TensorBlock::from<float>({n, 3}, pts));
  t.emplace_back("field/colors.pe3r", TensorBlock::from<std::uint8_t>({n, 3}, cols));
  t.emplace_back("field/labels.pe3r", TensorBlock::from<std::uint32_t>({n}, f.labels));
  t.emplace_back("field/embedding_rows.pe3r", TensorBlock::from<std::uint32_t>({n}, f.embedding_rows));
  t.emplace_back("field/sources.pe3r", TensorBlock::from<std::uint32_t>({n, 2}, src));
  t.emplace_back("field/anomalous.pe3r", TensorBlock::from<std::uint8_t>({n}, f.anomalous));
  json m = {{"points", n},
            {"positions", "field/points.pe3r"},
            {"colors", "field/colors.pe3r"},
            {"labels", "field/labels.pe3r"},
            {"embedding_rows", "field/embedding_rows.pe3r"},
            {"sources", "field/sources.pe3r"},
            {"anomalous", "field/anomalous.pe3r"}};
  return {std::move(t), std::move(m)};
}

inline void write_fused_bundle(const SceneBundle& bundle, const SemanticField& field, const std::filesystem::path& dir) {
  auto [tensors, entry] = field_tensors(field);
  write_bundle(bundle, dir, tensors, entry);
}

/// Smooths every view with its current anomaly flags and asks the backend
/// for new pointmaps, then re-annotates them. Nothing in `bundle` changes if
/// the backend fails.
inline SceneBundle repredict_smoothed(const SceneBundle& bundle, Backend& backend, const AnomalyConfig& cfg) {
  if (bundle.label_maps.size() != bundle.views.size() || bundle.pointmaps.size() != bundle.views.size()) {
    throw Error("refinement needs label maps and pointmaps for every view");
  }
  std::vector<Image> smoothed;
  smoothed.reserve(bundle.views.size());
  for (std::size_t v = 0; v < bundle.views.size(); ++v) {
    smoothed.push_back(semantic_smooth_image(bundle.views[v].image, bundle.label_maps[v], bundle.pointmaps[v].anomaly,
                                             bundle.masks_of_view(static_cast<std::uint32_t>(v))));
  }
  std::vector<Grid<Vec3f>> predicted;
  try {
    predicted = backend.predict_pointmaps(smoothed);
  } catch (const BackendError& e) {
    throw BackendError(std::string("refinement of ") + std::to_string(smoothed.size()) + " views failed: " + e.what());
  }
  SceneBundle out = bundle;
  for (std::size_t v = 0; v < out.views.size(); ++v) {
    out.pointmaps[v] = Pointmap(static_cast<std::uint32_t>(v), std::move(predicted[v]));
  }
  annotate_anomalies(out, cfg);
  return out;
}

/// One detect -> smooth -> re-predict pass.
inline SceneBundle refine_pointmaps(const SceneBundle& bundle, Backend& backend, const AnomalyConfig& cfg) {
  SceneBundle annotated = bundle;
  annotate_anomalies(annotated, cfg);
  return repredict_smoothed(annotated, backend, cfg);
}

}  // namespace semfield
