#pragma once

// Bundle-level evaluation behind `semfield eval`: depth accuracy of a fused
// bundle's pointmaps against a ground-truth bundle, and segmentation quality
// of text queries against ground-truth object ids.

#include <set>
#include <string>
#include <vector>

#include "semfield/disambiguation.hpp"
#include "semfield/metrics.hpp"
#include "semfield/pipeline.hpp"

namespace semfield {

struct EvalOptions {
  bool align = true;
  double threshold = kDefaultQueryThreshold;
  bool global_norm = true;
};

/// z coordinate of every pixel of one view's pointmap.
inline std::vector<double> depth_of(const Pointmap& pm) {
  std::vector<double> z(pm.points.size());
  for (std::size_t p = 0; p < z.size(); ++p) z[p] = pm.points.data[p][2];
  return z;
}

/// Per-view depth metrics plus their mean over views.
inline json evaluate_depth(const SceneBundle& pred, const SceneBundle& gt, bool align) {
  if (pred.pointmaps.size() != gt.pointmaps.size() || pred.pointmaps.empty()) {
    throw Error("eval: prediction and ground truth must both carry pointmaps for the same views");
  }
  json per_view = json::array();
  double rel = 0.0, tau = 0.0;
  for (std::size_t v = 0; v < gt.pointmaps.size(); ++v) {
    auto p = depth_of(pred.pointmaps[v]);
    auto g = depth_of(gt.pointmaps[v]);
    auto e = depth_eval<double>(p, g, {}, align);
    per_view.push_back({{"view_id", v}, {"rel", e.rel}, {"tau", e.tau}, {"scale", e.scale}, {"valid", e.valid}});
    rel += e.rel;
    tau += e.tau;
  }
  const auto n = static_cast<double>(gt.pointmaps.size());
  return {{"per_view", per_view}, {"rel", rel / n}, {"tau", tau / n}, {"aligned", align}};
}

/// Pixels whose ground-truth label belongs to one of `objects`, view-major.
inline std::vector<std::uint8_t> object_bitmap(const SceneBundle& gt, const std::set<std::uint32_t>& objects) {
  auto labels = gt.label_maps.empty() ? ensemble_pixel_embeddings(gt) : gt.label_maps;
  const auto idx = gt.mask_index();
  std::vector<std::uint8_t> out;
  for (const auto& lm : labels) {
    for (auto id : lm.data) out.push_back(id != kUnlabeled && objects.count(gt.masks[idx.at(id)].object_id) ? 1 : 0);
  }
  return out;
}

/// `queries` is an array of {"text", "object_ids"}.
inline json evaluate_segmentation(const SceneBundle& pred, const SemanticField& field, const SceneBundle& gt,
                                  const json& queries, const EvalOptions& opts, Backend* embedder = nullptr) {
  std::vector<SegScores> scores;
  json per_query = json::array();
  for (const auto& q : queries) {
    const auto text = q.at("text").get<std::string>();
    const auto ids = q.at("object_ids").get<std::set<std::uint32_t>>();
    auto r = run_query(pred, field, text, {opts.threshold, opts.global_norm}, embedder);
    auto truth = object_bitmap(gt, ids);
    if (truth.size() != r.selected.size()) throw Error("eval: prediction and ground truth differ in size");
    auto s = seg_eval<std::uint8_t>(r.selected, truth);
    scores.push_back(s);
    per_query.push_back({{"text", text}, {"iou", s.iou}, {"pixel_accuracy", s.pixel_accuracy}, {"precision", s.precision},
                         {"selected", r.selected_count}});
  }
  auto agg = aggregate(std::move(scores));
  return {{"per_query", per_query}, {"mIoU", agg.mean_iou}, {"mPA", agg.mean_pixel_accuracy}, {"mP", agg.mean_precision},
          {"threshold", opts.threshold}};
}

}  // namespace semfield
