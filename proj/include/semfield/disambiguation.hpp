#pragma once

// Multi-level and cross-view disambiguation of mask embeddings, and the
// large-to-small pixel ensemble that turns masks into per-pixel labels.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "semfield/aggregation.hpp"
#include "semfield/bundle.hpp"

namespace semfield {

inline constexpr double kDefaultContainmentThreshold = 0.9;

struct HierarchyEdge {
  std::uint32_t parent = 0;
  std::uint32_t child = 0;
  double containment = 0.0;

  bool operator==(const HierarchyEdge&) const = default;
};

/// Containment forest over the masks of one view.
struct MaskHierarchy {
  std::uint32_t view_id = 0;
  std::vector<HierarchyEdge> edges;
  std::vector<std::uint32_t> roots;

  std::optional<std::uint32_t> parent_of(std::uint32_t child) const {
    for (const auto& e : edges) {
      if (e.child == child) return e.parent;
    }
    return std::nullopt;
  }
};

/// Area-descending, ties by ascending mask_id.
inline void sort_by_area_desc(std::vector<const MaskRecord*>& masks) {
  std::sort(masks.begin(), masks.end(), [](const MaskRecord* x, const MaskRecord* y) {
    if (x->area != y->area) return x->area > y->area;
    return x->mask_id < y->mask_id;
  });
}

inline std::uint64_t overlap(const Grid<std::uint8_t>& x, const Grid<std::uint8_t>& y) {
  std::uint64_t n = 0;
  for (std::size_t p = 0; p < x.data.size(); ++p) n += (x.data[p] && y.data[p]) ? 1 : 0;
  return n;
}

/// Each mask's parent is the smallest strictly-larger mask holding at least
/// `containment_threshold` of its pixels. Ties go to the lower mask_id.
inline MaskHierarchy build_mask_hierarchy(std::vector<const MaskRecord*> masks,
                                          double containment_threshold = kDefaultContainmentThreshold) {
  MaskHierarchy h;
  if (!masks.empty()) h.view_id = masks.front()->view_id;
  for (const auto* m : masks) {
    if (m->view_id != h.view_id) throw Error("build_mask_hierarchy: masks span several views");
  }
  sort_by_area_desc(masks);

  for (const auto* child : masks) {
    const MaskRecord* best = nullptr;
    double best_containment = 0.0;
    for (const auto* cand : masks) {
      if (cand->area <= child->area) continue;
      double c = static_cast<double>(overlap(cand->bitmap, child->bitmap)) / static_cast<double>(child->area);
      if (c < containment_threshold) continue;
      if (!best || cand->area < best->area || (cand->area == best->area && cand->mask_id < best->mask_id)) {
        best = cand;
        best_containment = c;
      }
    }
    if (best) {
      h.edges.push_back({best->mask_id, child->mask_id, best_containment});
    } else {
      h.roots.push_back(child->mask_id);
    }
  }
  return h;
}

inline std::vector<MaskHierarchy> build_all_hierarchies(const SceneBundle& bundle,
                                                        double containment_threshold = kDefaultContainmentThreshold) {
  std::vector<MaskHierarchy> out;
  for (const auto& view : bundle.views) {
    auto h = build_mask_hierarchy(bundle.masks_of_view(view.view_id), containment_threshold);
    h.view_id = view.view_id;
    out.push_back(std::move(h));
  }
  return out;
}

/// Folds each parent's current embedding into its children, parents first.
/// Rows are keyed by mask id; roots pass through unchanged.
inline EmbeddingTable multi_level_disambiguate(const std::vector<MaskHierarchy>& hierarchies,
                                               const SceneBundle& bundle, EmbeddingTable table) {
  const auto masks = bundle.mask_index();
  const auto rows = rows_by_mask(table);
  for (const auto& h : hierarchies) {
    std::unordered_map<std::uint32_t, std::uint32_t> parent;
    for (const auto& e : h.edges) parent.emplace(e.child, e.parent);

    auto order = bundle.masks_of_view(h.view_id);
    sort_by_area_desc(order);
    for (const auto* m : order) {
      auto it = parent.find(m->mask_id);
      if (it == parent.end()) continue;
      const auto& p = bundle.masks[masks.at(it->second)];
      auto prow = table.row(rows.at(p.mask_id));
      auto crow = table.row(rows.at(m->mask_id));
      auto merged = slerp_aggregate<float>(prow, p.area, crow, m->area);
      std::copy(merged.begin(), merged.end(), crow.begin());
    }
  }
  return table;
}

/// For every object id, folds its per-view embeddings in ascending view order
/// (cumulative area as A, the incoming mask as B) and writes the result back
/// to every row of that object.
inline EmbeddingTable cross_view_disambiguate(const SceneBundle& bundle, EmbeddingTable table) {
  std::map<std::uint32_t, std::vector<const MaskRecord*>> by_object;
  for (const auto& m : bundle.masks) by_object[m.object_id].push_back(&m);
  const auto rows = rows_by_mask(table);

  for (auto& [object, members] : by_object) {
    if (members.empty()) throw Error("object " + std::to_string(object) + " has no masks");
    std::sort(members.begin(), members.end(), [](const MaskRecord* x, const MaskRecord* y) {
      if (x->view_id != y->view_id) return x->view_id < y->view_id;
      return x->mask_id < y->mask_id;
    });
    auto first = table.row(rows.at(members.front()->mask_id));
    std::vector<float> acc(first.begin(), first.end());
    std::uint64_t cumulative = members.front()->area;
    for (std::size_t i = 1; i < members.size(); ++i) {
      auto next = table.row(rows.at(members[i]->mask_id));
      acc = slerp_aggregate<float>(acc, cumulative, next, members[i]->area);
      cumulative += members[i]->area;
    }
    for (const auto* m : members) {
      auto r = table.row(rows.at(m->mask_id));
      std::copy(acc.begin(), acc.end(), r.begin());
    }
  }
  return table;
}

/// Paints masks large-to-small so each pixel ends with the smallest covering
/// mask (equal areas: the lower mask_id). Uncovered pixels get kUnlabeled.
inline Grid<std::uint32_t> ensemble_view_labels(std::vector<const MaskRecord*> masks, std::size_t height,
                                                std::size_t width) {
  std::sort(masks.begin(), masks.end(), [](const MaskRecord* x, const MaskRecord* y) {
    if (x->area != y->area) return x->area > y->area;
    return x->mask_id > y->mask_id;
  });
  Grid<std::uint32_t> labels(height, width, kUnlabeled);
  for (const auto* m : masks) {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (m->bitmap.data[p]) labels.data[p] = m->mask_id;
    }
  }
  return labels;
}

inline std::vector<Grid<std::uint32_t>> ensemble_pixel_embeddings(const SceneBundle& bundle) {
  std::vector<Grid<std::uint32_t>> out;
  out.reserve(bundle.views.size());
  for (const auto& v : bundle.views) {
    out.push_back(ensemble_view_labels(bundle.masks_of_view(v.view_id), bundle.manifest.height, bundle.manifest.width));
  }
  return out;
}

/// Re-keys a mask table as the fused pixel-ensemble table, in bundle mask order.
inline EmbeddingTable as_field_table(const SceneBundle& bundle, const EmbeddingTable& table) {
  const auto rows = rows_by_mask(table);
  EmbeddingTable out;
  out.dim = table.dim;
  for (const auto& m : bundle.masks) {
    out.append({RowKind::pixel_ensemble, std::to_string(m.mask_id)}, table.row(rows.at(m.mask_id)));
  }
  return out;
}

/// Dense H x W x d pixel embeddings for one view; unlabeled pixels are zero.
inline std::vector<float> materialize_pixel_embeddings(const SceneBundle& bundle, std::size_t view) {
  const auto& table = bundle.active_embeddings();
  const auto rows = rows_by_mask(table);
  const auto& labels = bundle.label_maps.at(view);
  std::vector<float> out(labels.size() * table.dim, 0.0f);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels.data[p] == kUnlabeled) continue;
    auto r = table.row(rows.at(labels.data[p]));
    std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(p * table.dim));
  }
  return out;
}

}  // namespace semfield
