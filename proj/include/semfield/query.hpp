#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semfield/aggregation.hpp"
#include "semfield/backend.hpp"
#include "semfield/bundle.hpp"
#include "semfield/field.hpp"

namespace semfield {

inline constexpr double kDefaultQueryThreshold = 0.6;

struct QueryResult {
  std::string query;
  /// Normalized scores in [0, 1]; unlabeled points hold 0.
  std::vector<float> similarity;
  std::vector<std::uint8_t> selected;
  double threshold = kDefaultQueryThreshold;
  std::size_t selected_count = 0;
  std::vector<std::size_t> per_view_counts;

  bool operator==(const QueryResult&) const = default;
};

/// Cached row on an exact-string hit, otherwise the backend's embedding
/// normalized to unit length.
inline std::vector<float> embed_text(std::string_view query, const SceneBundle& bundle, Backend* embedder) {
  if (query.empty()) throw Error("query text is empty");
  if (bundle.query_cache) {
    if (auto row = bundle.query_cache->find(RowKind::text, query)) {
      auto r = bundle.query_cache->row(*row);
      return {r.begin(), r.end()};
    }
  }
  if (!embedder) throw Error("query not in cache and no embedder configured");
  auto raw = embedder->embed_text(query);
  if (raw.size() != bundle.manifest.dim) {
    throw Error("text embedding has dimension " + std::to_string(raw.size()) + ", bundle uses " +
                std::to_string(bundle.manifest.dim));
  }
  return normalized<float>(raw);
}

/// Raw cosine scores: one dot product per table row, broadcast to points.
/// Unlabeled points score -1.
inline std::vector<float> cosine_similarity_field(std::span<const float> text, const SemanticField& field,
                                                  const EmbeddingTable& table) {
  if (text.size() != table.dim) {
    throw Error("dimension mismatch: text embedding has " + std::to_string(text.size()) + ", table has " +
                std::to_string(table.dim));
  }
  std::vector<float> per_row(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) per_row[r] = static_cast<float>(dot<float>(text, table.row(r)));
  std::vector<float> scores(field.size(), -1.0f);
  for (std::size_t p = 0; p < field.size(); ++p) {
    const auto row = field.embedding_rows[p];
    if (row != kUnlabeled) scores[p] = per_row.at(row);
  }
  return scores;
}

/// Min-max over the entries with include[p] != 0; excluded entries map to 0.
/// A constant (or empty) input maps to all zeros.
inline std::vector<float> minmax_normalize(std::span<const float> scores, std::span<const std::uint8_t> include) {
  double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (!include[p]) continue;
    if (!std::isfinite(scores[p])) throw Error("similarity scores must be finite");
    lo = std::min<double>(lo, scores[p]);
    hi = std::max<double>(hi, scores[p]);
  }
  std::vector<float> out(scores.size(), 0.0f);
  if (!(hi > lo)) return out;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (include[p]) out[p] = std::clamp(static_cast<float>((scores[p] - lo) / (hi - lo)), 0.0f, 1.0f);
  }
  return out;
}

inline std::vector<std::uint8_t> labeled_points(const SemanticField& field) {
  std::vector<std::uint8_t> inc(field.size());
  for (std::size_t p = 0; p < field.size(); ++p) inc[p] = field.embedding_rows[p] != kUnlabeled ? 1 : 0;
  return inc;
}

/// Scene-wide min-max: one range over every view's labeled points.
inline std::vector<float> global_minmax_normalize(std::span<const float> raw, const SemanticField& field) {
  return minmax_normalize(raw, labeled_points(field));
}

/// Per-view min-max, the ablated variant.
inline std::vector<float> per_view_minmax_normalize(std::span<const float> raw, const SemanticField& field) {
  const auto labeled = labeled_points(field);
  std::vector<float> out(raw.size(), 0.0f);
  for (std::size_t v = 0; v < field.view_count; ++v) {
    std::vector<std::uint8_t> inc(raw.size(), 0);
    for (std::size_t p = 0; p < raw.size(); ++p) inc[p] = labeled[p] && field.sources[p].view_id == v;
    auto part = minmax_normalize(raw, inc);
    for (std::size_t p = 0; p < raw.size(); ++p) {
      if (inc[p]) out[p] = part[p];
    }
  }
  return out;
}

/// Strict-greater selection. Unlabeled points are never selected.
inline QueryResult threshold_select(std::vector<float> normalized, double threshold, const SemanticField& field,
                                    std::string query = {}) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("query threshold must lie in [0, 1]");
  QueryResult r;
  r.query = std::move(query);
  r.threshold = threshold;
  r.selected.assign(normalized.size(), 0);
  r.per_view_counts.assign(field.view_count, 0);
  for (std::size_t p = 0; p < normalized.size(); ++p) {
    if (field.embedding_rows[p] == kUnlabeled) continue;
    if (static_cast<double>(normalized[p]) > threshold) {
      r.selected[p] = 1;
      ++r.selected_count;
      ++r.per_view_counts[field.sources[p].view_id];
    }
  }
  r.similarity = std::move(normalized);
  return r;
}

struct QueryOptions {
  double threshold = kDefaultQueryThreshold;
  bool global_norm = true;
};

/// Embed -> score -> normalize -> select against a fused bundle.
inline QueryResult run_query(const SceneBundle& bundle, const SemanticField& field, std::string_view text,
                             const QueryOptions& opts, Backend* embedder = nullptr) {
  auto t = embed_text(text, bundle, embedder);
  auto raw = cosine_similarity_field(t, field, bundle.active_embeddings());
  auto norm = opts.global_norm ? global_minmax_normalize(raw, field) : per_view_minmax_normalize(raw, field);
  return threshold_select(std::move(norm), opts.threshold, field, std::string(text));
}

inline json query_summary(const QueryResult& r, std::size_t total_points) {
  return {{"query", r.query},
          {"threshold", r.threshold},
          {"selected_count", r.selected_count},
          {"per_view_counts", r.per_view_counts},
          {"total_points", total_points}};
}

}  // namespace semfield
