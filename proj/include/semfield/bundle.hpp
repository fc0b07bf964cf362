#pragma once

// Scene bundle data model and its on-disk directory format.
//
// A bundle directory holds `manifest.json` plus `*.pe3r` tensor files that the
// manifest references by relative path. Everything written is
// byte-deterministic: keys are emitted sorted and tensors in a fixed order.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "semfield/error.hpp"
#include "semfield/grid.hpp"
#include "semfield/tensor.hpp"

namespace semfield {

using json = nlohmann::json;

inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr const char* kBundleFormat = "pe3r-scene-bundle";
inline constexpr double kUnitNormTolerance = 1e-5;

struct ViewRecord {
  std::uint32_t view_id = 0;
  Image image;

  bool operator==(const ViewRecord&) const = default;
};

struct MaskRecord {
  std::uint32_t mask_id = 0;
  std::uint32_t view_id = 0;
  std::uint32_t object_id = 0;
  Grid<std::uint8_t> bitmap;
  std::uint64_t area = 0;
  std::uint32_t level = 0;

  bool operator==(const MaskRecord&) const = default;
};

enum class RowKind { mask, text, pixel_ensemble };

inline const char* row_kind_name(RowKind k) {
  switch (k) {
    case RowKind::mask: return "mask";
    case RowKind::text: return "text";
    case RowKind::pixel_ensemble: return "pixel-ensemble";
  }
  return "?";
}

inline std::optional<RowKind> parse_row_kind(std::string_view s) {
  if (s == "mask") return RowKind::mask;
  if (s == "text") return RowKind::text;
  if (s == "pixel-ensemble") return RowKind::pixel_ensemble;
  return std::nullopt;
}

struct RowKey {
  RowKind kind = RowKind::mask;
  std::string key;

  bool operator==(const RowKey&) const = default;
};

/// m x d table of embeddings, one keyed row per entry.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<float> rows;
  std::vector<RowKey> keys;

  std::size_t size() const noexcept { return keys.size(); }

  std::span<const float> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {rows.data() + i * dim, dim}; }

  void append(RowKey key, std::span<const float> values) {
    if (values.size() != dim) throw Error("embedding row has wrong dimension");
    rows.insert(rows.end(), values.begin(), values.end());
    keys.push_back(std::move(key));
  }

  std::optional<std::size_t> find(RowKind kind, std::string_view key) const {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].kind == kind && keys[i].key == key) return i;
    }
    return std::nullopt;
  }

  bool operator==(const EmbeddingTable&) const = default;
};

struct Pointmap {
  std::uint32_t view_id = 0;
  Grid<Vec3f> points;
  Grid<float> distance_score;
  Grid<std::uint8_t> anomaly;

  Pointmap() = default;
  Pointmap(std::uint32_t view, Grid<Vec3f> pts)
      : view_id(view),
        points(std::move(pts)),
        distance_score(points.height, points.width, 0.0f),
        anomaly(points.height, points.width, 0) {}

  std::size_t anomaly_count() const {
    return static_cast<std::size_t>(std::count(anomaly.data.begin(), anomaly.data.end(), 1));
  }

  bool operator==(const Pointmap&) const = default;
};

struct Manifest {
  std::uint32_t version = kBundleVersion;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  /// Echo of the pipeline configuration that produced the bundle (null for raw input).
  json config;
  /// Opaque provenance written by the exporter, carried through untouched.
  json provenance;

  bool operator==(const Manifest&) const = default;
};

struct SceneBundle {
  Manifest manifest;
  std::vector<ViewRecord> views;
  std::vector<MaskRecord> masks;
  EmbeddingTable mask_embeddings;
  /// Disambiguated per-mask embeddings (kind pixel-ensemble) after fusion.
  std::optional<EmbeddingTable> field_embeddings;
  /// Either empty or one per view.
  std::vector<Pointmap> pointmaps;
  /// Either empty or one per view; pixel -> mask_id, kUnlabeled otherwise.
  std::vector<Grid<std::uint32_t>> label_maps;
  std::optional<EmbeddingTable> query_cache;

  std::size_t view_count() const noexcept { return views.size(); }

  /// Index into `masks` for a mask id.
  std::unordered_map<std::uint32_t, std::size_t> mask_index() const {
    std::unordered_map<std::uint32_t, std::size_t> idx;
    for (std::size_t i = 0; i < masks.size(); ++i) idx.emplace(masks[i].mask_id, i);
    return idx;
  }

  /// Masks owned by one view, in bundle order.
  std::vector<const MaskRecord*> masks_of_view(std::uint32_t view_id) const {
    std::vector<const MaskRecord*> out;
    for (const auto& m : masks) {
      if (m.view_id == view_id) out.push_back(&m);
    }
    return out;
  }

  /// The table pixel embeddings resolve against: the fused table when present.
  const EmbeddingTable& active_embeddings() const {
    return field_embeddings ? *field_embeddings : mask_embeddings;
  }

  bool operator==(const SceneBundle&) const = default;
};

inline std::uint64_t popcount(const Grid<std::uint8_t>& bitmap) {
  return static_cast<std::uint64_t>(std::count_if(bitmap.data.begin(), bitmap.data.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

/// mask_id -> row index for the given table, where rows are keyed by mask id.
inline std::unordered_map<std::uint32_t, std::size_t> rows_by_mask(const EmbeddingTable& table) {
  std::unordered_map<std::uint32_t, std::size_t> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.keys[i].kind == RowKind::text) continue;
    out.emplace(static_cast<std::uint32_t>(std::stoul(table.keys[i].key)), i);
  }
  return out;
}

inline double row_norm(std::span<const float> row) {
  double s = 0.0;
  for (float v : row) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline std::string view_stem(std::size_t v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "views/view_%04zu", v);
  return buf;
}

inline void check_table(const EmbeddingTable& t, std::size_t dim, const std::string& file,
                        bool require_unit) {
  if (t.dim != dim) {
    throw BundleError(file, "dim", "table dim " + std::to_string(t.dim) + " != bundle dim " +
                                       std::to_string(dim));
  }
  if (t.rows.size() != t.keys.size() * t.dim) {
    throw BundleError(file, "row_keys", "row_keys length does not match row count");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto r = t.row(i);
    for (float v : r) {
      if (!std::isfinite(v)) throw BundleError(file, "rows[" + std::to_string(i) + "]", "non-finite value");
    }
    double n = row_norm(r);
    if (n == 0.0) throw BundleError(file, "rows[" + std::to_string(i) + "]", "zero-norm row");
    if (require_unit && std::abs(n - 1.0) > kUnitNormTolerance) {
      throw BundleError(file, "rows[" + std::to_string(i) + "]",
                        "row is not unit norm (" + std::to_string(n) + ")");
    }
  }
}

}  // namespace detail

/// Checks every bundle invariant. Throws BundleError naming the offending part.
inline void validate_bundle(const SceneBundle& b) {
  const auto& mf = b.manifest;
  const std::size_t h = mf.height, w = mf.width;
  if (mf.version != kBundleVersion) {
    throw BundleError("manifest.json", "version", "unsupported version " + std::to_string(mf.version));
  }
  if (mf.dim == 0) throw BundleError("manifest.json", "dim", "embedding dimension must be >= 1");

  for (std::size_t v = 0; v < b.views.size(); ++v) {
    const auto& view = b.views[v];
    std::string where = "views[" + std::to_string(v) + "]";
    if (view.view_id != v) throw BundleError("manifest.json", where + ".view_id", "views must be ordered 0..n-1");
    if (view.image.height != h || view.image.width != w || view.image.data.size() != 3 * h * w) {
      throw BundleError("manifest.json", where + ".image", "image shape differs from bundle H x W");
    }
  }

  std::set<std::uint32_t> ids;
  for (const auto& m : b.masks) {
    std::string where = "mask " + std::to_string(m.mask_id);
    if (!ids.insert(m.mask_id).second) throw BundleError("manifest.json", where, "duplicate mask_id");
    if (m.mask_id == kUnlabeled) throw BundleError("manifest.json", where, "mask_id collides with the unlabeled sentinel");
    if (m.view_id >= b.views.size()) throw BundleError("manifest.json", where + ".view_id", "no such view");
    if (!m.bitmap.same_shape(h, w)) throw BundleError("manifest.json", where + ".bitmap", "bitmap shape differs from bundle H x W");
    for (auto px : m.bitmap.data) {
      if (px > 1) throw BundleError("manifest.json", where + ".bitmap", "bitmap values must be 0 or 1");
    }
    auto pc = popcount(m.bitmap);
    if (pc != m.area) {
      throw BundleError("manifest.json", where + ".area",
                        "area " + std::to_string(m.area) + " != bitmap popcount " + std::to_string(pc));
    }
    if (m.area == 0) throw BundleError("manifest.json", where + ".area", "mask is empty");
  }

  // Mask embeddings: exactly one row per mask, every mask row names a mask.
  auto check_mask_rows = [&](const EmbeddingTable& t, const std::string& file, RowKind kind, bool unit) {
    detail::check_table(t, mf.dim, file, unit);
    std::set<std::uint32_t> seen;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.keys[i].kind != kind) {
        throw BundleError(file, "row_keys[" + std::to_string(i) + "]",
                          std::string("expected kind ") + row_kind_name(kind));
      }
      std::uint32_t id = 0;
      try {
        std::size_t used = 0;
        unsigned long parsed = std::stoul(t.keys[i].key, &used);
        if (used != t.keys[i].key.size() || parsed > 0xffffffffUL) throw std::invalid_argument("range");
        id = static_cast<std::uint32_t>(parsed);
      } catch (const std::exception&) {
        throw BundleError(file, "row_keys[" + std::to_string(i) + "]", "key is not a mask id");
      }
      if (!ids.count(id)) throw BundleError(file, "row_keys[" + std::to_string(i) + "]", "row refers to unknown mask " + std::to_string(id));
      if (!seen.insert(id).second) throw BundleError(file, "row_keys[" + std::to_string(i) + "]", "mask " + std::to_string(id) + " has more than one row");
    }
    for (auto id : ids) {
      if (!seen.count(id)) throw BundleError(file, "row_keys", "mask " + std::to_string(id) + " has no embedding row");
    }
  };
  check_mask_rows(b.mask_embeddings, "embeddings/mask.pe3r", RowKind::mask, false);
  if (b.field_embeddings) check_mask_rows(*b.field_embeddings, "embeddings/field.pe3r", RowKind::pixel_ensemble, true);

  if (b.query_cache) {
    detail::check_table(*b.query_cache, mf.dim, "embeddings/query_cache.pe3r", true);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < b.query_cache->size(); ++i) {
      const auto& k = b.query_cache->keys[i];
      if (k.kind != RowKind::text) throw BundleError("embeddings/query_cache.pe3r", "row_keys[" + std::to_string(i) + "]", "expected kind text");
      if (!seen.insert(k.key).second) throw BundleError("embeddings/query_cache.pe3r", "row_keys[" + std::to_string(i) + "]", "duplicate query \"" + k.key + "\"");
    }
  }

  if (!b.label_maps.empty()) {
    if (b.label_maps.size() != b.views.size()) throw BundleError("manifest.json", "label_maps", "label maps must be present for every view or none");
    for (std::size_t v = 0; v < b.label_maps.size(); ++v) {
      const auto& lm = b.label_maps[v];
      std::string file = detail::view_stem(v) + ".labels.pe3r";
      if (!lm.same_shape(h, w)) throw BundleError(file, "shape", "label map shape differs from bundle H x W");
      for (auto id : lm.data) {
        if (id != kUnlabeled && !ids.count(id)) throw BundleError(file, "labels", "unknown mask_id " + std::to_string(id));
      }
    }
  }

  std::optional<double> tau;
  if (mf.config.is_object() && mf.config.contains("anomaly") && mf.config["anomaly"].contains("threshold")) {
    tau = mf.config["anomaly"]["threshold"].get<double>();
  }
  if (!b.pointmaps.empty()) {
    if (b.pointmaps.size() != b.views.size()) throw BundleError("manifest.json", "pointmaps", "pointmaps must be present for every view or none");
    for (std::size_t v = 0; v < b.pointmaps.size(); ++v) {
      const auto& pm = b.pointmaps[v];
      std::string file = detail::view_stem(v) + ".points.pe3r";
      if (pm.view_id != v) throw BundleError(file, "view_id", "pointmaps must be index-aligned with views");
      if (!pm.points.same_shape(h, w) || !pm.distance_score.same_shape(h, w) || !pm.anomaly.same_shape(h, w)) {
        throw BundleError(file, "shape", "pointmap shape differs from bundle H x W");
      }
      for (std::size_t p = 0; p < pm.points.size(); ++p) {
        for (float c : pm.points.data[p]) {
          if (!std::isfinite(c)) {
            throw BundleError(file, "points", "non-finite coordinate in view " + std::to_string(v) + " at pixel (" +
                                                  std::to_string(p / w) + ", " + std::to_string(p % w) + ")");
          }
        }
        float s = pm.distance_score.data[p];
        if (!std::isfinite(s) || s < 0.0f || s > 1.0f) throw BundleError(file, "distance_score", "score outside [0, 1]");
        if (pm.anomaly.data[p] > 1) throw BundleError(file, "anomaly", "flags must be 0 or 1");
        if (tau && pm.anomaly.data[p] && !(s > *tau)) {
          throw BundleError(file, "anomaly", "anomalous pixel " + std::to_string(p) + " does not exceed the configured threshold");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Directory I/O

namespace detail {

inline std::string mask_stack_path(std::size_t v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "masks/view_%04zu.pe3r", v);
  return buf;
}

inline json table_keys_json(const EmbeddingTable& t) {
  json keys = json::array();
  for (const auto& k : t.keys) keys.push_back({{"kind", row_kind_name(k.kind)}, {"key", k.key}});
  return keys;
}

inline TensorBlock table_tensor(const EmbeddingTable& t) {
  return TensorBlock::from<float>({t.size(), t.dim}, t.rows);
}

class TensorReader {
 public:
  explicit TensorReader(std::filesystem::path root) : root_(std::move(root)) {}

  TensorBlock load(const std::string& rel, DType dtype, const std::vector<std::uint64_t>& shape) const {
    TensorBlock t;
    try {
      t = read_tensor(root_ / rel);
    } catch (const Error& e) {
      throw BundleError(rel, "tensor", e.what());
    }
    if (t.dtype != dtype) {
      throw BundleError(rel, "dtype", std::string("expected ") + dtype_name(dtype) + ", found " + dtype_name(t.dtype));
    }
    if (t.shape != shape) throw BundleError(rel, "shape", "tensor shape disagrees with manifest");
    return t;
  }

 private:
  std::filesystem::path root_;
};

inline EmbeddingTable read_table(const TensorReader& reader, const json& entry, std::size_t dim,
                                 const std::string& field) {
  if (!entry.contains("rows") || !entry.contains("row_keys")) {
    throw BundleError("manifest.json", field, "embedding table needs rows and row_keys");
  }
  EmbeddingTable t;
  t.dim = dim;
  for (const auto& k : entry["row_keys"]) {
    auto kind = parse_row_kind(k.at("kind").get<std::string>());
    if (!kind) throw BundleError("manifest.json", field + ".row_keys", "unknown row kind");
    t.keys.push_back({*kind, k.at("key").get<std::string>()});
  }
  auto rel = entry["rows"].get<std::string>();
  t.rows = reader.load(rel, DType::f32, {t.keys.size(), dim}).values<float>();
  return t;
}

template <class T>
Grid<T> grid_from(const TensorBlock& t, std::size_t h, std::size_t w) {
  Grid<T> g;
  g.height = h;
  g.width = w;
  g.data = t.values<T>();
  return g;
}

}  // namespace detail

/// Loads and fully validates a bundle directory.
inline SceneBundle read_bundle(const std::filesystem::path& dir) {
  json mf;
  try {
    mf = json::parse(read_file_bytes(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw BundleError("manifest.json", "json", e.what());
  } catch (const Error& e) {
    throw BundleError("manifest.json", "file", e.what());
  }

  SceneBundle b;
  try {
    if (mf.value("format", std::string{}) != kBundleFormat) {
      throw BundleError("manifest.json", "format", "not a scene bundle");
    }
    b.manifest.version = mf.at("version").get<std::uint32_t>();
    if (b.manifest.version != kBundleVersion) {
      throw BundleError("manifest.json", "version", "unsupported version " + std::to_string(b.manifest.version));
    }
    b.manifest.height = mf.at("height").get<std::size_t>();
    b.manifest.width = mf.at("width").get<std::size_t>();
    b.manifest.dim = mf.at("dim").get<std::size_t>();
    b.manifest.config = mf.value("config", json());
    b.manifest.provenance = mf.value("provenance", json());
    const std::size_t h = b.manifest.height, w = b.manifest.width, d = b.manifest.dim;
    const std::size_t n = mf.at("n_views").get<std::size_t>();

    detail::TensorReader reader(dir);
    const auto& views = mf.at("views");
    if (views.size() != n) throw BundleError("manifest.json", "views", "view count differs from n_views");

    std::vector<std::vector<std::uint8_t>> mask_stacks(n);
    std::vector<std::size_t> stack_sizes(n, 0);
    for (const auto& m : mf.at("masks")) {
      auto v = m.at("view_id").get<std::size_t>();
      if (v >= n) throw BundleError("manifest.json", "masks", "mask refers to view " + std::to_string(v));
      stack_sizes[v]++;
    }

    bool any_labels = false, any_points = false;
    for (std::size_t v = 0; v < n; ++v) {
      const auto& entry = views[v];
      ViewRecord rec;
      rec.view_id = entry.at("view_id").get<std::uint32_t>();
      rec.image.height = h;
      rec.image.width = w;
      rec.image.data = reader.load(entry.at("image").get<std::string>(), DType::u8, {3, h, w}).values<std::uint8_t>();
      b.views.push_back(std::move(rec));

      if (stack_sizes[v] > 0) {
        mask_stacks[v] = reader.load(entry.at("masks").get<std::string>(), DType::u8, {stack_sizes[v], h, w})
                             .values<std::uint8_t>();
      }
      if (entry.contains("label_map")) {
        any_labels = true;
        b.label_maps.push_back(detail::grid_from<std::uint32_t>(
            reader.load(entry["label_map"].get<std::string>(), DType::u32, {h, w}), h, w));
      }
      if (entry.contains("pointmap")) {
        any_points = true;
        const auto& pe = entry["pointmap"];
        auto raw = reader.load(pe.at("points").get<std::string>(), DType::f32, {h, w, 3}).values<float>();
        Grid<Vec3f> pts(h, w);
        for (std::size_t p = 0; p < h * w; ++p) pts.data[p] = {raw[3 * p], raw[3 * p + 1], raw[3 * p + 2]};
        Pointmap pm(static_cast<std::uint32_t>(v), std::move(pts));
        if (pe.contains("distance_score")) {
          pm.distance_score = detail::grid_from<float>(reader.load(pe["distance_score"].get<std::string>(), DType::f32, {h, w}), h, w);
        }
        if (pe.contains("anomaly")) {
          pm.anomaly = detail::grid_from<std::uint8_t>(reader.load(pe["anomaly"].get<std::string>(), DType::u8, {h, w}), h, w);
        }
        b.pointmaps.push_back(std::move(pm));
      }
    }
    if (any_labels && b.label_maps.size() != n) throw BundleError("manifest.json", "label_map", "label maps must be present for every view or none");
    if (any_points && b.pointmaps.size() != n) throw BundleError("manifest.json", "pointmap", "pointmaps must be present for every view or none");

    for (const auto& m : mf.at("masks")) {
      MaskRecord rec;
      rec.mask_id = m.at("mask_id").get<std::uint32_t>();
      rec.view_id = m.at("view_id").get<std::uint32_t>();
      rec.object_id = m.at("object_id").get<std::uint32_t>();
      rec.area = m.at("area").get<std::uint64_t>();
      rec.level = m.at("level").get<std::uint32_t>();
      auto slice = m.at("slice").get<std::size_t>();
      if (slice >= stack_sizes[rec.view_id]) {
        throw BundleError("manifest.json", "mask " + std::to_string(rec.mask_id) + ".slice", "slice out of range");
      }
      rec.bitmap = Grid<std::uint8_t>(h, w);
      const auto& stack = mask_stacks[rec.view_id];
      std::copy_n(stack.begin() + static_cast<std::ptrdiff_t>(slice * h * w), h * w, rec.bitmap.data.begin());
      b.masks.push_back(std::move(rec));
    }

    b.mask_embeddings = detail::read_table(reader, mf.at("mask_embeddings"), d, "mask_embeddings");
    if (mf.contains("field_embeddings")) b.field_embeddings = detail::read_table(reader, mf["field_embeddings"], d, "field_embeddings");
    if (mf.contains("query_cache")) b.query_cache = detail::read_table(reader, mf["query_cache"], d, "query_cache");
  } catch (const json::exception& e) {
    throw BundleError("manifest.json", "schema", e.what());
  }

  validate_bundle(b);
  return b;
}

/// Extra tensors written alongside a bundle (e.g. the fused field).
using ExtraTensors = std::vector<std::pair<std::string, TensorBlock>>;

/// Writes a bundle directory atomically: staged into a sibling directory,
/// then renamed over `dir`. Refuses to write invalid bundles.
inline void write_bundle(const SceneBundle& b, const std::filesystem::path& dir, const ExtraTensors& extras = {},
                         const json& extras_manifest = json()) {
  validate_bundle(b);
  namespace fs = std::filesystem;
  const auto& mf = b.manifest;
  const std::size_t h = mf.height, w = mf.width;

  std::vector<std::pair<std::string, TensorBlock>> files;
  json manifest;
  manifest["format"] = kBundleFormat;
  manifest["version"] = mf.version;
  manifest["n_views"] = b.views.size();
  manifest["height"] = h;
  manifest["width"] = w;
  manifest["dim"] = mf.dim;
  manifest["config"] = mf.config;
  if (!mf.provenance.is_null()) manifest["provenance"] = mf.provenance;

  // Slice index of each mask inside its view's stack, in bundle order.
  std::vector<std::vector<const MaskRecord*>> per_view(b.views.size());
  json masks = json::array();
  for (const auto& m : b.masks) {
    masks.push_back({{"mask_id", m.mask_id},
                     {"view_id", m.view_id},
                     {"object_id", m.object_id},
                     {"area", m.area},
                     {"level", m.level},
                     {"slice", per_view[m.view_id].size()}});
    per_view[m.view_id].push_back(&m);
  }
  manifest["masks"] = masks;

  json views = json::array();
  for (std::size_t v = 0; v < b.views.size(); ++v) {
    const std::string stem = detail::view_stem(v);
    json entry;
    entry["view_id"] = b.views[v].view_id;
    entry["image"] = stem + ".image.pe3r";
    files.emplace_back(stem + ".image.pe3r", TensorBlock::from<std::uint8_t>({3, h, w}, b.views[v].image.data));
    if (!per_view[v].empty()) {
      std::vector<std::uint8_t> stack;
      stack.reserve(per_view[v].size() * h * w);
      for (const auto* m : per_view[v]) stack.insert(stack.end(), m->bitmap.data.begin(), m->bitmap.data.end());
      entry["masks"] = detail::mask_stack_path(v);
      files.emplace_back(detail::mask_stack_path(v), TensorBlock::from<std::uint8_t>({per_view[v].size(), h, w}, stack));
    }
    if (!b.label_maps.empty()) {
      entry["label_map"] = stem + ".labels.pe3r";
      files.emplace_back(stem + ".labels.pe3r", TensorBlock::from<std::uint32_t>({h, w}, b.label_maps[v].data));
    }
    if (!b.pointmaps.empty()) {
      const auto& pm = b.pointmaps[v];
      std::vector<float> flat;
      flat.reserve(3 * h * w);
      for (const auto& p : pm.points.data) flat.insert(flat.end(), p.begin(), p.end());
      entry["pointmap"] = {{"points", stem + ".points.pe3r"},
                           {"distance_score", stem + ".distance.pe3r"},
                           {"anomaly", stem + ".anomaly.pe3r"}};
      files.emplace_back(stem + ".points.pe3r", TensorBlock::from<float>({h, w, 3}, flat));
      files.emplace_back(stem + ".distance.pe3r", TensorBlock::from<float>({h, w}, pm.distance_score.data));
      files.emplace_back(stem + ".anomaly.pe3r", TensorBlock::from<std::uint8_t>({h, w}, pm.anomaly.data));
    }
    views.push_back(std::move(entry));
  }
  manifest["views"] = views;

  auto add_table = [&](const char* name, const EmbeddingTable& t, const std::string& rel) {
    manifest[name] = {{"rows", rel}, {"row_keys", detail::table_keys_json(t)}};
    files.emplace_back(rel, detail::table_tensor(t));
  };
  add_table("mask_embeddings", b.mask_embeddings, "embeddings/mask.pe3r");
  if (b.field_embeddings) add_table("field_embeddings", *b.field_embeddings, "embeddings/field.pe3r");
  if (b.query_cache) add_table("query_cache", *b.query_cache, "embeddings/query_cache.pe3r");

  for (const auto& e : extras) files.push_back(e);
  if (!extras_manifest.is_null()) manifest["field"] = extras_manifest;

  fs::path target = fs::absolute(dir);
  fs::path staging = target;
  staging += ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging);
    for (const auto& [rel, tensor] : files) {
      fs::create_directories((staging / rel).parent_path());
      write_tensor(staging / rel, tensor);
    }
    write_file_bytes(staging / "manifest.json", manifest.dump(2) + "\n");
    fs::remove_all(target);
    fs::rename(staging, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw Error(std::string("failed to write bundle: ") + e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace semfield
