#pragma once

// Inference backends. Pointmap prediction and text embedding are the only
// model calls the engine makes at run time; both sit behind `Backend`, whose
// non-virtual entry points validate everything a backend returns.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semfield/bundle.hpp"
#include "semfield/error.hpp"
#include "semfield/grid.hpp"
#include "semfield/tensor.hpp"

namespace semfield {

inline constexpr const char* kCapPointmaps = "pointmaps";
inline constexpr const char* kCapTextEmbedding = "text_embedding";

struct BackendDescriptor {
  std::string kind = "none";  // none | fixture | remote
  std::string endpoint;
  std::string fixture_root;
  std::vector<std::string> capabilities;

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind}, {"capabilities", capabilities}};
    if (kind == "remote") j["endpoint"] = endpoint;
    if (kind == "fixture") j["fixture_root"] = fixture_root;
    return j;
  }

  static BackendDescriptor from_json(const nlohmann::json& j) {
    BackendDescriptor d;
    d.kind = j.value("kind", std::string("none"));
    d.endpoint = j.value("endpoint", std::string());
    d.fixture_root = j.value("fixture_root", std::string());
    d.capabilities = j.value("capabilities", std::vector<std::string>{});
    if (d.kind != "none" && d.kind != "fixture" && d.kind != "remote") throw Error("unknown backend kind \"" + d.kind + "\"");
    return d;
  }
};

class Backend {
 public:
  virtual ~Backend() = default;

  const std::vector<std::string>& capabilities() const { return capabilities_; }
  bool has(std::string_view cap) const {
    return std::find(capabilities_.begin(), capabilities_.end(), cap) != capabilities_.end();
  }

  /// One pointmap per view, in one common frame. Shape and finiteness are
  /// checked here, so callers never see unvalidated tensors.
  std::vector<Grid<Vec3f>> predict_pointmaps(std::span<const Image> views) {
    if (!has(kCapPointmaps)) throw BackendError("backend does not provide pointmaps");
    if (views.empty()) throw BackendError("predict_pointmaps needs at least one view");
    auto out = do_predict_pointmaps(views);
    if (out.size() != views.size()) {
      throw BackendError("backend returned " + std::to_string(out.size()) + " pointmaps for " +
                         std::to_string(views.size()) + " views");
    }
    for (std::size_t v = 0; v < out.size(); ++v) {
      if (!out[v].same_shape(views[v].height, views[v].width) || out[v].data.size() != views[v].pixels()) {
        throw BackendError("backend pointmap for view " + std::to_string(v) + " has the wrong shape");
      }
      for (const auto& p : out[v].data) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
          throw BackendError("non-finite pointmap from backend (view " + std::to_string(v) + ")");
        }
      }
    }
    return out;
  }

  /// Raw text embedding; the caller normalizes.
  std::vector<float> embed_text(std::string_view query) {
    if (!has(kCapTextEmbedding)) throw BackendError("backend does not provide text embeddings");
    auto e = do_embed_text(query);
    if (e.empty()) throw BackendError("backend returned an empty text embedding");
    for (float v : e) {
      if (!std::isfinite(v)) throw BackendError("non-finite text embedding from backend");
    }
    return e;
  }

 protected:
  virtual std::vector<Grid<Vec3f>> do_predict_pointmaps(std::span<const Image> views) = 0;
  virtual std::vector<float> do_embed_text(std::string_view query) = 0;

  std::vector<std::string> capabilities_;
};

inline std::string image_key(const Image& image) { return hex64(fnv1a64(image.data)); }

inline Grid<Vec3f> pointmap_from_tensor(const TensorBlock& t, std::size_t h, std::size_t w) {
  if (t.dtype != DType::f32 || t.shape != std::vector<std::uint64_t>{h, w, 3}) {
    throw BackendError("pointmap tensor must be f32 of shape H x W x 3");
  }
  auto raw = t.values<float>();
  Grid<Vec3f> g(h, w);
  for (std::size_t p = 0; p < h * w; ++p) g.data[p] = {raw[3 * p], raw[3 * p + 1], raw[3 * p + 2]};
  return g;
}

inline TensorBlock pointmap_tensor(const Grid<Vec3f>& g) {
  std::vector<float> flat;
  flat.reserve(g.size() * 3);
  for (const auto& p : g.data) flat.insert(flat.end(), p.begin(), p.end());
  return TensorBlock::from<float>({g.height, g.width, 3}, flat);
}

/// Canned outputs on disk. Pointmaps are addressed by a hash of the input
/// image bytes; text embeddings by exact string.
///
///   <root>/fixture.json   {"capabilities": [...], "pointmaps": {key: file}, "text": {"rows": file, "keys": [...]}}
class FixtureBackend : public Backend {
 public:
  explicit FixtureBackend(std::filesystem::path root) : root_(std::move(root)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file_bytes(root_ / "fixture.json"));
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("fixture.json: ") + e.what());
    } catch (const Error& e) {
      throw BackendError(std::string("fixture backend probe failed: ") + e.what());
    }
    capabilities_ = j.value("capabilities", std::vector<std::string>{});
    if (j.contains("pointmaps")) {
      for (const auto& [key, file] : j["pointmaps"].items()) pointmaps_.emplace(key, file.get<std::string>());
    }
    if (j.contains("text")) {
      auto keys = j["text"].at("keys").get<std::vector<std::string>>();
      auto t = read_tensor(root_ / j["text"].at("rows").get<std::string>());
      if (t.dtype != DType::f32 || t.shape.size() != 2 || t.shape[0] != keys.size()) {
        throw BackendError("fixture text table shape disagrees with its keys");
      }
      auto rows = t.values<float>();
      const auto d = static_cast<std::size_t>(t.shape[1]);
      for (std::size_t i = 0; i < keys.size(); ++i) {
        text_.emplace(keys[i], std::vector<float>(rows.begin() + static_cast<std::ptrdiff_t>(i * d),
                                                  rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
      }
    }
  }

  std::size_t calls() const noexcept { return calls_; }

 protected:
  std::vector<Grid<Vec3f>> do_predict_pointmaps(std::span<const Image> views) override {
    ++calls_;
    std::vector<Grid<Vec3f>> out;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const auto key = image_key(views[v]);
      auto it = pointmaps_.find(key);
      if (it == pointmaps_.end()) {
        throw BackendError("unknown fixture key " + key + " for view " + std::to_string(v));
      }
      out.push_back(pointmap_from_tensor(read_tensor(root_ / it->second), views[v].height, views[v].width));
    }
    return out;
  }

  std::vector<float> do_embed_text(std::string_view query) override {
    ++calls_;
    auto it = text_.find(std::string(query));
    if (it == text_.end()) throw BackendError("no fixture embedding for \"" + std::string(query) + "\"");
    return it->second;
  }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> pointmaps_;
  std::map<std::string, std::vector<float>> text_;
  std::size_t calls_ = 0;
};

/// Writes a fixture directory the FixtureBackend can load.
struct FixtureWriter {
  std::vector<std::string> capabilities{kCapPointmaps, kCapTextEmbedding};
  std::map<std::string, Grid<Vec3f>> pointmaps;
  std::vector<std::pair<std::string, std::vector<float>>> text;

  void add_pointmap(const Image& input, Grid<Vec3f> output) { pointmaps[image_key(input)] = std::move(output); }

  void write(const std::filesystem::path& root) const {
    std::filesystem::create_directories(root / "pointmaps");
    nlohmann::json j;
    j["capabilities"] = capabilities;
    j["pointmaps"] = nlohmann::json::object();
    for (const auto& [key, grid] : pointmaps) {
      const std::string rel = "pointmaps/" + key + ".pe3r";
      write_tensor(root / rel, pointmap_tensor(grid));
      j["pointmaps"][key] = rel;
    }
    if (!text.empty()) {
      std::vector<float> rows;
      std::vector<std::string> keys;
      for (const auto& [k, v] : text) {
        keys.push_back(k);
        rows.insert(rows.end(), v.begin(), v.end());
      }
      write_tensor(root / "text.pe3r", TensorBlock::from<float>({keys.size(), text.front().second.size()}, rows));
      j["text"] = {{"rows", "text.pe3r"}, {"keys", keys}};
    }
    write_file_bytes(root / "fixture.json", j.dump(2) + "\n");
  }
};

}  // namespace semfield
