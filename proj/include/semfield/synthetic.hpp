#pragma once

// Deterministic synthetic scenes for tests, fixtures and demos.
//
// `two_view_cube`: a textured red cube face with a small white sticker on it,
// in front of a gray wall, seen from two cameras (64 x 64, d = 8). Each view
// has a wall mask and a cube mask (the cube mask bleeds over a 2 x 2 patch of
// wall); view 0 adds the sticker mask, which sits inside the cube mask. One
// percent of each view's pixels are specular speckles whose predicted depth is
// off by a factor of ten. The fixture backend maps the raw images to those
// noisy pointmaps and the semantically smoothed images to clean ones.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "semfield/anomaly.hpp"
#include "semfield/backend.hpp"
#include "semfield/bundle.hpp"
#include "semfield/disambiguation.hpp"

namespace semfield::synthetic {

struct Rect {
  std::size_t top, left, bottom, right;  // half-open

  bool contains(std::size_t i, std::size_t j) const { return i >= top && i < bottom && j >= left && j < right; }
};

/// Rigid transform camera -> common frame with rational rotation about y.
struct Pose {
  double cos_y = 1.0, sin_y = 0.0;
  double tx = 0.0, ty = 0.0, tz = 0.0;

  Vec3f apply(double x, double y, double z) const {
    return {static_cast<float>(cos_y * x + sin_y * z + tx), static_cast<float>(y + ty),
            static_cast<float>(-sin_y * x + cos_y * z + tz)};
  }
};

struct ViewLayout {
  Rect cube;
  Rect bleed;
  bool has_sticker = false;
  Rect sticker{0, 0, 0, 0};
  Pose pose;
  std::uint32_t seed = 0;
};

struct Scene {
  SceneBundle input;
  /// Ground-truth pointmaps, one per view.
  std::vector<Grid<Vec3f>> clean;
  FixtureWriter fixture;
  /// Query text -> object ids that make up the ground truth for that query.
  json seg_queries;
};

inline constexpr std::size_t kSize = 64;
inline constexpr std::size_t kDim = 8;
inline constexpr double kFocal = 64.0;
inline constexpr double kWallDepth = 5.0;
inline constexpr double kCubeDepth = 3.0;
inline constexpr double kNoiseFraction = 0.01;
inline constexpr double kNoiseScale = 10.0;

inline std::uint32_t obj_wall() { return 0; }
inline std::uint32_t obj_cube() { return 1; }
inline std::uint32_t obj_sticker() { return 2; }

inline std::vector<float> unit_axis_mix(std::size_t axis_a, double a, std::size_t axis_b) {
  std::vector<float> v(kDim, 0.0f);
  v[axis_a] = static_cast<float>(a);
  v[axis_b] = static_cast<float>(std::sqrt(1.0 - a * a));
  return v;
}

inline std::vector<float> axis(std::size_t k) {
  std::vector<float> v(kDim, 0.0f);
  v[k] = 1.0f;
  return v;
}

inline Rgb texture(Rgb base, std::size_t i, std::size_t j) {
  const int t = static_cast<int>((i * 7 + j * 13) % 9) - 4;
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(std::clamp(int(base[c]) + t, 0, 255));
  return out;
}

inline Scene two_view_cube() {
  const std::vector<ViewLayout> layouts = {
      {Rect{20, 16, 48, 44}, Rect{48, 16, 50, 18}, true, Rect{30, 24, 36, 30}, Pose{}, 7},
      {Rect{18, 22, 46, 50}, Rect{46, 48, 48, 50}, false, Rect{0, 0, 0, 0}, Pose{0.96, 0.28, 0.5, 0.0, 0.0}, 11},
  };
  // Embeddings: axis 0 is the "red cube" text direction.
  const std::vector<std::vector<float>> wall_emb = {unit_axis_mix(0, 0.10, 5), unit_axis_mix(0, 0.12, 6)};
  const std::vector<std::vector<float>> cube_emb = {unit_axis_mix(0, 0.95, 1), unit_axis_mix(0, 0.95, 2)};
  const auto sticker_emb = unit_axis_mix(0, 0.05, 3);

  Scene scene;
  SceneBundle& b = scene.input;
  b.manifest.height = kSize;
  b.manifest.width = kSize;
  b.manifest.dim = kDim;
  b.manifest.provenance = {{"generator", "two_view_cube"}, {"noise_fraction", kNoiseFraction}, {"noise_scale", kNoiseScale}};
  b.mask_embeddings.dim = kDim;

  std::uint32_t next_mask = 0;
  std::vector<Grid<Vec3f>> noisy;
  for (std::size_t v = 0; v < layouts.size(); ++v) {
    const auto& lay = layouts[v];
    Image img(kSize, kSize);
    Grid<Vec3f> clean(kSize, kSize), bad(kSize, kSize);
    Grid<std::uint8_t> wall_bits(kSize, kSize), cube_bits(kSize, kSize), sticker_bits(kSize, kSize);

    std::set<std::size_t> speckles;
    std::mt19937 gen(lay.seed);
    const auto n_noisy = static_cast<std::size_t>(std::lround(kNoiseFraction * kSize * kSize));
    while (speckles.size() < n_noisy) speckles.insert(gen() % (kSize * kSize));

    for (std::size_t i = 0; i < kSize; ++i) {
      for (std::size_t j = 0; j < kSize; ++j) {
        const bool on_cube = lay.cube.contains(i, j);
        const bool on_sticker = lay.has_sticker && lay.sticker.contains(i, j);
        const double depth = on_cube ? kCubeDepth : kWallDepth;
        const double rx = (static_cast<double>(j) + 0.5 - kSize / 2.0) / kFocal;
        const double ry = (static_cast<double>(i) + 0.5 - kSize / 2.0) / kFocal;
        clean(i, j) = lay.pose.apply(rx * depth, ry * depth, depth);
        const bool speckle = speckles.count(i * kSize + j) > 0;
        const double scale = speckle ? kNoiseScale : 1.0;
        bad(i, j) = lay.pose.apply(rx * depth * scale, ry * depth * scale, depth * scale);

        Rgb color = on_sticker ? texture({230, 230, 210}, i, j) : on_cube ? texture({200, 40, 40}, i, j) : texture({120, 120, 130}, i, j);
        if (speckle) color = {255, 255, 255};
        img.set_pixel(i, j, color);

        wall_bits(i, j) = on_cube ? 0 : 1;
        cube_bits(i, j) = (on_cube || lay.bleed.contains(i, j)) ? 1 : 0;
        sticker_bits(i, j) = on_sticker ? 1 : 0;
      }
    }

    b.views.push_back({static_cast<std::uint32_t>(v), img});
    auto add_mask = [&](Grid<std::uint8_t> bits, std::uint32_t object, std::uint32_t level, const std::vector<float>& emb) {
      MaskRecord m;
      m.mask_id = next_mask++;
      m.view_id = static_cast<std::uint32_t>(v);
      m.object_id = object;
      m.area = popcount(bits);
      m.bitmap = std::move(bits);
      m.level = level;
      b.mask_embeddings.append({RowKind::mask, std::to_string(m.mask_id)}, emb);
      b.masks.push_back(std::move(m));
    };
    add_mask(wall_bits, obj_wall(), 0, wall_emb[v]);
    add_mask(cube_bits, obj_cube(), 0, cube_emb[v]);
    if (lay.has_sticker) add_mask(sticker_bits, obj_sticker(), 1, sticker_emb);

    scene.clean.push_back(clean);
    noisy.push_back(bad);
  }
  for (std::size_t v = 0; v < noisy.size(); ++v) b.pointmaps.emplace_back(static_cast<std::uint32_t>(v), noisy[v]);

  const auto sticker_text = axis(3);
  std::vector<float> wall_text(kDim, 0.0f);
  wall_text[5] = wall_text[6] = static_cast<float>(std::sqrt(0.5));
  EmbeddingTable cache;
  cache.dim = kDim;
  cache.append({RowKind::text, "red cube"}, axis(0));
  cache.append({RowKind::text, "white sticker"}, sticker_text);
  b.query_cache = cache;

  // Backend: raw images -> noisy pointmaps, smoothed (default anomaly config) -> clean.
  SceneBundle labeled = b;
  labeled.label_maps = ensemble_pixel_embeddings(labeled);
  annotate_anomalies(labeled, AnomalyConfig{});
  for (std::size_t v = 0; v < b.views.size(); ++v) {
    scene.fixture.add_pointmap(b.views[v].image, noisy[v]);
    auto smoothed = semantic_smooth_image(b.views[v].image, labeled.label_maps[v], labeled.pointmaps[v].anomaly,
                                          labeled.masks_of_view(static_cast<std::uint32_t>(v)));
    scene.fixture.add_pointmap(smoothed, scene.clean[v]);
  }
  scene.fixture.text = {{"red cube", axis(0)}, {"white sticker", sticker_text}, {"gray wall", wall_text}};

  scene.seg_queries = json::array({
      {{"text", "red cube"}, {"object_ids", {obj_cube(), obj_sticker()}}},
      {{"text", "gray wall"}, {"object_ids", {obj_wall()}}},
  });
  return scene;
}

/// The input bundle with ground-truth pointmaps in place of the noisy ones.
inline SceneBundle ground_truth_bundle(const Scene& scene) {
  SceneBundle gt = scene.input;
  for (std::size_t v = 0; v < gt.pointmaps.size(); ++v) gt.pointmaps[v] = Pointmap(static_cast<std::uint32_t>(v), scene.clean[v]);
  return gt;
}

/// Writes <root>/bundle, <root>/gt, <root>/backend and <root>/seg_queries.json.
inline void write_scene(const Scene& scene, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  write_bundle(scene.input, root / "bundle");
  write_bundle(ground_truth_bundle(scene), root / "gt");
  scene.fixture.write(root / "backend");
  write_file_bytes(root / "seg_queries.json", scene.seg_queries.dump(2) + "\n");
}

}  // namespace semfield::synthetic
