#pragma once

// Shared test helpers: seeded generators, scratch directories and the
// independent brute-force oracles the library is checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "semfield/semfield.hpp"

namespace testing_support {

using namespace semfield;
namespace fs = std::filesystem;

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("semfield_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Relative path -> file bytes for every regular file under `root`.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file_bytes(e.path());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  double s = 0.0;
  do {
    s = 0.0;
    for (auto& x : v) {
      x = n(rng);
      s += x * x;
    }
  } while (s < 1e-12);
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
  return v;
}

inline std::vector<float> random_unit_f(std::mt19937_64& rng, std::size_t d) {
  auto v = random_unit(rng, d);
  std::vector<float> f(v.begin(), v.end());
  return normalized<float>(f);
}

/// Unit vector at angle theta from unit `u` in a random direction.
inline std::vector<double> at_angle(std::mt19937_64& rng, const std::vector<double>& u, double theta) {
  std::vector<double> w;
  double n = 0.0;
  do {
    w = random_unit(rng, u.size());
    double c = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) c += w[i] * u[i];
    n = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      w[i] -= c * u[i];
      n += w[i] * w[i];
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::cos(theta) * u[i] + std::sin(theta) * w[i] / n;
  return out;
}

inline Grid<std::uint8_t> rect_bitmap(std::size_t h, std::size_t w, std::size_t top, std::size_t left,
                                      std::size_t bottom, std::size_t right) {
  Grid<std::uint8_t> g(h, w, 0);
  for (std::size_t i = top; i < bottom; ++i) {
    for (std::size_t j = left; j < right; ++j) g(i, j) = 1;
  }
  return g;
}

inline Grid<std::uint8_t> random_rect_bitmap(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_int_distribution<std::size_t> ri(0, h - 1), rj(0, w - 1);
  std::size_t a = ri(rng), b = ri(rng), c = rj(rng), d = rj(rng);
  return rect_bitmap(h, w, std::min(a, b), std::min(c, d), std::max(a, b) + 1, std::max(c, d) + 1);
}

inline MaskRecord make_mask(std::uint32_t id, std::uint32_t view, std::uint32_t object, Grid<std::uint8_t> bitmap) {
  MaskRecord m;
  m.mask_id = id;
  m.view_id = view;
  m.object_id = object;
  m.area = popcount(bitmap);
  m.bitmap = std::move(bitmap);
  return m;
}

/// Small valid bundle: `views` views of h x w, `masks_per_view` random rect
/// masks per view (object ids shared across views), optional pointmaps,
/// label maps and query cache.
struct BundleSpec {
  std::size_t views = 2;
  std::size_t height = 6;
  std::size_t width = 5;
  std::size_t dim = 4;
  std::size_t masks_per_view = 3;
  bool pointmaps = false;
  bool labels = false;
  bool query_cache = false;
};

inline SceneBundle random_bundle(std::mt19937_64& rng, const BundleSpec& s) {
  SceneBundle b;
  b.manifest.height = s.height;
  b.manifest.width = s.width;
  b.manifest.dim = s.dim;
  b.manifest.provenance = {{"generator", "random_bundle"}};
  b.mask_embeddings.dim = s.dim;
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_real_distribution<float> coord(-3.0f, 3.0f);
  std::uint32_t next_id = 0;
  for (std::size_t v = 0; v < s.views; ++v) {
    ViewRecord rec;
    rec.view_id = static_cast<std::uint32_t>(v);
    rec.image = Image(s.height, s.width);
    for (auto& px : rec.image.data) px = static_cast<std::uint8_t>(byte(rng));
    b.views.push_back(std::move(rec));
    for (std::size_t k = 0; k < s.masks_per_view; ++k) {
      auto m = make_mask(next_id, static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(k),
                         random_rect_bitmap(rng, s.height, s.width));
      m.level = static_cast<std::uint32_t>(k);
      std::vector<float> row(s.dim);
      for (auto& x : row) x = coord(rng);
      row[0] += 10.0f;  // keep rows away from zero
      b.mask_embeddings.append({RowKind::mask, std::to_string(next_id)}, row);
      b.masks.push_back(std::move(m));
      ++next_id;
    }
  }
  if (s.labels) b.label_maps = ensemble_pixel_embeddings(b);
  if (s.pointmaps) {
    for (std::size_t v = 0; v < s.views; ++v) {
      Grid<Vec3f> pts(s.height, s.width);
      for (auto& p : pts.data) p = {coord(rng), coord(rng), coord(rng) + 5.0f};
      b.pointmaps.emplace_back(static_cast<std::uint32_t>(v), std::move(pts));
    }
  }
  if (s.query_cache) {
    EmbeddingTable q;
    q.dim = s.dim;
    q.append({RowKind::text, "alpha"}, random_unit_f(rng, s.dim));
    q.append({RowKind::text, "beta gamma"}, random_unit_f(rng, s.dim));
    b.query_cache = std::move(q);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Oracles

/// Aggregation evaluated directly in long double with the textbook weights.
inline std::vector<long double> reference_slerp(const std::vector<long double>& fa, std::uint64_t area_a,
                                                const std::vector<long double>& fb, std::uint64_t area_b) {
  long double c = 0.0L;
  for (std::size_t i = 0; i < fa.size(); ++i) c += fa[i] * fb[i];
  c = std::clamp(c, -1.0L, 1.0L);
  const long double theta = std::acos(c);
  const long double t = static_cast<long double>(area_b) / static_cast<long double>(area_a + area_b);
  const long double a = std::sin((1.0L - t) * theta) / std::sin(theta);
  const long double b = std::sin(t * theta) / std::sin(theta);
  std::vector<long double> out(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) out[i] = a * fa[i] + b * fb[i];
  return out;
}

/// Double-loop evaluation of the windowed same-label mean distance.
struct BruteDistance {
  std::vector<double> value;
  std::vector<int> isolated;
};

inline BruteDistance brute_distance(const Grid<Vec3f>& pts, const Grid<std::uint32_t>& labels, int k) {
  const int h = static_cast<int>(pts.height), w = static_cast<int>(pts.width), r = k / 2;
  BruteDistance out{std::vector<double>(pts.size(), 0.0), std::vector<int>(pts.size(), 0)};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double sum = 0.0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int y = i + dy, x = j + dx;
          if (y < 0 || y >= h || x < 0 || x >= w || (dy == 0 && dx == 0)) continue;
          if (labels(y, x) != labels(i, j)) continue;
          const auto& p = pts(i, j);
          const auto& q = pts(y, x);
          double s = 0.0;
          for (int c = 0; c < 3; ++c) s += (double(p[c]) - double(q[c])) * (double(p[c]) - double(q[c]));
          sum += std::sqrt(s);
          ++n;
        }
      }
      const auto idx = static_cast<std::size_t>(i * w + j);
      if (n == 0) {
        out.isolated[idx] = 1;
      } else {
        out.value[idx] = sum / n;
      }
    }
  }
  return out;
}

/// Per pixel: the covering mask with the smallest area, ties to the lower id.
inline Grid<std::uint32_t> brute_labels(const std::vector<MaskRecord>& masks, std::size_t h, std::size_t w) {
  Grid<std::uint32_t> out(h, w, kUnlabeled);
  for (std::size_t p = 0; p < h * w; ++p) {
    const MaskRecord* best = nullptr;
    for (const auto& m : masks) {
      if (!m.bitmap.data[p]) continue;
      if (!best || m.area < best->area || (m.area == best->area && m.mask_id < best->mask_id)) best = &m;
    }
    if (best) out.data[p] = best->mask_id;
  }
  return out;
}

struct BruteSeg {
  double iou, pa, p;
};

inline BruteSeg brute_seg(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  double inter = 0, uni = 0, correct = 0, predicted = 0, positives = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] && gt[i];
    uni += pred[i] || gt[i];
    correct += (pred[i] != 0) == (gt[i] != 0);
    predicted += pred[i] != 0;
    positives += gt[i] != 0;
  }
  BruteSeg s{};
  s.iou = uni == 0 ? 1.0 : inter / uni;
  s.pa = correct / static_cast<double>(pred.size());
  s.p = predicted == 0 ? (positives == 0 ? 1.0 : 0.0) : inter / predicted;
  return s;
}

inline double brute_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct BruteDepth {
  double rel, tau, scale;
};

inline BruteDepth brute_depth(const std::vector<double>& pred, const std::vector<double>& gt,
                              const std::vector<std::uint8_t>& mask, bool align) {
  std::vector<double> ratios;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i] && gt[i] > 0 && pred[i] > 0) ratios.push_back(gt[i] / pred[i]);
  }
  const double s = align ? brute_median(ratios) : 1.0;
  double rel = 0.0, in = 0.0, n = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(mask[i] && gt[i] > 0 && pred[i] > 0)) continue;
    const double p = s * pred[i];
    rel += std::abs(p - gt[i]) / gt[i];
    in += std::max(p / gt[i], gt[i] / p) <= 1.03 ? 1 : 0;
    n += 1;
  }
  return {100.0 * rel / n, 100.0 * in / n, s};
}

}  // namespace testing_support
