#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>

#include "semfield/field.hpp"
#include "semfield/query.hpp"
#include "semfield/tensor.hpp"

namespace semfield {

enum class ColorMode { rgb, label, similarity };

struct PlyOptions {
  ColorMode color_mode = ColorMode::rgb;
  bool binary = true;
  bool keep_anomalies = false;
};

inline ColorMode parse_color_mode(std::string_view s) {
  if (s == "rgb") return ColorMode::rgb;
  if (s == "label") return ColorMode::label;
  if (s == "similarity") return ColorMode::similarity;
  throw Error("unknown color mode \"" + std::string(s) + "\"");
}

/// Distinct color per object id (a bijection on the low 24 bits); unlabeled is black.
inline Rgb label_color(std::uint32_t object_id) {
  const std::uint32_t mixed = ((object_id + 1u) * 0x9E3779u) & 0xFFFFFFu;
  return {static_cast<std::uint8_t>(mixed >> 16), static_cast<std::uint8_t>(mixed >> 8), static_cast<std::uint8_t>(mixed)};
}

/// Blue (0) to red (1); selected points are drawn in full yellow.
inline Rgb similarity_color(float s, bool selected) {
  if (selected) return {255, 255, 0};
  const auto v = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(s, 0.0f, 1.0f)));
  return {v, 0, static_cast<std::uint8_t>(255 - v)};
}

inline std::size_t exported_vertex_count(const SemanticField& field, const PlyOptions& opts) {
  if (opts.keep_anomalies) return field.size();
  std::size_t n = 0;
  for (auto a : field.anomalous) n += a == 0;
  return n;
}

/// Renders x,y,z,red,green,blue PLY 1.0 (binary little-endian by default).
inline std::string render_ply(const SemanticField& field, const PlyOptions& opts, const QueryResult* query = nullptr) {
  if (field.empty()) throw Error("cannot export an empty field");
  if (opts.color_mode == ColorMode::similarity && !query) throw Error("no similarity field loaded");
  if (query && query->similarity.size() != field.size()) throw Error("query result does not match the field");

  std::string out = "ply\nformat ";
  out += opts.binary ? "binary_little_endian" : "ascii";
  out += " 1.0\nelement vertex " + std::to_string(exported_vertex_count(field, opts)) + "\n";
  out +=
      "property float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";

  std::ostringstream ascii;
  ascii.precision(9);
  for (std::size_t p = 0; p < field.size(); ++p) {
    if (field.anomalous[p] && !opts.keep_anomalies) continue;
    Rgb c = field.colors[p];
    if (opts.color_mode == ColorMode::label) c = label_color(field.labels[p]);
    if (opts.color_mode == ColorMode::similarity) c = similarity_color(query->similarity[p], query->selected[p] != 0);
    const auto& x = field.points[p];
    if (opts.binary) {
      for (float v : x) detail::put_le<float>(out, v);
      out.append(reinterpret_cast<const char*>(c.data()), 3);
    } else {
      ascii << x[0] << ' ' << x[1] << ' ' << x[2] << ' ' << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]) << '\n';
    }
  }
  if (!opts.binary) out += ascii.str();
  return out;
}

inline void export_ply(const SemanticField& field, const std::filesystem::path& path, const PlyOptions& opts,
                       const QueryResult* query = nullptr) {
  write_file_bytes(path, render_ply(field, opts, query));
}

}  // namespace semfield
