#pragma once

// Area-weighted spherical aggregation of unit embeddings.
//
// Two mask embeddings F_A and F_B at angle theta are merged as
//     F = a F_A + b F_B,  a = sin((1-t) theta) / sin theta,  b = sin(t theta) / sin theta,
// with t = area_B / (area_A + area_B). The result stays on the unit sphere.
// Note that a + b = cos((1-2t) theta/2) / cos(theta/2), which is >= 1 and only
// equals 1 at the endpoints t = 0 and t = 1.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "semfield/bundle.hpp"
#include "semfield/error.hpp"

namespace semfield {

enum class Degeneracy { none, parallel, antipodal };

struct AggregationParams {
  double theta = 0.0;
  double t = 0.0;
  double a = 1.0;
  double b = 0.0;
  Degeneracy degenerate = Degeneracy::none;
};

/// Angles below this are treated as parallel, within this of pi as antipodal.
inline constexpr double kAngleEpsilon = 1e-6;

template <std::floating_point T>
double dot(std::span<const T> x, std::span<const T> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

/// Angle between two vectors, stable near 0 and pi: 2 atan2(|x - y|, |x + y|)
/// for unit inputs. Inputs are normalized first so tiny norm drift is harmless.
template <std::floating_point T>
double angle_between(std::span<const T> x, std::span<const T> y) {
  double nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += static_cast<double>(x[i]) * x[i];
    ny += static_cast<double>(y[i]) * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double u = x[i] / nx, v = y[i] / ny;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

/// Interpolation share of B. Exact rational area_B / (area_A + area_B), rounded once.
inline double area_share(std::uint64_t area_a, std::uint64_t area_b) {
  if (area_a == 0 && area_b == 0) throw Error("slerp_aggregate: both areas are zero");
  return static_cast<double>(area_b) / (static_cast<double>(area_a) + static_cast<double>(area_b));
}

/// Weights for a given angle and share. Degenerate angles fall back to
/// normalized linear weights (parallel) or keep B (antipodal).
inline AggregationParams aggregation_weights(double theta, double t) {
  AggregationParams p;
  p.theta = theta;
  p.t = t;
  if (t == 0.0) {
    p.a = 1.0;
    p.b = 0.0;
  } else if (t == 1.0) {
    p.a = 0.0;
    p.b = 1.0;
  } else if (theta < kAngleEpsilon) {
    p.degenerate = Degeneracy::parallel;
    p.a = 1.0 - t;
    p.b = t;
  } else if (theta > std::numbers::pi - kAngleEpsilon) {
    p.degenerate = Degeneracy::antipodal;
    p.a = 0.0;
    p.b = 1.0;
  } else {
    const double s = std::sin(theta);
    p.a = std::sin((1.0 - t) * theta) / s;
    p.b = std::sin(t * theta) / s;
  }
  return p;
}

template <std::floating_point T>
AggregationParams aggregation_params(std::span<const T> fa, std::uint64_t area_a, std::span<const T> fb,
                                     std::uint64_t area_b) {
  return aggregation_weights(angle_between(fa, fb), area_share(area_a, area_b));
}

/// Aggregates F_A (area_A) into F_B (area_B). Endpoints return the matching
/// input bit-for-bit; otherwise the combination is renormalized to absorb
/// input norm drift.
template <std::floating_point T>
std::vector<T> slerp_aggregate(std::span<const T> fa, std::uint64_t area_a, std::span<const T> fb,
                               std::uint64_t area_b, AggregationParams* out_params = nullptr) {
  if (fa.size() != fb.size()) throw Error("slerp_aggregate: dimension mismatch");
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (!std::isfinite(fa[i]) || !std::isfinite(fb[i])) throw Error("slerp_aggregate: non-finite input");
  }
  const AggregationParams p = aggregation_params(fa, area_a, fb, area_b);
  if (out_params) *out_params = p;
  if (p.a == 1.0 && p.b == 0.0) return {fa.begin(), fa.end()};
  if (p.a == 0.0 && p.b == 1.0) return {fb.begin(), fb.end()};

  std::vector<double> mix(fa.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    mix[i] = p.a * fa[i] + p.b * fb[i];
    norm += mix[i] * mix[i];
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw Error("slerp_aggregate: degenerate combination");
  std::vector<T> out(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) out[i] = static_cast<T>(mix[i] / norm);
  return out;
}

/// L2-normalizes every row in place. Zero rows are an error naming the row.
inline EmbeddingTable normalize_rows(EmbeddingTable table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto r = table.row(i);
    double n = row_norm(r);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error("cannot normalize embedding row " + std::to_string(i) + " (" +
                  row_kind_name(table.keys[i].kind) + " " + table.keys[i].key + "): zero or non-finite norm");
    }
    for (auto& v : r) v = static_cast<float>(v / n);
  }
  return table;
}

template <std::floating_point T>
std::vector<T> normalized(std::span<const T> v) {
  double n = 0.0;
  for (T x : v) n += static_cast<double>(x) * x;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalize a zero or non-finite vector");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i] / n);
  return out;
}

}  // namespace semfield
