#pragma once

// Segmentation (IoU / pixel accuracy / precision) and depth (rel, inlier
// ratio at 1.03) metrics.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "semfield/error.hpp"

namespace semfield {

struct SegScores {
  double iou = 0.0;
  double pixel_accuracy = 0.0;
  double precision = 0.0;
};

struct SegEval {
  std::vector<SegScores> per_query;
  double mean_iou = 0.0;
  double mean_pixel_accuracy = 0.0;
  double mean_precision = 0.0;
};

/// IoU is 1 when both masks are empty. Precision with no predicted positives
/// is 1 if the ground truth is empty too, else 0.
template <class B>
SegScores seg_eval(std::span<const B> pred, std::span<const B> gt) {
  if (pred.size() != gt.size()) throw Error("seg_eval: shape mismatch");
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != B{}, g = gt[i] != B{};
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  SegScores s;
  const auto uni = tp + fp + fn;
  s.iou = uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
  s.pixel_accuracy = pred.empty() ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(pred.size());
  if (tp + fp == 0) {
    s.precision = (tp + fn == 0) ? 1.0 : 0.0;
  } else {
    s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  return s;
}

inline SegEval aggregate(std::vector<SegScores> per_query) {
  SegEval e;
  e.per_query = std::move(per_query);
  if (e.per_query.empty()) return e;
  for (const auto& s : e.per_query) {
    e.mean_iou += s.iou;
    e.mean_pixel_accuracy += s.pixel_accuracy;
    e.mean_precision += s.precision;
  }
  const auto n = static_cast<double>(e.per_query.size());
  e.mean_iou /= n;
  e.mean_pixel_accuracy /= n;
  e.mean_precision /= n;
  return e;
}

inline constexpr double kInlierRatioThreshold = 1.03;

struct DepthEval {
  double rel = 0.0;  // percent
  double tau = 0.0;  // percent
  double scale = 1.0;
  std::size_t valid = 0;
};

namespace detail {

template <std::floating_point T>
bool depth_valid(T pred, T gt, std::uint8_t mask) {
  return mask != 0 && std::isfinite(pred) && std::isfinite(gt) && gt > T(0) && pred > T(0);
}

template <std::floating_point T>
void check_depth_shapes(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size())) {
    throw Error("depth maps and validity mask differ in shape");
  }
}

}  // namespace detail

/// Median of gt/pred over valid pixels (mean of the two middle values for an
/// even count). An empty mask span means every pixel is eligible.
template <std::floating_point T>
double depth_align(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask = {}) {
  detail::check_depth_shapes(pred, gt, mask);
  std::vector<double> ratios;
  ratios.reserve(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (detail::depth_valid(pred[i], gt[i], mask.empty() ? std::uint8_t{1} : mask[i])) {
      ratios.push_back(static_cast<double>(gt[i]) / static_cast<double>(pred[i]));
    }
  }
  if (ratios.empty()) throw Error("depth_align: no valid pixels");
  const auto mid = ratios.size() / 2;
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(mid), ratios.end());
  double upper = ratios[mid];
  if (ratios.size() % 2 == 1) return upper;
  double lower = *std::max_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// rel = 100 * mean |pred - gt| / gt; tau = 100 * share of pixels with
/// max(pred/gt, gt/pred) <= 1.03, tested as pred <= 1.03 gt and gt <= 1.03 pred.
template <std::floating_point T>
DepthEval depth_eval(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask, bool align) {
  detail::check_depth_shapes(pred, gt, mask);
  DepthEval e;
  e.scale = align ? depth_align(pred, gt, mask) : 1.0;
  double rel_sum = 0.0;
  std::size_t inliers = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!detail::depth_valid(pred[i], gt[i], mask.empty() ? std::uint8_t{1} : mask[i])) continue;
    const double p = align ? e.scale * static_cast<double>(pred[i]) : static_cast<double>(pred[i]);
    const double g = static_cast<double>(gt[i]);
    rel_sum += std::abs(p - g) / g;
    if (p <= kInlierRatioThreshold * g && g <= kInlierRatioThreshold * p) ++inliers;
    ++e.valid;
  }
  if (e.valid == 0) throw Error("depth_eval: no valid pixels");
  e.rel = 100.0 * rel_sum / static_cast<double>(e.valid);
  e.tau = 100.0 * static_cast<double>(inliers) / static_cast<double>(e.valid);
  return e;
}

}  // namespace semfield
