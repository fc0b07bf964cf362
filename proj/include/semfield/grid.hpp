#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace semfield {

using Vec3f = std::array<float, 3>;
using Rgb = std::array<std::uint8_t, 3>;

/// Label-map value for pixels covered by no mask.
inline constexpr std::uint32_t kUnlabeled = std::numeric_limits<std::uint32_t>::max();

/// Dense row-major H x W grid of values.
template <class T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), data(h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }
  template <class U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return height == other.height && width == other.width;
  }

  T& operator()(std::size_t i, std::size_t j) {
    assert(i < height && j < width);
    return data[i * width + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    assert(i < height && j < width);
    return data[i * width + j];
  }

  bool operator==(const Grid&) const = default;
};

/// Planar 3 x H x W 8-bit image, the layout the bundle stores on disk.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), data(3 * h * w, 0) {}

  std::size_t pixels() const noexcept { return height * width; }

  std::uint8_t& at(std::size_t c, std::size_t i, std::size_t j) {
    assert(c < 3 && i < height && j < width);
    return data[(c * height + i) * width + j];
  }
  std::uint8_t at(std::size_t c, std::size_t i, std::size_t j) const {
    assert(c < 3 && i < height && j < width);
    return data[(c * height + i) * width + j];
  }

  Rgb pixel(std::size_t i, std::size_t j) const { return {at(0, i, j), at(1, i, j), at(2, i, j)}; }
  void set_pixel(std::size_t i, std::size_t j, Rgb rgb) {
    for (std::size_t c = 0; c < 3; ++c) at(c, i, j) = rgb[c];
  }

  bool operator==(const Image&) const = default;
};

}  // namespace semfield
