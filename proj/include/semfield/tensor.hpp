#pragma once

// Minimal tensor container used for every binary payload the engine reads or
// writes (bundle files, backend wire format, HTTP point streams).
//
// Layout, all integers little-endian:
//    magic    - "PE3R" (4 bytes)
//    version  - u32, currently 1
//    dtype    - u32 (f32=1, u8=2, u32=3, i64=4)
//    ndim     - u32, >= 1
//    dims     - ndim x u64
//    payload  - row-major elements, little-endian

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "semfield/error.hpp"

namespace semfield {

enum class DType : std::uint32_t { f32 = 1, u8 = 2, u32 = 3, i64 = 4 };

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::string_view kTensorMagic = "PE3R";

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::u8: return 1;
    case DType::u32: return 4;
    case DType::i64: return 8;
  }
  throw Error("unknown dtype code " + std::to_string(static_cast<std::uint32_t>(t)));
}

inline const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::u8: return "u8";
    case DType::u32: return "u32";
    case DType::i64: return "i64";
  }
  return "?";
}

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return DType::u32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::i64;
  else static_assert(sizeof(T) == 0, "unsupported tensor element type");
}

namespace detail {

template <class T>
T byteswap_value(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), &v, sizeof(T));
  std::reverse(raw.begin(), raw.end());
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

template <class T>
void put_le(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  return v;
}

}  // namespace detail

/// A typed n-dimensional block. `data` always holds the little-endian payload.
struct TensorBlock {
  DType dtype = DType::u8;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  /// Throws if the payload length disagrees with shape x element size.
  void check() const {
    if (shape.empty()) throw Error("tensor must have ndim >= 1");
    if (data.size() != element_count() * dtype_size(dtype)) {
      throw Error("tensor payload is " + std::to_string(data.size()) + " bytes, shape implies " +
                  std::to_string(element_count() * dtype_size(dtype)));
    }
  }

  template <class T>
  static TensorBlock from(std::vector<std::uint64_t> shape, std::span<const T> values) {
    TensorBlock t;
    t.dtype = dtype_of<T>();
    t.shape = std::move(shape);
    if (t.element_count() != values.size()) throw Error("tensor shape does not match value count");
    t.data.resize(values.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
      if (!values.empty()) std::memcpy(t.data.data(), values.data(), t.data.size());
    } else {
      for (std::size_t i = 0; i < values.size(); ++i) {
        T v = detail::byteswap_value(values[i]);
        std::memcpy(t.data.data() + i * sizeof(T), &v, sizeof(T));
      }
    }
    return t;
  }

  template <class T>
  std::vector<T> values() const {
    if (dtype != dtype_of<T>()) {
      throw Error(std::string("tensor dtype is ") + dtype_name(dtype) + ", expected " +
                  dtype_name(dtype_of<T>()));
    }
    check();
    std::vector<T> out(element_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = detail::get_le<T>(reinterpret_cast<const char*>(data.data()) + i * sizeof(T));
    }
    return out;
  }

  bool operator==(const TensorBlock&) const = default;
};

inline std::string encode_tensor(const TensorBlock& t) {
  t.check();
  std::string out;
  out.reserve(16 + 8 * t.shape.size() + t.data.size());
  out.append(kTensorMagic);
  detail::put_le<std::uint32_t>(out, kTensorVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) detail::put_le<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size());
  return out;
}

inline TensorBlock decode_tensor(std::string_view bytes) {
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader) throw Error("tensor block truncated: missing header");
  if (bytes.substr(0, 4) != kTensorMagic) throw Error("bad tensor magic");
  const char* p = bytes.data();
  auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kTensorVersion) throw Error("unsupported tensor version " + std::to_string(version));
  auto code = detail::get_le<std::uint32_t>(p + 8);
  if (code < 1 || code > 4) throw Error("unknown dtype code " + std::to_string(code));
  auto ndim = detail::get_le<std::uint32_t>(p + 12);
  if (ndim == 0) throw Error("tensor must have ndim >= 1");
  if (bytes.size() < kHeader + 8ull * ndim) throw Error("tensor block truncated: missing dims");

  TensorBlock t;
  t.dtype = static_cast<DType>(code);
  t.shape.resize(ndim);
  // Guard the product against overflow before trusting it for allocation.
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape[i] = detail::get_le<std::uint64_t>(p + kHeader + 8 * i);
    if (t.shape[i] != 0 && count > (std::uint64_t{1} << 48) / t.shape[i]) {
      throw Error("tensor shape too large");
    }
    count *= t.shape[i];
  }
  std::size_t offset = kHeader + 8ull * ndim;
  std::uint64_t expected = count * dtype_size(t.dtype);
  if (bytes.size() - offset != expected) {
    throw Error("tensor payload is " + std::to_string(bytes.size() - offset) +
                " bytes, shape implies " + std::to_string(expected));
  }
  t.data.assign(reinterpret_cast<const std::uint8_t*>(p + offset),
                reinterpret_cast<const std::uint8_t*>(p + offset) + expected);
  return t;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

inline TensorBlock read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path));
}

inline void write_tensor(const std::filesystem::path& path, const TensorBlock& t) {
  write_file_bytes(path, encode_tensor(t));
}

/// 64-bit FNV-1a. Used to content-address images for the fixture backend.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace semfield
