#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

/// Per-pixel class score tensor, channel-major then row-major:
/// index(c, y, x) = (c*height + y)*width + x. Holds probabilities when
/// `normalized` is set, raw logits otherwise. Storage type is a template
/// parameter: files carry f32, compute paths may use f64.
template <typename T>
struct BasicProbMap {
  std::uint32_t classes = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  bool normalized = false;
  std::vector<T> values;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::size_t volume() const { return pixel_count() * classes; }

  std::size_t index(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  T at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return values[index(c, y, x)];
  }
  T& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return values[index(c, y, x)];
  }

  bool same_shape(const BasicProbMap& other) const {
    return classes == other.classes && width == other.width &&
           height == other.height;
  }

  void validate() const {
    require(values.size() == volume(), "ProbMap: value count ", values.size(),
            " does not match ", classes, "x", height, "x", width);
  }
};

using ProbMap = BasicProbMap<float>;

template <typename To, typename From>
BasicProbMap<To> convert_map(const BasicProbMap<From>& in) {
  BasicProbMap<To> out;
  out.classes = in.classes;
  out.width = in.width;
  out.height = in.height;
  out.normalized = in.normalized;
  out.values.reserve(in.values.size());
  for (const From v : in.values) out.values.push_back(static_cast<To>(v));
  return out;
}

namespace detail {

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(std::span<const std::uint8_t> b,
                               std::size_t pos) {
  return static_cast<std::uint32_t>(b[pos]) |
         (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

}  // namespace detail

/// LGT header: magic "LGT1", u32le C, H, W, one flag byte (1 = normalized),
/// then C*H*W little-endian f32 values in (c, y, x) order.
inline constexpr std::size_t kLgtHeaderSize = 17;

inline ProbMap read_tensor(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && bytes[0] == 'L' && bytes[1] == 'G' &&
              bytes[2] == 'T' && bytes[3] == '1',
          "LGT: bad magic at byte 0 (want \"LGT1\")");
  require(bytes.size() >= kLgtHeaderSize, "LGT: truncated header at byte ",
          bytes.size());
  ProbMap map;
  map.classes = detail::get_u32le(bytes, 4);
  map.height = detail::get_u32le(bytes, 8);
  map.width = detail::get_u32le(bytes, 12);
  const std::uint8_t flag = bytes[16];
  require(flag <= 1, "LGT: bad normalized flag ", int(flag), " at byte 16");
  map.normalized = flag == 1;

  // dims are independent u32s; their product must not wrap size arithmetic
  const unsigned __int128 wide = static_cast<unsigned __int128>(map.classes) *
                                 map.height * map.width;
  require(wide <= SIZE_MAX / 4, "LGT: header dimensions overflow (", map.classes,
          "x", map.height, "x", map.width, ")");
  const std::size_t volume = static_cast<std::size_t>(wide);
  const std::size_t payload = bytes.size() - kLgtHeaderSize;
  require(payload == volume * 4, "LGT: size mismatch at byte ", kLgtHeaderSize,
          " (header wants ", volume, " f32 values = ", volume * 4,
          " bytes, have ", payload, ")");

  map.values.resize(volume);
  for (std::size_t i = 0; i < volume; ++i) {
    const std::size_t pos = kLgtHeaderSize + i * 4;
    const std::uint32_t bits = detail::get_u32le(bytes, pos);
    const float v = std::bit_cast<float>(bits);
    require(std::isfinite(v), "LGT: non-finite value at byte ", pos,
            " (index ", i, ")");
    map.values[i] = v;
  }
  return map;
}

inline std::vector<std::uint8_t> write_tensor(const ProbMap& map) {
  map.validate();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kLgtHeaderSize + map.values.size() * 4);
  bytes.push_back('L');
  bytes.push_back('G');
  bytes.push_back('T');
  bytes.push_back('1');
  detail::put_u32le(bytes, map.classes);
  detail::put_u32le(bytes, map.height);
  detail::put_u32le(bytes, map.width);
  bytes.push_back(map.normalized ? 1 : 0);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    require(std::isfinite(map.values[i]), "LGT: non-finite value at index ",
            i);
    detail::put_u32le(bytes, std::bit_cast<std::uint32_t>(map.values[i]));
  }
  return bytes;
}

}  // namespace vseg
