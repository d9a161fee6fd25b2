#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

/// Reserved class id for pixels excluded from losses and evaluation. Single
/// convention across the whole library.
inline constexpr std::uint8_t kIgnoreId = 255;

/// Per-pixel class-id raster. Labels are row-major, one byte per pixel;
/// ids 0..254 are classes, 255 is ignore.
struct SegMask {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> labels;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }

  std::uint8_t at(std::uint32_t x, std::uint32_t y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(std::uint32_t x, std::uint32_t y) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }

  void validate() const {
    require(labels.size() == pixel_count(),
            "SegMask: label count ", labels.size(), " does not match ", width,
            "x", height);
  }
};

namespace detail {

inline bool pgm_is_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

/// Skips whitespace and `#` comments; returns offset of the next token byte.
inline std::size_t pgm_skip_separators(std::span<const std::uint8_t> bytes,
                                       std::size_t pos) {
  while (pos < bytes.size()) {
    if (pgm_is_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  return pos;
}

inline std::uint32_t pgm_parse_uint(std::span<const std::uint8_t> bytes,
                                    std::size_t& pos, const char* what) {
  require(pos < bytes.size(), "PGM: unexpected end of header at byte ", pos,
          " while reading ", what);
  require(bytes[pos] >= '0' && bytes[pos] <= '9', "PGM: expected ", what,
          " at byte ", pos);
  std::uint64_t value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    require(value <= 0xffffffffULL, "PGM: ", what, " overflows at byte ", pos);
    ++pos;
  }
  return static_cast<std::uint32_t>(value);
}

}  // namespace detail

/// Parses a binary PGM ("P5") byte stream with maxval 255. Header tokens are
/// whitespace separated with `#` comments allowed; exactly one whitespace
/// byte follows the maxval before the raster.
inline SegMask read_mask(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5',
          "PGM: bad magic at byte 0 (want \"P5\")");
  std::size_t pos = 2;
  require(pos < bytes.size() && (detail::pgm_is_space(bytes[pos]) ||
                                 bytes[pos] == '#'),
          "PGM: expected whitespace after magic at byte ", pos);

  pos = detail::pgm_skip_separators(bytes, pos);
  SegMask mask;
  mask.width = detail::pgm_parse_uint(bytes, pos, "width");
  pos = detail::pgm_skip_separators(bytes, pos);
  mask.height = detail::pgm_parse_uint(bytes, pos, "height");
  pos = detail::pgm_skip_separators(bytes, pos);
  const std::size_t maxval_at = pos;
  const std::uint32_t maxval = detail::pgm_parse_uint(bytes, pos, "maxval");
  require(maxval == 255, "PGM: maxval ", maxval, " at byte ", maxval_at,
          " (only 255 supported)");

  require(pos < bytes.size() && detail::pgm_is_space(bytes[pos]),
          "PGM: expected single whitespace after maxval at byte ", pos);
  ++pos;  // exactly one separator byte, then raw payload

  const std::size_t need = static_cast<std::size_t>(mask.width) * mask.height;
  const std::size_t have = bytes.size() - pos;
  require(have >= need, "PGM: truncated payload at byte ", bytes.size(),
          " (need ", need, " bytes from offset ", pos, ", have ", have, ")");
  require(have == need, "PGM: ", have - need, " trailing bytes after payload",
          " at byte ", pos + need);
  mask.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.end());
  return mask;
}

/// Serializes to the canonical header `P5\n<w> <h>\n255\n` plus raw bytes.
/// Output is byte-identical across platforms.
inline std::vector<std::uint8_t> write_mask(const SegMask& mask) {
  mask.validate();
  std::string header = "P5\n" + std::to_string(mask.width) + " " +
                       std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), mask.labels.begin(), mask.labels.end());
  return bytes;
}

}  // namespace vseg
