#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <string_view>

#include "vseg/error.hpp"
#include "vseg/mask.hpp"

namespace vseg {

/// Source-class -> target-class dictionary for cross-dataset label mapping.
/// Targets are class ids 0..254; kIgnoreId marks sources mapped to ignore.
class MappingTable {
 public:
  MappingTable() { targets_.fill(kUnmapped); }

  void insert(std::uint8_t src, std::uint8_t dst) {
    require(src <= 254, "MappingTable: source id ", int(src), " out of range");
    require(targets_[src] == kUnmapped, "MappingTable: duplicate source id ",
            int(src));
    targets_[src] = dst;
  }

  bool has(std::uint8_t src) const { return targets_[src] != kUnmapped; }

  /// Target id for a mapped source; kIgnoreId means mapped-to-ignore.
  std::uint8_t target(std::uint8_t src) const {
    return static_cast<std::uint8_t>(targets_[src]);
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (int t : targets_) n += t != kUnmapped;
    return n;
  }

 private:
  static constexpr std::int16_t kUnmapped = -1;
  std::array<std::int16_t, 256> targets_;
};

namespace detail {

inline std::string_view map_trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline int map_parse_id(std::string_view token, std::size_t line_no,
                        const char* what) {
  unsigned value = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  require(ec == std::errc() && ptr == last && !token.empty(),
          "mapping line ", line_no, ": non-integer ", what, " token \"",
          token, "\"");
  require(value <= 254, "mapping line ", line_no, ": ", what, " id ", value,
          " out of range (max 254)");
  return static_cast<int>(value);
}

}  // namespace detail

/// Parses `src<TAB>dst` lines; dst may be `-` for ignore. Lines starting
/// with `#` and blank lines are skipped. Errors carry the 1-based line
/// number.
inline MappingTable parse_mapping(std::string_view text) {
  MappingTable table;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{}
                                         : text.substr(eol + 1);

    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string_view stripped = detail::map_trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;

    const std::size_t tab = line.find('\t');
    require(tab != std::string_view::npos, "mapping line ", line_no,
            ": expected src<TAB>dst");
    const std::string_view src_tok = line.substr(0, tab);
    const std::string_view dst_tok = detail::map_trim(line.substr(tab + 1));

    const int src = detail::map_parse_id(src_tok, line_no, "source");
    std::uint8_t dst = kIgnoreId;
    if (dst_tok != "-") {
      dst = static_cast<std::uint8_t>(
          detail::map_parse_id(dst_tok, line_no, "target"));
    }
    require(!table.has(static_cast<std::uint8_t>(src)), "mapping line ",
            line_no, ": duplicate source id ", src);
    table.insert(static_cast<std::uint8_t>(src), dst);
  }
  return table;
}

enum class MissingPolicy { kError, kToIgnore };

/// Pixelwise label substitution. Ignore pixels stay ignore; sources mapped
/// to ignore become ignore; unmapped sources follow `policy`.
inline SegMask remap(const SegMask& mask, const MappingTable& table,
                     MissingPolicy policy) {
  mask.validate();
  SegMask out;
  out.width = mask.width;
  out.height = mask.height;
  out.labels.resize(mask.labels.size());
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const std::uint8_t src = mask.labels[i];
    if (src == kIgnoreId) {
      out.labels[i] = kIgnoreId;
    } else if (table.has(src)) {
      out.labels[i] = table.target(src);
    } else if (policy == MissingPolicy::kToIgnore) {
      out.labels[i] = kIgnoreId;
    } else {
      fail("remap: unmapped source id ", int(src), " at pixel index ", i);
    }
  }
  return out;
}

/// Fraction of non-ignore pixels, counted in integer arithmetic with one
/// final division.
inline double valid_ratio(const SegMask& mask) {
  mask.validate();
  const std::size_t total = mask.pixel_count();
  require(total > 0, "valid_ratio: zero-area mask");
  std::size_t valid = 0;
  for (const std::uint8_t label : mask.labels) valid += label != kIgnoreId;
  return static_cast<double>(valid) / static_cast<double>(total);
}

enum class FilterDecision { kKeep, kDrop };

/// Keep iff valid_ratio >= threshold; `strict` flips the comparison to >.
inline FilterDecision filter_decision(const SegMask& mask, double threshold,
                                      bool strict = false) {
  require(threshold >= 0.0 && threshold <= 1.0,
          "filter_decision: threshold ", threshold, " outside [0, 1]");
  const double ratio = valid_ratio(mask);
  const bool keep = strict ? ratio > threshold : ratio >= threshold;
  return keep ? FilterDecision::kKeep : FilterDecision::kDrop;
}

}  // namespace vseg
