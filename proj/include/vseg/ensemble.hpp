#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/mask.hpp"
#include "vseg/prob_map.hpp"

namespace vseg {

/// Convex combination tau*P1 + (1-tau)*P2, accumulated in f64. Endpoints
/// tau = 1 and tau = 0 return the corresponding input exactly.
template <typename T>
BasicProbMap<T> weighted_pair(const BasicProbMap<T>& p1,
                              const BasicProbMap<T>& p2, double tau) {
  p1.validate();
  p2.validate();
  require(p1.same_shape(p2), "weighted_pair: shape mismatch (", p1.classes,
          "x", p1.height, "x", p1.width, " vs ", p2.classes, "x", p2.height,
          "x", p2.width, ")");
  require(std::isfinite(tau) && tau >= 0.0 && tau <= 1.0,
          "weighted_pair: ensemble coefficient ", tau, " outside [0, 1]");

  const bool normalized = p1.normalized && p2.normalized;
  if (tau == 1.0) {
    BasicProbMap<T> out = p1;
    out.normalized = normalized;
    return out;
  }
  if (tau == 0.0) {
    BasicProbMap<T> out = p2;
    out.normalized = normalized;
    return out;
  }

  BasicProbMap<T> out;
  out.classes = p1.classes;
  out.width = p1.width;
  out.height = p1.height;
  out.normalized = normalized;
  out.values.resize(p1.values.size());
  const double tau2 = 1.0 - tau;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<T>(tau * static_cast<double>(p1.values[i]) +
                                   tau2 * static_cast<double>(p2.values[i]));
  }
  return out;
}

/// Elementwise mean over N maps; f64 accumulation in input order.
template <typename T>
BasicProbMap<T> soft_average(std::span<const BasicProbMap<T>> models) {
  require(!models.empty(), "soft_average: empty model list");
  const BasicProbMap<T>& first = models.front();
  first.validate();

  bool normalized = first.normalized;
  for (std::size_t m = 1; m < models.size(); ++m) {
    models[m].validate();
    require(first.same_shape(models[m]),
            "soft_average: shape mismatch at model ", m);
    normalized = normalized && models[m].normalized;
  }

  BasicProbMap<T> out;
  out.classes = first.classes;
  out.width = first.width;
  out.height = first.height;
  out.normalized = normalized;
  out.values.resize(first.values.size());
  const double inv_n = 1.0 / static_cast<double>(models.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double acc = 0.0;
    for (const BasicProbMap<T>& model : models) {
      acc += static_cast<double>(model.values[i]);
    }
    out.values[i] = static_cast<T>(acc * inv_n);
  }
  return out;
}

/// Per-pixel majority vote over hard masks. Ignore votes are not counted,
/// ties break to the smallest class id, and a pixel every model ignored
/// stays ignore.
inline SegMask vote(std::span<const SegMask> masks) {
  require(!masks.empty(), "vote: empty mask list");
  const SegMask& first = masks.front();
  first.validate();
  for (std::size_t m = 1; m < masks.size(); ++m) {
    masks[m].validate();
    require(masks[m].width == first.width && masks[m].height == first.height,
            "vote: dimension mismatch at mask ", m);
  }

  SegMask out;
  out.width = first.width;
  out.height = first.height;
  out.labels.resize(first.pixel_count());

  std::array<std::uint32_t, 255> counts{};
  for (std::size_t pix = 0; pix < out.labels.size(); ++pix) {
    counts.fill(0);
    for (const SegMask& mask : masks) {
      const std::uint8_t id = mask.labels[pix];
      if (id != kIgnoreId) ++counts[id];
    }
    std::uint32_t best_count = 0;
    std::uint8_t best_id = kIgnoreId;
    for (std::size_t id = 0; id < counts.size(); ++id) {
      if (counts[id] > best_count) {
        best_count = counts[id];
        best_id = static_cast<std::uint8_t>(id);
      }
    }
    out.labels[pix] = best_id;
  }
  return out;
}

/// Per-pixel argmax decode; ties go to the smallest class index.
template <typename T>
SegMask argmax_map(const BasicProbMap<T>& map) {
  map.validate();
  require(map.classes >= 1, "argmax_map: no classes");
  require(map.classes <= 255, "argmax_map: ", map.classes,
          " classes do not fit 8-bit labels");

  SegMask out;
  out.width = map.width;
  out.height = map.height;
  out.labels.resize(map.pixel_count());
  const std::size_t pixels = map.pixel_count();
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    std::uint32_t best = 0;
    T best_value = map.values[pix];
    for (std::uint32_t c = 1; c < map.classes; ++c) {
      const T v = map.values[static_cast<std::size_t>(c) * pixels + pix];
      if (v > best_value) {
        best_value = v;
        best = c;
      }
    }
    out.labels[pix] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace vseg
