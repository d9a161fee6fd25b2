#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/prob_map.hpp"

namespace vseg {

/// Sliding-window tiling of an image. Origins advance by `stride` per axis
/// with the final origin clamped so the last window abuts the image edge;
/// every pixel is covered by at least one window.
struct WindowPlan {
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  std::uint32_t window_height = 0;
  std::uint32_t window_width = 0;
  std::uint32_t stride = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> origins;  // (x0, y0)
};

namespace detail {

inline std::vector<std::uint32_t> axis_origins(std::uint32_t dim,
                                               std::uint32_t window,
                                               std::uint32_t stride) {
  std::vector<std::uint32_t> origins;
  for (std::uint64_t pos = 0;; pos += stride) {
    if (pos + window >= dim) {
      origins.push_back(dim - window);
      break;
    }
    origins.push_back(static_cast<std::uint32_t>(pos));
  }
  return origins;
}

}  // namespace detail

/// Windows are emitted row-major: y origins outer, x origins inner.
inline WindowPlan plan_windows(std::uint32_t image_height,
                               std::uint32_t image_width,
                               std::uint32_t window_height,
                               std::uint32_t window_width,
                               std::uint32_t stride) {
  require(image_height >= 1 && image_width >= 1, "plan_windows: empty image");
  require(window_height >= 1 && window_width >= 1,
          "plan_windows: empty window");
  require(window_height <= image_height && window_width <= image_width,
          "plan_windows: window ", window_height, "x", window_width,
          " larger than image ", image_height, "x", image_width);
  require(stride >= 1, "plan_windows: stride must be >= 1");
  // a stride wider than the window leaves uncovered gaps, unless the window
  // already spans the whole axis
  require(stride <= window_height || window_height == image_height,
          "plan_windows: stride ", stride, " exceeds window height ",
          window_height, " (coverage would have gaps)");
  require(stride <= window_width || window_width == image_width,
          "plan_windows: stride ", stride, " exceeds window width ",
          window_width, " (coverage would have gaps)");

  WindowPlan plan;
  plan.image_height = image_height;
  plan.image_width = image_width;
  plan.window_height = window_height;
  plan.window_width = window_width;
  plan.stride = stride;

  const auto ys = detail::axis_origins(image_height, window_height, stride);
  const auto xs = detail::axis_origins(image_width, window_width, stride);
  plan.origins.reserve(ys.size() * xs.size());
  for (const std::uint32_t y0 : ys) {
    for (const std::uint32_t x0 : xs) {
      plan.origins.emplace_back(x0, y0);
    }
  }
  return plan;
}

/// Merges per-window maps into a full-resolution map: each pixel is the mean
/// of all covering windows, accumulated in f64 per pixel.
template <typename T>
BasicProbMap<T> stitch(const WindowPlan& plan,
                       std::span<const BasicProbMap<T>> window_maps) {
  require(window_maps.size() == plan.origins.size(),
          "stitch: plan has ", plan.origins.size(), " windows but ",
          window_maps.size(), " maps were given");
  require(!window_maps.empty(), "stitch: empty plan");

  const std::uint32_t classes = window_maps.front().classes;
  bool normalized = true;
  for (std::size_t w = 0; w < window_maps.size(); ++w) {
    window_maps[w].validate();
    require(window_maps[w].classes == classes &&
                window_maps[w].height == plan.window_height &&
                window_maps[w].width == plan.window_width,
            "stitch: window map ", w, " does not match the plan window shape");
    normalized = normalized && window_maps[w].normalized;
  }

  const std::size_t pixels =
      static_cast<std::size_t>(plan.image_height) * plan.image_width;
  std::vector<double> sums(pixels * classes, 0.0);
  std::vector<std::uint32_t> cover(pixels, 0);

  for (std::size_t w = 0; w < window_maps.size(); ++w) {
    const auto [x0, y0] = plan.origins[w];
    const BasicProbMap<T>& win = window_maps[w];
    for (std::uint32_t c = 0; c < classes; ++c) {
      for (std::uint32_t y = 0; y < plan.window_height; ++y) {
        for (std::uint32_t x = 0; x < plan.window_width; ++x) {
          const std::size_t out_pix =
              static_cast<std::size_t>(y0 + y) * plan.image_width + (x0 + x);
          sums[static_cast<std::size_t>(c) * pixels + out_pix] +=
              static_cast<double>(win.at(c, y, x));
          if (c == 0) ++cover[out_pix];
        }
      }
    }
  }

  BasicProbMap<T> out;
  out.classes = classes;
  out.width = plan.image_width;
  out.height = plan.image_height;
  out.normalized = normalized;
  out.values.resize(sums.size());
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    require(cover[pix] > 0, "stitch: pixel ", pix, " not covered by any window");
    const double inv = 1.0 / static_cast<double>(cover[pix]);
    for (std::uint32_t c = 0; c < classes; ++c) {
      const std::size_t idx = static_cast<std::size_t>(c) * pixels + pix;
      out.values[idx] = static_cast<T>(sums[idx] * inv);
    }
  }
  return out;
}

/// Reverses the x axis of every channel.
template <typename T>
BasicProbMap<T> mirror_x(const BasicProbMap<T>& map) {
  map.validate();
  BasicProbMap<T> out = map;
  for (std::uint32_t c = 0; c < map.classes; ++c) {
    for (std::uint32_t y = 0; y < map.height; ++y) {
      for (std::uint32_t x = 0; x < map.width; ++x) {
        out.at(c, y, x) = map.at(c, y, map.width - 1 - x);
      }
    }
  }
  return out;
}

/// Horizontal-flip TTA merge: 0.5 * (P + mirror(P_flip)), where P_flip is
/// the model output on the mirrored input.
template <typename T>
BasicProbMap<T> hflip_merge(const BasicProbMap<T>& map,
                            const BasicProbMap<T>& flipped) {
  map.validate();
  flipped.validate();
  require(map.same_shape(flipped), "hflip_merge: shape mismatch");

  const BasicProbMap<T> unflipped = mirror_x(flipped);
  BasicProbMap<T> out;
  out.classes = map.classes;
  out.width = map.width;
  out.height = map.height;
  out.normalized = map.normalized && flipped.normalized;
  out.values.resize(map.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] =
        static_cast<T>(0.5 * (static_cast<double>(map.values[i]) +
                              static_cast<double>(unflipped.values[i])));
  }
  return out;
}

}  // namespace vseg
