#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace vseg {

/// Pairwise summation over a span, fixed reduction tree by index. Used for
/// the loss reductions so results are deterministic and well-conditioned.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double acc = 0.0;
    for (const double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (const T v : values) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

}  // namespace vseg
