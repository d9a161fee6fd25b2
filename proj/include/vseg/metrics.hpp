#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/mask.hpp"

namespace vseg {

/// Exact unsigned rational, kept reduced. Arithmetic goes through unsigned
/// 128-bit intermediates and fails loud if a reduced result leaves u64;
/// that cannot happen at the pixel counts this library evaluates.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Fraction of(std::uint64_t num, std::uint64_t den) {
    require(den != 0, "Fraction: zero denominator");
    Fraction f{num, den};
    f.reduce();
    return f;
  }

  void reduce() {
    const std::uint64_t g = std::gcd(num, den);
    num /= g;
    den /= g;
  }

  Fraction plus(const Fraction& other) const {
    const unsigned __int128 n = static_cast<unsigned __int128>(num) * other.den +
                                static_cast<unsigned __int128>(other.num) * den;
    const unsigned __int128 d =
        static_cast<unsigned __int128>(den) * other.den;
    return reduce128(n, d);
  }

  Fraction divided_by(std::uint64_t k) const {
    require(k != 0, "Fraction: division by zero");
    return reduce128(num, static_cast<unsigned __int128>(den) * k);
  }

  double to_double() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }

  std::string to_string() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }

  bool operator==(const Fraction& other) const = default;

 private:
  static Fraction reduce128(unsigned __int128 n, unsigned __int128 d) {
    const unsigned __int128 g = gcd128(n, d);
    n /= g;
    d /= g;
    require(n <= UINT64_MAX && d <= UINT64_MAX, "Fraction: overflow");
    return Fraction{static_cast<std::uint64_t>(n),
                    static_cast<std::uint64_t>(d)};
  }

  static unsigned __int128 gcd128(unsigned __int128 a, unsigned __int128 b) {
    while (b != 0) {
      const unsigned __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }
};

/// C x C pixel count accumulator; counts[g][p] = pixels with ground truth g
/// predicted p. Ignore pixels are never counted. Merge is associative and
/// commutative, so frames may be scored on any number of workers.
struct ConfusionMatrix {
  std::uint32_t classes = 0;
  std::vector<std::uint64_t> counts;  // g * classes + p

  explicit ConfusionMatrix(std::uint32_t class_count)
      : classes(class_count),
        counts(static_cast<std::size_t>(class_count) * class_count, 0) {
    require(class_count >= 1, "ConfusionMatrix: need at least one class");
  }

  std::uint64_t at(std::uint32_t gt, std::uint32_t pred) const {
    return counts[static_cast<std::size_t>(gt) * classes + pred];
  }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (const std::uint64_t c : counts) sum += c;
    return sum;
  }

  /// Scores one prediction against ground truth. A prediction of 255 on a
  /// scored pixel is a pipeline bug, not data, and aborts.
  void accumulate(const SegMask& pred, const SegMask& gt) {
    pred.validate();
    gt.validate();
    require(pred.width == gt.width && pred.height == gt.height,
            "accumulate: prediction is ", pred.width, "x", pred.height,
            " but ground truth is ", gt.width, "x", gt.height);
    for (std::size_t pix = 0; pix < gt.labels.size(); ++pix) {
      const std::uint8_t g = gt.labels[pix];
      if (g == kIgnoreId) continue;
      const std::uint8_t p = pred.labels[pix];
      require(p != kIgnoreId,
              "prediction contains ignore on scored pixel (pixel ", pix, ")");
      require(g < classes, "accumulate: ground-truth id ", int(g),
              " out of range for ", classes, " classes at pixel ", pix);
      require(p < classes, "accumulate: predicted id ", int(p),
              " out of range for ", classes, " classes at pixel ", pix);
      ++counts[static_cast<std::size_t>(g) * classes + p];
    }
  }
};

inline ConfusionMatrix merge(const ConfusionMatrix& a,
                             const ConfusionMatrix& b) {
  require(a.classes == b.classes, "merge: class count mismatch (", a.classes,
          " vs ", b.classes, ")");
  ConfusionMatrix out = a;
  for (std::size_t i = 0; i < out.counts.size(); ++i) {
    out.counts[i] += b.counts[i];
  }
  return out;
}

struct ClassIou {
  std::uint32_t class_id = 0;
  bool present = false;          // false: zero union, excluded from the mean
  Fraction iou;                  // valid only when present
};

struct MiouResult {
  Fraction miou;
  double value = 0.0;
  std::uint32_t present_classes = 0;
  std::vector<ClassIou> per_class;
};

/// IoU_c = TP / (TP + FP + FN) as an exact ratio. Classes with zero union
/// are excluded from the mean; `all_classes` divides by the full class count
/// instead (absent classes contribute zero).
inline MiouResult miou(const ConfusionMatrix& cm, bool all_classes = false) {
  MiouResult result;
  result.per_class.reserve(cm.classes);

  Fraction sum{0, 1};
  for (std::uint32_t c = 0; c < cm.classes; ++c) {
    std::uint64_t tp = cm.at(c, c);
    std::uint64_t row = 0;  // TP + FN
    std::uint64_t col = 0;  // TP + FP
    for (std::uint32_t k = 0; k < cm.classes; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t uni = row + col - tp;
    ClassIou entry;
    entry.class_id = c;
    if (uni > 0) {
      entry.present = true;
      entry.iou = Fraction::of(tp, uni);
      sum = sum.plus(entry.iou);
      ++result.present_classes;
    }
    result.per_class.push_back(entry);
  }
  require(result.present_classes > 0, "miou: no present classes");

  const std::uint64_t divisor =
      all_classes ? cm.classes : result.present_classes;
  result.miou = sum.divided_by(divisor);
  result.value = result.miou.to_double();
  return result;
}

}  // namespace vseg
