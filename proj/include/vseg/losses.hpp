#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/mask.hpp"
#include "vseg/numeric.hpp"
#include "vseg/prob_map.hpp"
#include "vseg/rng.hpp"

namespace vseg {

/// Patch embeddings with per-patch class labels, drawn from consecutive
/// frames of one clip. Row-major M x D. Class id 255 marks patches excluded
/// from anchoring; frame_index is carried metadata (the loss itself treats
/// all patches of the clip uniformly).
template <std::floating_point T>
struct FeatureClip {
  std::size_t patch_count = 0;  // M
  std::size_t dim = 0;          // D
  std::vector<T> features;      // M * D
  std::vector<std::uint8_t> patch_class;
  std::vector<std::uint8_t> frame_index;

  std::span<const T> patch(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  void validate() const {
    require(patch_count >= 2, "FeatureClip: need at least 2 patches, have ",
            patch_count);
    require(dim >= 1, "FeatureClip: embedding dimension must be >= 1");
    require(features.size() == patch_count * dim,
            "FeatureClip: feature count ", features.size(),
            " does not match ", patch_count, "x", dim);
    require(patch_class.size() == patch_count,
            "FeatureClip: class count mismatch");
    require(frame_index.size() == patch_count,
            "FeatureClip: frame index count mismatch");
    require(all_finite(std::span<const T>(features)),
            "FeatureClip: non-finite feature");
  }
};

enum class NceDenominator { kContributing, kAll };

struct NceConfig {
  double temperature = 0.1;
  std::size_t negatives = 64;     // K, per anchor, capped by availability
  std::size_t positive_cap = 8;   // max |phi| per anchor
  std::uint64_t rng_seed = 0;
  bool normalize_features = false;
  NceDenominator divide_by = NceDenominator::kContributing;

  void validate() const {
    require(std::isfinite(temperature) && temperature > 0.0,
            "NceConfig: temperature must be positive, got ", temperature);
    require(positive_cap >= 1, "NceConfig: positive_cap must be >= 1");
  }
};

struct LossWeights {
  double lambda1 = 1.0;  // weight of the segmentation loss
  double lambda2 = 0.1;  // weight of the contrastive loss
  double lambda3 = 5.0;  // Dice weight inside the segmentation loss
  double lambda4 = 1.0;  // cross-entropy weight inside the segmentation loss

  void validate() const {
    for (double l : {lambda1, lambda2, lambda3, lambda4}) {
      require(std::isfinite(l) && l >= 0.0,
              "LossWeights: weights must be finite and non-negative");
    }
  }
};

struct AnchorPairing {
  std::size_t anchor = 0;
  std::vector<std::size_t> positives;  // phi: same-class patches
  std::vector<std::size_t> negatives;  // different-class patches, <= K
};

struct PairingPlan {
  std::vector<AnchorPairing> anchors;
  std::size_t total_patches = 0;
  std::size_t skipped_anchors = 0;  // labeled patches with no same-class peer
  std::size_t ignored_patches = 0;  // patches labeled 255
};

/// Samples the positive set and negative list for every anchor. Sampling is
/// without replacement and deterministic given cfg.rng_seed; each anchor
/// draws from its own substream so the plan does not depend on evaluation
/// order.
template <std::floating_point T>
PairingPlan sample_pairs(const FeatureClip<T>& clip, const NceConfig& cfg) {
  clip.validate();
  cfg.validate();

  PairingPlan plan;
  plan.total_patches = clip.patch_count;

  std::vector<std::size_t> valid;  // labeled patches
  valid.reserve(clip.patch_count);
  for (std::size_t i = 0; i < clip.patch_count; ++i) {
    if (clip.patch_class[i] == kIgnoreId) {
      ++plan.ignored_patches;
    } else {
      valid.push_back(i);
    }
  }

  for (std::size_t i = 0; i < clip.patch_count; ++i) {
    const std::uint8_t cls = clip.patch_class[i];
    if (cls == kIgnoreId) continue;

    std::vector<std::size_t> pos_pool;
    std::vector<std::size_t> neg_pool;
    for (const std::size_t j : valid) {
      if (clip.patch_class[j] == cls) {
        if (j != i) pos_pool.push_back(j);
      } else {
        neg_pool.push_back(j);
      }
    }
    if (pos_pool.empty()) {
      ++plan.skipped_anchors;
      continue;
    }

    Rng rng(mix_seed(cfg.rng_seed, static_cast<std::uint64_t>(i)));
    AnchorPairing pairing;
    pairing.anchor = i;
    pairing.positives =
        sample_without_replacement(rng, std::move(pos_pool), cfg.positive_cap);
    pairing.negatives =
        sample_without_replacement(rng, std::move(neg_pool), cfg.negatives);
    plan.anchors.push_back(std::move(pairing));
  }
  return plan;
}

template <std::floating_point T>
struct NceResult {
  double value = 0.0;
  std::vector<T> feature_grad;  // dL/dfeatures, M x D
  std::size_t patch_count = 0;      // M
  std::size_t contributing = 0;     // M': anchors with a positive set
};

namespace detail {

/// Normalized feature rows and their norms; identity pass-through when
/// normalization is off (norms empty).
struct SimilarityBasis {
  std::vector<double> rows;    // M x D, doubles
  std::vector<double> norms;   // M when normalizing, else empty
  std::size_t dim = 0;

  std::span<const double> row(std::size_t i) const {
    return {rows.data() + i * dim, dim};
  }
};

template <std::floating_point T>
SimilarityBasis make_basis(const FeatureClip<T>& clip, bool normalize) {
  SimilarityBasis basis;
  basis.dim = clip.dim;
  basis.rows.resize(clip.patch_count * clip.dim);
  for (std::size_t i = 0; i < clip.features.size(); ++i) {
    basis.rows[i] = static_cast<double>(clip.features[i]);
  }
  if (!normalize) return basis;

  basis.norms.resize(clip.patch_count);
  for (std::size_t i = 0; i < clip.patch_count; ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < clip.dim; ++d) {
      const double v = basis.rows[i * clip.dim + d];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    require(norm > 0.0, "nce_loss: zero-norm feature ", i,
            " with normalize_features");
    basis.norms[i] = norm;
    for (std::size_t d = 0; d < clip.dim; ++d) {
      basis.rows[i * clip.dim + d] /= norm;
    }
  }
  return basis;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace detail

/// Spatial-temporal contrastive loss over a precomputed pairing plan.
/// Per anchor i and positive p:
///   f(i,p) = s_ip - log(exp(s_ip) + sum_n exp(s_in)),  s = (x.x')/tau
/// evaluated with log-sum-exp stabilization; the anchor term averages f over
/// the positive set and the loss is the negated mean over anchors (divisor
/// per cfg.divide_by). The gradient is the exact derivative of the computed
/// value, including the normalization chain rule when enabled.
template <std::floating_point T>
NceResult<T> nce_loss(const FeatureClip<T>& clip, const NceConfig& cfg,
                      const PairingPlan& plan) {
  clip.validate();
  cfg.validate();
  require(plan.total_patches == clip.patch_count,
          "nce_loss: plan was built for a different clip");

  NceResult<T> result;
  result.patch_count = clip.patch_count;
  result.contributing = plan.anchors.size();
  require(result.contributing > 0, "no positive pairs");

  const double denom =
      cfg.divide_by == NceDenominator::kAll
          ? static_cast<double>(clip.patch_count)
          : static_cast<double>(result.contributing);

  const auto basis = detail::make_basis(clip, cfg.normalize_features);
  const double inv_tau = 1.0 / cfg.temperature;

  // Gradient w.r.t. the similarity-space rows (normalized rows when
  // normalization is on); mapped back through the chain rule at the end.
  std::vector<double> grad_rows(basis.rows.size(), 0.0);
  std::vector<double> anchor_terms;
  anchor_terms.reserve(plan.anchors.size());

  std::vector<double> neg_sims;
  for (const AnchorPairing& pairing : plan.anchors) {
    const std::size_t i = pairing.anchor;
    const auto xi = basis.row(i);

    neg_sims.clear();
    double max_neg = -std::numeric_limits<double>::infinity();
    for (const std::size_t n : pairing.negatives) {
      const double s = detail::dot(xi, basis.row(n)) * inv_tau;
      neg_sims.push_back(s);
      max_neg = std::max(max_neg, s);
    }

    const double pos_coef = -1.0 / (denom * pairing.positives.size());
    double term_sum = 0.0;
    for (const std::size_t p : pairing.positives) {
      const double s_pos = detail::dot(xi, basis.row(p)) * inv_tau;
      const double m = std::max(s_pos, max_neg);
      double sum_exp = std::exp(s_pos - m);
      for (const double s : neg_sims) sum_exp += std::exp(s - m);
      term_sum += s_pos - (m + std::log(sum_exp));

      // d term / d s_pos = 1 - softmax(pos); d term / d s_neg = -softmax(neg)
      const double w_pos = std::exp(s_pos - m) / sum_exp;
      const double g_pos = pos_coef * (1.0 - w_pos) * inv_tau;
      for (std::size_t d = 0; d < basis.dim; ++d) {
        grad_rows[i * basis.dim + d] += g_pos * basis.rows[p * basis.dim + d];
        grad_rows[p * basis.dim + d] += g_pos * basis.rows[i * basis.dim + d];
      }
      for (std::size_t k = 0; k < pairing.negatives.size(); ++k) {
        const std::size_t n = pairing.negatives[k];
        const double w_neg = std::exp(neg_sims[k] - m) / sum_exp;
        const double g_neg = pos_coef * (-w_neg) * inv_tau;
        for (std::size_t d = 0; d < basis.dim; ++d) {
          grad_rows[i * basis.dim + d] +=
              g_neg * basis.rows[n * basis.dim + d];
          grad_rows[n * basis.dim + d] +=
              g_neg * basis.rows[i * basis.dim + d];
        }
      }
    }
    anchor_terms.push_back(term_sum /
                           static_cast<double>(pairing.positives.size()));
  }

  result.value = 0.0 - pairwise_sum(anchor_terms) / denom;  // +0 when empty

  result.feature_grad.assign(clip.features.size(), T(0));
  if (!cfg.normalize_features) {
    for (std::size_t i = 0; i < grad_rows.size(); ++i) {
      result.feature_grad[i] = static_cast<T>(grad_rows[i]);
    }
  } else {
    // Back through x_hat = x / |x|: g = (g_hat - (g_hat . x_hat) x_hat)/|x|
    for (std::size_t i = 0; i < clip.patch_count; ++i) {
      const auto xh = basis.row(i);
      double proj = 0.0;
      for (std::size_t d = 0; d < basis.dim; ++d) {
        proj += grad_rows[i * basis.dim + d] * xh[d];
      }
      for (std::size_t d = 0; d < basis.dim; ++d) {
        const double g =
            (grad_rows[i * basis.dim + d] - proj * xh[d]) / basis.norms[i];
        result.feature_grad[i * basis.dim + d] = static_cast<T>(g);
      }
    }
  }
  return result;
}

template <std::floating_point T>
NceResult<T> nce_loss(const FeatureClip<T>& clip, const NceConfig& cfg) {
  return nce_loss(clip, cfg, sample_pairs(clip, cfg));
}

template <std::floating_point T>
struct ScalarGrad {
  double value = 0.0;
  std::vector<T> prob_grad;  // dL/dprobs, C x H x W
};

namespace detail {

template <std::floating_point T>
void check_probs_and_mask(const BasicProbMap<T>& probs, const SegMask& gt) {
  probs.validate();
  gt.validate();
  require(probs.width == gt.width && probs.height == gt.height,
          "loss: probability map is ", probs.width, "x", probs.height,
          " but mask is ", gt.width, "x", gt.height);
  require(probs.normalized, "loss: probability map must be normalized");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    require(g == kIgnoreId || g < probs.classes,
            "loss: ground-truth id ", int(g), " out of range for ",
            probs.classes, " classes at pixel ", i);
  }
}

}  // namespace detail

inline constexpr double kCeProbFloor = 1e-12;

/// Mean over non-ignore pixels of -log(max(p_true, 1e-12)). The gradient is
/// exact for the clamped expression (zero below the floor).
template <std::floating_point T>
ScalarGrad<T> ce_loss(const BasicProbMap<T>& probs, const SegMask& gt) {
  detail::check_probs_and_mask(probs, gt);

  std::vector<double> terms;
  terms.reserve(gt.labels.size());
  for (std::size_t pix = 0; pix < gt.labels.size(); ++pix) {
    const std::uint8_t g = gt.labels[pix];
    if (g == kIgnoreId) continue;
    const double p = static_cast<double>(
        probs.values[static_cast<std::size_t>(g) * probs.pixel_count() + pix]);
    terms.push_back(-std::log(std::max(p, kCeProbFloor)));
  }
  require(!terms.empty(), "ce_loss: all pixels ignored");

  ScalarGrad<T> result;
  const double scored = static_cast<double>(terms.size());
  result.value = pairwise_sum(terms) / scored;
  result.prob_grad.assign(probs.values.size(), T(0));
  for (std::size_t pix = 0; pix < gt.labels.size(); ++pix) {
    const std::uint8_t g = gt.labels[pix];
    if (g == kIgnoreId) continue;
    const std::size_t idx =
        static_cast<std::size_t>(g) * probs.pixel_count() + pix;
    const double p = static_cast<double>(probs.values[idx]);
    if (p >= kCeProbFloor) {
      result.prob_grad[idx] = static_cast<T>(-1.0 / (scored * p));
    }
  }
  return result;
}

inline constexpr double kDiceSmooth = 1.0;

/// Soft Dice loss averaged over the classes present in the ground truth:
///   1 - (1/|C|) sum_c (2 A_c + eps)/(B_c + G_c + eps)
/// with A_c = sum p_c over pixels of class c, B_c = sum p_c over scored
/// pixels, G_c = pixel count of class c; eps = 1. Ignore pixels are excluded
/// from every sum.
template <std::floating_point T>
ScalarGrad<T> dice_loss(const BasicProbMap<T>& probs, const SegMask& gt) {
  detail::check_probs_and_mask(probs, gt);

  const std::size_t pixels = probs.pixel_count();
  std::vector<double> overlap(probs.classes, 0.0);     // A_c
  std::vector<double> pred_mass(probs.classes, 0.0);   // B_c
  std::vector<std::size_t> gt_count(probs.classes, 0); // G_c

  for (std::size_t pix = 0; pix < gt.labels.size(); ++pix) {
    const std::uint8_t g = gt.labels[pix];
    if (g == kIgnoreId) continue;
    ++gt_count[g];
    for (std::uint32_t c = 0; c < probs.classes; ++c) {
      const double p = static_cast<double>(
          probs.values[static_cast<std::size_t>(c) * pixels + pix]);
      pred_mass[c] += p;
      if (c == g) overlap[c] += p;
    }
  }

  std::vector<std::uint32_t> present;
  for (std::uint32_t c = 0; c < probs.classes; ++c) {
    if (gt_count[c] > 0) present.push_back(c);
  }
  require(!present.empty(), "dice_loss: all pixels ignored");
  const double class_count = static_cast<double>(present.size());

  std::vector<double> class_terms;
  class_terms.reserve(present.size());
  std::vector<double> denom(probs.classes, 0.0);
  std::vector<double> numer(probs.classes, 0.0);
  for (const std::uint32_t c : present) {
    numer[c] = 2.0 * overlap[c] + kDiceSmooth;
    denom[c] = pred_mass[c] + static_cast<double>(gt_count[c]) + kDiceSmooth;
    class_terms.push_back(numer[c] / denom[c]);
  }

  ScalarGrad<T> result;
  result.value = 1.0 - pairwise_sum(class_terms) / class_count;
  result.prob_grad.assign(probs.values.size(), T(0));
  for (const std::uint32_t c : present) {
    const double d2 = denom[c] * denom[c];
    for (std::size_t pix = 0; pix < gt.labels.size(); ++pix) {
      const std::uint8_t g = gt.labels[pix];
      if (g == kIgnoreId) continue;
      const double indicator = g == c ? 1.0 : 0.0;
      const double dterm = (2.0 * indicator * denom[c] - numer[c]) / d2;
      result.prob_grad[static_cast<std::size_t>(c) * pixels + pix] =
          static_cast<T>(-dterm / class_count);
    }
  }
  return result;
}

template <std::floating_point T>
struct SegLossResult {
  double value = 0.0;
  double dice_value = 0.0;
  double ce_value = 0.0;
  std::vector<T> prob_grad;
};

/// lambda3 * Dice + lambda4 * CE, values and gradients.
template <std::floating_point T>
SegLossResult<T> seg_loss(const BasicProbMap<T>& probs, const SegMask& gt,
                          const LossWeights& w) {
  w.validate();
  const ScalarGrad<T> dice = dice_loss(probs, gt);
  const ScalarGrad<T> ce = ce_loss(probs, gt);

  SegLossResult<T> result;
  result.dice_value = dice.value;
  result.ce_value = ce.value;
  result.value = w.lambda3 * dice.value + w.lambda4 * ce.value;
  result.prob_grad.resize(probs.values.size());
  for (std::size_t i = 0; i < result.prob_grad.size(); ++i) {
    result.prob_grad[i] = static_cast<T>(
        w.lambda3 * static_cast<double>(dice.prob_grad[i]) +
        w.lambda4 * static_cast<double>(ce.prob_grad[i]));
  }
  return result;
}

template <std::floating_point T>
struct TotalLossResult {
  double value = 0.0;
  double seg_value = 0.0;
  double nce_value = 0.0;
  double dice_value = 0.0;
  double ce_value = 0.0;
  std::vector<T> prob_grad;     // lambda1 * dL_seg/dprobs
  std::vector<T> feature_grad;  // lambda2 * dL_nce/dfeatures
  std::size_t nce_contributing = 0;
};

/// lambda1 * L_seg + lambda2 * L_nce. The two gradients live on disjoint
/// inputs and are returned separately.
template <std::floating_point T>
TotalLossResult<T> total_loss(const BasicProbMap<T>& probs, const SegMask& gt,
                              const FeatureClip<T>& clip,
                              const NceConfig& cfg, const LossWeights& w) {
  w.validate();
  const SegLossResult<T> seg = seg_loss(probs, gt, w);
  const NceResult<T> nce = nce_loss(clip, cfg);

  TotalLossResult<T> result;
  result.seg_value = seg.value;
  result.nce_value = nce.value;
  result.dice_value = seg.dice_value;
  result.ce_value = seg.ce_value;
  result.nce_contributing = nce.contributing;
  result.value = w.lambda1 * seg.value + w.lambda2 * nce.value;

  result.prob_grad.resize(seg.prob_grad.size());
  for (std::size_t i = 0; i < seg.prob_grad.size(); ++i) {
    result.prob_grad[i] = static_cast<T>(
        w.lambda1 * static_cast<double>(seg.prob_grad[i]));
  }
  result.feature_grad.resize(nce.feature_grad.size());
  for (std::size_t i = 0; i < nce.feature_grad.size(); ++i) {
    result.feature_grad[i] = static_cast<T>(
        w.lambda2 * static_cast<double>(nce.feature_grad[i]));
  }
  return result;
}

}  // namespace vseg
