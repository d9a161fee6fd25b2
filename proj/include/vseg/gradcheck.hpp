#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vseg/losses.hpp"
#include "vseg/mask.hpp"
#include "vseg/prob_map.hpp"
#include "vseg/rng.hpp"

namespace vseg::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

/// Central finite differences of a scalar function, f64 throughout. The
/// oracle side of every gradient check: it never touches the analytic path.
template <typename F>
std::vector<double> central_diff(F&& f, std::vector<double> x,
                                 double h = kStep) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double hi = f(x);
    x[i] = saved - h;
    const double lo = f(x);
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

/// Componentwise |a-n| / max(|a|, |n|, floor). The floor marks the scale
/// below which central differences at h=1e-5 cannot certify a relative
/// error (f64 cancellation noise reaches ~1e-9 on O(100) loss values);
/// components under it are held to |a-n| <= tol * floor instead.
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& numeric,
                          double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

struct Report {
  std::string loss;
  std::size_t instances = 0;
  double max_rel_err = 0.0;

  bool pass() const { return max_rel_err < kTolerance; }
};

namespace detail {

/// Interior-point probability map: every entry bounded away from 0 so the
/// +-h probes stay in-domain and clear of the CE clamp.
inline BasicProbMap<double> random_probs(Rng& rng) {
  BasicProbMap<double> probs;
  probs.classes = static_cast<std::uint32_t>(2 + rng.bounded(4));  // 2..5
  probs.height = static_cast<std::uint32_t>(1 + rng.bounded(8));
  probs.width = static_cast<std::uint32_t>(1 + rng.bounded(8));
  probs.normalized = true;
  probs.values.resize(probs.volume());
  const std::size_t pixels = probs.pixel_count();
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    double sum = 0.0;
    for (std::uint32_t c = 0; c < probs.classes; ++c) {
      const double g = rng.gaussian();
      const double raw = 0.1 + g * g;
      probs.values[static_cast<std::size_t>(c) * pixels + pix] = raw;
      sum += raw;
    }
    for (std::uint32_t c = 0; c < probs.classes; ++c) {
      probs.values[static_cast<std::size_t>(c) * pixels + pix] /= sum;
    }
  }
  return probs;
}

inline SegMask random_mask_for(const BasicProbMap<double>& probs, Rng& rng) {
  SegMask gt;
  gt.width = probs.width;
  gt.height = probs.height;
  gt.labels.resize(gt.pixel_count());
  for (std::uint8_t& label : gt.labels) {
    label = rng.bounded(100) < 15
                ? kIgnoreId
                : static_cast<std::uint8_t>(rng.bounded(probs.classes));
  }
  gt.labels[0] = static_cast<std::uint8_t>(rng.bounded(probs.classes));
  return gt;
}

inline FeatureClip<double> random_clip(Rng& rng) {
  FeatureClip<double> clip;
  clip.patch_count = 2 + rng.bounded(15);  // 2..16
  clip.dim = 1 + rng.bounded(16);
  clip.features.resize(clip.patch_count * clip.dim);
  for (std::size_t i = 0; i < clip.patch_count; ++i) {
    // keep norms bounded away from zero: the +-h probes must stay clear of
    // the normalization singularity
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t d = 0; d < clip.dim; ++d) {
        const double g = rng.gaussian();
        clip.features[i * clip.dim + d] = g;
        sq += g * g;
      }
    } while (sq < 0.25);
  }
  const std::uint64_t label_classes = 1 + rng.bounded(4);
  clip.patch_class.resize(clip.patch_count);
  clip.frame_index.resize(clip.patch_count);
  for (std::size_t i = 0; i < clip.patch_count; ++i) {
    clip.patch_class[i] =
        rng.bounded(10) == 0
            ? kIgnoreId
            : static_cast<std::uint8_t>(rng.bounded(label_classes));
    clip.frame_index[i] = static_cast<std::uint8_t>(rng.bounded(2));
  }
  // guarantee at least one anchor with a positive peer
  clip.patch_class[0] = static_cast<std::uint8_t>(rng.bounded(label_classes));
  clip.patch_class[1] = clip.patch_class[0];
  return clip;
}

inline NceConfig random_nce_config(Rng& rng) {
  static constexpr double kTaus[] = {0.07, 0.1, 0.5, 1.0};
  NceConfig cfg;
  cfg.temperature = kTaus[rng.bounded(4)];
  cfg.negatives = rng.bounded(6);
  cfg.positive_cap = 1 + rng.bounded(4);
  cfg.rng_seed = rng.next();
  cfg.normalize_features = rng.bounded(2) == 1;
  cfg.divide_by = rng.bounded(2) == 1 ? NceDenominator::kAll
                                      : NceDenominator::kContributing;
  return cfg;
}

inline LossWeights random_weights(Rng& rng) {
  LossWeights w;
  w.lambda1 = 3.0 * rng.uniform();
  w.lambda2 = 3.0 * rng.uniform();
  w.lambda3 = 3.0 * rng.uniform();
  w.lambda4 = 3.0 * rng.uniform();
  return w;
}

template <typename Value, typename Analytic>
double check_prob_loss(std::uint64_t seed, std::size_t instances,
                       Value&& value_of, Analytic&& analytic_of) {
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(mix_seed(seed, k));
    BasicProbMap<double> probs = random_probs(rng);
    const SegMask gt = random_mask_for(probs, rng);

    const std::vector<double> analytic = analytic_of(probs, gt);
    auto f = [&](const std::vector<double>& x) {
      BasicProbMap<double> probe = probs;
      probe.values = x;
      return value_of(probe, gt);
    };
    const std::vector<double> numeric = central_diff(f, probs.values);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  return worst;
}

}  // namespace detail

inline Report check_ce(std::uint64_t seed, std::size_t instances) {
  const double worst = detail::check_prob_loss(
      mix_seed(seed, 0xce), instances,
      [](const BasicProbMap<double>& p, const SegMask& g) {
        return ce_loss(p, g).value;
      },
      [](const BasicProbMap<double>& p, const SegMask& g) {
        return ce_loss(p, g).prob_grad;
      });
  return {"ce", instances, worst};
}

inline Report check_dice(std::uint64_t seed, std::size_t instances) {
  const double worst = detail::check_prob_loss(
      mix_seed(seed, 0xd1ce), instances,
      [](const BasicProbMap<double>& p, const SegMask& g) {
        return dice_loss(p, g).value;
      },
      [](const BasicProbMap<double>& p, const SegMask& g) {
        return dice_loss(p, g).prob_grad;
      });
  return {"dice", instances, worst};
}

inline Report check_seg(std::uint64_t seed, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(mix_seed(seed, mix_seed(k, 0x5e6)));
    BasicProbMap<double> probs = detail::random_probs(rng);
    const SegMask gt = detail::random_mask_for(probs, rng);
    const LossWeights w = detail::random_weights(rng);

    const std::vector<double> analytic = seg_loss(probs, gt, w).prob_grad;
    auto f = [&](const std::vector<double>& x) {
      BasicProbMap<double> probe = probs;
      probe.values = x;
      return seg_loss(probe, gt, w).value;
    };
    const std::vector<double> numeric = central_diff(f, probs.values);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  return {"seg", instances, worst};
}

inline Report check_nce(std::uint64_t seed, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(mix_seed(seed, mix_seed(k, 0x9ce)));
    FeatureClip<double> clip = detail::random_clip(rng);
    const NceConfig cfg = detail::random_nce_config(rng);
    const PairingPlan plan = sample_pairs(clip, cfg);

    const std::vector<double> analytic =
        nce_loss(clip, cfg, plan).feature_grad;
    auto f = [&](const std::vector<double>& x) {
      FeatureClip<double> probe = clip;
      probe.features = x;
      return nce_loss(probe, cfg, plan).value;
    };
    const std::vector<double> numeric = central_diff(f, clip.features);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  return {"nce", instances, worst};
}

inline Report check_total(std::uint64_t seed, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(mix_seed(seed, mix_seed(k, 0x707a1)));
    BasicProbMap<double> probs = detail::random_probs(rng);
    const SegMask gt = detail::random_mask_for(probs, rng);
    FeatureClip<double> clip = detail::random_clip(rng);
    const NceConfig cfg = detail::random_nce_config(rng);
    const LossWeights w = detail::random_weights(rng);

    const TotalLossResult<double> res = total_loss(probs, gt, clip, cfg, w);
    std::vector<double> analytic = res.prob_grad;
    analytic.insert(analytic.end(), res.feature_grad.begin(),
                    res.feature_grad.end());

    const std::size_t split = probs.values.size();
    std::vector<double> packed = probs.values;
    packed.insert(packed.end(), clip.features.begin(), clip.features.end());
    auto f = [&](const std::vector<double>& x) {
      BasicProbMap<double> probe_p = probs;
      probe_p.values.assign(x.begin(), x.begin() + split);
      FeatureClip<double> probe_c = clip;
      probe_c.features.assign(x.begin() + split, x.end());
      return total_loss(probe_p, gt, probe_c, cfg, w).value;
    };
    const std::vector<double> numeric = central_diff(f, packed);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  return {"total", instances, worst};
}

inline std::vector<Report> check_all(std::uint64_t seed,
                                     std::size_t instances) {
  return {check_nce(seed, instances), check_ce(seed, instances),
          check_dice(seed, instances), check_seg(seed, instances),
          check_total(seed, instances)};
}

}  // namespace vseg::gradcheck
