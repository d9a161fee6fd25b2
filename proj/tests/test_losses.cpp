#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vseg/gradcheck.hpp"
#include "vseg/losses.hpp"

using namespace vseg;
using Catch::Matchers::WithinAbs;

namespace {

FeatureClip<double> make_clip(std::size_t dim,
                              std::vector<std::vector<double>> rows,
                              std::vector<std::uint8_t> classes) {
  FeatureClip<double> clip;
  clip.patch_count = rows.size();
  clip.dim = dim;
  for (const auto& row : rows) {
    clip.features.insert(clip.features.end(), row.begin(), row.end());
  }
  clip.patch_class = std::move(classes);
  clip.frame_index.assign(clip.patch_count, 0);
  return clip;
}

BasicProbMap<double> make_probs(std::uint32_t classes, std::uint32_t w,
                                std::uint32_t h, std::vector<double> values) {
  BasicProbMap<double> probs;
  probs.classes = classes;
  probs.width = w;
  probs.height = h;
  probs.normalized = true;
  probs.values = std::move(values);
  return probs;
}

SegMask make_mask(std::uint32_t w, std::uint32_t h,
                  std::vector<std::uint8_t> labels) {
  SegMask mask;
  mask.width = w;
  mask.height = h;
  mask.labels = std::move(labels);
  return mask;
}

/// Naive evaluation of the contrastive loss straight from the definition,
/// no log-sum-exp shift. Oracle for the stabilized implementation.
double naive_nce_value(const FeatureClip<double>& clip, const NceConfig& cfg,
                       const PairingPlan& plan) {
  auto dot = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < clip.dim; ++d) {
      acc += clip.features[a * clip.dim + d] * clip.features[b * clip.dim + d];
    }
    return acc;
  };
  double sum = 0.0;
  for (const AnchorPairing& pairing : plan.anchors) {
    double anchor_term = 0.0;
    for (const std::size_t p : pairing.positives) {
      const double pos = std::exp(dot(pairing.anchor, p) / cfg.temperature);
      double denom = pos;
      for (const std::size_t n : pairing.negatives) {
        denom += std::exp(dot(pairing.anchor, n) / cfg.temperature);
      }
      anchor_term += std::log(pos / denom);
    }
    sum += anchor_term / static_cast<double>(pairing.positives.size());
  }
  const double den = cfg.divide_by == NceDenominator::kAll
                         ? static_cast<double>(clip.patch_count)
                         : static_cast<double>(plan.anchors.size());
  return -sum / den;
}

NceConfig plain_cfg(double tau, std::size_t negatives) {
  NceConfig cfg;
  cfg.temperature = tau;
  cfg.negatives = negatives;
  cfg.positive_cap = 8;
  cfg.rng_seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("sample_pairs forced structures") {
  SECTION("two patches, same class") {
    const auto clip = make_clip(2, {{1, 0}, {0, 1}}, {4, 4});
    const PairingPlan plan = sample_pairs(clip, plain_cfg(1.0, 4));
    REQUIRE(plan.anchors.size() == 2);
    CHECK(plan.anchors[0].anchor == 0);
    CHECK(plan.anchors[0].positives == std::vector<std::size_t>{1});
    CHECK(plan.anchors[0].negatives.empty());
    CHECK(plan.skipped_anchors == 0);
  }
  SECTION("two classes of two, K=1") {
    const auto clip =
        make_clip(2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}}, {0, 0, 1, 1});
    const PairingPlan plan = sample_pairs(clip, plain_cfg(1.0, 1));
    REQUIRE(plan.anchors.size() == 4);
    for (const AnchorPairing& pairing : plan.anchors) {
      CHECK(pairing.positives.size() == 1);
      CHECK(pairing.negatives.size() == 1);
      const std::uint8_t own = clip.patch_class[pairing.anchor];
      CHECK(clip.patch_class[pairing.positives[0]] == own);
      CHECK(clip.patch_class[pairing.negatives[0]] != own);
    }
  }
  SECTION("all distinct classes: everything skipped") {
    const auto clip = make_clip(1, {{1}, {2}, {3}}, {0, 1, 2});
    const PairingPlan plan = sample_pairs(clip, plain_cfg(1.0, 4));
    CHECK(plan.anchors.empty());
    CHECK(plan.skipped_anchors == 3);
    CHECK_THROWS_WITH(nce_loss(clip, plain_cfg(1.0, 4)),
                      Catch::Matchers::ContainsSubstring("no positive pairs"));
  }
  SECTION("ignore patches are neither anchors nor candidates") {
    const auto clip =
        make_clip(1, {{1}, {1}, {2}, {3}}, {0, 0, kIgnoreId, 1});
    const PairingPlan plan = sample_pairs(clip, plain_cfg(1.0, 8));
    REQUIRE(plan.anchors.size() == 2);  // patch 3 has no peer
    CHECK(plan.ignored_patches == 1);
    CHECK(plan.skipped_anchors == 1);
    for (const AnchorPairing& pairing : plan.anchors) {
      for (const std::size_t n : pairing.negatives) CHECK(n == 3);
    }
  }
}

TEST_CASE("nce closed forms") {
  SECTION("symmetric zero-dot case gives ln 2") {
    const auto clip = make_clip(
        3, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 1});
    const auto result = nce_loss(clip, plain_cfg(1.0, 1));
    CHECK_THAT(result.value, WithinAbs(std::log(2.0), 1e-12));
    CHECK(result.contributing == 2);
    CHECK(result.patch_count == 3);
  }
  SECTION("single positive with dot 1 vs negative with dot 0") {
    const auto clip = make_clip(
        3, {{1, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {0, 0, 1});
    const auto result = nce_loss(clip, plain_cfg(1.0, 1));
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK_THAT(result.value, WithinAbs(expected, 1e-12));
    CHECK_THAT(result.value, WithinAbs(0.313262, 1e-6));
  }
  SECTION("K = 0 gives exactly zero loss and gradient") {
    const auto clip = make_clip(
        2, {{0.3, -2.0}, {1.5, 0.25}, {-1.0, 4.0}}, {0, 0, 1});
    const auto result = nce_loss(clip, plain_cfg(0.1, 0));
    CHECK(result.value == 0.0);
    for (const double g : result.feature_grad) CHECK(g == 0.0);
  }
}

TEST_CASE("nce divisor knob") {
  // 3 labeled patches, one unpaired -> M = 4 (with one ignore), M' = 2
  const auto clip = make_clip(
      2, {{1, 0}, {0, 1}, {1, 1}, {2, 2}}, {0, 0, 1, kIgnoreId});
  NceConfig cfg = plain_cfg(1.0, 2);
  const auto contributing = nce_loss(clip, cfg);
  cfg.divide_by = NceDenominator::kAll;
  const auto all = nce_loss(clip, cfg);
  CHECK(contributing.contributing == 2);
  CHECK_THAT(all.value * 4.0, WithinAbs(contributing.value * 2.0, 1e-12));
}

TEST_CASE("nce stabilized value matches the naive evaluation") {
  Rng rng(2023);
  for (int k = 0; k < 50; ++k) {
    const auto clip = gradcheck::detail::random_clip(rng);
    NceConfig cfg = gradcheck::detail::random_nce_config(rng);
    cfg.normalize_features = false;  // keep the naive oracle simple
    const PairingPlan plan = sample_pairs(clip, cfg);
    if (plan.anchors.empty()) continue;
    const double stabilized = nce_loss(clip, cfg, plan).value;
    const double naive = naive_nce_value(clip, cfg, plan);
    if (!std::isfinite(naive)) continue;  // naive route overflowed
    CHECK_THAT(stabilized,
               WithinAbs(naive, 1e-10 * std::max(1.0, std::abs(naive))));
  }
}

TEST_CASE("nce value survives similarity scales that overflow naively") {
  // dots ~ 1600 / tau 0.01 would overflow exp without the max shift
  const auto clip = make_clip(
      1, {{40.0}, {40.0}, {-40.0}}, {0, 0, 1});
  const auto result = nce_loss(clip, plain_cfg(0.01, 1));
  CHECK(std::isfinite(result.value));
  // positive dot is astronomically larger: loss ~ 0
  CHECK_THAT(result.value, WithinAbs(0.0, 1e-9));
}

TEST_CASE("nce monotonicity via directional perturbation") {
  const double eps = 1e-3;
  const auto base = make_clip(
      2, {{1.0, 0.0}, {0.5, 0.0}, {0.0, 1.0}}, {0, 0, 1});
  const NceConfig cfg = plain_cfg(0.5, 2);
  const double value = nce_loss(base, cfg).value;

  SECTION("raising a positive-pair dot lowers the loss") {
    auto clip = base;
    clip.features[1 * 2 + 0] += eps;  // x1 along x0; negatives unaffected
    CHECK(nce_loss(clip, cfg).value < value);
  }
  SECTION("raising negative-pair dots raises the loss") {
    auto clip = base;
    clip.features[2 * 2 + 0] += eps;  // x2 gains overlap with x0 and x1
    CHECK(nce_loss(clip, cfg).value > value);
  }
}

TEST_CASE("nce determinism") {
  Rng rng(55);
  const auto clip = gradcheck::detail::random_clip(rng);
  NceConfig cfg = gradcheck::detail::random_nce_config(rng);
  cfg.negatives = 2;
  const auto a = nce_loss(clip, cfg);
  const auto b = nce_loss(clip, cfg);
  CHECK(a.value == b.value);
  CHECK(a.feature_grad == b.feature_grad);
}

TEST_CASE("ce closed forms") {
  SECTION("uniform two-class pixel") {
    const auto probs = make_probs(2, 1, 1, {0.5, 0.5});
    const auto result = ce_loss(probs, make_mask(1, 1, {0}));
    CHECK_THAT(result.value, WithinAbs(std::log(2.0), 1e-12));
    // d/dp_true of -ln p = -1/p = -2
    CHECK_THAT(result.prob_grad[0], WithinAbs(-2.0, 1e-12));
    CHECK(result.prob_grad[1] == 0.0);
  }
  SECTION("p_true = 0.25") {
    const auto probs = make_probs(2, 1, 1, {0.25, 0.75});
    const auto result = ce_loss(probs, make_mask(1, 1, {0}));
    CHECK_THAT(result.value, WithinAbs(std::log(4.0), 1e-12));
  }
  SECTION("one-hot correct prediction is zero") {
    const auto probs = make_probs(2, 2, 1, {1.0, 0.0, 0.0, 1.0});
    const auto result = ce_loss(probs, make_mask(2, 1, {0, 1}));
    CHECK_THAT(result.value, WithinAbs(0.0, 1e-12));
  }
  SECTION("ignored pixels are excluded") {
    const auto probs = make_probs(2, 2, 1, {0.5, 0.1, 0.5, 0.9});
    const auto result = ce_loss(probs, make_mask(2, 1, {0, kIgnoreId}));
    CHECK_THAT(result.value, WithinAbs(std::log(2.0), 1e-12));
  }
  SECTION("all pixels ignored is an error") {
    const auto probs = make_probs(2, 1, 1, {0.5, 0.5});
    CHECK_THROWS_WITH(ce_loss(probs, make_mask(1, 1, {kIgnoreId})),
                      Catch::Matchers::ContainsSubstring("ignored"));
  }
  SECTION("clamp keeps a zero probability finite") {
    const auto probs = make_probs(2, 1, 1, {0.0, 1.0});
    const auto result = ce_loss(probs, make_mask(1, 1, {0}));
    CHECK(std::isfinite(result.value));
    CHECK(result.prob_grad[0] == 0.0);  // below the clamp: flat
  }
}

TEST_CASE("dice closed forms") {
  SECTION("perfect one-hot prediction is exactly zero") {
    const auto probs = make_probs(2, 2, 1, {1.0, 0.0, 0.0, 1.0});
    const auto result = dice_loss(probs, make_mask(2, 1, {0, 1}));
    CHECK(result.value == 0.0);
  }
  SECTION("uniform prediction on two pixels") {
    const auto probs = make_probs(2, 2, 1, {0.5, 0.5, 0.5, 0.5});
    const auto result = dice_loss(probs, make_mask(2, 1, {0, 1}));
    CHECK_THAT(result.value, WithinAbs(1.0 / 3.0, 1e-12));
  }
  SECTION("all pixels ignored is an error") {
    const auto probs = make_probs(2, 1, 1, {0.5, 0.5});
    CHECK_THROWS_WITH(dice_loss(probs, make_mask(1, 1, {kIgnoreId})),
                      Catch::Matchers::ContainsSubstring("ignored"));
  }
}

TEST_CASE("seg and total compose exactly") {
  const auto probs = make_probs(2, 2, 1, {0.5, 0.5, 0.5, 0.5});
  const SegMask gt = make_mask(2, 1, {0, 1});
  const auto clip = make_clip(
      3, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 1});
  const NceConfig cfg = plain_cfg(1.0, 1);

  const double dice = dice_loss(probs, gt).value;
  const double ce = ce_loss(probs, gt).value;
  const double nce = nce_loss(clip, cfg).value;

  SECTION("stock weights") {
    const LossWeights w;
    const auto seg = seg_loss(probs, gt, w);
    CHECK(seg.value == 5.0 * dice + 1.0 * ce);
    CHECK_THAT(seg.value, WithinAbs(2.359814, 1e-6));

    const auto total = total_loss(probs, gt, clip, cfg, w);
    CHECK(total.value == 1.0 * (5.0 * dice + 1.0 * ce) + 0.1 * nce);
    CHECK_THAT(total.value, WithinAbs(2.429129, 1e-6));
  }
  SECTION("zero-weight projections") {
    LossWeights w;
    w.lambda3 = 0.0;
    w.lambda4 = 1.0;
    CHECK(seg_loss(probs, gt, w).value == ce);
    w.lambda3 = 1.0;
    w.lambda4 = 0.0;
    CHECK(seg_loss(probs, gt, w).value == dice);

    LossWeights w2;
    w2.lambda1 = 0.0;
    w2.lambda2 = 1.0;
    const auto total = total_loss(probs, gt, clip, cfg, w2);
    CHECK(total.value == nce);
    w2.lambda1 = 1.0;
    w2.lambda2 = 0.0;
    const auto total2 = total_loss(probs, gt, clip, cfg, w2);
    CHECK(total2.value == seg_loss(probs, gt, w2).value);
    for (const double g : total2.feature_grad) CHECK(g == 0.0);
  }
  SECTION("random weight vectors stay exact") {
    Rng rng(7);
    for (int k = 0; k < 20; ++k) {
      const LossWeights w = gradcheck::detail::random_weights(rng);
      const auto total = total_loss(probs, gt, clip, cfg, w);
      CHECK(total.value ==
            w.lambda1 * (w.lambda3 * dice + w.lambda4 * ce) + w.lambda2 * nce);
    }
  }
}

TEST_CASE("loss input validation") {
  const auto probs = make_probs(2, 2, 1, {0.5, 0.5, 0.5, 0.5});
  SECTION("shape mismatch") {
    CHECK_THROWS_WITH(ce_loss(probs, make_mask(3, 1, {0, 1, 0})),
                      Catch::Matchers::ContainsSubstring("mask"));
  }
  SECTION("ground-truth id out of range") {
    CHECK_THROWS_WITH(ce_loss(probs, make_mask(2, 1, {0, 2})),
                      Catch::Matchers::ContainsSubstring("out of range"));
  }
  SECTION("unnormalized map rejected") {
    auto logits = probs;
    logits.normalized = false;
    CHECK_THROWS_WITH(ce_loss(logits, make_mask(2, 1, {0, 1})),
                      Catch::Matchers::ContainsSubstring("normalized"));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  // smaller instance counts here; the acceptance suite runs the full 50
  const std::uint64_t seed = 424242;
  const std::size_t n = 15;
  for (const auto& report : {gradcheck::check_nce(seed, n),
                             gradcheck::check_ce(seed, n),
                             gradcheck::check_dice(seed, n),
                             gradcheck::check_seg(seed, n),
                             gradcheck::check_total(seed, n)}) {
    INFO(report.loss << " max rel err " << report.max_rel_err);
    CHECK(report.max_rel_err < gradcheck::kTolerance);
  }
}
