#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/losses.hpp"
#include "vseg/mask.hpp"
#include "vseg/prob_map.hpp"
#include "vseg/rng.hpp"

namespace vseg {

/// Synthetic multi-frame clip generator settings. Patches cluster around
/// per-class means; later frames are Gaussian-jittered copies of frame 0,
/// standing in for temporally adjacent views of the same content.
struct ToyDataConfig {
  std::size_t classes = 3;
  std::size_t input_dim = 8;
  std::size_t patches_per_frame = 24;
  std::size_t frames = 2;
  double class_margin = 1.0;    // scale of the per-class mean draw
  double sigma_class = 1.0;     // in-class spread within a frame
  double sigma_temporal = 0.1;  // frame-to-frame jitter

  void validate() const {
    require(classes >= 2, "toy data: need at least 2 classes");
    require(classes <= 254, "toy data: at most 254 classes");
    require(input_dim >= 1, "toy data: input_dim must be >= 1");
    require(frames == 2 || frames == 4, "toy data: frames must be 2 or 4");
    require(patches_per_frame >= 2 * classes,
            "toy data: infeasible balance, need patches_per_frame >= 2*classes");
    require(class_margin >= 0 && sigma_class >= 0 && sigma_temporal >= 0,
            "toy data: noise scales must be non-negative");
  }
};

/// Raw (pre-embedding) patch inputs for F consecutive frames, frame-major.
/// Frame t+1 equals frame t plus temporal jitter; patch j of every frame
/// carries class j % C, so labels are balanced within one.
struct SynthClip {
  std::size_t frames = 0;
  std::size_t patches_per_frame = 0;
  std::size_t input_dim = 0;
  std::vector<double> inputs;             // (F*M) x D_in
  std::vector<std::uint8_t> patch_class;  // F*M
  std::vector<std::uint8_t> frame_index;  // F*M

  std::size_t total_patches() const { return frames * patches_per_frame; }
};

inline SynthClip generate(std::uint64_t seed, const ToyDataConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(seed));

  SynthClip clip;
  clip.frames = cfg.frames;
  clip.patches_per_frame = cfg.patches_per_frame;
  clip.input_dim = cfg.input_dim;

  std::vector<double> means(cfg.classes * cfg.input_dim);
  for (double& m : means) m = cfg.class_margin * rng.gaussian();

  const std::size_t total = clip.total_patches();
  clip.inputs.resize(total * cfg.input_dim);
  clip.patch_class.resize(total);
  clip.frame_index.resize(total);

  // frame 0: class mean + in-class noise
  for (std::size_t j = 0; j < cfg.patches_per_frame; ++j) {
    const std::size_t cls = j % cfg.classes;
    clip.patch_class[j] = static_cast<std::uint8_t>(cls);
    clip.frame_index[j] = 0;
    for (std::size_t d = 0; d < cfg.input_dim; ++d) {
      clip.inputs[j * cfg.input_dim + d] =
          means[cls * cfg.input_dim + d] + cfg.sigma_class * rng.gaussian();
    }
  }
  // frame t = frame t-1 + temporal jitter
  for (std::size_t f = 1; f < cfg.frames; ++f) {
    for (std::size_t j = 0; j < cfg.patches_per_frame; ++j) {
      const std::size_t cur = f * cfg.patches_per_frame + j;
      const std::size_t prev = (f - 1) * cfg.patches_per_frame + j;
      clip.patch_class[cur] = clip.patch_class[j];
      clip.frame_index[cur] = static_cast<std::uint8_t>(f);
      for (std::size_t d = 0; d < cfg.input_dim; ++d) {
        clip.inputs[cur * cfg.input_dim + d] =
            clip.inputs[prev * cfg.input_dim + d] +
            cfg.sigma_temporal * rng.gaussian();
      }
    }
  }
  return clip;
}

/// Linear embedding + linear classifier. Stands in for the backbone/encoder
/// at desk scale: every gradient stays hand-checkable.
struct ToyModel {
  std::size_t input_dim = 0;
  std::size_t embed_dim = 0;
  std::size_t classes = 0;
  std::vector<double> embed;     // input_dim x embed_dim
  std::vector<double> classify;  // embed_dim x classes

  static ToyModel init(std::size_t input_dim, std::size_t embed_dim,
                       std::size_t classes, std::uint64_t seed) {
    require(input_dim >= 1 && embed_dim >= 1 && classes >= 2,
            "ToyModel: bad dimensions");
    ToyModel model;
    model.input_dim = input_dim;
    model.embed_dim = embed_dim;
    model.classes = classes;
    Rng rng(mix_seed(seed, 0x746f796dULL));
    model.embed.resize(input_dim * embed_dim);
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (double& w : model.embed) w = w_scale * rng.gaussian();
    model.classify.resize(embed_dim * classes);
    const double v_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (double& v : model.classify) v = v_scale * rng.gaussian();
    return model;
  }
};

/// Embeds every patch of the clip: e = u W.
inline FeatureClip<double> embed_clip(const ToyModel& model,
                                      const SynthClip& clip) {
  require(clip.input_dim == model.input_dim,
          "embed_clip: clip input_dim ", clip.input_dim,
          " does not match model ", model.input_dim);
  const std::size_t total = clip.total_patches();
  FeatureClip<double> features;
  features.patch_count = total;
  features.dim = model.embed_dim;
  features.features.assign(total * model.embed_dim, 0.0);
  features.patch_class = clip.patch_class;
  features.frame_index = clip.frame_index;
  for (std::size_t j = 0; j < total; ++j) {
    for (std::size_t k = 0; k < model.input_dim; ++k) {
      const double u = clip.inputs[j * model.input_dim + k];
      for (std::size_t d = 0; d < model.embed_dim; ++d) {
        features.features[j * model.embed_dim + d] +=
            u * model.embed[k * model.embed_dim + d];
      }
    }
  }
  return features;
}

namespace detail {

/// Softmax over classifier logits; each patch becomes one "pixel" of a
/// 1-row probability map.
inline BasicProbMap<double> classify_probs(const ToyModel& model,
                                           const FeatureClip<double>& e) {
  const std::size_t total = e.patch_count;
  BasicProbMap<double> probs;
  probs.classes = static_cast<std::uint32_t>(model.classes);
  probs.width = static_cast<std::uint32_t>(total);
  probs.height = 1;
  probs.normalized = true;
  probs.values.assign(model.classes * total, 0.0);

  std::vector<double> logits(model.classes);
  for (std::size_t j = 0; j < total; ++j) {
    for (std::size_t c = 0; c < model.classes; ++c) {
      double z = 0.0;
      for (std::size_t d = 0; d < model.embed_dim; ++d) {
        z += e.features[j * model.embed_dim + d] *
             model.classify[d * model.classes + c];
      }
      logits[c] = z;
    }
    double max_z = logits[0];
    for (const double z : logits) max_z = std::max(max_z, z);
    double sum = 0.0;
    for (const double z : logits) sum += std::exp(z - max_z);
    for (std::size_t c = 0; c < model.classes; ++c) {
      probs.values[c * total + j] = std::exp(logits[c] - max_z) / sum;
    }
  }
  return probs;
}

}  // namespace detail

struct StepLog {
  std::size_t step = 0;
  double total = 0.0;
  double seg = 0.0;
  double nce = 0.0;
};

struct TrainResult {
  ToyModel model;
  std::vector<StepLog> log;
};

/// Plain gradient descent on lambda1*L_seg + lambda2*L_nce over the clip
/// stream (clips are cycled in order). The pair sampling is fixed by
/// cfg.rng_seed, so a repeated clip presents an identical objective and
/// lr = 0 leaves both parameters and logged losses constant.
inline TrainResult train(ToyModel model, std::span<const SynthClip> clips,
                         const NceConfig& cfg, const LossWeights& weights,
                         double lr, std::size_t steps) {
  require(!clips.empty(), "train: no clips");
  require(std::isfinite(lr) && lr >= 0.0, "train: bad learning rate");
  weights.validate();
  cfg.validate();

  TrainResult result;
  result.log.reserve(steps);

  for (std::size_t step = 0; step < steps; ++step) {
    const SynthClip& clip = clips[step % clips.size()];
    const std::size_t total = clip.total_patches();

    const FeatureClip<double> e = embed_clip(model, clip);
    const BasicProbMap<double> probs = detail::classify_probs(model, e);
    SegMask gt;
    gt.width = static_cast<std::uint32_t>(total);
    gt.height = 1;
    gt.labels = clip.patch_class;

    TotalLossResult<double> loss;
    try {
      loss = total_loss(probs, gt, e, cfg, weights);
    } catch (const Error& e) {
      fail("train: abort at step ", step, ": ", e.what());
    }
    require(std::isfinite(loss.value), "train: non-finite loss at step ",
            step);
    result.log.push_back({step, loss.value, loss.seg_value, loss.nce_value});

    // Backprop through the softmax classifier head:
    // dz_c = p_c (dp_c - sum_k dp_k p_k), de += dz V^T, dV = e^T dz.
    std::vector<double> grad_e = loss.feature_grad;  // NCE path, on e directly
    std::vector<double> grad_v(model.classify.size(), 0.0);
    std::vector<double> dz(model.classes);
    for (std::size_t j = 0; j < total; ++j) {
      double inner = 0.0;
      for (std::size_t c = 0; c < model.classes; ++c) {
        inner += loss.prob_grad[c * total + j] * probs.values[c * total + j];
      }
      for (std::size_t c = 0; c < model.classes; ++c) {
        dz[c] = probs.values[c * total + j] *
                (loss.prob_grad[c * total + j] - inner);
      }
      for (std::size_t d = 0; d < model.embed_dim; ++d) {
        const double e_jd = e.features[j * model.embed_dim + d];
        double acc = 0.0;
        for (std::size_t c = 0; c < model.classes; ++c) {
          acc += dz[c] * model.classify[d * model.classes + c];
          grad_v[d * model.classes + c] += e_jd * dz[c];
        }
        grad_e[j * model.embed_dim + d] += acc;
      }
    }

    std::vector<double> grad_w(model.embed.size(), 0.0);
    for (std::size_t j = 0; j < total; ++j) {
      for (std::size_t k = 0; k < model.input_dim; ++k) {
        const double u = clip.inputs[j * model.input_dim + k];
        for (std::size_t d = 0; d < model.embed_dim; ++d) {
          grad_w[k * model.embed_dim + d] +=
              u * grad_e[j * model.embed_dim + d];
        }
      }
    }

    for (std::size_t i = 0; i < model.embed.size(); ++i) {
      model.embed[i] -= lr * grad_w[i];
    }
    for (std::size_t i = 0; i < model.classify.size(); ++i) {
      model.classify[i] -= lr * grad_v[i];
    }
    for (const double w : model.embed) {
      require(std::isfinite(w), "train: non-finite parameter at step ", step);
    }
    for (const double v : model.classify) {
      require(std::isfinite(v), "train: non-finite parameter at step ", step);
    }
  }

  result.model = std::move(model);
  return result;
}

struct SeparationReport {
  double intra_cosine = 0.0;  // mean cosine over same-class embedding pairs
  double inter_cosine = 0.0;  // mean cosine over cross-class pairs
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;
  std::vector<std::pair<std::uint8_t, std::size_t>> class_counts;
  std::vector<std::uint8_t> skipped_classes;  // fewer than 2 patches
};

/// Pooled pairwise cosine statistics of the embedded clip, computed from
/// per-class sums of unit vectors: sum_{i<j} cos_ij = (|S|^2 - sum|x|^2)/2.
inline SeparationReport separation_report(const ToyModel& model,
                                          const SynthClip& clip) {
  const FeatureClip<double> e = embed_clip(model, clip);
  const std::size_t dim = e.dim;

  std::vector<double> unit(e.features.size());
  std::vector<bool> labeled(e.patch_count, false);
  for (std::size_t j = 0; j < e.patch_count; ++j) {
    if (e.patch_class[j] == kIgnoreId) continue;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = e.features[j * dim + d];
      sq += v * v;
    }
    require(sq > 0.0, "separation_report: zero-norm embedding at patch ", j);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t d = 0; d < dim; ++d) {
      unit[j * dim + d] = e.features[j * dim + d] * inv;
    }
    labeled[j] = true;
  }

  auto pair_sum = [&](const std::vector<std::size_t>& members) {
    std::vector<double> s(dim, 0.0);
    double self = 0.0;
    for (const std::size_t j : members) {
      for (std::size_t d = 0; d < dim; ++d) {
        s[d] += unit[j * dim + d];
        self += unit[j * dim + d] * unit[j * dim + d];
      }
    }
    double total_sq = 0.0;
    for (const double v : s) total_sq += v * v;
    return (total_sq - self) / 2.0;
  };

  std::vector<std::vector<std::size_t>> by_class(255);
  std::vector<std::size_t> all;
  for (std::size_t j = 0; j < e.patch_count; ++j) {
    if (!labeled[j]) continue;
    by_class[e.patch_class[j]].push_back(j);
    all.push_back(j);
  }

  SeparationReport report;
  double intra_sum = 0.0;  // singleton classes contribute exactly zero
  std::size_t class_pairs = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const std::size_t n = by_class[c].size();
    if (n == 0) continue;
    report.class_counts.emplace_back(static_cast<std::uint8_t>(c), n);
    if (n < 2) {
      report.skipped_classes.push_back(static_cast<std::uint8_t>(c));
      continue;
    }
    intra_sum += pair_sum(by_class[c]);
    class_pairs += n * (n - 1) / 2;
  }
  require(class_pairs > 0, "separation_report: no same-class pairs");
  report.intra_pairs = class_pairs;
  report.intra_cosine = intra_sum / static_cast<double>(class_pairs);

  const std::size_t n_all = all.size();
  const std::size_t total_pairs = n_all * (n_all - 1) / 2;
  std::size_t same_pairs = 0;
  for (const auto& members : by_class) {
    same_pairs += members.size() * (members.size() - 1) / 2;
  }
  report.inter_pairs = total_pairs - same_pairs;
  require(report.inter_pairs > 0, "separation_report: need >= 2 classes");
  report.inter_cosine =
      (pair_sum(all) - intra_sum) / static_cast<double>(report.inter_pairs);
  return report;
}

}  // namespace vseg
