// vseg: file-based pipelines over segmentation masks (PGM) and class score
// tensors (LGT). Every subcommand is a thin adapter over the library; all
// randomness takes an explicit --seed and all outputs are written atomically.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vseg/ensemble.hpp"
#include "vseg/error.hpp"
#include "vseg/fsio.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/label_map.hpp"
#include "vseg/losses.hpp"
#include "vseg/mask.hpp"
#include "vseg/metrics.hpp"
#include "vseg/prob_map.hpp"
#include "vseg/toytrain.hpp"
#include "vseg/tta.hpp"
#include "vseg/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

vseg::SegMask load_mask(const fs::path& path) {
  try {
    return vseg::read_mask(vseg::read_file(path));
  } catch (const vseg::Error& e) {
    vseg::fail(path.string(), ": ", e.what());
  }
}

vseg::ProbMap load_tensor(const fs::path& path) {
  try {
    return vseg::read_tensor(vseg::read_file(path));
  } catch (const vseg::Error& e) {
    vseg::fail(path.string(), ": ", e.what());
  }
}

void save_mask(const fs::path& path, const vseg::SegMask& mask) {
  vseg::atomic_write_file(path, vseg::write_mask(mask));
}

void save_tensor(const fs::path& path, const vseg::ProbMap& map) {
  vseg::atomic_write_file(path, vseg::write_tensor(map));
}

/// Relative *.pgm paths under root, sorted; the stable input order every
/// batch subcommand relies on.
std::vector<fs::path> list_pgm(const fs::path& root) {
  vseg::require(fs::is_directory(root), "not a directory: ", root.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      paths.push_back(fs::relative(entry.path(), root));
    }
  }
  std::sort(paths.begin(), paths.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.generic_string() < b.generic_string();
            });
  vseg::require(!paths.empty(), "no .pgm files under ", root.string());
  return paths;
}

// ---------------------------------------------------------------------------
// remap

struct RemapOptions {
  std::string table;
  std::string input;
  std::string output;
  std::string policy = "ignore";
};

int run_remap(const RemapOptions& opt) {
  const auto bytes = vseg::read_file(opt.table);
  const vseg::MappingTable table = vseg::parse_mapping(
      std::string_view(reinterpret_cast<const char*>(bytes.data()),
                       bytes.size()));
  const vseg::MissingPolicy policy = opt.policy == "error"
                                         ? vseg::MissingPolicy::kError
                                         : vseg::MissingPolicy::kToIgnore;

  if (fs::is_directory(opt.input)) {
    const auto files = list_pgm(opt.input);
    for (const fs::path& rel : files) {
      const vseg::SegMask mask = load_mask(fs::path(opt.input) / rel);
      const vseg::SegMask mapped = vseg::remap(mask, table, policy);
      const fs::path out = fs::path(opt.output) / rel;
      fs::create_directories(out.parent_path().empty() ? fs::path(opt.output)
                                                       : out.parent_path());
      save_mask(out, mapped);
    }
    std::cout << "remapped " << files.size() << " masks\n";
  } else {
    const vseg::SegMask mask = load_mask(opt.input);
    save_mask(opt.output, vseg::remap(mask, table, policy));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// filter

struct FilterOptions {
  std::string input;
  std::string output;  // empty = stdout
  double threshold = 0.8;
  bool strict = false;
};

int run_filter(const FilterOptions& opt) {
  const auto files = list_pgm(opt.input);
  std::string manifest;
  for (const fs::path& rel : files) {
    const vseg::SegMask mask = load_mask(fs::path(opt.input) / rel);
    const double ratio = vseg::valid_ratio(mask);
    const auto decision =
        vseg::filter_decision(mask, opt.threshold, opt.strict);
    manifest += rel.generic_string();
    manifest += '\t';
    manifest += fmt_fixed(ratio, 6);
    manifest += '\t';
    manifest += decision == vseg::FilterDecision::kKeep ? "keep" : "drop";
    manifest += '\n';
  }
  if (opt.output.empty()) {
    std::cout << manifest;
  } else {
    vseg::atomic_write_file(opt.output, manifest);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::uint32_t classes = 0;
  bool all_classes = false;
  bool per_video = false;
};

std::string stem_key(const fs::path& rel) {
  fs::path p = rel;
  p.replace_extension();
  return p.generic_string();
}

int run_eval(const EvalOptions& opt) {
  const auto pred_files = list_pgm(opt.pred_dir);
  const auto gt_files = list_pgm(opt.gt_dir);

  std::map<std::string, fs::path> pred_by_stem;
  for (const fs::path& rel : pred_files) pred_by_stem[stem_key(rel)] = rel;
  std::map<std::string, fs::path> gt_by_stem;
  for (const fs::path& rel : gt_files) gt_by_stem[stem_key(rel)] = rel;

  std::vector<std::string> missing;
  for (const auto& [stem, rel] : pred_by_stem) {
    if (!gt_by_stem.count(stem)) missing.push_back(stem + " (no ground truth)");
  }
  for (const auto& [stem, rel] : gt_by_stem) {
    if (!pred_by_stem.count(stem)) missing.push_back(stem + " (no prediction)");
  }
  if (!missing.empty()) {
    std::string joined;
    for (const std::string& m : missing) joined += "\n  " + m;
    vseg::fail("unpaired files:", joined);
  }

  if (opt.per_video) {
    // video id = first path component of the relative path
    std::map<std::string, vseg::ConfusionMatrix> videos;
    for (const auto& [stem, rel] : gt_by_stem) {
      const fs::path rel_path = rel;
      const std::string video =
          rel_path.has_parent_path() ? rel_path.begin()->generic_string()
                                     : std::string(".");
      const vseg::SegMask pred =
          load_mask(fs::path(opt.pred_dir) / pred_by_stem[stem]);
      const vseg::SegMask gt = load_mask(fs::path(opt.gt_dir) / rel);
      auto [it, inserted] =
          videos.try_emplace(video, vseg::ConfusionMatrix(opt.classes));
      it->second.accumulate(pred, gt);
    }
    double sum = 0.0;
    for (const auto& [video, cm] : videos) {
      const vseg::MiouResult res = vseg::miou(cm, opt.all_classes);
      std::cout << video << '\t' << fmt_fixed(res.value, 6) << '\n';
      sum += res.value;
    }
    std::cout << "mean\t"
              << fmt_fixed(sum / static_cast<double>(videos.size()), 6)
              << '\n';
    return 0;
  }

  vseg::ConfusionMatrix cm(opt.classes);
  for (const auto& [stem, rel] : gt_by_stem) {
    const vseg::SegMask pred =
        load_mask(fs::path(opt.pred_dir) / pred_by_stem[stem]);
    const vseg::SegMask gt = load_mask(fs::path(opt.gt_dir) / rel);
    cm.accumulate(pred, gt);
  }
  const vseg::MiouResult res = vseg::miou(cm, opt.all_classes);
  for (const vseg::ClassIou& entry : res.per_class) {
    if (entry.present) {
      std::cout << "class " << entry.class_id << " iou "
                << entry.iou.to_string() << ' '
                << fmt_fixed(entry.iou.to_double(), 6) << '\n';
    } else {
      std::cout << "class " << entry.class_id << " absent\n";
    }
  }
  std::cout << "miou " << res.miou.to_string() << ' '
            << fmt_fixed(res.value, 6) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// ensemble / vote / argmax

struct EnsembleOptions {
  std::vector<std::string> inputs;
  std::string output;
  double tau = -1.0;
  bool mean = false;
};

int run_ensemble(const EnsembleOptions& opt) {
  vseg::require(opt.mean != (opt.tau >= 0.0),
                "ensemble: pass exactly one of --tau or --mean");
  std::vector<vseg::ProbMap> maps;
  maps.reserve(opt.inputs.size());
  for (const std::string& path : opt.inputs) maps.push_back(load_tensor(path));

  if (opt.mean) {
    save_tensor(opt.output, vseg::soft_average<float>(maps));
  } else {
    vseg::require(maps.size() == 2, "ensemble --tau takes exactly 2 inputs");
    save_tensor(opt.output, vseg::weighted_pair(maps[0], maps[1], opt.tau));
  }
  return 0;
}

struct VoteOptions {
  std::vector<std::string> inputs;
  std::string output;
};

int run_vote(const VoteOptions& opt) {
  std::vector<vseg::SegMask> masks;
  masks.reserve(opt.inputs.size());
  for (const std::string& path : opt.inputs) masks.push_back(load_mask(path));
  save_mask(opt.output, vseg::vote(masks));
  return 0;
}

struct ArgmaxOptions {
  std::string input;
  std::string output;
};

int run_argmax(const ArgmaxOptions& opt) {
  save_mask(opt.output, vseg::argmax_map(load_tensor(opt.input)));
  return 0;
}

// ---------------------------------------------------------------------------
// tta-merge / flip-merge

struct TtaOptions {
  std::string plan;  // "H,W,hw,ww,s"
  std::vector<std::string> inputs;
  std::string output;
  bool print_plan = false;
};

std::vector<std::uint32_t> parse_plan_spec(const std::string& text) {
  std::vector<std::uint32_t> fields;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      fields.push_back(static_cast<std::uint32_t>(std::stoul(token)));
    } catch (...) {
      vseg::fail("--plan: bad field \"", token, "\"");
    }
  }
  vseg::require(fields.size() == 5, "--plan wants H,W,hw,ww,s");
  return fields;
}

int run_tta_merge(const TtaOptions& opt) {
  const auto spec = parse_plan_spec(opt.plan);
  const vseg::WindowPlan plan =
      vseg::plan_windows(spec[0], spec[1], spec[2], spec[3], spec[4]);
  if (opt.print_plan) {
    for (const auto& [x0, y0] : plan.origins) {
      std::cout << x0 << ',' << y0 << '\n';
    }
    return 0;
  }
  vseg::require(!opt.output.empty(), "tta-merge: missing -o output");
  std::vector<vseg::ProbMap> windows;
  windows.reserve(opt.inputs.size());
  for (const std::string& path : opt.inputs) {
    windows.push_back(load_tensor(path));
  }
  save_tensor(opt.output, vseg::stitch<float>(plan, windows));
  return 0;
}

struct FlipOptions {
  std::string plain;
  std::string flipped;
  std::string output;
};

int run_flip_merge(const FlipOptions& opt) {
  const vseg::ProbMap plain = load_tensor(opt.plain);
  const vseg::ProbMap flipped = load_tensor(opt.flipped);
  save_tensor(opt.output, vseg::hflip_merge(plain, flipped));
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / nce-eval

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 50;
};

int run_gradcheck(const GradcheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = vseg::gradcheck::check_all(opt.seed, opt.instances);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  bool all_pass = true;
  for (const auto& report : reports) {
    std::cout << report.loss << " max_rel_err " << fmt_full(report.max_rel_err)
              << " instances " << report.instances << ' '
              << (report.pass() ? "pass" : "FAIL") << '\n';
    all_pass = all_pass && report.pass();
  }
  std::cerr << "elapsed_s " << fmt_fixed(elapsed, 3) << '\n';
  return all_pass ? 0 : 1;
}

struct NceEvalOptions {
  std::string frame0;
  std::string frame1;
  std::string class_file;
  std::uint64_t seed = 0;
  double tau = 0.1;
  std::size_t negatives = 64;
  std::size_t positive_cap = 8;
  bool normalize = false;
  std::string divide_by = "contributing";
};

/// Frame features ride in LGT tensors shaped 1 x M x D (one channel, one
/// row per patch); the sidecar lists one class id per patch, frame 0 first.
vseg::FeatureClip<double> load_feature_clip(const NceEvalOptions& opt) {
  const vseg::ProbMap f0 = load_tensor(opt.frame0);
  const vseg::ProbMap f1 = load_tensor(opt.frame1);
  vseg::require(f0.classes == 1 && f1.classes == 1,
                "nce-eval: feature tensors must have C=1 (got ", f0.classes,
                " and ", f1.classes, ")");
  vseg::require(f0.width == f1.width,
                "nce-eval: embedding dims differ (", f0.width, " vs ",
                f1.width, ")");

  vseg::FeatureClip<double> clip;
  clip.dim = f0.width;
  clip.patch_count = static_cast<std::size_t>(f0.height) + f1.height;
  clip.features.reserve(clip.patch_count * clip.dim);
  for (const float v : f0.values) clip.features.push_back(v);
  for (const float v : f1.values) clip.features.push_back(v);

  const auto bytes = vseg::read_file(opt.class_file);
  std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::istringstream in(text);
  std::string token;
  std::vector<std::uint8_t> classes;
  while (in >> token) {
    int value = -1;
    try {
      value = std::stoi(token);
    } catch (...) {
      vseg::fail("nce-eval: non-integer class id \"", token, "\"");
    }
    vseg::require(value >= 0 && value <= 255,
                  "nce-eval: class id ", value, " out of range");
    classes.push_back(static_cast<std::uint8_t>(value));
  }
  vseg::require(classes.size() == clip.patch_count,
                "nce-eval: sidecar has ", classes.size(), " ids but tensors ",
                "hold ", clip.patch_count, " patches");
  clip.patch_class = std::move(classes);
  clip.frame_index.assign(clip.patch_count, 0);
  for (std::size_t i = f0.height; i < clip.patch_count; ++i) {
    clip.frame_index[i] = 1;
  }
  return clip;
}

int run_nce_eval(const NceEvalOptions& opt) {
  const vseg::FeatureClip<double> clip = load_feature_clip(opt);
  vseg::NceConfig cfg;
  cfg.temperature = opt.tau;
  cfg.negatives = opt.negatives;
  cfg.positive_cap = opt.positive_cap;
  cfg.rng_seed = opt.seed;
  cfg.normalize_features = opt.normalize;
  cfg.divide_by = opt.divide_by == "all" ? vseg::NceDenominator::kAll
                                         : vseg::NceDenominator::kContributing;
  const auto result = vseg::nce_loss(clip, cfg);
  std::cout << "nce " << fmt_full(result.value) << '\n';
  std::cout << "patches " << result.patch_count << '\n';
  std::cout << "contributing " << result.contributing << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train-toy

struct TrainToyOptions {
  std::uint64_t seed = 0;
  double lambda1 = 1.0, lambda2 = 0.1, lambda3 = 5.0, lambda4 = 1.0;
  double lr = 0.05;
  std::size_t steps = 200;
  std::size_t classes = 3;
  std::size_t input_dim = 8;
  std::size_t embed_dim = 8;
  std::size_t patches = 24;
  std::size_t frames = 2;
  double margin = 1.0;
  double sigma_class = 1.0;
  double sigma_t = 0.1;
  std::size_t clips = 1;
  double tau = 0.1;
  std::size_t negatives = 64;
  std::size_t positive_cap = 8;
  bool raw_dots = false;
  bool as_json = false;
};

int run_train_toy(const TrainToyOptions& opt) {
  vseg::ToyDataConfig data_cfg;
  data_cfg.classes = opt.classes;
  data_cfg.input_dim = opt.input_dim;
  data_cfg.patches_per_frame = opt.patches;
  data_cfg.frames = opt.frames;
  data_cfg.class_margin = opt.margin;
  data_cfg.sigma_class = opt.sigma_class;
  data_cfg.sigma_temporal = opt.sigma_t;

  vseg::require(opt.clips >= 1, "train-toy: need at least one clip");
  std::vector<vseg::SynthClip> clips;
  clips.reserve(opt.clips);
  for (std::size_t i = 0; i < opt.clips; ++i) {
    clips.push_back(vseg::generate(vseg::mix_seed(opt.seed, i), data_cfg));
  }

  vseg::NceConfig cfg;
  cfg.temperature = opt.tau;
  cfg.negatives = opt.negatives;
  cfg.positive_cap = opt.positive_cap;
  cfg.rng_seed = vseg::mix_seed(opt.seed, 0xabcdULL);
  cfg.normalize_features = !opt.raw_dots;

  vseg::LossWeights weights;
  weights.lambda1 = opt.lambda1;
  weights.lambda2 = opt.lambda2;
  weights.lambda3 = opt.lambda3;
  weights.lambda4 = opt.lambda4;

  vseg::ToyModel model = vseg::ToyModel::init(opt.input_dim, opt.embed_dim,
                                              opt.classes, opt.seed);
  const vseg::SeparationReport initial =
      vseg::separation_report(model, clips[0]);
  const vseg::TrainResult result =
      vseg::train(std::move(model), clips, cfg, weights, opt.lr, opt.steps);
  const vseg::SeparationReport final_report =
      vseg::separation_report(result.model, clips[0]);

  if (opt.as_json) {
    json out;
    out["steps"] = json::array();
    for (const vseg::StepLog& row : result.log) {
      out["steps"].push_back({{"step", row.step},
                              {"total", row.total},
                              {"seg", row.seg},
                              {"nce", row.nce}});
    }
    auto sep_json = [](const vseg::SeparationReport& rep) {
      return json{{"intra", rep.intra_cosine},
                  {"inter", rep.inter_cosine},
                  {"gap", rep.intra_cosine - rep.inter_cosine},
                  {"intra_pairs", rep.intra_pairs},
                  {"inter_pairs", rep.inter_pairs}};
    };
    out["separation"] = {{"initial", sep_json(initial)},
                         {"final", sep_json(final_report)}};
    std::cout << out.dump(2) << '\n';
    return 0;
  }

  std::cout << "step\ttotal\tseg\tnce\n";
  for (const vseg::StepLog& row : result.log) {
    std::cout << row.step << '\t' << fmt_full(row.total) << '\t'
              << fmt_full(row.seg) << '\t' << fmt_full(row.nce) << '\n';
  }
  auto print_sep = [](const char* tag, const vseg::SeparationReport& rep) {
    std::cout << "sep\t" << tag << '\t' << fmt_full(rep.intra_cosine) << '\t'
              << fmt_full(rep.inter_cosine) << '\t'
              << fmt_full(rep.intra_cosine - rep.inter_cosine) << '\n';
  };
  print_sep("initial", initial);
  print_sep("final", final_report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segmentation mask / score-map pipeline tools"};
  app.set_version_flag("--version", vseg::kVersion);
  app.require_subcommand(1);

  RemapOptions remap_opt;
  auto* remap_cmd = app.add_subcommand(
      "remap", "rewrite mask labels through a mapping table");
  remap_cmd->add_option("--table", remap_opt.table, "mapping table (tsv)")
      ->required();
  remap_cmd->add_option("--in", remap_opt.input, "input mask or directory")
      ->required();
  remap_cmd->add_option("-o,--out", remap_opt.output, "output mask or directory")
      ->required();
  remap_cmd->add_option("--policy", remap_opt.policy,
                        "unmapped-source policy: ignore|error")
      ->check(CLI::IsMember({"ignore", "error"}));

  FilterOptions filter_opt;
  auto* filter_cmd = app.add_subcommand(
      "filter", "keep/drop manifest by valid-pixel ratio");
  filter_cmd->add_option("--in", filter_opt.input, "mask directory")
      ->required();
  filter_cmd->add_option("--threshold", filter_opt.threshold,
                         "keep threshold (default 0.8)");
  filter_cmd->add_flag("--strict", filter_opt.strict,
                       "require ratio strictly greater than the threshold");
  filter_cmd->add_option("-o,--out", filter_opt.output,
                         "manifest path (stdout when omitted)");

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "mIoU of predictions vs ground truth");
  eval_cmd->add_option("--classes", eval_opt.classes, "class count")
      ->required();
  eval_cmd->add_option("--pred", eval_opt.pred_dir, "prediction directory")
      ->required();
  eval_cmd->add_option("--gt", eval_opt.gt_dir, "ground-truth directory")
      ->required();
  eval_cmd->add_flag("--all-classes", eval_opt.all_classes,
                     "divide by the full class count instead of present ones");
  eval_cmd->add_flag("--per-video", eval_opt.per_video,
                     "report one mIoU per top-level directory");

  EnsembleOptions ens_opt;
  auto* ens_cmd = app.add_subcommand("ensemble", "combine soft results");
  ens_cmd->add_option("--tau", ens_opt.tau,
                      "weighted pair: tau*first + (1-tau)*second");
  ens_cmd->add_flag("--mean", ens_opt.mean, "average all inputs");
  ens_cmd->add_option("inputs", ens_opt.inputs, "LGT inputs")
      ->required()
      ->expected(-1);
  ens_cmd->add_option("-o,--out", ens_opt.output, "LGT output")->required();

  VoteOptions vote_opt;
  auto* vote_cmd = app.add_subcommand("vote", "per-pixel majority vote");
  vote_cmd->add_option("inputs", vote_opt.inputs, "PGM inputs")
      ->required()
      ->expected(-1);
  vote_cmd->add_option("-o,--out", vote_opt.output, "PGM output")->required();

  ArgmaxOptions argmax_opt;
  auto* argmax_cmd = app.add_subcommand("argmax", "decode LGT to a PGM mask");
  argmax_cmd->add_option("input", argmax_opt.input, "LGT input")->required();
  argmax_cmd->add_option("-o,--out", argmax_opt.output, "PGM output")
      ->required();

  TtaOptions tta_opt;
  auto* tta_cmd = app.add_subcommand(
      "tta-merge", "stitch sliding-window maps into a full image");
  tta_cmd->add_option("--plan", tta_opt.plan,
                      "H,W,window_h,window_w,stride")
      ->required();
  tta_cmd->add_option("inputs", tta_opt.inputs,
                      "window LGT files in plan order (y-major)");
  tta_cmd->add_option("-o,--out", tta_opt.output, "LGT output");
  tta_cmd->add_flag("--print-plan", tta_opt.print_plan,
                    "print window origins (x,y per line) and exit");

  FlipOptions flip_opt;
  auto* flip_cmd = app.add_subcommand(
      "flip-merge", "average a map with its mirrored counterpart");
  flip_cmd->add_option("plain", flip_opt.plain, "LGT on the original input")
      ->required();
  flip_cmd->add_option("flipped", flip_opt.flipped,
                       "LGT on the mirrored input")
      ->required();
  flip_cmd->add_option("-o,--out", flip_opt.output, "LGT output")->required();

  GradcheckOptions grad_opt;
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every loss gradient");
  grad_cmd->add_option("--seed", grad_opt.seed, "instance seed")->required();
  grad_cmd->add_option("--instances", grad_opt.instances,
                       "instances per loss (default 50)");

  NceEvalOptions nce_opt;
  auto* nce_cmd = app.add_subcommand(
      "nce-eval", "contrastive loss of a two-frame feature clip");
  nce_cmd->add_option("frame0", nce_opt.frame0, "LGT features, frame 0 (1xMxD)")
      ->required();
  nce_cmd->add_option("frame1", nce_opt.frame1, "LGT features, frame 1 (1xMxD)")
      ->required();
  nce_cmd->add_option("--classes", nce_opt.class_file,
                      "sidecar text file: one class id per patch")
      ->required();
  nce_cmd->add_option("--seed", nce_opt.seed, "sampling seed")->required();
  nce_cmd->add_option("--tau", nce_opt.tau, "temperature (default 0.1)");
  nce_cmd->add_option("--negatives", nce_opt.negatives,
                      "negatives per anchor (default 64)");
  nce_cmd->add_option("--positive-cap", nce_opt.positive_cap,
                      "positives per anchor (default 8)");
  nce_cmd->add_flag("--normalize", nce_opt.normalize,
                    "L2-normalize features before similarities");
  nce_cmd->add_option("--divide-by", nce_opt.divide_by,
                      "loss divisor: contributing|all")
      ->check(CLI::IsMember({"contributing", "all"}));

  TrainToyOptions toy_opt;
  auto* toy_cmd = app.add_subcommand(
      "train-toy", "gradient-descent demo of the combined loss");
  toy_cmd->add_option("--seed", toy_opt.seed, "master seed")->required();
  toy_cmd->add_option("--lambda1", toy_opt.lambda1, "seg weight");
  toy_cmd->add_option("--lambda2", toy_opt.lambda2, "nce weight");
  toy_cmd->add_option("--lambda3", toy_opt.lambda3, "dice weight");
  toy_cmd->add_option("--lambda4", toy_opt.lambda4, "ce weight");
  toy_cmd->add_option("--lr", toy_opt.lr, "learning rate");
  toy_cmd->add_option("--steps", toy_opt.steps, "descent steps");
  toy_cmd->add_option("--classes", toy_opt.classes, "class count");
  toy_cmd->add_option("--input-dim", toy_opt.input_dim, "raw input dim");
  toy_cmd->add_option("--embed-dim", toy_opt.embed_dim, "embedding dim");
  toy_cmd->add_option("--patches", toy_opt.patches, "patches per frame");
  toy_cmd->add_option("--frames", toy_opt.frames, "frames per clip (2 or 4)");
  toy_cmd->add_option("--margin", toy_opt.margin, "class mean scale");
  toy_cmd->add_option("--sigma-class", toy_opt.sigma_class, "in-class spread");
  toy_cmd->add_option("--sigma-t", toy_opt.sigma_t, "temporal jitter");
  toy_cmd->add_option("--clips", toy_opt.clips, "clips in the cycled stream");
  toy_cmd->add_option("--tau", toy_opt.tau, "NCE temperature");
  toy_cmd->add_option("--negatives", toy_opt.negatives, "NCE negatives");
  toy_cmd->add_option("--positive-cap", toy_opt.positive_cap, "NCE positives");
  toy_cmd->add_flag("--raw-dots", toy_opt.raw_dots,
                    "raw dot-product similarities instead of cosine");
  toy_cmd->add_flag("--json", toy_opt.as_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    std::cerr << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  }

  try {
    if (*remap_cmd) return run_remap(remap_opt);
    if (*filter_cmd) return run_filter(filter_opt);
    if (*eval_cmd) return run_eval(eval_opt);
    if (*ens_cmd) return run_ensemble(ens_opt);
    if (*vote_cmd) return run_vote(vote_opt);
    if (*argmax_cmd) return run_argmax(argmax_opt);
    if (*tta_cmd) return run_tta_merge(tta_opt);
    if (*flip_cmd) return run_flip_merge(flip_opt);
    if (*grad_cmd) return run_gradcheck(grad_opt);
    if (*nce_cmd) return run_nce_eval(nce_opt);
    if (*toy_cmd) return run_train_toy(toy_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
