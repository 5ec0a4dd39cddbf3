// Copyright 2026 The ivusnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and limitations under the License.

// Command-line front end: synth, train, predict, eval, gradcheck.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ivusnet/checkpoint.hpp"
#include "ivusnet/gradcheck_suite.hpp"
#include "ivusnet/metrics.hpp"
#include "ivusnet/phantom.hpp"
#include "ivusnet/train.hpp"

namespace fs = std::filesystem;
using namespace ivus;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kUsage = 2;

// Bad input detected after parsing; maps to exit code 2.
struct InputError : Error {
  using Error::Error;
};

std::uint64_t default_seed() {
  if (const char* s = std::getenv("IVUSNET_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("IVUSNET_SEED is not an unsigned integer: '") + s + "'");
  }
  return 1;
}

std::vector<FrameRecord> select_split(std::vector<FrameRecord> recs, const std::string& split) {
  if (split == "all") return recs;
  const Split want = split == "train" ? Split::train : Split::test;
  std::vector<FrameRecord> out;
  for (auto& r : recs)
    if (r.split == want) out.push_back(std::move(r));
  return out;
}

std::vector<Frame> load_frames(const std::vector<FrameRecord>& recs, bool downsize) {
  std::vector<Frame> frames;
  frames.reserve(recs.size());
  for (const auto& r : recs) frames.push_back(downsize ? downsize_half(load_frame(r)) : load_frame(r));
  return frames;
}

std::string pred_stem(std::size_t i, Target t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "pred_%04zu_%s", i, std::string(to_string(t)).c_str());
  return buf;
}

Contour read_contour_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "x,y") throw ParseError(path.string() + ": expected header 'x,y'", 1);
  Contour c;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      c.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": malformed point '" + line + "'", lineno);
    }
  }
  return c;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix, const std::string& ext) {
  return p.parent_path() / (p.stem().string() + suffix + ext);
}

std::vector<std::size_t> parse_depths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != tok.size()) throw ConfigError("bad depth '" + tok + "' in --depths");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.size() != 4) throw ConfigError("--depths needs four comma-separated values");
  return out;
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::size_t count = 16;
  std::size_t size = 64;
  std::uint64_t seed = 0;
  bool artifacts = false;
  double speckle = PhantomOptions{}.speckle_std;
  double noise = PhantomOptions{}.noise_std;
  std::string split = "train";
};

int cmd_synth(const SynthOpts& o) {
  PhantomOptions opt;
  opt.artifacts = o.artifacts;
  opt.speckle_std = o.speckle;
  opt.noise_std = o.noise;
  std::cout << "synth out=" << o.out << " count=" << o.count << " size=" << o.size << " seed=" << o.seed
            << " artifacts=" << o.artifacts << " speckle=" << o.speckle << " noise=" << o.noise
            << " split=" << o.split << '\n';
  const auto recs =
      synth_phantoms(o.out, o.seed, o.count, o.size, opt, o.split == "test" ? Split::test : Split::train);
  std::cout << "wrote " << recs.size() << " phantoms and " << (fs::path(o.out) / "manifest.tsv").string() << '\n';
  return kOk;
}

struct TrainOpts {
  std::string manifest;
  std::string out;
  std::string split = "train";
  std::string preset = "paper";
  std::string depths;
  std::size_t convs = 2;
  bool no_refine = false;
  bool no_aug = false;
  bool downsize = false;
  std::size_t models = 1;
  TrainConfig train;
  AugmentConfig aug;
  std::uint64_t aug_seed = 0;
  bool aug_seed_set = false;
  bool quiet = false;
};

int cmd_train(TrainOpts o) {
  ArchConfig arch = ArchConfig::preset(o.preset);
  if (!o.depths.empty()) {
    const auto d = parse_depths(o.depths);
    std::copy(d.begin(), d.end(), arch.block_depths.begin());
  }
  arch.main_convs_per_block = o.convs;
  arch.refine = !o.no_refine;
  arch.validate();
  o.train.augment = !o.no_aug;
  o.train.validate();
  o.aug.validate();
  if (o.models == 0) throw ConfigError("--models must be at least 1");

  if (!fs::exists(o.manifest)) throw InputError("manifest not found: " + o.manifest);
  const auto recs = select_split(load_manifest(o.manifest), o.split);
  std::cout << "arch preset=" << o.preset << " depths=" << arch.block_depths[0] << ',' << arch.block_depths[1]
            << ',' << arch.block_depths[2] << ',' << arch.block_depths[3] << " convs=" << arch.main_convs_per_block
            << " refine=" << arch.refine << '\n';
  std::cout << "train " << o.train.describe() << " models=" << o.models << '\n';
  std::cout << "augment noise_sigma=" << o.aug.noise_sigma << " noise_prob=" << o.aug.noise_prob
            << " blackout_prob=" << o.aug.blackout_prob << " seed=" << (o.aug_seed_set ? o.aug_seed : o.train.seed)
            << '\n';
  std::cout << "data manifest=" << o.manifest << " split=" << o.split << " frames=" << recs.size()
            << " downsize=" << o.downsize << '\n'
            << std::flush;
  if (recs.size() < o.train.validation_count + 1)
    throw ConfigError("training needs at least " + std::to_string(o.train.validation_count + 1) +
                      " frames in split '" + o.split + "', manifest has " + std::to_string(recs.size()));
  const auto frames = load_frames(recs, o.downsize);

  for (std::size_t k = 0; k < o.models; ++k) {
    TrainConfig tc = o.train;
    tc.seed = o.train.seed + k;
    AugmentConfig ac = o.aug;
    ac.seed = (o.aug_seed_set ? o.aug_seed : o.train.seed) + k;
    const fs::path ckpt = o.models == 1 ? fs::path(o.out) : with_suffix(o.out, "_" + std::to_string(k), fs::path(o.out).extension().string());
    auto res = train_model(frames, arch, tc, ac, [&](const EpochStats& s) {
      if (o.quiet) return;
      std::printf("model %zu epoch %zu/%zu loss %.5f val_jm %.4f\n", k, s.epoch, tc.epochs, s.loss, s.val_jm);
      std::fflush(stdout);
    });
    if (!ckpt.parent_path().empty()) fs::create_directories(ckpt.parent_path());
    save_checkpoint(res.net, ckpt);
    const fs::path hist = with_suffix(ckpt, "", ".history.csv");
    write_history(res.history, hist);
    std::cout << "model " << k << " seed=" << tc.seed << " params=" << res.net.parameter_count()
              << " initial_val_jm=" << res.history.initial_val_jm
              << " final_val_jm=" << res.history.epochs.back().val_jm << '\n'
              << "wrote " << ckpt.string() << " and " << hist.string() << '\n';
  }
  return kOk;
}

struct PredictOpts {
  std::vector<std::string> models;
  std::string image;
  std::string out_mask;
  std::string out_prob;
  std::string out_contour;
  std::string out_raw_contour;
  std::string manifest;
  std::string split = "all";
  std::string out_dir;
  std::string target = "lumen";
  float threshold = kDefaultThreshold;
  std::size_t contour_points = kDefaultContourPoints;
  bool downsize = false;
};

std::vector<Network<float>> load_models(const std::vector<std::string>& paths) {
  if (paths.empty()) throw InputError("--models needs at least one checkpoint");
  std::vector<Network<float>> nets;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw InputError("checkpoint not found: " + p);
    nets.push_back(load_checkpoint(p));
    if (nets.back().config().input_channels != nets.front().config().input_channels)
      throw InputError("checkpoint " + p + " is incompatible with " + paths.front());
  }
  return nets;
}

int cmd_predict(const PredictOpts& o) {
  std::cout << "predict models=" << o.models.size() << " threshold=" << o.threshold
            << " contour_points=" << o.contour_points << " downsize=" << o.downsize << '\n';
  auto nets = load_models(o.models);
  const bool batch = !o.manifest.empty();
  if (batch == !o.image.empty()) throw InputError("give exactly one of --image or --manifest");

  if (!batch) {
    if (o.out_mask.empty()) throw InputError("--out-mask is required with --image");
    GrayImage img = read_pgm(o.image);
    if (o.downsize) img = downsize_half(img);
    if (img.width % 8 != 0 || img.height % 8 != 0)
      throw InputError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                       ", both sides must be divisible by 8");
    const ProbMap p = ensemble_predict(nets, img);
    if (!o.out_prob.empty()) write_prob_map(p, o.out_prob);
    const auto r = extract_contour(p, o.threshold, o.contour_points);
    write_mask(r.mask, o.out_mask);
    if (!o.out_contour.empty()) write_contour_csv(r.contour, o.out_contour);
    if (!o.out_raw_contour.empty()) write_contour_csv(r.raw_boundary, o.out_raw_contour);
    std::printf("ellipse cx=%.3f cy=%.3f a=%.3f b=%.3f theta=%.4f\n", r.ellipse.cx, r.ellipse.cy, r.ellipse.a,
                r.ellipse.b, r.ellipse.theta);
    return kOk;
  }

  if (o.out_dir.empty()) throw InputError("--out-dir is required with --manifest");
  if (!fs::exists(o.manifest)) throw InputError("manifest not found: " + o.manifest);
  const Target t = parse_target(o.target);
  const auto recs = select_split(load_manifest(o.manifest), o.split);
  fs::create_directories(o.out_dir);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    GrayImage img = read_pgm(recs[i].image_path);
    if (o.downsize) img = downsize_half(img);
    const ProbMap p = ensemble_predict(nets, img);
    const fs::path stem = fs::path(o.out_dir) / pred_stem(i, t);
    write_prob_map(p, stem.string() + ".ivpm");
    try {
      const auto r = extract_contour(p, o.threshold, o.contour_points);
      write_mask(r.mask, stem.string() + ".pgm");
      write_contour_csv(r.contour, stem.string() + "_contour.csv");
      write_contour_csv(r.raw_boundary, stem.string() + "_raw.csv");
    } catch (const Error& e) {
      // Keep going: the frame is scored with the thresholded map and no contour.
      ++failed;
      std::cerr << "frame " << i << ": " << e.what() << '\n';
      write_mask(binarize(p, o.threshold), stem.string() + ".pgm");
      std::error_code ec;
      fs::remove(stem.string() + "_contour.csv", ec);
      fs::remove(stem.string() + "_raw.csv", ec);
    }
  }
  std::cout << "wrote " << recs.size() << " " << to_string(t) << " predictions to " << o.out_dir;
  if (failed) std::cout << " (" << failed << " without a contour)";
  std::cout << '\n';
  return kOk;
}

struct EvalOpts {
  std::string manifest;
  std::string pred_dir;
  std::string split = "all";
  double spacing = 1.0;
  std::string csv;
  bool downsize = false;
};

int cmd_eval(const EvalOpts& o) {
  if (!(o.spacing > 0.0)) throw ConfigError("--pixel-spacing-mm must be positive");
  std::cout << "eval manifest=" << o.manifest << " pred_dir=" << o.pred_dir << " split=" << o.split
            << " pixel_spacing_mm=" << o.spacing << " downsize=" << o.downsize << '\n';
  if (!fs::exists(o.manifest)) throw InputError("manifest not found: " + o.manifest);
  const auto recs = select_split(load_manifest(o.manifest), o.split);
  if (recs.empty()) throw InputError("no frames in split '" + o.split + "'");

  std::vector<std::string> missing;
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (Target t : {Target::lumen, Target::media}) {
      const fs::path mask = fs::path(o.pred_dir) / (pred_stem(i, t) + ".pgm");
      if (!fs::exists(mask)) missing.push_back(mask.string());
    }
  if (!missing.empty()) {
    std::ostringstream os;
    os << missing.size() << " prediction file(s) missing:";
    for (const auto& m : missing) os << "\n  " << m;
    throw InputError(os.str());
  }

  std::vector<EvalFrame> frames;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    Frame truth{GrayImage{}, read_mask(recs[i].lumen_mask_path), read_mask(recs[i].media_mask_path),
                recs[i].category};
    if (o.downsize) {
      truth.lumen = downsize_half(truth.lumen);
      truth.media = downsize_half(truth.media);
    }
    EvalFrame f{std::to_string(i) + " (" + recs[i].image_path.string() + ")", recs[i].category, truth.lumen,
                truth.media, {}};
    for (Target t : {Target::lumen, Target::media}) {
      const fs::path stem = fs::path(o.pred_dir) / pred_stem(i, t);
      TargetPrediction p;
      p.mask = read_mask(stem.string() + ".pgm");
      if (!p.mask.same_dims(truth.mask(t)))
        throw InputError(stem.string() + ".pgm does not match the size of the ground truth");
      const fs::path contour = stem.string() + "_contour.csv", raw = stem.string() + "_raw.csv";
      if (fs::exists(contour)) {
        p.contour = read_contour_csv(contour);
      } else if (count_foreground(p.mask) > 0) {
        p.contour = trace_boundary(largest_component(p.mask));
      } else {
        // Nothing predicted: score HD as the distance to the farthest image corner.
        const double w = static_cast<double>(p.mask.width - 1), h = static_cast<double>(p.mask.height - 1);
        p.contour = {{0, 0}, {w, 0}, {w, h}, {0, h}};
      }
      if (fs::exists(raw)) p.raw_contour = read_contour_csv(raw);
      if (p.contour.empty()) throw InputError(contour.string() + " has no points");
      f.pred.get(t) = std::move(p);
    }
    frames.push_back(std::move(f));
  }
  const EvalReport rep = evaluate(frames, o.spacing);
  std::cout << render_report(rep);
  if (!o.csv.empty()) {
    std::ofstream out(o.csv);
    if (!out) throw InputError("cannot write " + o.csv);
    out << report_csv(rep);
  }
  return kOk;
}

int cmd_gradcheck() {
  std::cout << "gradcheck seeds=" << kGradCheckSeeds << " op_tolerance=" << kOpGradTolerance
            << " network_tolerance=" << kNetworkGradTolerance << '\n';
  bool ok = true;
  for (const auto& r : run_gradcheck_suite()) {
    std::printf("%-20s max_rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.pass() ? "ok" : "FAIL");
    ok = ok && r.pass();
  }
  std::printf("%s\n", ok ? "all gradients agree" : "gradient check FAILED");
  return ok ? kOk : kInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ivusnet: IVUS lumen and media segmentation"};
  app.require_subcommand(1);
  bool strict = false;
  app.add_flag("--strict", strict, "Deterministic execution (always on; accepted for scripts)");

  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed = v, seed_given = true; },
        "Random seed (default: $IVUSNET_SEED or 1)");
  };
  const auto targets = CLI::IsMember({"lumen", "media"});
  const auto splits = CLI::IsMember({"train", "test", "all"});

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "Generate synthetic phantom frames and a manifest");
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--count", so.count, "Number of phantoms")->capture_default_str();
  synth->add_option("--size", so.size, "Side length in pixels (multiple of 8)")->capture_default_str();
  synth->add_flag("--artifacts", so.artifacts, "Draw bifurcation, side-vessel and shadow artifacts");
  synth->add_option("--speckle-std", so.speckle, "Multiplicative speckle std")->capture_default_str();
  synth->add_option("--noise-std", so.noise, "Additive noise std")->capture_default_str();
  synth->add_option("--split", so.split, "Split written to the manifest")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  add_seed(synth);

  TrainOpts to;
  std::string train_target = "lumen";
  auto* train = app.add_subcommand("train", "Train one or more models");
  train->add_option("--manifest", to.manifest, "Frame manifest (TSV)")->required();
  train->add_option("--out", to.out, "Checkpoint path")->required();
  train->add_option("--target", train_target, "lumen or media")->check(targets)->capture_default_str();
  train->add_option("--split", to.split, "Manifest rows to train on")->check(splits)->capture_default_str();
  train->add_option("--preset", to.preset, "Architecture preset")
      ->check(CLI::IsMember({"paper", "tiny"}))
      ->capture_default_str();
  train->add_option("--depths", to.depths, "Block depths d1,d2,d3,d4 (overrides the preset)");
  train->add_option("--convs-per-block", to.convs, "Main-branch convolutions per block")->capture_default_str();
  train->add_flag("--no-refine", to.no_refine, "Drop the refining branches (ablation)");
  train->add_flag("--no-aug", to.no_aug, "Train on the original frames only (ablation)");
  train->add_flag("--downsize", to.downsize, "Halve frames and masks before training");
  train->add_option("--models", to.models, "Independently seeded models to train")->capture_default_str();
  train->add_option("--lr", to.train.learning_rate, "Adam learning rate")->capture_default_str();
  train->add_option("--batch-size", to.train.batch_size, "Batch size")->capture_default_str();
  train->add_option("--epochs", to.train.epochs, "Epochs")->capture_default_str();
  train->add_option("--iterations", to.train.iterations_per_epoch, "Max iterations per epoch")
      ->capture_default_str();
  train->add_option("--validation", to.train.validation_count, "Frames held out for monitoring")
      ->capture_default_str();
  train->add_option("--threshold", to.train.threshold, "Threshold for validation JM")->capture_default_str();
  train->add_option("--noise-sigma", to.aug.noise_sigma, "Augmentation noise std")->capture_default_str();
  train->add_option("--noise-prob", to.aug.noise_prob, "Probability of adding noise")->capture_default_str();
  train->add_option("--blackout-prob", to.aug.blackout_prob, "Probability of blacking out")
      ->capture_default_str();
  train->add_option_function<std::uint64_t>(
      "--aug-seed", [&](std::uint64_t v) { to.aug_seed = v, to.aug_seed_set = true; },
      "Augmentation seed (default: --seed)");
  train->add_flag("--quiet", to.quiet, "Do not print per-epoch progress");
  add_seed(train);

  PredictOpts po;
  auto* predict = app.add_subcommand("predict", "Segment frames with an ensemble of checkpoints");
  predict->add_option("--models", po.models, "Checkpoints, comma separated (10 for the full ensemble)")
      ->delimiter(',')
      ->required();
  predict->add_option("--image", po.image, "Single input image (PGM)");
  predict->add_option("--out-mask", po.out_mask, "Final ellipse mask (PGM)");
  predict->add_option("--out-prob", po.out_prob, "Ensemble probability map (IVPM)");
  predict->add_option("--out-contour", po.out_contour, "Ellipse contour (CSV)");
  predict->add_option("--out-raw-contour", po.out_raw_contour, "Boundary before ellipse fitting (CSV)");
  predict->add_option("--manifest", po.manifest, "Predict every manifest frame instead of one image");
  predict->add_option("--split", po.split, "Manifest rows to predict")->check(splits)->capture_default_str();
  predict->add_option("--out-dir", po.out_dir, "Directory for pred_NNNN_<target> files");
  predict->add_option("--target", po.target, "Target name used in batch file names")
      ->check(targets)
      ->capture_default_str();
  predict->add_option("--threshold", po.threshold, "Binarization threshold")->capture_default_str();
  predict->add_option("--contour-points", po.contour_points, "Points on the output contour")
      ->capture_default_str();
  predict->add_flag("--downsize", po.downsize, "Halve inputs before prediction");

  EvalOpts eo;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--manifest", eo.manifest, "Frame manifest (TSV)")->required();
  eval->add_option("--pred-dir", eo.pred_dir, "Directory with pred_NNNN_{lumen,media} files")->required();
  eval->add_option("--split", eo.split, "Manifest rows to score")->check(splits)->capture_default_str();
  eval->add_option("--pixel-spacing-mm", eo.spacing, "Millimetres per pixel for HD")->capture_default_str();
  eval->add_option("--csv", eo.csv, "Also write the report as CSV");
  eval->add_flag("--downsize", eo.downsize, "Halve ground-truth masks to match downsized predictions");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (!seed_given) seed = default_seed();
    if (*synth) {
      so.seed = seed;
      return cmd_synth(so);
    }
    if (*train) {
      to.train.seed = seed;
      to.train.target = parse_target(train_target);
      return cmd_train(to);
    }
    if (*predict) return cmd_predict(po);
    if (*eval) return cmd_eval(eo);
    if (*gradcheck) return cmd_gradcheck();
  } catch (const ContractError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  } catch (const EmptyRegionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  } catch (const FitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  } catch (const Error& e) {
    // Config, parse, format, dimension and file errors all stem from user input.
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
