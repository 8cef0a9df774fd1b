#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kneeloc/baseline.hpp"
#include "kneeloc/config.hpp"
#include "kneeloc/errors.hpp"
#include "kneeloc/image_io.hpp"
#include "kneeloc/neural.hpp"
#include "kneeloc/optimize.hpp"
#include "kneeloc/preprocess.hpp"
#include "kneeloc/serialize.hpp"
#include "kneeloc/synth.hpp"

namespace fs = std::filesystem;
using namespace kneeloc;

namespace {

const std::vector<std::string> kMethods{"baseline", "neural", "neural+sharpen", "gridsearch"};

// Min-max rescale to [0, 1]; NCC does not see the difference.
Image unit_range(const Image& img) {
  const float lo = img.min_value(), hi = img.max_value();
  Image out = img;
  const float span = hi > lo ? hi - lo : 1.0f;
  for (float& v : out.data()) v = (v - lo) / span;
  return out;
}

std::string pair_name(int i) {
  std::ostringstream s;
  s << "pair_" << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

std::vector<fs::path> pair_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("data directory does not exist: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "left.png") && fs::exists(e.path() / "right.png")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no pair directories (left.png + right.png) under " + root.string());
  return out;
}

// Transform of a half that was supplied directly: its own pixel frame.
HalfTransform identity_transform(const Image& half) {
  HalfTransform t;
  t.crop_width = half.width();
  t.padded_height = t.out_height = half.height();
  t.padded_width = t.out_width = half.width();
  return t;
}

SideBox side_box(const PoseParams& pose, double f, const HalfTransform& t) {
  const auto corners = pose_corners(pose, f);
  SideBox box;
  for (std::size_t k = 0; k < 4; ++k) box[k] = t.to_original(corners[k]);
  return box;
}

struct Templates {
  std::optional<Template> fine;
  std::optional<Template> coarse;
};

struct Inputs {
  Image left;
  Image right;
  HalfTransform left_t;
  HalfTransform right_t;
  std::optional<Image> original;
};

Detection run_method(const std::string& method, const Inputs& in, const Templates& T,
                     const std::optional<TwoPhaseModel>& model, const RunConfig& cfg) {
  const Template& fine = *T.fine;
  ParamConfig pcfg = cfg.param;
  pcfg.f = fine.f();
  if (method == "baseline") {
    BaselineResult r = multiscale_match(in.left, in.right, fine, pcfg, cfg.baseline);
    for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
    return r.detection;
  }
  if (method == "gridsearch") {
    const GridSearchResult r = grid_search(in.left, in.right, fine, pcfg, cfg.grid);
    Detection d = make_detection("gridsearch", in.left, in.right,
                                 constrain({r.v[0], r.v[1], r.v[2], r.v[3]}, pcfg),
                                 constrain({r.v[4], r.v[5], r.v[6], r.v[7]}, pcfg), fine, pcfg.f);
    d.stats = r.stats;
    return d;
  }
  if (method == "neural" || method == "neural+sharpen") {
    if (!model) throw InvalidArgument("method " + method + " needs --model");
    if (!T.coarse) throw InvalidArgument("method " + method + " needs --coarse-template");
    InferConfig ic = cfg.infer;
    ic.sharpen = method == "neural+sharpen";
    return infer(*model, in.left, in.right, *T.coarse, fine, cfg.param, ic);
  }
  throw InvalidArgument("unknown method '" + method + "'");
}

void write_overlays(const fs::path& dir, const Inputs& in, const Detection& d, double f) {
  fs::create_directories(dir);
  const Rgb red{230, 40, 40}, green{40, 200, 60};
  auto draw_box = [](RgbImage& img, const SideBox& box, Rgb color) {
    for (std::size_t k = 0; k < 4; ++k) {
      const PixelPoint a = box[k], b = box[(k + 1) % 4];
      draw_line(img, a.x, a.y, b.x, b.y, color);
    }
  };
  auto loss_tag = [](double l) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << l;
    return s.str();
  };
  const HalfTransform lt = identity_transform(in.left), rt = identity_transform(in.right);
  RgbImage l = to_rgb(in.left), r = to_rgb(in.right);
  draw_box(l, side_box(d.left.pose, f, lt), red);
  draw_box(r, side_box(d.right.pose, f, rt), green);
  write_png(l, dir / ("left_loss" + loss_tag(d.left.loss) + ".png"));
  write_png(r, dir / ("right_loss" + loss_tag(d.right.loss) + ".png"));
  if (in.original) {
    RgbImage o = to_rgb(*in.original);
    draw_box(o, side_box(d.left.pose, f, in.left_t), red);
    draw_box(o, side_box(d.right.pose, f, in.right_t), green);
    write_png(o, dir / ("original_total" + loss_tag(d.left.loss + d.right.loss) + ".png"));
  }
}

Templates load_templates(const std::string& fine, const std::string& coarse) {
  Templates t;
  t.fine = load_template(fine);
  if (!coarse.empty()) t.coarse = load_template(coarse);
  return t;
}

std::optional<TwoPhaseModel> load_model(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return model_from_json(read_json(path));
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

struct Common {
  std::string config;
  RunConfig cfg;

  void add(CLI::App* app) { app->add_option("--config", config, "JSON config overriding defaults"); }
  void load() {
    if (!config.empty()) cfg = load_config(config);
  }
};

int error_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return 1;
    case ErrorKind::kIo: return 2;
    case ErrorKind::kDegenerate: return 3;
    case ErrorKind::kNumerical: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilateral knee joint localization by template matching"};
  app.require_subcommand(1);

  // make-template
  struct {
    std::string out, kind = "joint";
    int height = 24, width = 20;
  } mt;
  CLI::App* c_mt = app.add_subcommand("make-template", "Write a procedural template bundle");
  c_mt->add_option("--out", mt.out, "bundle directory")->required();
  c_mt->add_option("--kind", mt.kind, "joint | context")->check(CLI::IsMember({"joint", "context"}));
  c_mt->add_option("--height", mt.height);
  c_mt->add_option("--width", mt.width);

  // synth
  Common synth_common;
  struct {
    std::string out;
    int count = 10;
    std::uint64_t seed = 0;
    int context_size = 120;
  } sy;
  CLI::App* c_synth = app.add_subcommand("synth", "Generate synthetic pairs with planted poses");
  synth_common.add(c_synth);
  c_synth->add_option("--out", sy.out, "output directory")->required();
  c_synth->add_option("--count", sy.count, "number of pairs")->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", sy.seed);
  c_synth->add_option("--context-size", sy.context_size, "resolution of the planted context pattern");

  // preprocess
  Common pre_common;
  struct {
    std::string image, out;
    std::optional<std::uint64_t> seed;
  } pp;
  CLI::App* c_pre = app.add_subcommand("preprocess", "Split a bilateral image into two halves");
  pre_common.add(c_pre);
  c_pre->add_option("--image", pp.image)->required();
  c_pre->add_option("--out", pp.out)->required();
  c_pre->add_option("--seed", pp.seed, "enables the random translation augmentation");

  // detect
  Common det_common;
  struct {
    std::string method = "gridsearch", image, left, right, tmpl, coarse, model, out, overlay;
    std::optional<int> threads, scales, iters_per_init, polish_iters;
    std::optional<double> overlap_ratio, pair_halfwidth;
    std::vector<double> pyramid;
  } dt;
  CLI::App* c_det = app.add_subcommand("detect", "Locate both joints in one image");
  det_common.add(c_det);
  c_det->add_option("--method", dt.method)->check(CLI::IsMember(kMethods));
  auto* o_image = c_det->add_option("--image", dt.image, "bilateral image (preprocessed first)");
  auto* o_left = c_det->add_option("--left", dt.left, "pre-split left half (already flipped)");
  auto* o_right = c_det->add_option("--right", dt.right, "pre-split right half");
  o_image->excludes(o_left)->excludes(o_right);
  o_left->needs(o_right);
  o_right->needs(o_left);
  c_det->add_option("--template", dt.tmpl, "template bundle directory")->required();
  c_det->add_option("--coarse-template", dt.coarse, "phase-1 template bundle (neural methods)");
  c_det->add_option("--model", dt.model, "two-phase model JSON (neural methods)");
  c_det->add_option("--out", dt.out, "detection JSON (stdout when omitted)");
  c_det->add_option("--overlay", dt.overlay, "directory for overlay PNGs");
  c_det->add_option("--threads", dt.threads)->check(CLI::PositiveNumber);
  c_det->add_option("--scales", dt.scales, "grid search: number of scales")->check(CLI::Range(2, 64));
  c_det->add_option("--overlap-ratio", dt.overlap_ratio);
  c_det->add_option("--pair-halfwidth", dt.pair_halfwidth);
  c_det->add_option("--iters-per-init", dt.iters_per_init)->check(CLI::PositiveNumber);
  c_det->add_option("--polish-iters", dt.polish_iters)->check(CLI::PositiveNumber);
  c_det->add_option("--pyramid", dt.pyramid, "baseline: template/image width ratios");

  // train
  Common tr_common;
  struct {
    std::string data, tmpl, coarse, out, curve;
    std::optional<int> outer, epochs, batch;
    std::optional<double> lr_backbone, lr_head;
    std::optional<std::uint64_t> seed;
  } tr;
  CLI::App* c_tr = app.add_subcommand("train", "Train the two-phase localization network");
  tr_common.add(c_tr);
  c_tr->add_option("--data", tr.data, "directory of pair_* folders")->required();
  c_tr->add_option("--template", tr.tmpl, "phase-2 template bundle")->required();
  c_tr->add_option("--coarse-template", tr.coarse, "phase-1 template bundle")->required();
  c_tr->add_option("--out", tr.out, "model JSON")->required();
  c_tr->add_option("--curve", tr.curve, "training curve JSON");
  c_tr->add_option("--outer", tr.outer)->check(CLI::PositiveNumber);
  c_tr->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  c_tr->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  c_tr->add_option("--lr-backbone", tr.lr_backbone);
  c_tr->add_option("--lr-head", tr.lr_head);
  c_tr->add_option("--seed", tr.seed);

  // eval
  Common ev_common;
  struct {
    std::string data, tmpl, coarse, model, out;
    std::vector<std::string> methods{"baseline", "gridsearch"};
    std::optional<int> threads;
  } ev;
  CLI::App* c_ev = app.add_subcommand("eval", "Mean losses per method over a directory of pairs");
  ev_common.add(c_ev);
  c_ev->add_option("--data", ev.data)->required();
  c_ev->add_option("--template", ev.tmpl)->required();
  c_ev->add_option("--coarse-template", ev.coarse);
  c_ev->add_option("--model", ev.model);
  c_ev->add_option("--methods", ev.methods)->check(CLI::IsMember(kMethods))->delimiter(',');
  c_ev->add_option("--out", ev.out, "table file; .md gives markdown, anything else CSV");
  c_ev->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);

  // config
  Common cfg_common;
  CLI::App* c_cfg = app.add_subcommand("config", "Print the effective configuration as JSON");
  cfg_common.add(c_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_cfg) {
      cfg_common.load();
      print_json(config_to_json(cfg_common.cfg));
    } else if (*c_mt) {
      const Template T = mt.kind == "joint" ? make_joint_template(mt.height, mt.width)
                                            : make_joint_context_template(mt.height);
      save_template(T, mt.out);
      std::cout << "template " << template_hash(T) << " written to " << mt.out << "\n";
    } else if (*c_synth) {
      synth_common.load();
      const RunConfig& cfg = synth_common.cfg;
      const fs::path out = sy.out;
      const Template context = make_joint_context_template(sy.context_size);
      const Template fine = make_joint_template();
      save_template(make_joint_context_template(40), out / "templates" / "coarse");
      save_template(fine, out / "templates" / "fine");
      std::mt19937_64 rng(sy.seed);
      for (int i = 0; i < sy.count; ++i) {
        const SynthPair p = sample_pair(cfg.synth, context, rng);
        const fs::path dir = out / pair_name(i);
        fs::create_directories(dir);
        write_png16(unit_range(p.left), dir / "left.png");
        write_png16(unit_range(p.right), dir / "right.png");
        // Bilateral composite: the left half is stored flipped, as after preprocessing.
        const Image lf = horizontal_flip(p.left);
        Image both(lf.height(), lf.width() + p.right.width());
        for (int r = 0; r < both.height(); ++r) {
          for (int c = 0; c < lf.width(); ++c) both.at(r, c) = lf.at(r, c);
          for (int c = 0; c < p.right.width(); ++c) both.at(r, lf.width() + c) = p.right.at(r, c);
        }
        write_png16(unit_range(both), dir / "bilateral.png");
        json truth;
        truth["planted"] = truth_to_json(p.truth);
        truth["fine"] = truth_to_json(region_truth(p.truth, joint_region_pose(), fine.f()));
        write_json(truth, dir / "truth.json");
      }
      std::cout << sy.count << " pairs written to " << out.string() << "\n";
    } else if (*c_pre) {
      pre_common.load();
      const Image u = read_image(pp.image);
      std::mt19937_64 rng(pp.seed.value_or(0));
      const SplitResult s = split_bilateral(u, pre_common.cfg.split, pp.seed ? &rng : nullptr);
      const fs::path out = pp.out;
      fs::create_directories(out);
      write_png16(unit_range(s.u_left), out / "left.png");
      write_png16(unit_range(s.u_right), out / "right.png");
      json t;
      t["split_column"] = s.split_column;
      t["left"] = transform_to_json(s.left_transform);
      t["right"] = transform_to_json(s.right_transform);
      write_json(t, out / "transforms.json");
    } else if (*c_det) {
      det_common.load();
      RunConfig cfg = det_common.cfg;
      if (dt.threads) cfg.grid.threads = *dt.threads;
      if (dt.scales) cfg.grid.grid.scales = *dt.scales;
      if (dt.overlap_ratio) cfg.grid.grid.overlap_ratio = *dt.overlap_ratio;
      if (dt.pair_halfwidth) cfg.grid.grid.pair_halfwidth = *dt.pair_halfwidth;
      if (dt.iters_per_init) cfg.grid.per_init.iterations = *dt.iters_per_init;
      if (dt.polish_iters) cfg.grid.polish.iterations = *dt.polish_iters;
      if (!dt.pyramid.empty()) cfg.baseline.scales = dt.pyramid;
      cfg.validate();
      if (dt.image.empty() && dt.left.empty()) throw InvalidArgument("detect needs --image or --left/--right");

      const Templates T = load_templates(dt.tmpl, dt.coarse);
      const std::optional<TwoPhaseModel> model = load_model(dt.model);
      Inputs in;
      if (!dt.image.empty()) {
        in.original = read_image(dt.image);
        SplitResult s = split_bilateral(*in.original, cfg.split);
        in.left = std::move(s.u_left);
        in.right = std::move(s.u_right);
        in.left_t = s.left_transform;
        in.right_t = s.right_transform;
      } else {
        in.left = read_image(dt.left);
        in.right = read_image(dt.right);
        in.left_t = identity_transform(in.left);
        in.right_t = identity_transform(in.right);
      }
      const Detection d = run_method(dt.method, in, T, model, cfg);
      const double f = T.fine->f();
      const std::array<SideBox, 2> boxes{side_box(d.left.pose, f, in.left_t), side_box(d.right.pose, f, in.right_t)};
      const json j = detection_to_json(d, template_hash(*T.fine), boxes);
      if (dt.out.empty()) {
        print_json(j);
      } else {
        write_json(j, dt.out);
      }
      if (!dt.overlay.empty()) write_overlays(dt.overlay, in, d, f);
    } else if (*c_tr) {
      tr_common.load();
      RunConfig cfg = tr_common.cfg;
      for (TrainConfig* t : {&cfg.train.coarse, &cfg.train.fine}) {
        if (tr.outer) t->outer_iterations = *tr.outer;
        if (tr.epochs) t->epochs_per_outer = *tr.epochs;
        if (tr.batch) t->batch = *tr.batch;
        if (tr.lr_backbone) t->lr_backbone = *tr.lr_backbone;
        if (tr.lr_head) t->lr_head = *tr.lr_head;
      }
      if (tr.seed) {
        cfg.train.coarse.seed = *tr.seed;
        cfg.train.fine.seed = *tr.seed + 1;
      }
      cfg.validate();
      std::vector<TrainingPair> data;
      for (const fs::path& dir : pair_dirs(tr.data)) {
        data.push_back({read_image(dir / "left.png"), read_image(dir / "right.png")});
      }
      const Templates T = load_templates(tr.tmpl, tr.coarse);
      const TwoPhaseResult r = two_phase_train(data, *T.coarse, *T.fine, cfg.param, cfg.train);
      write_json(model_to_json(r.model), tr.out);
      json curve;
      for (const auto& [name, res] : {std::pair{"coarse", &r.coarse}, std::pair{"fine", &r.fine}}) {
        json c = json::array();
        for (const EpochRecord& e : res->curve) {
          c.push_back({{"outer", e.outer}, {"epoch", e.epoch}, {"mean_scaled_loss", e.mean_scaled_loss},
                       {"mean_loss", e.mean_loss}});
        }
        curve[name] = c;
      }
      if (!tr.curve.empty()) write_json(curve, tr.curve);
      std::cout << "phase 1 mean loss " << r.coarse.curve.front().mean_loss << " -> "
                << r.coarse.curve.back().mean_loss << "; phase 2 " << r.fine.curve.front().mean_loss
                << " -> " << r.fine.curve.back().mean_loss << "\n";
    } else if (*c_ev) {
      ev_common.load();
      RunConfig cfg = ev_common.cfg;
      if (ev.threads) cfg.grid.threads = *ev.threads;
      cfg.validate();
      const Templates T = load_templates(ev.tmpl, ev.coarse);
      const std::optional<TwoPhaseModel> model = load_model(ev.model);
      struct Row {
        double pair_loss = 0, total = 0, center = 0, scale = 0;
        int n = 0;
      };
      std::map<std::string, Row> rows;
      for (const fs::path& dir : pair_dirs(ev.data)) {
        Inputs in;
        in.left = read_image(dir / "left.png");
        in.right = read_image(dir / "right.png");
        std::optional<GroundTruth> truth;
        if (fs::exists(dir / "truth.json")) truth = truth_from_json(read_json(dir / "truth.json").at("fine"));
        for (const std::string& m : ev.methods) {
          const Detection d = run_method(m, in, T, model, cfg);
          Row& row = rows[m];
          row.pair_loss += d.left.loss + d.right.loss;
          row.total += d.total;
          if (truth) {
            const DetectionScore s = score(d, *truth);
            row.center += 0.5 * (s.left.center_error + s.right.center_error);
            row.scale += 0.5 * (s.left.scale_error + s.right.scale_error);
          }
          ++row.n;
        }
      }
      std::ostringstream csv, md;
      csv << "method,n,mean_l_left_plus_l_right,mean_total,mean_center_error,mean_scale_error\n";
      md << "| Method | n | L_left + L_right | total | center error | scale error |\n";
      md << "|---|---|---|---|---|---|\n";
      csv << std::setprecision(6);
      md << std::fixed << std::setprecision(4);
      for (const std::string& m : ev.methods) {
        const Row& r = rows[m];
        const double n = std::max(1, r.n);
        csv << m << "," << r.n << "," << r.pair_loss / n << "," << r.total / n << "," << r.center / n << ","
            << r.scale / n << "\n";
        md << "| " << m << " | " << r.n << " | " << r.pair_loss / n << " | " << r.total / n << " | "
           << r.center / n << " | " << r.scale / n << " |\n";
      }
      std::cout << md.str();
      if (!ev.out.empty()) {
        std::ofstream f(ev.out);
        if (!f) throw IoError("cannot write " + ev.out);
        f << (fs::path(ev.out).extension() == ".md" ? md.str() : csv.str());
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return error_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
