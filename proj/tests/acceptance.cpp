// Acceptance run. `acceptance <id>` checks one criterion, `acceptance` checks
// all of them; each prints a single PASS/FAIL line followed by the measured
// numbers. The exit code is non-zero when any checked criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kneeloc/baseline.hpp"
#include "kneeloc/neural.hpp"
#include "kneeloc/optimize.hpp"
#include "kneeloc/parametrize.hpp"
#include "kneeloc/preprocess.hpp"
#include "kneeloc/synth.hpp"
#include "naive_ncc.hpp"
#include "oracles.hpp"
#include "roundtrip.hpp"

using namespace kneeloc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---------------------------------------------------------------------------

Outcome parametrization() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> fd(1.0, 2.0);
  const int n = 100000;

  std::vector<std::pair<PoseParams, ParamConfig>> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const ParamConfig c{0.15, 0.8, 0.13, fd(rng)};
    const double s = c.alpha0 + c.beta0 * 0.5 * (1.0 + 0.9999 * u(rng));
    poses.push_back({{s, 0.9999 * (1 - s) * u(rng), 0.9999 * (1 - s / c.f) * u(rng), 0.9999 * c.rot_bound * u(rng)}, c});
  }
  double worst = 0;
  const auto t0 = Clock::now();
  for (const auto& [p, c] : poses) {
    const PoseParams q = constrain(unconstrain(p, c), c);
    worst = std::max({worst, std::abs(q.scale - p.scale), std::abs(q.tx - p.tx), std::abs(q.ty - p.ty),
                      std::abs(q.rot - p.rot)});
  }
  const double secs = seconds_since(t0);

  std::uniform_real_distribution<double> v10(-10.0, 10.0);
  int violations = 0;
  for (int i = 0; i < n; ++i) {
    const ParamConfig c{0.15, 0.8, 0.13, fd(rng)};
    const PoseParams p = constrain({v10(rng), v10(rng), v10(rng), v10(rng)}, c);
    const bool inside = std::abs(p.tx) + p.scale <= 1.0 && std::abs(p.ty) + p.scale / c.f <= 1.0 &&
                        p.scale >= c.alpha0 && p.scale <= c.alpha0 + c.beta0 &&
                        std::abs(p.rot) <= c.rot_bound;
    if (!inside) ++violations;
  }
  o.detail << "max round-trip error " << fmt("%.2e", worst) << ", " << fmt("%.3f", secs)
           << " s for 1e5 poses, " << violations << " corner violations in 1e5 draws";
  o.require(worst < 1e-9, "round-trip error < 1e-9");
  o.require(secs < 1.0, "runtime < 1 s");
  o.require(violations == 0, "zero violations");
  return o;
}

// ---------------------------------------------------------------------------

Outcome grid_formula() {
  Outcome o;
  const std::vector<double> c = grid_centers(0.5, 0.25);
  const int n = grid_count(0.5, 0.25);
  const int formula = 1 + static_cast<int>(std::ceil((2.0 - 2 * 0.5) / (0.25 * 2 * 0.5)));
  const double spacing = c.size() > 1 ? c[1] - c[0] : 0.0;
  o.detail << "s=0.5 r=0.25: N=" << n << " (formula " << formula << "), spacing " << fmt("%.6f", spacing);
  o.require(n == 5 && formula == 5 && c.size() == 5, "N = 5");
  o.require(std::abs(spacing - 0.25) < 1e-12, "spacing 0.25");

  double worst_margin = 1e300;
  int checked = 0;
  for (int ns : {2, 3, 5, 8}) {
    for (double r : {0.1, 0.25, 0.5}) {
      GridConfig g;
      g.scales = ns;
      g.overlap_ratio = r;
      const ParamConfig pc{0.15, 0.8, 0.13, 1.2};
      for (double s : grid_scales(g, pc)) {
        for (double h : {s, s / pc.f}) {
          const std::vector<double> xs = grid_centers(h, r);
          for (std::size_t i = 1; i < xs.size(); ++i) {
            const double overlap = 2 * h - (xs[i] - xs[i - 1]);
            worst_margin = std::min(worst_margin, overlap - 2 * h * (1 - r));
            ++checked;
          }
          worst_margin = std::min(worst_margin, 1e-9 - std::abs(xs.front() - h + 1.0));
          worst_margin = std::min(worst_margin, 1e-9 - std::abs(xs.back() + h - 1.0));
        }
      }
    }
  }
  o.detail << "; " << checked << " adjacent pairs, min overlap margin " << fmt("%.2e", worst_margin);
  o.require(worst_margin >= -1e-12, "overlap >= 2 s (1 - r) and full coverage");
  return o;
}

// ---------------------------------------------------------------------------

Outcome loss_identities() {
  Outcome o;
  const Template T = make_joint_template();
  const double self = matching_loss(T.patch(), T).loss;
  const double neg = matching_loss(T.patch().negated(), T).loss;
  o.require(std::abs(self) < 1e-10 && std::abs(neg) < 1e-10, "identities within 1e-10");

  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::uniform_int_distribution<int> lattice(0, 1023);
  double worst_img = 0, worst_dbl = 0;
  std::vector<double> s(T.patch().size()), t(s.size());
  for (int k = 0; k < 100; ++k) {
    // Image path: lattice values keep a*u+b exact in float.
    Image u(T.height(), T.width());
    for (float& x : u.data()) x = static_cast<float>(lattice(rng) / 1024.0);
    const double base = matching_loss(u, T).loss;
    for (double a : {-3.0, -1.0, 0.5, 2.0}) {
      Image v = u;
      for (float& x : v.data()) x = static_cast<float>(a * x + 0.25);
      worst_img = std::max(worst_img, std::abs(matching_loss(v, T).loss - base));
    }
    // Double path with real coefficients.
    for (double& x : s) x = d(rng);
    const double base_d = matching_loss_samples(s, T).loss;
    for (double a : {-3.0, -1.0, 0.5, 2.0}) {
      const double b = d(rng) - 0.5;
      for (std::size_t i = 0; i < s.size(); ++i) t[i] = a * s[i] + b;
      worst_dbl = std::max(worst_dbl, std::abs(matching_loss_samples(t, T).loss - base_d));
    }
  }
  o.detail << "L(T)=" << fmt("%.1e", self) << " L(-T)=" << fmt("%.1e", neg) << ", affine invariance max "
           << fmt("%.1e", worst_img) << " (image) " << fmt("%.1e", worst_dbl) << " (double)";
  o.require(worst_img < 1e-8 && worst_dbl < 1e-8, "affine invariance < 1e-8");
  return o;
}

// ---------------------------------------------------------------------------

// Probes whose finite difference depends on the step size straddle a min/max
// switch or a bilinear cell edge and are skipped.
bool smooth_probe(double fd, double fd_fine, double floor) {
  return oracle::rel_error(fd, fd_fine, floor) <= 1e-4;
}

double pair_loss_suite(int& probes) {
  const Template T = make_joint_template();
  const ParamConfig cfg{0.15, 0.8, 0.13, T.f()};
  std::mt19937_64 rng(401);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double worst = 0;
  probes = 0;
  for (int attempt = 0; attempt < 2000 && probes < 100; ++attempt) {
    const Image ul = oracle::smooth_image(80, 50, rng), ur = oracle::smooth_image(80, 50, rng);
    PairVector v;
    for (double& x : v) x = d(rng);
    const LossAndGrad g = pair_loss_grad(ul, ur, v, T, cfg);
    const int j = std::uniform_int_distribution<int>(0, 7)(rng);
    auto at = [&](double h) {
      PairVector w = v;
      w[j] += h;
      return pair_loss(ul, ur, w, T, cfg).total;
    };
    const double h = 1e-5;
    const double fd = (at(h) - at(-h)) / (2 * h);
    const double fd_fine = (at(h / 8) - at(-h / 8)) / (h / 4);
    if (!smooth_probe(fd, fd_fine, 1e-3)) continue;
    worst = std::max(worst, oracle::rel_error(g.grad[j], fd, 1e-3));
    ++probes;
  }
  return worst;
}

double locnet_suite(int& probes) {
  const Template T = make_joint_template(12, 10);
  const ParamConfig pcfg{0.15, 0.8, 0.13, T.f()};
  LocNetArch a;
  a.input_height = 24;
  a.input_width = 20;
  a.conv = {{4, 3, 2}, {6, 3, 2}};
  a.pointwise = {4};
  a.hidden = {8};
  std::mt19937_64 rng(402);
  std::vector<TrainingPair> data;
  for (int i = 0; i < 3; ++i) {
    PlantSpec spec{T};
    std::tie(spec.left, spec.right) = sample_pose_pair({}, T.f(), rng);
    spec.half_height = 24;
    spec.half_width = 20;
    const SynthPair p = generate(spec, rng);
    data.push_back({p.left, p.right});
  }
  const std::vector<double> cu{1.0, 2.5, 0.7};
  const std::vector<std::size_t> batch{0, 1, 2};
  double worst = 0;
  probes = 0;
  for (int trial = 0; trial < 100 && probes < 100; ++trial) {
    LocNetWeights w = LocNetWeights::initialize(a, 400 + trial);
    // Spread the initial outputs over the pose box.
    for (double& x : w.mutable_tensors()[w.tensors().size() - 2].values) x *= 30.0;
    ParamSet g;
    batch_gradient(w, data, batch, cu, T, pcfg, g);
    for (int p = 0; p < 4 && probes < 100; ++p) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, w.tensors().size() - 1)(rng);
      const std::size_t j =
          std::uniform_int_distribution<std::size_t>(0, w.tensors()[t].values.size() - 1)(rng);
      auto f = [&](double h) {
        LocNetWeights v = w;
        v.mutable_tensors()[t].values[j] += h;
        return mean_scaled_loss(v, data, T, pcfg, cu);
      };
      const double h = 1e-5;
      const double fd = (f(h) - f(-h)) / (2 * h);
      const double fd_fine = (f(h / 8) - f(-h / 8)) / (h / 4);
      if (!smooth_probe(fd, fd_fine, 1e-4)) continue;
      worst = std::max(worst, oracle::rel_error(g[t][j], fd, 1e-4));
      ++probes;
    }
  }
  return worst;
}

double jacobian_suite(int& probes) {
  std::mt19937_64 rng(403);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0;
  probes = 0;
  const int oh = 7, ow = 6;
  for (int attempt = 0; attempt < 2000 && probes < 100; ++attempt) {
    const Image img = oracle::smooth_image(32, 32, rng);
    const double f = 1.0 + 0.5 * (u(rng) + 1.0);
    const PoseParams pose{0.45 + 0.3 * u(rng), 0.2 * u(rng), 0.2 * u(rng), 0.12 * u(rng)};
    const WarpResult g = warp_with_grad(img, pose, f, oh, ow);
    const int k = std::uniform_int_distribution<int>(0, 3)(rng);
    const std::size_t n = g.image.size();
    std::vector<double> p1(n), m1(n), p2(n), m2(n);
    auto at = [&](double delta, std::vector<double>& out) {
      std::array<double, 4> a = pose.as_array();
      a[k] += delta;
      warp_samples(img, PoseParams::from_array(a), f, oh, ow, out, {});
    };
    const double h = 1e-4;
    at(h, p1);
    at(-h, m1);
    at(h / 8, p2);
    at(-h / 8, m2);
    bool smooth = true;
    double local = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d1 = (p1[i] - m1[i]) / (2 * h);
      const double d2 = (p2[i] - m2[i]) / (h / 4);
      if (!smooth_probe(d1, d2, 1e-3)) smooth = false;
      local = std::max(local, oracle::rel_error(g.jacobian(i, k), d1, 1e-3));
    }
    if (!smooth) continue;
    worst = std::max(worst, local);
    ++probes;
  }
  return worst;
}

Outcome gradients() {
  Outcome o;
  int np = 0, nn = 0, nj = 0;
  const double ep = pair_loss_suite(np);
  const double en = locnet_suite(nn);
  const double ej = jacobian_suite(nj);
  o.detail << "max relative error: pair loss " << fmt("%.1e", ep) << " (" << np << " probes), network "
           << fmt("%.1e", en) << " (" << nn << "), warp Jacobian " << fmt("%.1e", ej) << " (" << nj << ")";
  o.require(np >= 100 && nn >= 100 && nj >= 100, "100 probes each");
  o.require(ep < 1e-3 && en < 1e-3 && ej < 1e-3, "relative error < 1e-3");
  return o;
}

// ---------------------------------------------------------------------------

Outcome ncc_oracle() {
  Outcome o;
  std::mt19937_64 rng(501);
  std::uniform_int_distribution<int> isz(33, 128), tsz(4, 32);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const int ih = isz(rng), iw = isz(rng), th = tsz(rng), tw = tsz(rng);
    const Image img = oracle::random_image(ih, iw, rng);
    const Image tm = oracle::random_image(th, tw, rng);
    const Image fast = sliding_ncc(img, tm);
    const Image slow = oracle::naive_ncc(img, tm);
    for (std::size_t i = 0; i < fast.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(fast.data()[i] - slow.data()[i])));
  }
  const Image big = oracle::smooth_image(512, 512, rng);
  const Image tm = oracle::random_image(64, 64, rng);
  auto t0 = Clock::now();
  const Image fast = sliding_ncc(big, tm);
  const double t_fast = seconds_since(t0);
  t0 = Clock::now();
  const Image slow = oracle::naive_ncc(big, tm);
  const double t_slow = seconds_since(t0);
  double worst_big = 0;
  for (std::size_t i = 0; i < fast.size(); ++i)
    worst_big = std::max(worst_big, static_cast<double>(std::abs(fast.data()[i] - slow.data()[i])));
  const double speedup = t_slow / t_fast;
  o.detail << "max |fast - naive| " << fmt("%.1e", worst) << " over 20 sizes, " << fmt("%.1e", worst_big)
           << " at 512/64; speedup " << fmt("%.1f", speedup) << "x (" << fmt("%.3f", t_fast) << " s vs "
           << fmt("%.3f", t_slow) << " s)";
  o.require(worst < 1e-4 && worst_big < 1e-4, "difference < 1e-4");
  o.require(speedup >= 5.0, "speedup >= 5x");
  return o;
}

// ---------------------------------------------------------------------------

int worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome planted_recovery() {
  Outcome o;
  const Template T = make_joint_template();
  const ParamConfig pcfg{0.15, 0.8, 0.13, T.f()};
  SynthConfig sc;  // moderate noise, |rot| <= 0.1
  sc.poses.scale_min = 0.25;
  sc.poses.scale_max = 0.6;
  GridSearchConfig gc;
  gc.threads = std::min(8, worker_threads());
  std::mt19937_64 rng(601);
  double max_ds = 0, max_dc = 0, sum_loss = 0;
  int bad = 0;
  const int n = 50;
  const auto t0 = Clock::now();
  for (int i = 0; i < n; ++i) {
    const SynthPair p = sample_pair(sc, T, rng);
    const GridSearchResult r = grid_search(p.left, p.right, T, pcfg, gc);
    const PoseParams l = constrain({r.v[0], r.v[1], r.v[2], r.v[3]}, pcfg);
    const PoseParams rr = constrain({r.v[4], r.v[5], r.v[6], r.v[7]}, pcfg);
    bool ok = true;
    for (const auto& [d, t] : {std::pair{l, p.truth.left}, std::pair{rr, p.truth.right}}) {
      const double ds = std::abs(d.scale - t.scale), dc = std::hypot(d.tx - t.tx, d.ty - t.ty);
      max_ds = std::max(max_ds, ds);
      max_dc = std::max(max_dc, dc);
      ok = ok && ds < 0.02 && dc < 0.02;
    }
    if (!ok) ++bad;
    sum_loss += r.loss.l_left + r.loss.l_right;
  }
  const double secs = seconds_since(t0);
  const double mean = sum_loss / n;
  o.detail << n << " pairs, " << gc.threads << " thread(s): max |dscale| " << fmt("%.4f", max_ds)
           << ", max center error " << fmt("%.4f", max_dc) << ", " << bad << " pairs off, mean loss "
           << fmt("%.4f", mean) << ", " << fmt("%.0f", secs) << " s";
  o.require(bad == 0, "every side within 0.02");
  o.require(mean < 0.10, "mean loss < 0.10");
  o.require(secs < 600.0, "wall time < 10 min");
  return o;
}

// ---------------------------------------------------------------------------

// Training and evaluation setup shared by the neural criteria: the context
// pattern is planted at random scales; the coarse network looks for the whole
// context frame, the fine network for the joint region inside it.
struct NeuralSetup {
  Template context = make_joint_context_template(120);
  Template coarse = make_joint_context_template(40);
  Template fine = make_joint_template();
  ParamConfig base{0.15, 0.8, 0.13, 1.0};
  SynthConfig synth;

  std::vector<TrainingPair> training_pairs(int n, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<TrainingPair> data;
    for (int i = 0; i < n; ++i) {
      const SynthPair p = sample_pair(synth, context, rng);
      data.push_back({p.left, p.right});
    }
    return data;
  }
};

Outcome method_ordering() {
  Outcome o;
  const NeuralSetup S;
  const ParamConfig fc = fine_config(S.base, S.fine);

  TwoPhaseConfig tc;  // defaults: T=3, M=20, batch 8, learning rate 3e-3, 80x50 and 50x50 inputs
  tc.coarse.seed = 1;
  tc.fine.seed = 2;
  const auto t0 = Clock::now();
  const TwoPhaseResult trained = two_phase_train(S.training_pairs(600, 701), S.coarse, S.fine, S.base, tc);
  const double train_secs = seconds_since(t0);

  // Planted fine scales halfway between neighbouring pyramid levels.
  const double off_pyramid[4] = {0.235, 0.305, 0.375, 0.445};
  const double region_scale = joint_region_pose().scale;
  GridSearchConfig gc;
  gc.threads = std::min(8, worker_threads());
  std::mt19937_64 rng(702);
  const int n = 50;
  double sum_b = 0, sum_n = 0, sum_s = 0, sum_g = 0;
  double sum_tn = 0, sum_ts = 0;
  int increases = 0;
  for (int i = 0; i < n; ++i) {
    SynthConfig sc = S.synth;
    sc.poses.scale_min = sc.poses.scale_max = off_pyramid[i % 4] / region_scale;
    const SynthPair p = sample_pair(sc, S.context, rng);
    const Detection b = multiscale_match(p.left, p.right, S.fine, fc).detection;
    const Detection nn = infer(trained.model, p.left, p.right, S.coarse, S.fine, S.base);
    InferConfig ic;
    ic.sharpen = true;
    const Detection ns = infer(trained.model, p.left, p.right, S.coarse, S.fine, S.base, ic);
    const GridSearchResult g = grid_search(p.left, p.right, S.fine, fc, gc);
    if (ns.total > nn.total) ++increases;
    sum_b += b.left.loss + b.right.loss;
    sum_n += nn.left.loss + nn.right.loss;
    sum_s += ns.left.loss + ns.right.loss;
    sum_g += g.loss.l_left + g.loss.l_right;
    sum_tn += nn.total;
    sum_ts += ns.total;
  }
  const double mb = sum_b / n, mn = sum_n / n, ms = sum_s / n, mg = sum_g / n;
  o.detail << "mean l_left+l_right over " << n << " pairs: baseline " << fmt("%.4f", mb) << ", neural "
           << fmt("%.4f", mn) << ", neural+sharpen " << fmt("%.4f", ms) << ", grid search " << fmt("%.4f", mg)
           << "; regularized total neural " << fmt("%.4f", sum_tn / n) << " -> sharpened "
           << fmt("%.4f", sum_ts / n) << ", " << increases << " increases; training "
           << fmt("%.0f", train_secs) << " s";
  o.require(mb >= mn, "baseline >= neural");
  o.require(mn >= ms, "neural >= neural+sharpen");
  o.require(std::abs(ms - mg) <= 0.02, "neural+sharpen within 0.02 of grid search");
  o.require(increases == 0, "sharpening never increases the loss");
  return o;
}

// ---------------------------------------------------------------------------

Outcome desk_training() {
  Outcome o;
  const NeuralSetup S;
  const ParamConfig cc = coarse_config(S.base, S.coarse);
  const std::vector<TrainingPair> data = S.training_pairs(20, 801);
  LocNetArch arch;
  arch.input_height = 80;
  arch.input_width = 50;
  TrainConfig cfg;
  cfg.outer_iterations = 2;
  cfg.epochs_per_outer = 5;
  cfg.batch = 4;
  cfg.lr_backbone = 1e-3;
  cfg.lr_head = 1e-3;
  cfg.seed = 8;

  const auto t0 = Clock::now();
  const LocNetWeights init = LocNetWeights::initialize(arch, cfg.seed);
  const TrainResult a = train_phase(data, S.coarse, cc, cfg, init);
  const double secs = seconds_since(t0);
  const TrainResult b = train_phase(data, S.coarse, cc, cfg, init);

  bool identical = a.curve.size() == b.curve.size();
  for (std::size_t i = 0; identical && i < a.curve.size(); ++i)
    identical = a.curve[i].mean_scaled_loss == b.curve[i].mean_scaled_loss &&
                a.curve[i].mean_loss == b.curve[i].mean_loss;

  // The scaled objective changes whenever c_u is refreshed, so the start and
  // the end of training are compared under the final c_u.
  const double before = mean_scaled_loss(init, data, S.coarse, cc, a.state.cu);
  const double after = mean_scaled_loss(a.state.weights, data, S.coarse, cc, a.state.cu);
  o.detail << "20 pairs, T=2, M=5: mean scaled loss " << fmt("%.4f", before) << " -> " << fmt("%.4f", after)
           << " (ratio " << fmt("%.3f", after / before) << "), unscaled " << fmt("%.4f", a.curve.front().mean_loss)
           << " -> " << fmt("%.4f", a.curve.back().mean_loss) << ", curves " << (identical ? "identical" : "differ")
           << ", " << fmt("%.0f", secs) << " s per run";
  o.require(!a.aborted, "training completed");
  o.require(after < 0.5 * before, "final < 50% of initial");
  o.require(identical, "bitwise-reproducible curve");
  o.require(secs < 900.0, "runtime < 15 min");
  return o;
}

// ---------------------------------------------------------------------------

Outcome preprocess_geometry() {
  Outcome o;
  std::mt19937_64 rng(901);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_aspect = 0, worst_align = 0;
  bool aspect_ok = true;
  for (int k = 0; k < 20; ++k) {
    const Image img = roundtrip::bilateral_composite(rng);
    SplitConfig cfg;
    cfg.out_height = 320;
    cfg.out_width = 200;
    const SplitResult s = split_bilateral(img, cfg);
    for (const HalfTransform* t : {&s.left_transform, &s.right_transform}) {
      const double dev = std::abs(static_cast<double>(t->padded_height) / t->padded_width - 1.6);
      worst_aspect = std::max(worst_aspect, dev * t->padded_width);
      aspect_ok = aspect_ok && dev <= 1.0 / t->padded_width;
    }
    const double sc = 0.3 + 0.15 * (u(rng) + 1.0);
    const PoseParams pose{sc, 0.5 * (1 - sc) * u(rng), 0.5 * (1 - sc / 1.2) * u(rng), 0.1 * u(rng)};
    worst_align = std::max({worst_align, roundtrip::alignment_error(img, s.u_left, s.left_transform, pose, 1.2, 96, 80),
                            roundtrip::alignment_error(img, s.u_right, s.right_transform, pose, 1.2, 96, 80)});
  }
  o.detail << "20 composites: max aspect deviation " << fmt("%.2f", worst_aspect)
           << " / width, max alignment error " << fmt("%.2f", worst_align) << " px";
  o.require(aspect_ok, "aspect 1.6 within 1/width");
  o.require(worst_align < 2.0, "alignment < 2 px");
  return o;
}

// ---------------------------------------------------------------------------

int run(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "kneeloc_acceptance_10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = KNEELOC_CLI;
  const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  int rc = run(cli + " synth --out " + (dir / "data").string() + " --count 1 --seed 10" + quiet);
  o.require(rc == 0, "synth");
  const fs::path pair = dir / "data" / "pair_0000";
  std::string json[2];
  const int threads[2] = {1, 8};
  for (int i = 0; i < 2 && rc == 0; ++i) {
    const fs::path out = dir / ("det_" + std::to_string(threads[i]) + ".json");
    rc = run(cli + " detect --method gridsearch --image " + (pair / "bilateral.png").string() + " --template " +
             (dir / "data" / "templates" / "fine").string() + " --threads " + std::to_string(threads[i]) +
             " --out " + out.string() + quiet);
    o.require(rc == 0, "detect --threads " + std::to_string(threads[i]));
    json[i] = slurp(out);
  }
  const std::regex wall("\"wall_ms\"\\s*:\\s*[-+0-9.eE]+");
  const std::string a = std::regex_replace(json[0], wall, "\"wall_ms\":_");
  const std::string b = std::regex_replace(json[1], wall, "\"wall_ms\":_");
  const bool same = !a.empty() && a == b;
  o.detail << "gridsearch JSON with --threads 1 and 8: " << json[0].size() << " and " << json[1].size()
           << " bytes, " << (same ? "identical" : "different") << " apart from wall_ms";
  o.require(same, "identical bytes");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parametrization round trip and constraints", parametrization},
      {"grid formula and overlap", grid_formula},
      {"loss identities and intensity invariance", loss_identities},
      {"gradient suites", gradients},
      {"fast NCC against the naive oracle", ncc_oracle},
      {"planted recovery by grid search", planted_recovery},
      {"method ordering", method_ordering},
      {"desk-scale training", desk_training},
      {"preprocess geometry", preprocess_geometry},
      {"thread-count determinism of detect", determinism},
  };
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [1-" << criteria.size() << "]...\n";
      return 2;
    }
    ids.push_back(id);
  }
  if (ids.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) ids.push_back(i);

  bool all = true;
  for (int id : ids) {
    Outcome o;
    try {
      o = criteria[id - 1].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::cout << "criterion " << id << " (" << criteria[id - 1].first << "): " << (o.pass ? "PASS" : "FAIL")
              << " | " << o.detail.str() << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
