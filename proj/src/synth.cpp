#include "kneeloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "kneeloc/errors.hpp"
#include "kneeloc/parametrize.hpp"

namespace kneeloc {
namespace {

Image render_background(const BackgroundModel& bg, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(-bg.max_cycles, bg.max_cycles);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  struct Wave {
    double fx, fy, phi;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < bg.cosine_terms; ++k) {
    const double fx = freq(rng);
    const double fy = freq(rng);
    waves.push_back({fx, fy, phase(rng)});
  }
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    const double yn = h > 1 ? static_cast<double>(r) / (h - 1) : 0.0;
    for (int c = 0; c < w; ++c) {
      const double xn = w > 1 ? static_cast<double>(c) / (w - 1) : 0.0;
      double v = bg.base;
      for (const Wave& wave : waves) {
        v += bg.cosine_amplitude *
             std::cos(2.0 * std::numbers::pi * (wave.fx * xn + wave.fy * yn) + wave.phi);
      }
      out.at(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

Image render_side(const PlantSpec& spec, const PoseParams& pose, double f,
                  const SideAppearance& look, std::mt19937_64& rng) {
  const int H = spec.half_height, W = spec.half_width;
  Image img = render_background(spec.background, H, W, rng);

  const AffineMatrix A = affine_matrix(pose, f);
  const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  if (std::abs(det) < 1e-12) throw InvalidArgument("planted pose has a singular matrix");
  // Margin in template-frame units.
  const double mx = spec.margin_px * 2.0 / std::max(1, W - 1) / pose.scale;
  const double my = spec.margin_px * 2.0 / std::max(1, H - 1) / (pose.scale / f);

  for (int r = 0; r < H; ++r) {
    const double y = H > 1 ? -1.0 + 2.0 * r / (H - 1) : 0.0;
    for (int c = 0; c < W; ++c) {
      const double x = W > 1 ? -1.0 + 2.0 * c / (W - 1) : 0.0;
      const double dx = x - A(0, 2);
      const double dy = y - A(1, 2);
      const double qx = (A(1, 1) * dx - A(0, 1) * dy) / det;
      const double qy = (-A(1, 0) * dx + A(0, 0) * dy) / det;
      if (std::abs(qx) > 1.0 + mx || std::abs(qy) > 1.0 + my) continue;
      const double t = bilinear_sample(spec.tmpl.patch(),
                                       {std::clamp(qx, -1.0, 1.0), std::clamp(qy, -1.0, 1.0)});
      img.at(r, c) = static_cast<float>(look.contrast * t + look.brightness);
    }
  }
  if (spec.background.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.background.noise_sigma);
    for (float& v : img.data()) v = static_cast<float>(v + noise(rng));
  }
  if (look.negate) {
    for (float& v : img.data()) v = 1.0f - v;
  }
  return img;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

SynthPair generate(const PlantSpec& spec, std::mt19937_64& rng) {
  const double f = spec.f > 0.0 ? spec.f : spec.tmpl.f();
  if (spec.half_height < 8 || spec.half_width < 8) throw InvalidArgument("synthetic halves too small");
  SynthPair pair;
  pair.left = render_side(spec, spec.left, f, spec.left_look, rng);
  pair.right = render_side(spec, spec.right, f, spec.right_look, rng);
  pair.truth = {spec.left, spec.right, f};
  return pair;
}

double joint_pattern(double x, double y) {
  constexpr double kEdge = 0.05;
  auto bump = [](double t, double c, double w) { return std::exp(-((t - c) / w) * ((t - c) / w)); };
  // Femoral condyles bulge downward (+y), tibial spines point upward.
  const double femur_edge = -0.12 + 0.14 * (bump(x, -0.33, 0.2) + bump(x, 0.30, 0.2));
  const double tibia_edge = 0.16 - 0.10 * bump(x, 0.0, 0.1) + 0.03 * x;
  const double femur = sigmoid((femur_edge - y) / kEdge) * sigmoid((0.72 - std::abs(x)) / kEdge);
  const double tibia = sigmoid((y - tibia_edge) / kEdge) * sigmoid((0.78 - std::abs(x)) / kEdge);
  const double fibula = bump(x, 0.78, 0.09) * bump(y, 0.55, 0.14);
  return 0.2 + 0.5 * femur + 0.45 * tibia + 0.35 * fibula + 0.04 * std::sin(3.0 * x + 2.0 * y);
}

namespace {

// Renders joint_pattern over the region A(pose) [-1,1]^2 of the context frame.
Image render_pattern(int h, int w, const PoseParams& region, double f) {
  const AffineMatrix A = affine_matrix(region, f);
  Image img(h, w);
  const std::vector<NormCoord> grid = make_regular_grid(h, w);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const NormCoord p = A.apply(grid[i]);
    img.data()[i] = static_cast<float>(joint_pattern(p.x, p.y));
  }
  return img;
}

}  // namespace

Template make_joint_context_template(int size) {
  return Template(render_pattern(size, size, {1.0, 0.0, 0.0, 0.0}, 1.0));
}

PoseParams joint_region_pose() { return {0.6, 0.0, 0.0, 0.0}; }

Template make_joint_template(int height, int width) {
  const double f = static_cast<double>(height) / width;
  return Template(render_pattern(height, width, joint_region_pose(), f));
}

DetectionScore score(const Detection& detection, const GroundTruth& truth) {
  auto side = [&](const SideDetection& d, const PoseParams& t) {
    SideScore s;
    s.scale_error = std::abs(d.pose.scale - t.scale);
    s.center_error = std::hypot(d.pose.tx - t.tx, d.pose.ty - t.ty);
    s.rot_error = std::abs(d.pose.rot - t.rot);
    const auto a = pose_corners(d.pose, truth.f);
    const auto b = pose_corners(t, truth.f);
    for (std::size_t k = 0; k < 4; ++k) {
      const double dist = std::hypot(a[k].x - b[k].x, a[k].y - b[k].y);
      s.corner_mean += dist / 4.0;
      s.corner_max = std::max(s.corner_max, dist);
    }
    s.loss = d.loss;
    return s;
  };
  return {side(detection.left, truth.left), side(detection.right, truth.right)};
}

std::pair<PoseParams, PoseParams> sample_pose_pair(const PoseSampler& s, double f,
                                                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(s.scale_min, s.scale_max);
  PoseParams left;
  left.scale = scale_dist(rng);
  const double range_x = (1.0 - left.scale) * s.center_fraction;
  const double range_y = (1.0 - left.scale / f) * s.center_fraction;
  left.tx = range_x * unit(rng);
  left.ty = range_y * unit(rng);
  left.rot = s.max_rot * unit(rng);
  PoseParams right = left;
  const double lo = std::max(-range_x, left.tx - s.max_right_offset);
  const double hi = std::min(range_x, left.tx + s.max_right_offset);
  right.tx = std::uniform_real_distribution<double>(lo, hi)(rng);
  right.rot = s.max_rot * unit(rng);
  return {left, right};
}

SynthPair sample_pair(const SynthConfig& cfg, const Template& tmpl, std::mt19937_64& rng) {
  PlantSpec spec{tmpl};
  std::tie(spec.left, spec.right) = sample_pose_pair(cfg.poses, tmpl.f(), rng);
  spec.background = cfg.background;
  spec.half_height = cfg.half_height;
  spec.half_width = cfg.half_width;
  spec.margin_px = cfg.margin_px;
  std::uniform_real_distribution<double> contrast(cfg.contrast_min, cfg.contrast_max);
  std::uniform_real_distribution<double> brightness(-cfg.brightness, cfg.brightness);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (SideAppearance* look : {&spec.left_look, &spec.right_look}) {
    look->contrast = contrast(rng);
    look->brightness = brightness(rng);
    look->negate = unit(rng) < cfg.negate_probability;
  }
  return generate(spec, rng);
}

GroundTruth region_truth(const GroundTruth& planted, const PoseParams& region, double f_region) {
  const AffineMatrix R = affine_matrix(region, f_region);
  auto side = [&](const PoseParams& p) {
    return pose_from_affine(compose(affine_matrix(p, planted.f), R), f_region);
  };
  return {side(planted.left), side(planted.right), f_region};
}

}  // namespace kneeloc
