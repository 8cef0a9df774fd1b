#pragma once

#include <random>
#include <utility>

#include "kneeloc/detection.hpp"
#include "kneeloc/loss.hpp"

namespace kneeloc {

// Smooth low-frequency cosine fields plus Gaussian white noise.
struct BackgroundModel {
  double base = 0.35;
  double cosine_amplitude = 0.08;
  int cosine_terms = 3;
  double max_cycles = 1.5;  // per half, per axis
  double noise_sigma = 0.02;
};

struct SideAppearance {
  double contrast = 1.0;
  double brightness = 0.0;
  bool negate = false;  // store 1 - u for this half
};

struct PlantSpec {
  explicit PlantSpec(Template t) : tmpl(std::move(t)) {}

  Template tmpl;
  PoseParams left;
  PoseParams right;
  // Vertical parametrization factor used to plant; defaults to tmpl.f() when <= 0.
  double f = 0.0;
  BackgroundModel background;
  SideAppearance left_look;
  SideAppearance right_look;
  int half_height = 160;
  int half_width = 100;
  // Pixels of replicated template border rendered around the patch so that
  // sampling at the planted pose never mixes in background.
  double margin_px = 2.0;
};

struct GroundTruth {
  PoseParams left;
  PoseParams right;
  double f = 1.0;
};

struct SynthPair {
  Image left;
  Image right;
  GroundTruth truth;
};

// Renders the template into each half at the inverse of its pose, so that
// warping a half by its planted pose recovers the template up to the planted
// intensity change and noise.
SynthPair generate(const PlantSpec& spec, std::mt19937_64& rng);

// Knee-joint-like test pattern: two bright bone regions with curved margins
// separated by a dark gap. Coordinates are those of the context frame, [-1,1]^2.
double joint_pattern(double x, double y);

// Square context template covering the full pattern frame (f = 1).
Template make_joint_context_template(int size = 40);

// Joint-area template (f = h / w), a sub-region of the context frame centered
// on the gap. Its pose inside the context frame is joint_region_pose().
Template make_joint_template(int height = 24, int width = 20);
PoseParams joint_region_pose();

struct SideScore {
  double scale_error = 0.0;
  double center_error = 0.0;
  double rot_error = 0.0;
  double corner_mean = 0.0;  // mean distance between matching rotated corners
  double corner_max = 0.0;
  double loss = 0.0;
};

struct DetectionScore {
  SideScore left;
  SideScore right;
};

DetectionScore score(const Detection& detection, const GroundTruth& truth);

struct PoseSampler {
  double scale_min = 0.25;
  double scale_max = 0.6;
  double max_rot = 0.1;
  double center_fraction = 0.85;  // of the admissible translation range
  double max_right_offset = 0.25; // |tx_right - tx_left|
};

// Left/right poses with equal scale and vertical center, independent
// rotations.
std::pair<PoseParams, PoseParams> sample_pose_pair(const PoseSampler& s, double f,
                                                   std::mt19937_64& rng);

struct SynthConfig {
  int half_height = 160;
  int half_width = 100;
  BackgroundModel background;
  PoseSampler poses{0.35, 0.8};  // context-frame scales
  double contrast_min = 0.6;
  double contrast_max = 1.4;
  double brightness = 0.1;     // uniform in [-brightness, brightness]
  double negate_probability = 0.0;
  double margin_px = 2.0;
};

// Random pair from cfg: poses from cfg.poses, per-side contrast and brightness,
// per-side negation with cfg.negate_probability. The template is planted with
// its own aspect factor.
SynthPair sample_pair(const SynthConfig& cfg, const Template& tmpl, std::mt19937_64& rng);

// Ground truth of a sub-region (pose `region` with factor f_region inside the
// planted template frame), projected onto the pose family with f_region.
// Exact when the planted rotation is zero.
GroundTruth region_truth(const GroundTruth& planted, const PoseParams& region, double f_region);

}  // namespace kneeloc
