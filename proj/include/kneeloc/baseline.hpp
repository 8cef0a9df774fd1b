#pragma once

#include <string>
#include <vector>

#include "kneeloc/detection.hpp"
#include "kneeloc/loss.hpp"

namespace kneeloc {

// Normalized cross-correlation of tmpl at every valid top-left placement in
// img; the result has (H - h + 1) x (W - w + 1) entries in [-1, 1]. The
// numerator is an FFT cross-correlation against the mean-removed template;
// the window means and variances come from running-sum tables. Windows with
// (numerically) zero variance score 0.
// Throws TemplateTooLarge, or DegenerateInput for a constant template.
Image sliding_ncc(const Image& img, const Image& tmpl);

// Template width / image width ratios of the five-level pyramid.
inline const std::vector<double> kDefaultPyramid{0.20, 0.27, 0.34, 0.41, 0.48};

struct BaselineConfig {
  std::vector<double> scales = kDefaultPyramid;
  int candidates_per_scale = 3;
};

struct BaselineResult {
  Detection detection;
  std::vector<std::string> warnings;  // pyramid levels that had to be skipped
};

// Sliding-window matching of T over a rescaled copy of each half per pyramid
// level. The strongest placements (by |correlation|) are rescored with
// side_loss, and the (left, right) pair with the smallest summed loss wins.
BaselineResult multiscale_match(const Image& u_left, const Image& u_right, const Template& T,
                                const ParamConfig& pcfg, const BaselineConfig& cfg = {});

// Pose of a template placed with its top-left pixel at (row, col) in an image
// of size scaled_h x scaled_w (rotation 0).
PoseParams placement_pose(int row, int col, int tmpl_h, int tmpl_w, int scaled_h, int scaled_w);

}  // namespace kneeloc
