#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "kneeloc/geometry.hpp"
#include "kneeloc/loss.hpp"

namespace kneeloc {

struct DetectionStats {
  std::int64_t inits = 0;
  std::int64_t evals = 0;
  double wall_ms = 0.0;
};

struct SideDetection {
  PoseParams pose;
  double loss = 0.0;
  bool negated = false;
};

// Result of any detection method, expressed in half-image coordinates.
struct Detection {
  std::string method;
  SideDetection left;
  SideDetection right;
  double l_reg = 0.0;
  double total = 0.0;
  DetectionStats stats;
};

// Fills a detection from poses by evaluating the shared side loss on both
// halves.
Detection make_detection(std::string method, const Image& u_left, const Image& u_right,
                         const PoseParams& left, const PoseParams& right, const Template& T,
                         double f);

// Corners A(pose) [+-1, +-1, 1] in the order top-left, top-right,
// bottom-right, bottom-left.
std::array<NormCoord, 4> pose_corners(const PoseParams& pose, double f);

}  // namespace kneeloc
