#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kneeloc/detection.hpp"
#include "kneeloc/loss.hpp"

namespace kneeloc {

struct AdamConfig {
  double step_size = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 300;

  void validate() const;
};

// Objective: returns the loss at v and, when grad is non-null, writes the
// gradient into it.
using PairObjective = std::function<LossBreakdown(const PairVector& v, PairVector* grad)>;

struct TracePoint {
  PairVector v{};
  LossBreakdown loss;
};

struct OptTrace {
  std::vector<TracePoint> points;  // empty when only the best point was kept
  std::size_t best_index = 0;
  TracePoint initial;
  TracePoint best;
  int evaluations = 0;
  // Set when the objective returned a non-finite value; the trace ends at the
  // last finite point.
  bool non_finite = false;
};

// Plain Adam from v0 for cfg.iterations steps. The result is the minimum over
// every recorded iterate (v0 included), not the last one. With
// keep_points=false only the best point is retained. Throws NonFiniteLoss if
// the objective is non-finite at v0.
OptTrace adam_minimize(const PairObjective& objective, const PairVector& v0, const AdamConfig& cfg,
                       bool keep_points = true);

struct SharpenResult {
  PairVector v{};
  LossBreakdown loss;
  LossBreakdown initial_loss;
  int evaluations = 0;
  bool non_finite = false;
};

// Adam refinement of the regularized pair cost from v0, returning the trace
// minimum.
SharpenResult sharpen(const Image& u_left, const Image& u_right, const Template& T,
                      const ParamConfig& cfg, const PairVector& v0, const AdamConfig& acfg = {});

struct GridConfig {
  int scales = 5;
  double overlap_ratio = 0.25;
  double pair_halfwidth = 1.0 / 3.0;
  // Only zero-rotation starts are generated; rotation stays free during descent.
  bool include_rotation_inits = false;
  double endpoint_nudge = 1e-6;

  void validate() const;
};

// Equispaced centers covering [-(1 - half_extent), 1 - half_extent] with
// spacing at most overlap_ratio * 2 * half_extent:
// n = 1 + ceil((2 - 2 h) / (r 2 h)).
int grid_count(double half_extent, double overlap_ratio);
std::vector<double> grid_centers(double half_extent, double overlap_ratio);

// Scales equispaced over [alpha0, alpha0 + beta0], nudged inward at the ends.
std::vector<double> grid_scales(const GridConfig& cfg, const ParamConfig& pcfg);

struct InitPoint {
  PairVector v{};
  PoseParams left;
  PoseParams right;
};

// Start points for the grid-initialized search, in a fixed order (scale, left
// horizontal, vertical, right horizontal).
std::vector<InitPoint> grid_init_points(const GridConfig& cfg, const ParamConfig& pcfg);

struct GridSearchConfig {
  GridConfig grid;
  AdamConfig per_init{0.02, 0.9, 0.999, 1e-8, 60};
  AdamConfig polish{0.02, 0.9, 0.999, 1e-8, 300};
  int threads = 1;
};

struct GridSearchResult {
  PairVector v{};
  LossBreakdown loss;
  DetectionStats stats;
  std::size_t best_init = 0;
  int failed_inits = 0;
};

// Multi-start Adam from every grid point, then a polish run from the best
// point found. The reduction orders by (loss, init index), so the result does
// not depend on the thread count.
GridSearchResult grid_search(const Image& u_left, const Image& u_right, const Template& T,
                             const ParamConfig& pcfg, const GridSearchConfig& cfg);

}  // namespace kneeloc
