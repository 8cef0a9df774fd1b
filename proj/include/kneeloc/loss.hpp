#pragma once

#include <array>
#include <span>
#include <vector>

#include "kneeloc/image.hpp"
#include "kneeloc/parametrize.hpp"

namespace kneeloc {

// Squared-norm threshold below which a window counts as constant.
inline constexpr double kDegenerateNormSq = 1e-12;

// Fractional rectangle (left, top, right, bottom) inside a template frame.
struct SubWindow {
  double left = 0.0;
  double top = 0.0;
  double right = 1.0;
  double bottom = 1.0;

  void validate() const;
};

// Half-open pixel rectangle.
struct PixelRect {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
  int area() const { return rows() * cols(); }
};

// Scales win to an h x w raster, rounding outward so fractional bounds are
// covered.
PixelRect window_pixels(const SubWindow& win, int h, int w);

inline constexpr SubWindow kDefaultRedWindow{0.02, 0.30, 0.25, 0.70};
inline constexpr SubWindow kDefaultGreenWindow{0.75, 0.30, 0.98, 0.70};

// Reference patch with its two fixed sub-windows. Mean-removed, normalized
// copies of the three template windows are precomputed.
class Template {
 public:
  Template(Image patch, SubWindow red = kDefaultRedWindow, SubWindow green = kDefaultGreenWindow);

  const Image& patch() const { return patch_; }
  const SubWindow& red() const { return red_; }
  const SubWindow& green() const { return green_; }
  // height / width of the patch
  double f() const { return f_; }
  int height() const { return patch_.height(); }
  int width() const { return patch_.width(); }

  struct WindowStats {
    PixelRect rect;
    std::vector<double> centered;  // row-major over rect, mean removed
    double norm = 0.0;
  };
  const WindowStats& global_stats() const { return windows_[0]; }
  const WindowStats& red_stats() const { return windows_[1]; }
  const WindowStats& green_stats() const { return windows_[2]; }

 private:
  Image patch_;
  SubWindow red_;
  SubWindow green_;
  double f_ = 1.0;
  std::array<WindowStats, 3> windows_;
};

struct NccResult {
  double cost = 1.0;
  bool degenerate = false;
};

// 1 - normalized cross-correlation, in [0, 2]. A window whose mean-removed
// squared norm is below kDegenerateNormSq yields cost 1 and the flag.
NccResult ncc_cost(const Image& u, const Image& w);
NccResult windowed_cost(const Image& u, const Image& w, const SubWindow& win);

// (global + max(red, green)) / 2
NccResult combined_cost(const Image& u, const Template& T);

struct MatchResult {
  double loss = 1.0;
  bool negated = false;
  bool degenerate = false;
};

// min(combined_cost(u), combined_cost(-u)); ties keep the non-negated branch.
MatchResult matching_loss(const Image& u, const Template& T);

// Same as matching_loss on a double-precision sample buffer shaped like the
// template. When grad is non-empty it receives d loss / d sample for the
// active branches.
MatchResult matching_loss_samples(std::span<const double> u, const Template& T,
                                  std::span<double> grad = {});

// Loss of a half image at a pose: warp onto the template grid, then
// matching_loss. Every detection method reports losses through this function.
MatchResult side_loss(const Image& half, const PoseParams& pose, const Template& T, double f);

using PairVector = std::array<double, 8>;

struct LossBreakdown {
  double total = 0.0;
  double l_left = 0.0;
  double l_right = 0.0;
  double l_reg = 0.0;
  bool negated_left = false;
  bool negated_right = false;
  bool degenerate = false;
};

// (scale_l - scale_r)^2 + (ty_l - ty_r)^2
double regularizer(const PoseParams& left, const PoseParams& right);

// Regularized bilateral cost of v = (v_left, v_right). cfg.f sets the
// vertical scale of the sampling grid.
LossBreakdown pair_loss(const Image& u_left, const Image& u_right, const PairVector& v,
                        const Template& T, const ParamConfig& cfg);

struct LossAndGrad {
  LossBreakdown loss;
  PairVector grad{};
};

// pair_loss with its gradient; min/max use the active branch.
LossAndGrad pair_loss_grad(const Image& u_left, const Image& u_right, const PairVector& v,
                           const Template& T, const ParamConfig& cfg);

// Reusable scratch space for repeated gradient evaluations on one template.
class PairLossWorkspace {
 public:
  explicit PairLossWorkspace(const Template& T);
  LossAndGrad evaluate(const Image& u_left, const Image& u_right, const PairVector& v,
                       const ParamConfig& cfg, bool with_grad = true);

 private:
  const Template* tmpl_;
  std::vector<double> samples_;
  std::vector<double> jacobian_;
  std::vector<double> grad_u_;
};

}  // namespace kneeloc
