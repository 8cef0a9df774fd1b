#pragma once

#include <array>

#include "kneeloc/geometry.hpp"

namespace kneeloc {

using UnconstrainedParams = std::array<double, 4>;
using Matrix4 = std::array<std::array<double, 4>, 4>;

// Bounds of the pose box. scale lives in [alpha0, alpha0 + beta0]; the patch
// half-height is scale / f, with f = template height / width.
struct ParamConfig {
  double alpha0 = 0.15;
  double beta0 = 0.8;
  double rot_bound = 0.13;
  double f = 1.0;

  // Throws InvalidArgument when a bound is violated.
  void validate() const;
};

// The tanh map from R^4 onto the pose box:
//   scale = alpha0 + beta0 * (1 + tanh v1) / 2
//   tx    = (1 - scale)     * tanh v2
//   ty    = (1 - scale / f) * tanh v3
//   rot   = rot_bound * tanh v4
// so the unrotated patch always lies inside [-1,1]^2.
PoseParams constrain(const UnconstrainedParams& v, const ParamConfig& cfg);

// Inverse of constrain. Throws BoundaryPose unless the pose is strictly inside
// the box.
UnconstrainedParams unconstrain(const PoseParams& pose, const ParamConfig& cfg);

// d pose / d v, row i = pose component i.
Matrix4 constrain_jacobian(const UnconstrainedParams& v, const ParamConfig& cfg);

// [[s cos r, -s sin r, tx], [(s/f) sin r, (s/f) cos r, ty]]
AffineMatrix affine_matrix(const PoseParams& pose, double f);

// Closest pose (least squares on the linear part) whose matrix approximates A.
// Exact whenever A was produced by affine_matrix with the same f.
PoseParams pose_from_affine(const AffineMatrix& A, double f);

// True when every box inequality holds (non-strict), up to tol.
bool pose_in_box(const PoseParams& pose, const ParamConfig& cfg, double tol = 0.0);

// Projects a pose into the closed box. The scale bounds shrink by margin;
// translation and rotation limits shrink by the factor (1 - margin).
PoseParams clamp_to_box(const PoseParams& pose, const ParamConfig& cfg, double margin = 0.0);

}  // namespace kneeloc
