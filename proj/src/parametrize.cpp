#include "kneeloc/parametrize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kneeloc/errors.hpp"

namespace kneeloc {

void ParamConfig::validate() const {
  const bool ok = std::isfinite(alpha0) && std::isfinite(beta0) && std::isfinite(rot_bound) &&
                  std::isfinite(f) && alpha0 > 0.0 && beta0 > 0.0 && alpha0 + beta0 <= 1.0 &&
                  f >= 1.0 && rot_bound >= 0.0;
  if (!ok) {
    std::ostringstream msg;
    msg << "invalid parametrization config: alpha0=" << alpha0 << " beta0=" << beta0
        << " rot_bound=" << rot_bound << " f=" << f;
    throw InvalidArgument(msg.str());
  }
}

PoseParams constrain(const UnconstrainedParams& v, const ParamConfig& cfg) {
  PoseParams p;
  p.scale = cfg.alpha0 + cfg.beta0 * 0.5 * (1.0 + std::tanh(v[0]));
  p.tx = (1.0 - p.scale) * std::tanh(v[1]);
  p.ty = (1.0 - p.scale / cfg.f) * std::tanh(v[2]);
  p.rot = cfg.rot_bound * std::tanh(v[3]);
  return p;
}

namespace {

double checked_atanh(double arg, const char* what) {
  if (!std::isfinite(arg) || std::abs(arg) >= 1.0) {
    std::ostringstream msg;
    msg << what << " is on or outside the pose box (atanh argument " << arg << ")";
    throw BoundaryPose(msg.str());
  }
  return std::atanh(arg);
}

}  // namespace

UnconstrainedParams unconstrain(const PoseParams& pose, const ParamConfig& cfg) {
  UnconstrainedParams v{};
  if (!(pose.scale > cfg.alpha0 && pose.scale < cfg.alpha0 + cfg.beta0)) {
    throw BoundaryPose("scale is not strictly inside the box");
  }
  v[0] = checked_atanh(2.0 * (pose.scale - cfg.alpha0) / cfg.beta0 - 1.0, "scale");
  v[1] = checked_atanh(pose.tx / (1.0 - pose.scale), "horizontal center");
  v[2] = checked_atanh(pose.ty / (1.0 - pose.scale / cfg.f), "vertical center");
  if (cfg.rot_bound == 0.0) {
    if (pose.rot != 0.0) throw BoundaryPose("rotation must be zero when rot_bound is zero");
    v[3] = 0.0;
  } else {
    v[3] = checked_atanh(pose.rot / cfg.rot_bound, "rotation");
  }
  return v;
}

Matrix4 constrain_jacobian(const UnconstrainedParams& v, const ParamConfig& cfg) {
  const double t1 = std::tanh(v[0]);
  const double t2 = std::tanh(v[1]);
  const double t3 = std::tanh(v[2]);
  const double t4 = std::tanh(v[3]);
  const double scale = cfg.alpha0 + cfg.beta0 * 0.5 * (1.0 + t1);
  const double dscale = cfg.beta0 * 0.5 * (1.0 - t1 * t1);

  Matrix4 J{};
  J[0][0] = dscale;
  J[1][0] = -dscale * t2;
  J[1][1] = (1.0 - scale) * (1.0 - t2 * t2);
  J[2][0] = -dscale / cfg.f * t3;
  J[2][2] = (1.0 - scale / cfg.f) * (1.0 - t3 * t3);
  J[3][3] = cfg.rot_bound * (1.0 - t4 * t4);
  return J;
}

AffineMatrix affine_matrix(const PoseParams& pose, double f) {
  const double c = std::cos(pose.rot);
  const double s = std::sin(pose.rot);
  AffineMatrix A;
  A.m = {pose.scale * c, -pose.scale * s, pose.tx,
         pose.scale / f * s, pose.scale / f * c, pose.ty};
  return A;
}

PoseParams pose_from_affine(const AffineMatrix& A, double f) {
  // Fit [[p, -q], [q/f, p/f]] to the linear part, p = s cos r, q = s sin r.
  const double denom = 1.0 + 1.0 / (f * f);
  const double p = (A(0, 0) + A(1, 1) / f) / denom;
  const double q = (-A(0, 1) + A(1, 0) / f) / denom;
  PoseParams pose;
  pose.scale = std::hypot(p, q);
  pose.rot = std::atan2(q, p);
  pose.tx = A(0, 2);
  pose.ty = A(1, 2);
  return pose;
}

bool pose_in_box(const PoseParams& pose, const ParamConfig& cfg, double tol) {
  const double s2 = pose.scale / cfg.f;
  return pose.scale >= cfg.alpha0 - tol && pose.scale <= cfg.alpha0 + cfg.beta0 + tol &&
         std::abs(pose.tx) <= 1.0 - pose.scale + tol && std::abs(pose.ty) <= 1.0 - s2 + tol &&
         std::abs(pose.rot) <= cfg.rot_bound + tol;
}

PoseParams clamp_to_box(const PoseParams& pose, const ParamConfig& cfg, double margin) {
  PoseParams p = pose;
  p.scale = std::clamp(p.scale, cfg.alpha0 + margin, cfg.alpha0 + cfg.beta0 - margin);
  const double lim_x = std::max(0.0, (1.0 - p.scale) * (1.0 - margin));
  const double lim_y = std::max(0.0, (1.0 - p.scale / cfg.f) * (1.0 - margin));
  p.tx = std::clamp(p.tx, -lim_x, lim_x);
  p.ty = std::clamp(p.ty, -lim_y, lim_y);
  const double lim_r = cfg.rot_bound * (1.0 - margin);
  p.rot = std::clamp(p.rot, -lim_r, lim_r);
  return p;
}

}  // namespace kneeloc
