#pragma once

#include <array>

namespace kneeloc {

// Normalized image coordinates. x is horizontal, y is vertical; (-1,-1) is the
// center of the top-left pixel and (+1,+1) the center of the bottom-right
// pixel (align-corners convention, used by the sampler, its gradient and the
// grid code alike).
struct NormCoord {
  double x = 0.0;
  double y = 0.0;
};

// 2x3 matrix acting on homogeneous coordinates [x, y, 1].
struct AffineMatrix {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  double operator()(int row, int col) const { return m[row * 3 + col]; }
  double& operator()(int row, int col) { return m[row * 3 + col]; }

  NormCoord apply(NormCoord p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }

  static AffineMatrix identity() { return {}; }
};

// this * inner, i.e. apply inner first.
inline AffineMatrix compose(const AffineMatrix& outer, const AffineMatrix& inner) {
  AffineMatrix r;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = outer(i, 0) * inner(0, j) + outer(i, 1) * inner(1, j);
      if (j == 2) acc += outer(i, 2);
      r(i, j) = acc;
    }
  }
  return r;
}

// Interpretable patch pose: scale is the patch half-width in normalized units,
// (tx, ty) the patch center, rot the rotation in radians.
struct PoseParams {
  double scale = 0.55;
  double tx = 0.0;
  double ty = 0.0;
  double rot = 0.0;

  std::array<double, 4> as_array() const { return {scale, tx, ty, rot}; }
  static PoseParams from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

}  // namespace kneeloc
