#include "kneeloc/detection.hpp"

#include "kneeloc/parametrize.hpp"

namespace kneeloc {

Detection make_detection(std::string method, const Image& u_left, const Image& u_right,
                         const PoseParams& left, const PoseParams& right, const Template& T,
                         double f) {
  Detection d;
  d.method = std::move(method);
  const MatchResult ml = side_loss(u_left, left, T, f);
  const MatchResult mr = side_loss(u_right, right, T, f);
  d.left = {left, ml.loss, ml.negated};
  d.right = {right, mr.loss, mr.negated};
  d.l_reg = regularizer(left, right);
  d.total = d.left.loss + d.right.loss + d.l_reg;
  return d;
}

std::array<NormCoord, 4> pose_corners(const PoseParams& pose, double f) {
  const AffineMatrix A = affine_matrix(pose, f);
  return {A.apply({-1.0, -1.0}), A.apply({1.0, -1.0}), A.apply({1.0, 1.0}),
          A.apply({-1.0, 1.0})};
}

}  // namespace kneeloc
