#pragma once

// Helpers shared by the preprocess tests and the acceptance run: synthetic
// bilateral composites and a search-based alignment check between a patch cut
// from a half and the same region resampled from the original image.

#include <cmath>
#include <random>

#include "kneeloc/image.hpp"
#include "kneeloc/parametrize.hpp"
#include "kneeloc/preprocess.hpp"
#include "oracles.hpp"

namespace roundtrip {

// Wide image with textured content in both halves and no exact symmetry.
inline kneeloc::Image bilateral_composite(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> hd(240, 520);
  std::uniform_real_distribution<double> ad(1.3, 2.3);
  const int h = hd(rng);
  const int w = static_cast<int>(h * ad(rng));
  kneeloc::Image img = oracle::smooth_image(h, w, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    const double cx = u(rng) * w, cy = u(rng) * h, rad = 4 + 20 * u(rng), amp = u(rng) - 0.5;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double d2 = ((c - cx) * (c - cx) + (r - cy) * (r - cy)) / (rad * rad);
        if (d2 < 9) img.at(r, c) += static_cast<float>(amp * std::exp(-d2));
      }
  }
  return img;
}

// Offset (in original pixels) that best aligns the patch warped from a half
// with the original resampled at the mapped grid points. Searches a 0.25 pixel
// lattice over [-4, 4]^2 and returns the norm of the best offset.
inline double alignment_error(const kneeloc::Image& original, const kneeloc::Image& half,
                              const kneeloc::HalfTransform& t, const kneeloc::PoseParams& pose,
                              double f, int ph, int pw) {
  const kneeloc::AffineMatrix A = kneeloc::affine_matrix(pose, f);
  const kneeloc::Image patch = kneeloc::warp(half, A, ph, pw);
  // Samples in the zero padding of the half have no counterpart in the
  // original, so only points well inside the cropped content are compared.
  const double margin = 6.0;
  std::vector<kneeloc::PixelPoint> pts;
  std::vector<double> vals;
  for (int r = 0; r < ph; ++r)
    for (int c = 0; c < pw; ++c) {
      const kneeloc::PixelPoint q = t.to_original(A.apply({oracle::grid(c, pw), oracle::grid(r, ph)}));
      if (q.x < t.crop_x0 + margin || q.x > t.crop_x0 + t.crop_width - 1 - margin || q.y < margin ||
          q.y > original.height() - 1 - margin)
        continue;
      pts.push_back(q);
      vals.push_back(patch.at(r, c));
    }
  if (pts.size() < 16) return 0.0;
  double best = 1e300, best_norm = 0;
  for (double oy = -4; oy <= 4; oy += 0.25)
    for (double ox = -4; ox <= 4; ox += 0.25) {
      double ssd = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = oracle::bilinear_px(original, pts[i].x + ox, pts[i].y + oy) - vals[i];
        ssd += d * d;
      }
      if (ssd < best) {
        best = ssd;
        best_norm = std::hypot(ox, oy);
      }
    }
  return best_norm;
}

}  // namespace roundtrip
