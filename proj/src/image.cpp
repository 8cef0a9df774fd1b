#include "kneeloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kneeloc/errors.hpp"

namespace kneeloc {

Image::Image(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw InvalidArgument("image dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 1 || width < 1) {
    throw InvalidArgument("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidArgument("image data length does not match its dimensions");
  }
}

float Image::min_value() const { return *std::min_element(data_.begin(), data_.end()); }
float Image::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

Image Image::negated() const {
  Image out = *this;
  for (float& v : out.data_) v = -v;
  return out;
}

bool Image::finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

namespace {

struct Tap {
  double value;
  double d_px;  // derivative with respect to the pixel-space column
  double d_py;  // derivative with respect to the pixel-space row
};

inline float fetch(const Image& img, int row, int col) {
  if (row < 0 || col < 0 || row >= img.height() || col >= img.width()) return 0.0f;
  return img.at(row, col);
}

inline Tap sample_px(const Image& img, double px, double py) {
  // Entirely outside the zero-padded support.
  if (!(px >= -1.0 && py >= -1.0 && px < img.width() && py < img.height())) {
    return {0.0, 0.0, 0.0};
  }
  // px + 1 >= 0 here, so truncation is floor.
  const int x0 = static_cast<int>(px + 1.0) - 1;
  const int y0 = static_cast<int>(py + 1.0) - 1;
  const double fx = px - x0;
  const double fy = py - y0;

  double v00, v10, v01, v11;
  if (x0 >= 0 && y0 >= 0 && x0 + 1 < img.width() && y0 + 1 < img.height()) {
    const float* row0 = img.data().data() + static_cast<std::size_t>(y0) * img.width() + x0;
    const float* row1 = row0 + img.width();
    v00 = row0[0];
    v10 = row0[1];
    v01 = row1[0];
    v11 = row1[1];
  } else {
    v00 = fetch(img, y0, x0);
    v10 = fetch(img, y0, x0 + 1);
    v01 = fetch(img, y0 + 1, x0);
    v11 = fetch(img, y0 + 1, x0 + 1);
  }
  const double top = v00 + fx * (v10 - v00);
  const double bottom = v01 + fx * (v11 - v01);
  return {top + fy * (bottom - top), (1.0 - fy) * (v10 - v00) + fy * (v11 - v01),
          (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)};
}

inline double to_px(double x, int extent) { return (x + 1.0) * 0.5 * (extent - 1); }

inline double grid_coord(int i, int n) { return n == 1 ? 0.0 : -1.0 + i * (2.0 / (n - 1)); }

}  // namespace

double bilinear_sample(const Image& img, NormCoord p) {
  return sample_px(img, to_px(p.x, img.width()), to_px(p.y, img.height())).value;
}

std::vector<NormCoord> make_regular_grid(int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidArgument("grid dimensions must be positive");
  std::vector<NormCoord> grid;
  grid.reserve(static_cast<std::size_t>(out_h) * out_w);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) grid.push_back({grid_coord(c, out_w), grid_coord(r, out_h)});
  }
  return grid;
}

Image warp(const Image& img, const AffineMatrix& A, int out_h, int out_w) {
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const double gy = grid_coord(r, out_h);
    for (int c = 0; c < out_w; ++c) {
      const NormCoord p = A.apply({grid_coord(c, out_w), gy});
      out.at(r, c) = static_cast<float>(bilinear_sample(img, p));
    }
  }
  return out;
}

void warp_samples(const Image& img, const PoseParams& pose, double f, int out_h, int out_w,
                  std::span<double> values, std::span<double> jacobian) {
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  if (values.size() != n) throw ShapeMismatch("warp value buffer size mismatch");
  const bool with_grad = !jacobian.empty();
  if (with_grad && jacobian.size() != n * 4) throw ShapeMismatch("jacobian buffer size mismatch");

  const double s = pose.scale;
  const double sf = s / f;
  const double cs = std::cos(pose.rot);
  const double sn = std::sin(pose.rot);
  const double half_w = 0.5 * (img.width() - 1);
  const double half_h = 0.5 * (img.height() - 1);
  // Pixel position as an affine function of the grid coordinates.
  const double ax = s * cs * half_w, bx = -s * sn * half_w, cx = (pose.tx + 1.0) * half_w;
  const double ay = sf * sn * half_h, by = sf * cs * half_h, cy = (pose.ty + 1.0) * half_h;

  // When all four grid corners land inside the lattice (with a cell to spare
  // on the high side), every sample does, and the bounds checks can go.
  bool interior = true;
  for (double gy : {-1.0, 1.0}) {
    for (double gx : {-1.0, 1.0}) {
      const double px = ax * gx + bx * gy + cx;
      const double py = ay * gx + by * gy + cy;
      interior = interior && px >= 0.0 && py >= 0.0 && px < img.width() - 1.000001 &&
                 py < img.height() - 1.000001;
    }
  }
  const float* pixels = img.data().data();
  const int stride = img.width();

  std::size_t i = 0;
  for (int r = 0; r < out_h; ++r) {
    const double gy = grid_coord(r, out_h);
    const double px_row = bx * gy + cx;
    const double py_row = by * gy + cy;
    for (int c = 0; c < out_w; ++c, ++i) {
      const double gx = grid_coord(c, out_w);
      const double px = ax * gx + px_row;
      const double py = ay * gx + py_row;
      Tap tap{0.0, 0.0, 0.0};
      if (interior) {
        const int x0 = static_cast<int>(px);
        const int y0 = static_cast<int>(py);
        const double fx = px - x0;
        const double fy = py - y0;
        const float* row0 = pixels + static_cast<std::size_t>(y0) * stride + x0;
        const double v00 = row0[0], v10 = row0[1], v01 = row0[stride], v11 = row0[stride + 1];
        const double top = v00 + fx * (v10 - v00);
        const double bottom = v01 + fx * (v11 - v01);
        tap.value = top + fy * (bottom - top);
        if (with_grad) {
          tap.d_px = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
          tap.d_py = bottom - top;
        }
      } else {
        tap = sample_px(img, px, py);
      }
      values[i] = tap.value;
      if (!with_grad) continue;

      // Rotated unit-scale offsets.
      const double rx = cs * gx - sn * gy;
      const double ry = sn * gx + cs * gy;
      const double dsx = tap.d_px * half_w;  // d value / d sx
      const double dsy = tap.d_py * half_h;
      double* J = jacobian.data() + i * 4;
      J[0] = dsx * rx + dsy * ry / f;
      J[1] = dsx;
      J[2] = dsy;
      // d rx / d rot = -ry, d ry / d rot = rx
      J[3] = -dsx * s * ry + dsy * sf * rx;
    }
  }
}

WarpResult warp_with_grad(const Image& img, const PoseParams& pose, double f, int out_h,
                          int out_w) {
  WarpResult result{Image(out_h, out_w), {}};
  const std::size_t n = result.image.size();
  std::vector<double> values(n);
  result.jacobian.rows = out_h * out_w;
  result.jacobian.values.assign(n * 4, 0.0);
  warp_samples(img, pose, f, out_h, out_w, values, result.jacobian.values);
  for (std::size_t i = 0; i < n; ++i) result.image.data()[i] = static_cast<float>(values[i]);
  return result;
}

Image resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw InvalidArgument("resize target must be positive, got " + std::to_string(out_h) + "x" +
                          std::to_string(out_w));
  }
  return warp(img, AffineMatrix::identity(), out_h, out_w);
}

Image horizontal_flip(const Image& img) {
  Image out(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) out.at(r, c) = img.at(r, img.width() - 1 - c);
  }
  return out;
}

Image pad_zeros(const Image& img, int top, int bottom, int left, int right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw InvalidArgument("padding amounts must be non-negative");
  }
  Image out(img.height() + top + bottom, img.width() + left + right);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) out.at(r + top, c + left) = img.at(r, c);
  }
  return out;
}

Image translate(const Image& img, int dx, int dy) {
  Image out(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    const int src_r = r - dy;
    if (src_r < 0 || src_r >= img.height()) continue;
    for (int c = 0; c < img.width(); ++c) {
      const int src_c = c - dx;
      if (src_c >= 0 && src_c < img.width()) out.at(r, c) = img.at(src_r, src_c);
    }
  }
  return out;
}

Image crop(const Image& img, int row0, int col0, int h, int w) {
  if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > img.height() ||
      col0 + w > img.width()) {
    throw InvalidArgument("crop rectangle outside the image");
  }
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(row0 + r, col0 + c);
  }
  return out;
}

}  // namespace kneeloc
