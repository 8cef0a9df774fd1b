#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kneeloc/geometry.hpp"

namespace kneeloc {

// Dense single-channel raster, row-major. Intensities are stored as float;
// anything that accumulates over pixels does so in double.
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f);
  Image(int height, int width, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  float& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  float min_value() const;
  float max_value() const;
  Image negated() const;
  // All intensities finite.
  bool finite() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Bilinear interpolation with zero padding outside the pixel lattice.
double bilinear_sample(const Image& img, NormCoord p);

// Row-major grid of out_h*out_w points equispaced over [-1,1]^2. A single row or
// column sits at 0.
std::vector<NormCoord> make_regular_grid(int out_h, int out_w);

// output[i] = bilinear_sample(img, A * [x_i, 1]) over the regular grid.
Image warp(const Image& img, const AffineMatrix& A, int out_h, int out_w);

// Per-output-pixel derivative of the warped intensity with respect to
// (scale, tx, ty, rot); row-major, 4 entries per pixel.
struct WarpJacobian {
  int rows = 0;
  std::vector<double> values;

  double operator()(std::size_t pixel, int param) const { return values[pixel * 4 + param]; }
};

struct WarpResult {
  Image image;
  WarpJacobian jacobian;
};

// Warp by A(pose) together with the analytic Jacobian through the bilinear
// kernel and the pose-to-matrix map.
WarpResult warp_with_grad(const Image& img, const PoseParams& pose, double f, int out_h, int out_w);

// Double-precision warp by A(pose) into caller-owned buffers; the hot loop of
// the optimizers. values holds out_h*out_w samples; jacobian is either empty
// or holds 4 entries per sample.
void warp_samples(const Image& img, const PoseParams& pose, double f, int out_h, int out_w,
                  std::span<double> values, std::span<double> jacobian);

Image resize(const Image& img, int out_h, int out_w);
Image horizontal_flip(const Image& img);
Image pad_zeros(const Image& img, int top, int bottom, int left, int right);
// Integer translation with zero fill: out(r, c) = img(r - dy, c - dx).
Image translate(const Image& img, int dx, int dy);
// Copy of the pixel rectangle [row0, row0+h) x [col0, col0+w); must lie inside.
Image crop(const Image& img, int row0, int col0, int h, int w);

}  // namespace kneeloc
