#pragma once

#include <random>

#include "kneeloc/image.hpp"

namespace kneeloc {

struct SplitConfig {
  int down_width = 128;          // width of the copy used to locate the split
  int split_candidates = 2;      // evenly spaced over center +- candidate_offset * width
  double candidate_offset = 0.125;
  double widen_factor = 1.1;
  double aspect = 1.6;           // height / width of the padded halves
  int out_height = 800;
  int out_width = 500;
  double max_shift = 0.02;       // augmentation, only applied when an rng is supplied
  // Inputs taller than this (height / width) look like a single side already.
  double max_input_aspect = 1.2;

  void validate() const;
};

struct PixelPoint {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

// Bookkeeping for one half: crop of the original, zero padding, augmentation
// shift, resize and optional flip. Maps normalized half coordinates to
// original-image pixel coordinates and back.
struct HalfTransform {
  int crop_x0 = 0;
  int crop_width = 0;
  int pad_left = 0;
  int pad_right = 0;
  int pad_top = 0;
  int pad_bottom = 0;
  int padded_height = 0;
  int padded_width = 0;
  int shift_x = 0;
  int shift_y = 0;
  int out_height = 0;
  int out_width = 0;
  bool flipped = false;

  PixelPoint to_original(NormCoord p) const;
  NormCoord from_original(PixelPoint p) const;
};

struct SplitResult {
  Image u_left;
  Image u_right;
  int split_column = 0;
  HalfTransform left_transform;
  HalfTransform right_transform;
};

// Column at which to split a bilateral image into mirror-similar halves.
int find_split(const Image& u, const SplitConfig& cfg = {});

// Split, widen, pad to the configured aspect, resize and flip the left half.
// With an rng the padded halves are randomly translated before resizing.
// Throws ImageTooSmall for halves narrower than 8 pixels and DegenerateInput
// for inputs that already look like a single side.
SplitResult split_bilateral(const Image& u, const SplitConfig& cfg = {},
                            std::mt19937_64* rng = nullptr);

struct AugmentResult {
  Image image;
  int dx = 0;
  int dy = 0;
};

// Integer translation uniform in [-max_shift*dim, max_shift*dim] per axis,
// zero filled.
AugmentResult augment(const Image& half, std::mt19937_64& rng, double max_shift);

}  // namespace kneeloc
