#include "kneeloc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kneeloc/errors.hpp"

namespace kneeloc {

void SplitConfig::validate() const {
  const bool ok = down_width >= 4 && split_candidates >= 1 && candidate_offset >= 0.0 &&
                  candidate_offset < 0.5 && widen_factor >= 1.0 && aspect > 0.0 &&
                  out_height >= 1 && out_width >= 1 && max_shift >= 0.0 && max_shift <= 0.1 &&
                  max_input_aspect > 0.0;
  if (!ok) throw InvalidArgument("invalid split configuration");
}

PixelPoint HalfTransform::to_original(NormCoord p) const {
  double col = (p.x + 1.0) * 0.5 * (out_width - 1);
  const double row = (p.y + 1.0) * 0.5 * (out_height - 1);
  if (flipped) col = (out_width - 1) - col;
  const double sx = out_width > 1 ? static_cast<double>(padded_width - 1) / (out_width - 1) : 0.0;
  const double sy =
      out_height > 1 ? static_cast<double>(padded_height - 1) / (out_height - 1) : 0.0;
  return {col * sx - shift_x - pad_left + crop_x0, row * sy - shift_y - pad_top};
}

NormCoord HalfTransform::from_original(PixelPoint p) const {
  const double padded_col = p.x - crop_x0 + pad_left + shift_x;
  const double padded_row = p.y + pad_top + shift_y;
  double col = padded_width > 1 ? padded_col * (out_width - 1) / (padded_width - 1) : 0.0;
  const double row =
      padded_height > 1 ? padded_row * (out_height - 1) / (padded_height - 1) : 0.0;
  if (flipped) col = (out_width - 1) - col;
  return {out_width > 1 ? 2.0 * col / (out_width - 1) - 1.0 : 0.0,
          out_height > 1 ? 2.0 * row / (out_height - 1) - 1.0 : 0.0};
}

int find_split(const Image& u, const SplitConfig& cfg) {
  if (u.width() < 4) throw ImageTooSmall("image must be at least 4 pixels wide to split");
  const int dw = std::min(cfg.down_width, u.width());
  const int dh = std::max(1, static_cast<int>(std::lround(
                                 static_cast<double>(u.height()) * dw / u.width())));
  const Image small = (dw == u.width() && dh == u.height()) ? u : resize(u, dh, dw);

  const double center = dw / 2.0;
  double best_score = std::numeric_limits<double>::infinity();
  int best_a = static_cast<int>(std::lround(center));
  const int n = cfg.split_candidates;
  for (int k = 0; k < n; ++k) {
    const double offset =
        n == 1 ? 0.0 : -cfg.candidate_offset + 2.0 * cfg.candidate_offset * k / (n - 1);
    const int a = static_cast<int>(std::lround(center + offset * dw));
    const int w = std::min(a, dw - a);
    if (w < 1) continue;
    // Mean per-pixel distance between the block left of a and the mirrored
    // block right of it.
    double sum = 0.0;
    for (int r = 0; r < dh; ++r) {
      for (int j = 0; j < w; ++j) {
        sum += std::abs(static_cast<double>(small.at(r, a - w + j)) - small.at(r, a + w - 1 - j));
      }
    }
    const double score = sum / (static_cast<double>(w) * dh);
    if (score < best_score) {  // strict: ties keep the leftmost candidate
      best_score = score;
      best_a = a;
    }
  }
  return static_cast<int>(std::lround(static_cast<double>(best_a) * u.width() / dw));
}

AugmentResult augment(const Image& half, std::mt19937_64& rng, double max_shift) {
  if (max_shift < 0.0 || max_shift > 0.1) throw InvalidArgument("max_shift must be in [0, 0.1]");
  const int mx = static_cast<int>(std::floor(max_shift * half.width()));
  const int my = static_cast<int>(std::floor(max_shift * half.height()));
  AugmentResult out;
  out.dx = mx > 0 ? std::uniform_int_distribution<int>(-mx, mx)(rng) : 0;
  out.dy = my > 0 ? std::uniform_int_distribution<int>(-my, my)(rng) : 0;
  out.image = (out.dx == 0 && out.dy == 0) ? half : translate(half, out.dx, out.dy);
  return out;
}

namespace {

struct PaddedHalf {
  Image image;
  HalfTransform transform;
};

PaddedHalf pad_half(const Image& u, int x0, int width, int target_width) {
  PaddedHalf h;
  HalfTransform& t = h.transform;
  t.crop_x0 = x0;
  t.crop_width = width;
  const int extra = target_width - width;
  t.pad_left = extra / 2;
  t.pad_right = extra - extra / 2;
  h.image = pad_zeros(crop(u, 0, x0, u.height(), width), 0, 0, t.pad_left, t.pad_right);
  return h;
}

}  // namespace

SplitResult split_bilateral(const Image& u, const SplitConfig& cfg, std::mt19937_64* rng) {
  cfg.validate();
  const double input_aspect = static_cast<double>(u.height()) / u.width();
  if (input_aspect > cfg.max_input_aspect) {
    std::ostringstream msg;
    msg << "input aspect " << input_aspect << " exceeds " << cfg.max_input_aspect
        << "; this looks like a single side rather than a bilateral image";
    throw DegenerateInput(msg.str());
  }

  SplitResult res;
  const int W = u.width();
  const int a = find_split(u, cfg);
  res.split_column = a;

  // Widen each half toward the other side; ceil keeps at least the nominal region.
  const int wl = std::min(W, static_cast<int>(std::ceil(cfg.widen_factor * a - 1e-9)));
  const int wr = std::min(W, static_cast<int>(std::ceil(cfg.widen_factor * (W - a) - 1e-9)));
  if (wl < 8 || wr < 8) {
    throw ImageTooSmall("split would produce a half narrower than 8 pixels");
  }
  const int common = std::max(wl, wr);
  PaddedHalf left = pad_half(u, 0, wl, common);
  PaddedHalf right = pad_half(u, W - wr, wr, common);

  // Bring both halves to height / width == aspect.
  const int h = u.height();
  int pad_x = 0, pad_y = 0;
  if (static_cast<double>(h) / common > cfg.aspect) {
    pad_x = std::max(0, static_cast<int>(std::lround(h / cfg.aspect)) - common);
  } else {
    pad_y = std::max(0, static_cast<int>(std::lround(cfg.aspect * common)) - h);
  }
  for (PaddedHalf* side : {&left, &right}) {
    HalfTransform& t = side->transform;
    const int px0 = pad_x / 2;
    const int py0 = pad_y / 2;
    side->image = pad_zeros(side->image, py0, pad_y - py0, px0, pad_x - px0);
    t.pad_left += px0;
    t.pad_right += pad_x - px0;
    t.pad_top = py0;
    t.pad_bottom = pad_y - py0;
    t.padded_height = side->image.height();
    t.padded_width = side->image.width();
    if (rng != nullptr && cfg.max_shift > 0.0) {
      AugmentResult aug = augment(side->image, *rng, cfg.max_shift);
      side->image = std::move(aug.image);
      t.shift_x = aug.dx;
      t.shift_y = aug.dy;
    }
    t.out_height = cfg.out_height;
    t.out_width = cfg.out_width;
    side->image = resize(side->image, cfg.out_height, cfg.out_width);
  }
  left.transform.flipped = true;
  res.u_left = horizontal_flip(left.image);
  res.u_right = std::move(right.image);
  res.left_transform = left.transform;
  res.right_transform = right.transform;
  return res;
}

}  // namespace kneeloc
