#pragma once

#include <cmath>

#include "kneeloc/image.hpp"

namespace oracle {

// Direct double-loop normalized cross-correlation at every placement.
// Windows with variance below 1e-12 score 0.
inline kneeloc::Image naive_ncc(const kneeloc::Image& img, const kneeloc::Image& t) {
  const int h = t.height(), w = t.width();
  const int oh = img.height() - h + 1, ow = img.width() - w + 1;
  const double n = static_cast<double>(h) * w;
  double tm = 0;
  for (float v : t.data()) tm += v;
  tm /= n;
  double tn = 0;
  for (float v : t.data()) tn += (v - tm) * (v - tm);
  kneeloc::Image out(oh, ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double m = 0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) m += img.at(r + i, c + j);
      m /= n;
      double num = 0, var = 0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double a = img.at(r + i, c + j) - m;
          num += a * (t.at(i, j) - tm);
          var += a * a;
        }
      out.at(r, c) = var < 1e-12 ? 0.0f : static_cast<float>(num / std::sqrt(var * tn));
    }
  return out;
}

}  // namespace oracle
