#include "kneeloc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <sstream>

#include "kneeloc/errors.hpp"

namespace kneeloc {

void SubWindow::validate() const {
  const bool ok = left >= 0.0 && left < right && right <= 1.0 && top >= 0.0 && top < bottom &&
                  bottom <= 1.0;
  if (!ok) {
    std::ostringstream msg;
    msg << "invalid sub-window (" << left << ", " << top << ", " << right << ", " << bottom << ")";
    throw InvalidArgument(msg.str());
  }
}

PixelRect window_pixels(const SubWindow& win, int h, int w) {
  constexpr double kSlack = 1e-9;
  PixelRect r;
  r.row0 = std::clamp(static_cast<int>(std::floor(win.top * h + kSlack)), 0, h);
  r.row1 = std::clamp(static_cast<int>(std::ceil(win.bottom * h - kSlack)), 0, h);
  r.col0 = std::clamp(static_cast<int>(std::floor(win.left * w + kSlack)), 0, w);
  r.col1 = std::clamp(static_cast<int>(std::ceil(win.right * w - kSlack)), 0, w);
  if (r.row1 <= r.row0) r.row1 = std::min(h, r.row0 + 1);
  if (r.col1 <= r.col0) r.col1 = std::min(w, r.col0 + 1);
  return r;
}

namespace {

template <typename T>
Template::WindowStats window_stats(std::span<const T> values, int width, const PixelRect& rect) {
  Template::WindowStats st;
  st.rect = rect;
  st.centered.reserve(static_cast<std::size_t>(rect.area()));
  double sum = 0.0;
  for (int r = rect.row0; r < rect.row1; ++r) {
    for (int c = rect.col0; c < rect.col1; ++c) {
      const double v = values[static_cast<std::size_t>(r) * width + c];
      st.centered.push_back(v);
      sum += v;
    }
  }
  const double mean = sum / static_cast<double>(st.centered.size());
  double sq = 0.0;
  for (double& v : st.centered) {
    v -= mean;
    sq += v * v;
  }
  st.norm = std::sqrt(sq);
  return st;
}

struct WindowFit {
  NccResult result;
  double mean = 0.0;
  double sq = 0.0;   // squared norm of the mean-removed samples
  double rho = 0.0;
};

// NCC cost of samples u (row-major, width `width`) restricted to ref.rect
// against the precomputed reference window. One pass: the reference is mean
// free, so the dot product needs no centering of u.
WindowFit ncc_against(std::span<const double> u, int width, const Template::WindowStats& ref) {
  const PixelRect& rect = ref.rect;
  const auto n = static_cast<double>(rect.area());
  double sum = 0.0, sumsq = 0.0, dot = 0.0;
  const double* c = ref.centered.data();
  for (int r = rect.row0; r < rect.row1; ++r) {
    const double* row = u.data() + static_cast<std::size_t>(r) * width;
    for (int col = rect.col0; col < rect.col1; ++col, ++c) {
      const double v = row[col];
      sum += v;
      sumsq += v * v;
      dot += v * *c;
    }
  }
  WindowFit fit;
  fit.mean = sum / n;
  fit.sq = std::max(0.0, sumsq - sum * fit.mean);
  if (fit.sq < kDegenerateNormSq || ref.norm * ref.norm < kDegenerateNormSq) {
    fit.result = {1.0, true};
    return fit;
  }
  fit.rho = std::clamp(dot / (std::sqrt(fit.sq) * ref.norm), -1.0, 1.0);
  fit.result = {1.0 - fit.rho, false};
  return fit;
}

// Adds grad_scale * d cost / d u for one window (entries outside the rect are
// left untouched).
void add_ncc_grad(std::span<const double> u, int width, const Template::WindowStats& ref,
                  const WindowFit& fit, std::span<double> grad, double grad_scale) {
  if (fit.result.degenerate) return;
  const PixelRect& rect = ref.rect;
  const double a = 1.0 / (std::sqrt(fit.sq) * ref.norm);
  const double b = fit.rho / fit.sq;
  std::size_t k = 0;
  for (int r = rect.row0; r < rect.row1; ++r) {
    double* g = grad.data() + static_cast<std::size_t>(r) * width;
    const double* row = u.data() + static_cast<std::size_t>(r) * width;
    for (int c = rect.col0; c < rect.col1; ++c, ++k) {
      g[c] -= grad_scale * (ref.centered[k] * a - (row[c] - fit.mean) * b);
    }
  }
}

std::vector<double> to_double(const Image& img) {
  return {img.data().begin(), img.data().end()};
}

void require_same_shape(const Image& u, const Image& w) {
  if (!u.same_shape(w)) {
    std::ostringstream msg;
    msg << "shape mismatch: " << u.height() << "x" << u.width() << " vs " << w.height() << "x"
        << w.width();
    throw ShapeMismatch(msg.str());
  }
}

}  // namespace

Template::Template(Image patch, SubWindow red, SubWindow green)
    : patch_(std::move(patch)), red_(red), green_(green) {
  red_.validate();
  green_.validate();
  f_ = static_cast<double>(patch_.height()) / patch_.width();
  if (f_ < 1.0) {
    throw InvalidArgument("template must be at least as tall as it is wide (f >= 1)");
  }
  const int h = patch_.height();
  const int w = patch_.width();
  const std::array<PixelRect, 3> rects{PixelRect{0, 0, h, w}, window_pixels(red_, h, w),
                                       window_pixels(green_, h, w)};
  const char* names[] = {"template", "red sub-window", "green sub-window"};
  for (std::size_t i = 0; i < 3; ++i) {
    if (rects[i].area() < 4) {
      throw InvalidArgument(std::string(names[i]) + " covers fewer than 4 pixels");
    }
    windows_[i] = window_stats<float>(std::as_const(patch_).data(), w, rects[i]);
    if (windows_[i].norm * windows_[i].norm < kDegenerateNormSq) {
      throw DegenerateInput(std::string(names[i]) + " has zero variance");
    }
  }
}

NccResult windowed_cost(const Image& u, const Image& w, const SubWindow& win) {
  require_same_shape(u, w);
  win.validate();
  const PixelRect rect = window_pixels(win, u.height(), u.width());
  const Template::WindowStats ref = window_stats<float>(w.data(), w.width(), rect);
  const std::vector<double> samples = to_double(u);
  return ncc_against(samples, u.width(), ref).result;
}

NccResult ncc_cost(const Image& u, const Image& w) { return windowed_cost(u, w, SubWindow{}); }

namespace {

struct BranchCosts {
  WindowFit global_fit, red_fit, green_fit;

  const NccResult& global() const { return global_fit.result; }
  const NccResult& red() const { return red_fit.result; }
  const NccResult& green() const { return green_fit.result; }
};

BranchCosts branch_costs(std::span<const double> u, const Template& T) {
  return {ncc_against(u, T.width(), T.global_stats()), ncc_against(u, T.width(), T.red_stats()),
          ncc_against(u, T.width(), T.green_stats())};
}

// Cost of the same window on the negated image.
double negated(const NccResult& r) { return r.degenerate ? 1.0 : 2.0 - r.cost; }

}  // namespace

NccResult combined_cost(const Image& u, const Template& T) {
  require_same_shape(u, T.patch());
  const std::vector<double> samples = to_double(u);
  const BranchCosts b = branch_costs(samples, T);
  return {0.5 * (b.global().cost + std::max(b.red().cost, b.green().cost)),
          b.global().degenerate || b.red().degenerate || b.green().degenerate};
}

MatchResult matching_loss_samples(std::span<const double> u, const Template& T,
                                  std::span<double> grad) {
  if (u.size() != T.patch().size()) throw ShapeMismatch("sample buffer does not match template");
  const BranchCosts b = branch_costs(u, T);

  const double pos_sub = std::max(b.red().cost, b.green().cost);
  const bool pos_red = b.red().cost >= b.green().cost;
  const double pos = 0.5 * (b.global().cost + pos_sub);

  const double neg_red = negated(b.red());
  const double neg_green = negated(b.green());
  const bool neg_red_active = neg_red >= neg_green;
  const double neg = 0.5 * (negated(b.global()) + std::max(neg_red, neg_green));

  MatchResult result;
  result.negated = neg < pos;
  result.loss = result.negated ? neg : pos;
  result.degenerate = b.global().degenerate || b.red().degenerate || b.green().degenerate;

  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    // d cost(-u) / du = -d cost(u) / du, so the negated branch flips signs.
    const double sign = result.negated ? -1.0 : 1.0;
    const bool red_active = result.negated ? neg_red_active : pos_red;
    add_ncc_grad(u, T.width(), T.global_stats(), b.global_fit, grad, 0.5 * sign);
    if (red_active) {
      add_ncc_grad(u, T.width(), T.red_stats(), b.red_fit, grad, 0.5 * sign);
    } else {
      add_ncc_grad(u, T.width(), T.green_stats(), b.green_fit, grad, 0.5 * sign);
    }
  }
  return result;
}

MatchResult matching_loss(const Image& u, const Template& T) {
  require_same_shape(u, T.patch());
  const std::vector<double> samples = to_double(u);
  return matching_loss_samples(samples, T);
}

MatchResult side_loss(const Image& half, const PoseParams& pose, const Template& T, double f) {
  std::vector<double> samples(T.patch().size());
  warp_samples(half, pose, f, T.height(), T.width(), samples, {});
  return matching_loss_samples(samples, T);
}

double regularizer(const PoseParams& left, const PoseParams& right) {
  const double ds = left.scale - right.scale;
  const double dy = left.ty - right.ty;
  return ds * ds + dy * dy;
}

PairLossWorkspace::PairLossWorkspace(const Template& T)
    : tmpl_(&T),
      samples_(T.patch().size()),
      jacobian_(T.patch().size() * 4),
      grad_u_(T.patch().size()) {}

LossAndGrad PairLossWorkspace::evaluate(const Image& u_left, const Image& u_right,
                                        const PairVector& v, const ParamConfig& cfg,
                                        bool with_grad) {
  const Template& T = *tmpl_;
  LossAndGrad out;
  std::array<PoseParams, 2> poses;
  std::array<std::array<double, 4>, 2> dpose{};  // d side-loss / d pose
  const Image* halves[2] = {&u_left, &u_right};

  for (int side = 0; side < 2; ++side) {
    const UnconstrainedParams vs{v[4 * side], v[4 * side + 1], v[4 * side + 2], v[4 * side + 3]};
    poses[side] = constrain(vs, cfg);
    warp_samples(*halves[side], poses[side], cfg.f, T.height(), T.width(), samples_,
                 with_grad ? std::span<double>(jacobian_) : std::span<double>());
    const MatchResult m =
        matching_loss_samples(samples_, T, with_grad ? std::span<double>(grad_u_) : std::span<double>());
    if (side == 0) {
      out.loss.l_left = m.loss;
      out.loss.negated_left = m.negated;
    } else {
      out.loss.l_right = m.loss;
      out.loss.negated_right = m.negated;
    }
    out.loss.degenerate = out.loss.degenerate || m.degenerate;
    if (with_grad) {
      for (std::size_t i = 0; i < samples_.size(); ++i) {
        const double g = grad_u_[i];
        if (g == 0.0) continue;
        const double* J = jacobian_.data() + i * 4;
        for (int k = 0; k < 4; ++k) dpose[side][k] += g * J[k];
      }
    }
  }

  out.loss.l_reg = regularizer(poses[0], poses[1]);
  out.loss.total = out.loss.l_left + out.loss.l_right + out.loss.l_reg;

  if (with_grad) {
    const double ds = poses[0].scale - poses[1].scale;
    const double dy = poses[0].ty - poses[1].ty;
    dpose[0][0] += 2.0 * ds;
    dpose[1][0] -= 2.0 * ds;
    dpose[0][2] += 2.0 * dy;
    dpose[1][2] -= 2.0 * dy;
    for (int side = 0; side < 2; ++side) {
      const UnconstrainedParams vs{v[4 * side], v[4 * side + 1], v[4 * side + 2],
                                   v[4 * side + 3]};
      const Matrix4 Jc = constrain_jacobian(vs, cfg);
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) acc += dpose[side][i] * Jc[i][j];
        out.grad[4 * side + j] = acc;
      }
    }
  }
  return out;
}

LossBreakdown pair_loss(const Image& u_left, const Image& u_right, const PairVector& v,
                        const Template& T, const ParamConfig& cfg) {
  PairLossWorkspace ws(T);
  return ws.evaluate(u_left, u_right, v, cfg, false).loss;
}

LossAndGrad pair_loss_grad(const Image& u_left, const Image& u_right, const PairVector& v,
                           const Template& T, const ParamConfig& cfg) {
  PairLossWorkspace ws(T);
  return ws.evaluate(u_left, u_right, v, cfg, true);
}

}  // namespace kneeloc
