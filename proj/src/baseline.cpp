#include "kneeloc/baseline.hpp"

#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <complex>
#include <memory>
#include <mutex>
#include <sstream>

#include "kneeloc/errors.hpp"

namespace kneeloc {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

class Plan {
 public:
  explicit Plan(fftw_plan p) : plan_(p) {}
  ~Plan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

// Running-sum table with a zero first row and column.
class SumTable {
 public:
  SumTable(const Image& img, bool squared) : w_(img.width() + 1), sums_((img.height() + 1) * w_) {
    for (int r = 0; r < img.height(); ++r) {
      double row_sum = 0.0;
      for (int c = 0; c < img.width(); ++c) {
        const double v = img.at(r, c);
        row_sum += squared ? v * v : v;
        sums_[(r + 1) * w_ + c + 1] = sums_[r * w_ + c + 1] + row_sum;
      }
    }
  }
  double box(int r0, int c0, int h, int w) const {
    const int r1 = r0 + h;
    const int c1 = c0 + w;
    return sums_[r1 * w_ + c1] - sums_[r0 * w_ + c1] - sums_[r1 * w_ + c0] + sums_[r0 * w_ + c0];
  }

 private:
  std::size_t w_;
  std::vector<double> sums_;
};

}  // namespace

Image sliding_ncc(const Image& img, const Image& tmpl) {
  const int H = img.height(), W = img.width();
  const int h = tmpl.height(), w = tmpl.width();
  if (h > H || w > W) {
    std::ostringstream msg;
    msg << "template " << h << "x" << w << " does not fit in image " << H << "x" << W;
    throw TemplateTooLarge(msg.str());
  }
  const auto n = static_cast<double>(h) * w;
  double tmean = 0.0;
  for (float v : tmpl.data()) tmean += v;
  tmean /= n;
  double tnorm_sq = 0.0;
  for (float v : tmpl.data()) tnorm_sq += (v - tmean) * (v - tmean);
  if (tnorm_sq < kDegenerateNormSq) throw DegenerateInput("template has zero variance");

  // Circular correlation over an H x W domain is exact for valid placements:
  // row + template row never wraps.
  const int Wc = W / 2 + 1;
  const std::size_t real_n = static_cast<std::size_t>(H) * W;
  const std::size_t cplx_n = static_cast<std::size_t>(H) * Wc;
  auto img_buf = fftw_buffer<double>(real_n);
  auto tmpl_buf = fftw_buffer<double>(real_n);
  auto img_hat = fftw_buffer<fftw_complex>(cplx_n);
  auto tmpl_hat = fftw_buffer<fftw_complex>(cplx_n);

  std::unique_ptr<Plan> fwd_img, fwd_tmpl, inverse;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_img = std::make_unique<Plan>(
        fftw_plan_dft_r2c_2d(H, W, img_buf.get(), img_hat.get(), FFTW_ESTIMATE));
    fwd_tmpl = std::make_unique<Plan>(
        fftw_plan_dft_r2c_2d(H, W, tmpl_buf.get(), tmpl_hat.get(), FFTW_ESTIMATE));
    inverse = std::make_unique<Plan>(
        fftw_plan_dft_c2r_2d(H, W, img_hat.get(), img_buf.get(), FFTW_ESTIMATE));
  }

  for (std::size_t i = 0; i < real_n; ++i) img_buf[i] = img.data()[i];
  std::fill(tmpl_buf.get(), tmpl_buf.get() + real_n, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) tmpl_buf[static_cast<std::size_t>(r) * W + c] = tmpl.at(r, c) - tmean;
  }
  fwd_img->execute();
  fwd_tmpl->execute();
  for (std::size_t i = 0; i < cplx_n; ++i) {
    // img_hat * conj(tmpl_hat)
    const double ar = img_hat[i][0], ai = img_hat[i][1];
    const double br = tmpl_hat[i][0], bi = tmpl_hat[i][1];
    img_hat[i][0] = ar * br + ai * bi;
    img_hat[i][1] = ai * br - ar * bi;
  }
  inverse->execute();  // unnormalized: scaled by H * W

  const SumTable sums(img, false);
  const SumTable sq_sums(img, true);
  const int out_h = H - h + 1, out_w = W - w + 1;
  const double norm = 1.0 / static_cast<double>(real_n);
  const double tnorm = std::sqrt(tnorm_sq);
  Image map(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const double s = sums.box(r, c, h, w);
      const double s2 = sq_sums.box(r, c, h, w);
      const double var = s2 - s * s / n;
      if (var <= std::max(kDegenerateNormSq, 1e-10 * s2)) continue;  // flat window
      const double num = img_buf[static_cast<std::size_t>(r) * W + c] * norm;
      map.at(r, c) = static_cast<float>(std::clamp(num / (std::sqrt(var) * tnorm), -1.0, 1.0));
    }
  }
  return map;
}

PoseParams placement_pose(int row, int col, int tmpl_h, int tmpl_w, int scaled_h, int scaled_w) {
  PoseParams p;
  p.scale = static_cast<double>(tmpl_w - 1) / (scaled_w - 1);
  p.tx = -1.0 + static_cast<double>(2 * col + tmpl_w - 1) / (scaled_w - 1);
  p.ty = -1.0 + static_cast<double>(2 * row + tmpl_h - 1) / (scaled_h - 1);
  p.rot = 0.0;
  return p;
}

namespace {

struct Placement {
  PoseParams pose;
  MatchResult match;
};

std::vector<Placement> side_candidates(const Image& half, const Template& T,
                                       const ParamConfig& pcfg, const BaselineConfig& cfg,
                                       std::vector<std::string>& warnings, std::int64_t& evals) {
  std::vector<Placement> out;
  const int h = T.height(), w = T.width();
  for (double ratio : cfg.scales) {
    if (!(ratio > 0.0)) throw InvalidArgument("pyramid ratios must be positive");
    const int sw = static_cast<int>(std::lround((w - 1) / ratio)) + 1;
    const int sh = static_cast<int>(std::lround((h - 1) * pcfg.f / ratio)) + 1;
    Image map;
    try {
      if (sh < 2 || sw < 2) throw TemplateTooLarge("degenerate pyramid level");
      map = sliding_ncc(resize(half, sh, sw), T.patch());
    } catch (const TemplateTooLarge& e) {
      std::ostringstream msg;
      msg << "pyramid level " << ratio << " skipped: " << e.what();
      warnings.push_back(msg.str());
      continue;
    }

    // Strongest |correlation| placements, at least 2 pixels apart.
    std::vector<std::pair<int, int>> order;
    order.reserve(map.size());
    for (int r = 0; r < map.height(); ++r) {
      for (int c = 0; c < map.width(); ++c) order.emplace_back(r, c);
    }
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      return std::abs(map.at(a.first, a.second)) > std::abs(map.at(b.first, b.second));
    });
    std::vector<std::pair<int, int>> chosen;
    for (const auto& rc : order) {
      if (static_cast<int>(chosen.size()) >= cfg.candidates_per_scale) break;
      const bool near = std::any_of(chosen.begin(), chosen.end(), [&](const auto& o) {
        return std::abs(o.first - rc.first) <= 1 && std::abs(o.second - rc.second) <= 1;
      });
      if (!near) chosen.push_back(rc);
    }
    for (const auto& [r, c] : chosen) {
      const PoseParams pose = clamp_to_box(placement_pose(r, c, h, w, sh, sw), pcfg);
      out.push_back({pose, side_loss(half, pose, T, pcfg.f)});
      ++evals;
    }
  }
  return out;
}

}  // namespace

BaselineResult multiscale_match(const Image& u_left, const Image& u_right, const Template& T,
                                const ParamConfig& pcfg, const BaselineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.scales.empty()) throw InvalidArgument("baseline needs at least one pyramid level");
  if (cfg.candidates_per_scale < 1) throw InvalidArgument("candidates_per_scale must be >= 1");
  BaselineResult result;
  std::int64_t evals = 0;
  const std::vector<Placement> left = side_candidates(u_left, T, pcfg, cfg, result.warnings, evals);
  const std::vector<Placement> right =
      side_candidates(u_right, T, pcfg, cfg, result.warnings, evals);
  if (left.empty() || right.empty()) {
    throw TemplateTooLarge("template does not fit any pyramid level");
  }

  std::size_t best_l = 0, best_r = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) {
      const double sum = left[i].match.loss + right[j].match.loss;
      if (sum < best) {
        best = sum;
        best_l = i;
        best_r = j;
      }
    }
  }
  Detection& d = result.detection;
  d.method = "baseline";
  d.left = {left[best_l].pose, left[best_l].match.loss, left[best_l].match.negated};
  d.right = {right[best_r].pose, right[best_r].match.loss, right[best_r].match.negated};
  d.l_reg = regularizer(d.left.pose, d.right.pose);
  d.total = d.left.loss + d.right.loss + d.l_reg;
  d.stats.inits = static_cast<std::int64_t>(left.size() + right.size());
  d.stats.evals = evals;
  d.stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace kneeloc
