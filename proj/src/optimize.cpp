#include "kneeloc/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "kneeloc/errors.hpp"

namespace kneeloc {

void AdamConfig::validate() const {
  const bool ok = step_size > 0.0 && beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 &&
                  epsilon > 0.0 && iterations >= 1;
  if (!ok) throw InvalidArgument("invalid Adam configuration");
}

void GridConfig::validate() const {
  const bool ok = scales >= 2 && overlap_ratio > 0.0 && overlap_ratio < 1.0 &&
                  pair_halfwidth >= 0.0 && endpoint_nudge >= 0.0 && endpoint_nudge < 1e-2;
  if (!ok) throw InvalidArgument("invalid grid configuration");
}

namespace {

bool finite_point(const LossBreakdown& loss, const PairVector* grad) {
  if (!std::isfinite(loss.total)) return false;
  if (grad != nullptr) {
    for (double g : *grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

}  // namespace

OptTrace adam_minimize(const PairObjective& objective, const PairVector& v0, const AdamConfig& cfg,
                       bool keep_points) {
  cfg.validate();
  OptTrace trace;
  PairVector x = v0;
  PairVector grad{};
  LossBreakdown loss = objective(x, &grad);
  ++trace.evaluations;
  if (!finite_point(loss, &grad)) throw NonFiniteLoss("objective is not finite at the start point");

  auto record = [&](std::size_t index) {
    if (keep_points) trace.points.push_back({x, loss});
    if (index == 0 || loss.total < trace.best.loss.total) {
      trace.best = {x, loss};
      trace.best_index = index;
    }
  };
  trace.initial = {x, loss};
  record(0);

  PairVector m{};
  PairVector s{};
  double b1t = 1.0;
  double b2t = 1.0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
      s[k] = cfg.beta2 * s[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / (1.0 - b1t);
      const double s_hat = s[k] / (1.0 - b2t);
      x[k] -= cfg.step_size * m_hat / (std::sqrt(s_hat) + cfg.epsilon);
    }
    // The gradient at the final iterate is never used.
    const bool last = it == cfg.iterations;
    loss = objective(x, last ? nullptr : &grad);
    ++trace.evaluations;
    if (!finite_point(loss, last ? nullptr : &grad)) {
      trace.non_finite = true;
      break;
    }
    record(static_cast<std::size_t>(it));
  }
  return trace;
}

SharpenResult sharpen(const Image& u_left, const Image& u_right, const Template& T,
                      const ParamConfig& cfg, const PairVector& v0, const AdamConfig& acfg) {
  PairLossWorkspace ws(T);
  const PairObjective objective = [&](const PairVector& v, PairVector* grad) {
    LossAndGrad lg = ws.evaluate(u_left, u_right, v, cfg, grad != nullptr);
    if (grad != nullptr) *grad = lg.grad;
    return lg.loss;
  };
  const OptTrace trace = adam_minimize(objective, v0, acfg, false);
  SharpenResult r;
  r.v = trace.best.v;
  r.loss = trace.best.loss;
  r.non_finite = trace.non_finite;
  r.evaluations = trace.evaluations;
  r.initial_loss = trace.initial.loss;
  return r;
}

int grid_count(double half_extent, double overlap_ratio) {
  if (half_extent >= 1.0) return 1;
  const double ratio = (2.0 - 2.0 * half_extent) / (overlap_ratio * 2.0 * half_extent);
  return 1 + static_cast<int>(std::ceil(ratio - 1e-9));
}

std::vector<double> grid_centers(double half_extent, double overlap_ratio) {
  const int n = grid_count(half_extent, overlap_ratio);
  if (n == 1) return {0.0};
  std::vector<double> centers(static_cast<std::size_t>(n));
  const double lo = half_extent - 1.0;
  const double step = (2.0 - 2.0 * half_extent) / (n - 1);
  for (int j = 0; j < n; ++j) centers[static_cast<std::size_t>(j)] = lo + j * step;
  centers.back() = 1.0 - half_extent;
  return centers;
}

std::vector<double> grid_scales(const GridConfig& cfg, const ParamConfig& pcfg) {
  cfg.validate();
  std::vector<double> scales(static_cast<std::size_t>(cfg.scales));
  for (int i = 0; i < cfg.scales; ++i) {
    scales[static_cast<std::size_t>(i)] = pcfg.alpha0 + pcfg.beta0 * i / (cfg.scales - 1);
  }
  scales.front() += cfg.endpoint_nudge;
  scales.back() -= cfg.endpoint_nudge;
  return scales;
}

std::vector<InitPoint> grid_init_points(const GridConfig& cfg, const ParamConfig& pcfg) {
  pcfg.validate();
  std::vector<InitPoint> points;
  const double keep = 1.0 - cfg.endpoint_nudge;
  for (double s : grid_scales(cfg, pcfg)) {
    const std::vector<double> xs = grid_centers(s, cfg.overlap_ratio);
    const std::vector<double> ys = grid_centers(s / pcfg.f, cfg.overlap_ratio);
    for (double xl : xs) {
      for (double y : ys) {
        const PoseParams left{s, xl * keep, y * keep, 0.0};
        const UnconstrainedParams vl = unconstrain(left, pcfg);
        for (double xr : xs) {
          if (std::abs(xr - xl) > cfg.pair_halfwidth + 1e-12) continue;
          const PoseParams right{s, xr * keep, y * keep, 0.0};
          const UnconstrainedParams vr = unconstrain(right, pcfg);
          InitPoint p;
          p.left = left;
          p.right = right;
          std::copy(vl.begin(), vl.end(), p.v.begin());
          std::copy(vr.begin(), vr.end(), p.v.begin() + 4);
          points.push_back(p);
        }
      }
    }
  }
  return points;
}

namespace {

struct Candidate {
  double loss = std::numeric_limits<double>::infinity();
  std::size_t index = std::numeric_limits<std::size_t>::max();
  TracePoint point;

  bool better_than(const Candidate& other) const {
    if (loss != other.loss) return loss < other.loss;
    return index < other.index;
  }
};

}  // namespace

GridSearchResult grid_search(const Image& u_left, const Image& u_right, const Template& T,
                             const ParamConfig& pcfg, const GridSearchConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.per_init.validate();
  cfg.polish.validate();
  const std::vector<InitPoint> inits = grid_init_points(cfg.grid, pcfg);

  const int n_threads = std::max(1, cfg.threads);
  std::vector<Candidate> best(static_cast<std::size_t>(n_threads));
  std::vector<std::int64_t> evals(static_cast<std::size_t>(n_threads), 0);
  std::vector<int> failures(static_cast<std::size_t>(n_threads), 0);
  std::atomic<std::size_t> next{0};

  auto worker = [&](int tid) {
    PairLossWorkspace ws(T);
    const PairObjective objective = [&](const PairVector& v, PairVector* grad) {
      LossAndGrad lg = ws.evaluate(u_left, u_right, v, pcfg, grad != nullptr);
      if (grad != nullptr) *grad = lg.grad;
      return lg.loss;
    };
    Candidate& mine = best[static_cast<std::size_t>(tid)];
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= inits.size()) break;
      try {
        const OptTrace trace = adam_minimize(objective, inits[i].v, cfg.per_init, false);
        evals[static_cast<std::size_t>(tid)] += trace.evaluations;
        Candidate c{trace.best.loss.total, i, trace.best};
        if (c.better_than(mine)) mine = c;
      } catch (const NonFiniteLoss&) {
        ++failures[static_cast<std::size_t>(tid)];
        ++evals[static_cast<std::size_t>(tid)];
      }
    }
  };

  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (std::thread& th : pool) th.join();
  }

  Candidate winner;
  GridSearchResult result;
  for (int t = 0; t < n_threads; ++t) {
    const auto k = static_cast<std::size_t>(t);
    if (best[k].better_than(winner)) winner = best[k];
    result.stats.evals += evals[k];
    result.failed_inits += failures[k];
  }
  if (winner.index == std::numeric_limits<std::size_t>::max()) {
    throw NonFiniteLoss("every grid start produced a non-finite loss");
  }

  const SharpenResult polished = sharpen(u_left, u_right, T, pcfg, winner.point.v, cfg.polish);
  result.stats.evals += polished.evaluations;
  result.best_init = winner.index;
  if (polished.loss.total < winner.point.loss.total) {
    result.v = polished.v;
    result.loss = polished.loss;
  } else {
    result.v = winner.point.v;
    result.loss = winner.point.loss;
  }
  result.stats.inits = static_cast<std::int64_t>(inits.size());
  result.stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace kneeloc
