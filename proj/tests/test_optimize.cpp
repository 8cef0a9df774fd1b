#include <doctest.h>

#include <cmath>
#include <random>

#include "kneeloc/errors.hpp"
#include "kneeloc/optimize.hpp"
#include "kneeloc/parametrize.hpp"
#include "kneeloc/synth.hpp"

using namespace kneeloc;

namespace {

PairObjective quadratic(const PairVector& c) {
  return [c](const PairVector& v, PairVector* grad) {
    LossBreakdown lb;
    for (int i = 0; i < 8; ++i) {
      lb.total += (v[i] - c[i]) * (v[i] - c[i]);
      if (grad) (*grad)[i] = 2 * (v[i] - c[i]);
    }
    return lb;
  };
}

PairVector join(const UnconstrainedParams& a, const UnconstrainedParams& b) {
  return {a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]};
}

SynthPair planted(const Template& T, PoseParams left, PoseParams right, double noise, std::uint64_t seed) {
  PlantSpec spec{T};
  spec.left = left;
  spec.right = right;
  spec.background.noise_sigma = noise;
  std::mt19937_64 rng(seed);
  return generate(spec, rng);
}

}  // namespace

TEST_CASE("adam on a quadratic") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    PairVector c;
    for (double& x : c) x = d(rng);
    double n = 0;
    for (double x : c) n += x * x;
    for (double& x : c) x /= std::max(1.0, std::sqrt(n));
    const OptTrace t = adam_minimize(quadratic(c), {}, {0.05, 0.9, 0.999, 1e-8, 300});
    CHECK(t.points.size() == 301);
    double err = 0;
    for (int i = 0; i < 8; ++i) err = std::max(err, std::abs(t.best.v[i] - c[i]));
    CHECK(err < 1e-3);
    double lowest = t.points[0].loss.total;
    for (const TracePoint& p : t.points) lowest = std::min(lowest, p.loss.total);
    CHECK(t.best.loss.total == lowest);
    CHECK(t.points[t.best_index].loss.total == lowest);
    CHECK(t.best.loss.total <= t.initial.loss.total);
  }
}

TEST_CASE("adam first step moves by the step size") {
  const PairVector c{1, -1, 2, 0.5, -3, 1, 1, 1};
  const OptTrace t = adam_minimize(quadratic(c), {}, {0.05, 0.9, 0.999, 1e-8, 1});
  for (int i = 0; i < 8; ++i) CHECK(t.points[1].v[i] == doctest::Approx(0.05 * (c[i] > 0 ? 1 : -1)).epsilon(1e-6));
}

TEST_CASE("adam with a constant objective keeps v0") {
  const PairVector v0{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  const PairObjective flat = [](const PairVector&, PairVector* g) {
    if (g) g->fill(0.0);
    return LossBreakdown{0.7};
  };
  const OptTrace t = adam_minimize(flat, v0, {});
  for (const TracePoint& p : t.points) CHECK(p.v == v0);
  CHECK(t.best.v == v0);
  CHECK(t.best_index == 0);
}

TEST_CASE("adam stops at non-finite values") {
  int calls = 0;
  const PairObjective blowup = [&](const PairVector& v, PairVector* g) {
    if (g) g->fill(-1.0);
    LossBreakdown lb;
    lb.total = ++calls > 5 ? std::nan("") : -v[0];
    return lb;
  };
  const OptTrace t = adam_minimize(blowup, {}, {});
  CHECK(t.non_finite);
  CHECK(t.points.size() == 5);
  const PairObjective bad = [](const PairVector&, PairVector*) { return LossBreakdown{INFINITY}; };
  CHECK_THROWS_AS(adam_minimize(bad, {}, {}), NonFiniteLoss);
  CHECK_THROWS_AS(AdamConfig({0.02, 1.0, 0.999, 1e-8, 10}).validate(), InvalidArgument);
}

TEST_CASE("grid formula") {
  CHECK(grid_count(0.5, 0.25) == 5);
  CHECK(grid_count(1.0 - 1e-9, 0.25) == 2);
  const auto xs = grid_centers(0.5, 0.25);
  REQUIRE(xs.size() == 5);
  CHECK(xs.front() == doctest::Approx(-0.5));
  CHECK(xs.back() == doctest::Approx(0.5));
  CHECK(xs[1] - xs[0] == doctest::Approx(0.25));

  const ParamConfig pcfg{0.15, 0.8, 0.13, 1.2};
  GridConfig g;
  for (int n : {2, 3, 5, 8}) {
    g.scales = n;
    const auto ss = grid_scales(g, pcfg);
    REQUIRE(ss.size() == static_cast<std::size_t>(n));
    CHECK(ss.front() == doctest::Approx(0.15 + 1e-6));
    CHECK(ss.back() == doctest::Approx(0.95 - 1e-6));
    for (double s : ss)
      for (double h : {s, s / pcfg.f}) {
        const auto c = grid_centers(h, 0.25);
        CHECK(static_cast<int>(c.size()) == 1 + static_cast<int>(std::ceil((2 - 2 * h) / (0.25 * 2 * h) - 1e-12)));
        for (std::size_t i = 1; i < c.size(); ++i) {
          // Overlap of adjacent segments [c - h, c + h].
          CHECK(2 * h - (c[i] - c[i - 1]) >= 2 * h * (1 - 0.25) - 1e-12);
        }
        // Coverage of every admissible center.
        for (double x = -(1 - h); x <= 1 - h; x += 0.01) {
          double gap = 1e9;
          for (double ci : c) gap = std::min(gap, std::abs(ci - x));
          CHECK(gap <= 0.25 * h + 1e-12);
        }
      }
  }
}

TEST_CASE("grid init points") {
  const ParamConfig pcfg{0.15, 0.8, 0.13, 1.2};
  GridConfig g;
  g.scales = 3;
  const auto pts = grid_init_points(g, pcfg);
  CHECK(!pts.empty());
  for (const InitPoint& p : pts) {
    CHECK(p.left.scale == p.right.scale);
    CHECK(p.left.ty == p.right.ty);
    CHECK(p.left.rot == 0.0);
    CHECK(std::abs(p.left.tx - p.right.tx) <= 1.0 / 3.0 + 1e-9);
    const PoseParams back = constrain({p.v[0], p.v[1], p.v[2], p.v[3]}, pcfg);
    CHECK(std::abs(back.scale - p.left.scale) < 1e-9);
    CHECK(std::abs(back.tx - p.left.tx) < 1e-9);
  }
  // Count by direct enumeration.
  std::size_t expected = 0;
  for (double s : grid_scales(g, pcfg)) {
    const auto xs = grid_centers(s, 0.25);
    std::size_t pairs = 0;
    for (double a : xs)
      for (double b : xs) pairs += std::abs(a - b) <= 1.0 / 3.0 + 1e-12;
    expected += pairs * grid_centers(s / 1.2, 0.25).size();
  }
  CHECK(pts.size() == expected);
}

TEST_CASE("sharpen near a planted minimum") {
  const Template T = make_joint_template();
  const ParamConfig pcfg{0.15, 0.8, 0.13, T.f()};
  const PoseParams left{0.4, -0.1, 0.1, 0.04}, right{0.4, 0.15, 0.1, -0.03};
  const SynthPair pair = planted(T, left, right, 0.0, 31);
  const PairVector truth = join(unconstrain(left, pcfg), unconstrain(right, pcfg));

  const SharpenResult at = sharpen(pair.left, pair.right, T, pcfg, truth);
  CHECK(at.loss.total <= at.initial_loss.total);
  const PoseParams drift = constrain({at.v[0], at.v[1], at.v[2], at.v[3]}, pcfg);
  CHECK(std::abs(drift.scale - left.scale) < 1e-3);
  CHECK(std::abs(drift.tx - left.tx) < 1e-3);

  const PoseParams pl{0.43, -0.13, 0.13, 0.0}, pr{0.43, 0.12, 0.07, 0.0};
  const PairVector v0 = join(unconstrain(pl, pcfg), unconstrain(pr, pcfg));
  const SharpenResult s = sharpen(pair.left, pair.right, T, pcfg, v0);
  CHECK(s.loss.total < 0.05);
  CHECK(s.loss.total <= s.initial_loss.total);
  const PoseParams rl = constrain({s.v[0], s.v[1], s.v[2], s.v[3]}, pcfg);
  const PoseParams rr = constrain({s.v[4], s.v[5], s.v[6], s.v[7]}, pcfg);
  CHECK(std::hypot(rl.tx - left.tx, rl.ty - left.ty) < 0.01);
  CHECK(std::hypot(rr.tx - right.tx, rr.ty - right.ty) < 0.01);
  CHECK(std::abs(rl.scale - left.scale) < 0.01);
}

TEST_CASE("grid search recovers a pose on a grid point and is thread independent") {
  const Template T = make_joint_template();
  const ParamConfig pcfg{0.15, 0.8, 0.13, T.f()};
  GridSearchConfig cfg;
  cfg.grid.scales = 3;
  const auto inits = grid_init_points(cfg.grid, pcfg);
  // A start at the middle scale with different left/right centers.
  const InitPoint* plant = nullptr;
  for (const InitPoint& p : inits)
    if (std::abs(p.left.scale - 0.55) < 1e-3 && p.left.tx < 0 && p.right.tx > p.left.tx && std::abs(p.left.ty) < 0.2) {
      plant = &p;
      break;
    }
  REQUIRE(plant != nullptr);
  const SynthPair pair = planted(T, plant->left, plant->right, 0.005, 32);

  const GridSearchResult r1 = grid_search(pair.left, pair.right, T, pcfg, cfg);
  const PoseParams l = constrain({r1.v[0], r1.v[1], r1.v[2], r1.v[3]}, pcfg);
  const PoseParams r = constrain({r1.v[4], r1.v[5], r1.v[6], r1.v[7]}, pcfg);
  CHECK(r1.loss.l_left + r1.loss.l_right < 0.02);
  CHECK(std::abs(l.scale - plant->left.scale) < 5e-3);
  CHECK(std::abs(l.tx - plant->left.tx) < 5e-3);
  CHECK(std::abs(l.ty - plant->left.ty) < 5e-3);
  CHECK(std::abs(r.tx - plant->right.tx) < 5e-3);
  CHECK(r1.stats.inits == static_cast<std::int64_t>(inits.size()));

  cfg.threads = 4;
  const GridSearchResult r4 = grid_search(pair.left, pair.right, T, pcfg, cfg);
  CHECK(r4.v == r1.v);
  CHECK(r4.loss.total == r1.loss.total);
  CHECK(r4.best_init == r1.best_init);
  CHECK(r4.stats.evals == r1.stats.evals);

  // The pair cost is symmetric in the halves, and so is the init set.
  cfg.grid.scales = 2;
  const GridSearchResult a = grid_search(pair.left, pair.right, T, pcfg, cfg);
  const GridSearchResult b = grid_search(pair.right, pair.left, T, pcfg, cfg);
  CHECK(std::abs(a.loss.total - b.loss.total) < 1e-6);
}
