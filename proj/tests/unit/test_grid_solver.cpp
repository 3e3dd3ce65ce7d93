// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "madr/errors.hpp"
#include "madr/grid_solver.hpp"
#include "madr/io_util.hpp"
#include "support/test_support.hpp"

using namespace madr;

namespace {

// Max |V(x, 0) - exact(x)| over nodes with |x| <= radius.
double max_error_1d(const ValueGrid& g, double (*exact)(double), double radius) {
  const auto v = g.initial_slice();
  double err = 0.0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double x = g.node_state(i)[0];
    if (std::abs(x) > radius) continue;
    err = std::max(err, std::abs(v[i] - exact(x)));
  }
  return err;
}

double mean_error_1d(const ValueGrid& g, double (*exact)(double), double radius) {
  const auto v = g.initial_slice();
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double x = g.node_state(i)[0];
    if (std::abs(x) > radius) continue;
    sum += std::abs(v[i] - exact(x));
    ++n;
  }
  return sum / n;
}

// Evader outruns the pursuer: the distance never shrinks.
double exact_integrator(double x) { return std::abs(x) - 0.2; }

// Pursuer faster by 0.5 over a horizon of 1: the gap closes by 0.5, then holds.
double exact_pursuit(double x) { return std::max(std::abs(x) - 0.5, 0.0) - 0.2; }

ValueGrid solve_1d(const GameProblem& p, int nodes, GameMode mode = GameMode::kAvoid) {
  GridSpec spec = GridSpec::for_problem(p, {nodes}, 0.1);
  return solve_hji_vi(p, spec, mode);
}

}  // namespace

TEST_CASE("integrator1d reproduces the analytic value within two cells") {
  ProblemPtr p = load_problem("integrator1d");
  const ValueGrid g = solve_1d(*p, 401);
  const double dx = g.spec().axes[0].spacing();
  CHECK(dx == doctest::Approx(0.005));
  const double err = max_error_1d(g, exact_integrator, 1.0);
  MESSAGE("integrator1d max error " << err);
  CHECK(err <= 2.0 * dx);
}

TEST_CASE("pursuit integrator converges under refinement") {
  ProblemPtr p = load_problem(madr::testing::fixture("integrator1d_pursuit.json"));
  // Characteristics enter from the walls, so errors are measured well inside.
  const ValueGrid coarse = solve_1d(*p, 401), fine = solve_1d(*p, 801);
  const double e1 = max_error_1d(coarse, exact_pursuit, 1.0);
  const double e2 = max_error_1d(fine, exact_pursuit, 1.0);
  const double m1 = mean_error_1d(coarse, exact_pursuit, 1.0);
  const double m2 = mean_error_1d(fine, exact_pursuit, 1.0);
  MESSAGE("max error " << e1 << " -> " << e2 << ", mean error " << m1 << " -> " << m2);
  // Dissipation rounds the kink over a width ~ sqrt(dx): the max error
  // falls like sqrt(dx) and the mean error like dx.
  CHECK(e1 / e2 >= 1.3);
  CHECK(m1 / m2 >= 1.5);
}

TEST_CASE("avoid values are bounded by l and shrink with time-to-go") {
  ProblemPtr p = load_problem("dubins3d_rel");
  GridSpec spec = GridSpec::for_problem(*p, {31, 31, 24}, 0.25);
  const ValueGrid g = solve_hji_vi(*p, spec);
  CHECK(g.horizon() == doctest::Approx(p->horizon));
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < g.num_times(); ++k) {
    const auto a = g.slice(k), b = g.slice(k + 1);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      const Vec x = g.node_state(i);
      // Edge extrapolation may lift values next to the walls.
      if (std::max(std::abs(x[0]), std::abs(x[1])) > 1.5) continue;
      worst = std::max(worst, b[i] - a[i]);
    }
  }
  MESSAGE("largest increase with time-to-go " << worst);
  CHECK(worst <= 1e-6);
  const auto last = g.initial_slice();
  for (std::size_t i = 0; i < g.num_nodes(); i += 7) {
    CHECK(last[i] <= p->boundary(g.node_state(i)) + 1e-6);
  }
}

TEST_CASE("follow mode keeps the running maximum of l") {
  ProblemPtr p = load_problem("dubins3d_rel");
  GridSpec spec = GridSpec::for_problem(*p, {25, 25, 20}, 0.25);
  const ValueGrid g = solve_hji_vi(*p, spec, GameMode::kFollow);
  CHECK(g.mode() == GameMode::kFollow);
  const auto last = g.initial_slice();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    REQUIRE(last[i] >= p->boundary(g.node_state(i)) - 1e-6);
  }
}

TEST_CASE("too few substeps violate the CFL bound") {
  ProblemPtr p = load_problem("integrator1d");
  GridSpec spec = GridSpec::for_problem(*p, {401}, 0.1);
  spec.substeps = 1;
  CHECK_THROWS_AS(solve_hji_vi(*p, spec), ConfigError);
  SolveStats stats;
  spec.substeps = 0;
  solve_hji_vi(*p, spec, GameMode::kAvoid, &stats);
  CHECK(stats.cfl_number <= spec.cfl_safety + 1e-12);
  // |dH/dp| = |u| + |d| <= 1.5 for this problem, with the 1.1 margin.
  CHECK(stats.alpha[0] == doctest::Approx(1.65));
}

TEST_CASE("grid files round-trip bit-exactly") {
  madr::testing::TempDir dir("grid");
  ProblemPtr p = load_problem("dubins3d_rel");
  const ValueGrid g = solve_hji_vi(*p, GridSpec::for_problem(*p, {11, 13, 8}, 0.5));
  g.save(dir / "g.bin");
  const ValueGrid h = ValueGrid::load(dir / "g.bin");
  CHECK(h.problem_name() == "dubins3d_rel");
  REQUIRE(h.num_times() == g.num_times());
  REQUIRE(h.num_nodes() == g.num_nodes());
  for (std::size_t k = 0; k < g.num_times(); ++k) {
    CHECK(h.times()[k] == g.times()[k]);
    const auto a = g.slice(k), b = h.slice(k);
    // Values are stored as 32-bit floats.
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && static_cast<float>(a[i]) == b[i];
    CHECK(same);
  }
  write_text_file(dir / "bad.bin", "MADRGRX1 not a grid");
  CHECK_THROWS_AS(ValueGrid::load(dir / "bad.bin"), IoError);
  CHECK_THROWS_AS(ValueGrid::load(dir / "missing.bin"), IoError);
}

TEST_CASE("interpolation hits nodes exactly and wraps periodic axes") {
  ProblemPtr p = load_problem("dubins3d_rel");
  const ValueGrid g = solve_hji_vi(*p, GridSpec::for_problem(*p, {21, 21, 16}, 0.5));
  const auto v = g.initial_slice();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, g.num_nodes() - 1);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = pick(rng);
    const Vec x = g.node_state(n);
    CHECK(interpolate(g, x, 0.0) == doctest::Approx(v[n]).epsilon(1e-6));
    Vec y = x;
    y[2] += 2.0 * kPi;
    CHECK(interpolate(g, y, 0.0) == doctest::Approx(v[n]).epsilon(1e-6));
  }
  Vec out(3);
  out << 5.0, 0.0, 0.0;
  CHECK_THROWS_AS(interpolate(g, out, 0.0), DomainError);
}

TEST_CASE("self comparison has unit IOU") {
  ProblemPtr p = load_problem("dubins3d_rel");
  const ValueGrid g = solve_hji_vi(*p, GridSpec::for_problem(*p, {21, 21, 16}, 0.5));
  Window w;
  w.bounds = {{-1.5, 1.5}, {-1.5, 1.5}};
  const auto nodes = window_nodes(g, w);
  std::vector<double> cand;
  for (auto n : nodes) cand.push_back(g.initial_slice()[n]);
  const FieldComparison c = compare_fields(g, cand, 0.0, w);
  CHECK(c.iou == doctest::Approx(1.0));
  CHECK(c.vol_ref == doctest::Approx(c.vol_cand));
  CHECK(c.window_nodes == nodes.size());
  // Shifting the candidate up shrinks its unsafe set.
  for (double& x : cand) x += 0.2;
  const FieldComparison s = compare_fields(g, cand, 0.0, w);
  CHECK(s.iou < 1.0);
  CHECK(s.vol_cand < s.vol_ref);
}

TEST_CASE("grid shorthand parsing") {
  ProblemPtr p = load_problem("dubins3d_rel");
  const GridSpec s = parse_grid_spec("41x41x30", *p);
  CHECK(s.dims() == 3);
  CHECK(s.axes[2].periodic);
  CHECK_FALSE(s.axes[0].periodic);
  CHECK(s.node_count() == 41u * 41u * 30u);
  CHECK_THROWS_AS(parse_grid_spec("41xx3", *p), ConfigError);
}
