// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ground-truth value functions for low-dimensional games by explicit
// time-stepping of the Hamilton-Jacobi-Isaacs variational inequality on a
// Cartesian grid (first-order upwind differences, Lax-Friedrichs flux).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "madr/game_models.hpp"

namespace madr {

// Selects the outer operator of the variational inequality.
//   kAvoid:  V(tau + dt) = min{ V + dt H, l }   (running minimum of l)
//   kFollow: V(tau + dt) = max{ V + dt H, l }   (running maximum of l)
enum class GameMode { kAvoid, kFollow };

const char* game_mode_name(GameMode mode);
GameMode parse_game_mode(const std::string& name);

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  int count = 0;
  // Periodic axes must span exactly 2*pi and place nodes at
  // min + (j + 1) * spacing, so the last node sits on max.
  bool periodic = false;

  double spacing() const;
  double node(int j) const;
};

struct GridSpec {
  std::vector<GridAxis> axes;
  // Interval between stored time slices (seconds). The horizon must be an
  // integer multiple of it.
  double dt = 0.1;
  // Explicit Euler substeps per stored slice; 0 picks the smallest count
  // that satisfies the CFL bound.
  int substeps = 0;
  double cfl_safety = 0.5;

  int dims() const { return static_cast<int>(axes.size()); }
  std::size_t node_count() const;
  std::vector<std::size_t> strides() const;  // last axis fastest
  void validate() const;

  // Axes covering the problem's state bounds (angular dims periodic).
  static GridSpec for_problem(const GameProblem& problem, const std::vector<int>& counts,
                              double dt);
  static GridSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Parses either a shorthand "N1xN2x..." (axes from the problem bounds) or a
// path to a JSON grid spec.
GridSpec parse_grid_spec(const std::string& text, const GameProblem& problem);

class ValueGrid {
 public:
  ValueGrid() = default;
  ValueGrid(GridSpec spec, std::vector<double> times, std::string problem_name, GameMode mode);

  const GridSpec& spec() const { return spec_; }
  // Absolute times, descending from the horizon T down to 0.
  const std::vector<double>& times() const { return times_; }
  const std::string& problem_name() const { return problem_name_; }
  GameMode mode() const { return mode_; }
  double horizon() const { return times_.front(); }
  std::size_t num_nodes() const { return spec_.node_count(); }
  std::size_t num_times() const { return times_.size(); }

  std::span<double> slice(std::size_t k);
  std::span<const double> slice(std::size_t k) const;
  // The t = 0 slice (time-to-go equal to the horizon).
  std::span<const double> initial_slice() const { return slice(num_times() - 1); }

  Vec node_state(std::size_t node) const;

  // Binary layout (little-endian):
  //   char[8]  magic "MADRGRD1"
  //   u32      version (1)
  //   str      problem name (u32 length + bytes)
  //   u8       mode (0 avoid, 1 follow)
  //   u32      dims
  //   per axis: f64 min, f64 max, u32 count, u8 periodic
  //   f64 dt, u32 substeps, f64 cfl_safety
  //   u32      time count, then f64 times[] (descending)
  //   f32      values[time][node], nodes row-major with the last axis fastest
  void save(const std::filesystem::path& path) const;
  static ValueGrid load(const std::filesystem::path& path);

 private:
  GridSpec spec_;
  std::vector<double> times_;
  std::string problem_name_;
  GameMode mode_ = GameMode::kAvoid;
  std::vector<double> values_;
};

struct SolveStats {
  Vec alpha;              // Lax-Friedrichs dissipation per axis
  int substeps = 0;       // per stored slice
  double substep_dt = 0;  // seconds
  double cfl_number = 0;  // substep_dt * sum(alpha_i / dx_i)
};

// Per-axis bounds of |dH/dp_i| over the grid nodes times a 1.1 safety factor.
Vec dissipation_coefficients(const GameProblem& problem, const GridSpec& spec);

// Backward sweep from V(., T) = l down to t = 0. Throws ConfigError on a CFL
// violation and NumericalError naming the slice on non-finite values.
ValueGrid solve_hji_vi(const GameProblem& problem, const GridSpec& spec,
                       GameMode mode = GameMode::kAvoid, SolveStats* stats = nullptr);

// Multilinear in space, linear in time; `t` is absolute time in [0, T].
// Throws DomainError outside the box of a non-periodic axis.
double interpolate(const ValueGrid& grid, const Vec& x, double t);

// Restricts comparisons to a box; an empty interval list means no restriction
// and a missing trailing entry means "unrestricted" for that axis.
struct Window {
  std::vector<Interval> bounds;
  bool contains(const Vec& x) const;
};

struct FieldComparison {
  double iou = 0.0;
  double vol_ref = 0.0;   // fraction of window nodes with V_ref <= level
  double vol_cand = 0.0;  // fraction of window nodes with V_cand <= level
  std::size_t window_nodes = 0;
};

// Indices of reference nodes inside `window`.
std::vector<std::size_t> window_nodes(const ValueGrid& grid, const Window& window);

// Compares {V <= level} of the reference t = 0 slice against candidate
// values given for the nodes returned by window_nodes(), in the same order.
FieldComparison compare_fields(const ValueGrid& reference, std::span<const double> candidate,
                               double level, const Window& window);

// Convenience overload that evaluates `candidate` at each window node.
FieldComparison compare_fields(const ValueGrid& reference,
                               const std::function<double(const Vec&)>& candidate,
                               double level, const Window& window);

}  // namespace madr
