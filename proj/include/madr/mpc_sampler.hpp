// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sampling-based MPC value estimates. One player's input sequence is
// randomized around an incumbent while the other plays the bang-bang action
// from the current value gradient; the best rollout cost found over K
// refinement rounds labels the state.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "madr/game_models.hpp"
#include "madr/grid_solver.hpp"
#include "madr/io_util.hpp"
#include "madr/value_field.hpp"

namespace madr {

// kControl randomizes the evader (u) and keeps the highest cost; kDisturbance
// randomizes the pursuer (d) and keeps the lowest.
enum class Perspective { kControl, kDisturbance };

const char* perspective_name(Perspective p);
Perspective parse_perspective(const std::string& name);

enum class IncumbentUpdate { kBestRollout, kMppi };

struct SamplerConfig {
  int dataset_size = 1000;
  // Rollout length in steps; 0 derives it per point as
  // max(1, round(min(refinement_horizon, tau) / step)).
  int horizon_steps = 0;
  double step = 0.02;
  int rollouts = 100;     // N
  int refinements = 10;   // K
  double refinement_horizon = 0.2;
  // Empty vectors mean box center (mean) and box half-width (sigma).
  Vec control_mean;
  Vec control_sigma;
  Vec disturbance_mean;
  Vec disturbance_sigma;
  // sigma_k = sigma * sigma_decay^k for refinement round k.
  double sigma_decay = 1.0;
  IncumbentUpdate update = IncumbentUpdate::kBestRollout;
  double mppi_temperature = 0.05;

  void validate(const GameProblem& problem) const;
  static SamplerConfig from_json(const json& j);
  json to_json() const;
};

// Number of steps used for a point with time-to-go `tau`.
int rollout_steps(const SamplerConfig& config, double tau);

// Bang-bang input of the gradient-driven opponent. `role` is the player
// being driven: kEvader maximizes grad.g u, kPursuer minimizes grad.w d.
Vec opponent_action(const GameProblem& problem, const Vec& x, const Vec& grad_x, Player role);
// Same, with the gradient taken from `field` at time-to-go `tau`.
Vec opponent_from_gradient(const ValueField& field, const GameProblem& problem, const Vec& x,
                           double tau, Player role);

struct RolloutResult {
  double cost = 0.0;
  bool finite = true;
  bool bootstrapped = false;
  Mat trajectory;  // n x (steps + 1), filled when requested
};

// Rolls out `inputs` (m x steps, for the sampled player) against the
// gradient-driven opponent. The cost is the running min (avoid) or max
// (follow) of l over the trajectory including x0, combined with
// V(x_H, tau0 - H step) when the rollout ends before the horizon.
RolloutResult rollout_cost(const GameProblem& problem, const ValueField& field, const Vec& x0,
                           double tau0, const Mat& inputs, Perspective perspective, double step,
                           double gradient_tau, GameMode mode, bool keep_trajectory = false);

struct EstimateTrace {
  std::vector<double> incumbent;  // J* after each rollout, in rollout-index order
  std::size_t discarded = 0;
  bool bootstrapped = false;
  Mat best_inputs;  // sampled player's sequence of the final J*
};

// Runs K refinement rounds of N rollouts from (x0, tau0). `gradient_tau` < 0
// evaluates opponent gradients at tau0. Throws EstimationError when every
// rollout was discarded.
double estimate_value(const GameProblem& problem, const ValueField& field, const Vec& x0,
                      double tau0, const SamplerConfig& config, Perspective perspective,
                      std::mt19937_64& rng, double gradient_tau = -1.0,
                      GameMode mode = GameMode::kAvoid, EstimateTrace* trace = nullptr);

struct MpcSample {
  Vec x;
  double tau = 0.0;
  double v_hat = 0.0;
};

struct MpcDataset {
  std::string problem_name;
  Perspective perspective = Perspective::kControl;
  GameMode mode = GameMode::kAvoid;
  SamplerConfig config;
  double gradient_tau = -1.0;
  std::string source_checkpoint;
  std::uint64_t seed = 0;
  std::vector<MpcSample> samples;
  std::size_t skipped = 0;

  MpcTerm to_term() const;

  // Layout (little-endian):
  //   char[8] "MADRMPC1", u32 version (1)
  //   str problem, u8 perspective (0 control, 1 disturbance), u8 mode
  //   str config json, f64 gradient tau, str source checkpoint id, u64 seed
  //   u32 state_dim, u64 count, then rows of f32 (x..., tau, v_hat)
  void save(const std::filesystem::path& path) const;
  static MpcDataset load(const std::filesystem::path& path);
};

// Labels `config.dataset_size` points drawn uniformly from the state bounds
// and tau in [tau_lo, tau_hi]. Point j uses its own generator seeded from
// (seed, j), so the result does not depend on evaluation order.
MpcDataset collect_dataset(const GameProblem& problem, const ValueField& field,
                           const SamplerConfig& config, Perspective perspective, double tau_lo,
                           double tau_hi, std::uint64_t seed, double gradient_tau = -1.0,
                           const std::string& source_checkpoint = "",
                           GameMode mode = GameMode::kAvoid);

}  // namespace madr
