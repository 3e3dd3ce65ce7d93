// SPDX-License-Identifier: Apache-2.0
#pragma once

// Episode simulation between two policies, matchup tables, and the
// safe-rate evaluation of a learned value function.

#include <cstdint>
#include <string>
#include <vector>

#include "madr/game_models.hpp"
#include "madr/io_util.hpp"
#include "madr/policies.hpp"
#include "madr/value_field.hpp"

namespace madr {

// kTerminate ends the episode when a player leaves the state bounds; kClamp
// projects positions back onto the bounds (players slide along the walls);
// kIgnore lets states leave the box.
enum class WallMode { kTerminate, kClamp, kIgnore };

const char* wall_mode_name(WallMode m);
WallMode parse_wall_mode(const std::string& name);

// Index of the first non-angular coordinate outside the state bounds, or -1.
int first_out_of_bounds_dim(const GameProblem& problem, const Vec& x);
// Projects non-angular coordinates onto the state bounds.
void clamp_to_bounds(const GameProblem& problem, Vec& x);

struct EpisodeOptions {
  double duration = 3.0;
  double step = 0.02;
  // When false the episode runs the full duration and the capture fraction
  // measures the share of steps with l <= 0.
  bool stop_on_capture = true;
  WallMode wall_mode = WallMode::kTerminate;
  bool keep_trajectory = true;
};

enum class OutcomeKind { kSurvived, kCaptured, kOutOfBounds, kAborted };

const char* outcome_name(OutcomeKind k);

struct Outcome {
  OutcomeKind kind = OutcomeKind::kSurvived;
  double time = 0.0;                // capture / exit / abort time
  Player player = Player::kEvader;  // who left the box (kOutOfBounds)
  std::string reason;               // kAborted diagnostics
};

struct RolloutRecord {
  std::string problem_name;
  std::vector<double> times;  // one per recorded state
  Mat states;                 // n x (steps + 1)
  Mat evader_inputs;          // m_u x steps
  Mat pursuer_inputs;         // m_d x steps
  std::vector<double> ell;    // l at each recorded state
  Outcome outcome;
  double cost = 0.0;          // min over recorded l
  bool ever_captured = false;
  double first_capture_time = -1.0;
  double capture_fraction = 0.0;  // steps with l <= 0 over recorded steps

  json to_json() const;
  // One row per step: t, state..., l, evader inputs..., pursuer inputs...
  std::string to_csv() const;
};

// Both inputs are applied simultaneously each step. Policies see
// tau = min(remaining duration, their horizon).
RolloutRecord simulate_episode(const GameProblem& problem, const Policy& evader,
                               const Policy& pursuer, const Vec& x0,
                               const EpisodeOptions& options);

// Initial-state samplers.
struct InitSampler {
  enum class Kind { kSafeBand, kUniform, kList };
  Kind kind = Kind::kSafeBand;
  // kSafeBand: states x with lo < V(x, T) < hi under `field` (sampled in
  // the field's problem bounds and lifted into the game if needed).
  FieldPtr field;
  ProblemPtr field_problem;
  double lo = 0.0;
  double hi = 0.1;
  // kList
  Mat states;
  // Evader placement box for lifting relative states into the 6-D game.
  std::vector<Interval> evader_box;
  int max_attempts_per_state = 20000;
};

// Draws `count` initial states deterministically from `seed`. Throws
// ConfigError when the band yields no state.
Mat sample_initial_states(const GameProblem& game, const InitSampler& sampler, int count,
                          std::uint64_t seed);

struct MatchupCell {
  std::string evader_id;
  std::string pursuer_id;
  int episodes = 0;
  int captures = 0;
  int evader_oob = 0;
  int pursuer_oob = 0;
  int aborted = 0;
  double capture_rate = 0.0;        // percent
  double mean_time_to_capture = 0.0;  // over captured episodes
  double mean_capture_fraction = 0.0;

  json to_json() const;
};

struct MatchupTable {
  std::string problem_name;
  std::vector<std::string> evader_ids;
  std::vector<std::string> pursuer_ids;
  std::vector<MatchupCell> cells;  // row-major: evader, then pursuer
  std::uint64_t seed = 0;

  const MatchupCell& cell(std::size_t evader, std::size_t pursuer) const;
  json to_json() const;
  std::string to_text() const;
};

struct NamedPolicy {
  std::string id;
  PolicyPtr policy;
};

// Every evader against every pursuer from the same initial states.
// Evader-OOB episodes count as captures only when `oob_counts_as_capture`.
MatchupTable matchup(const GameProblem& problem, const std::vector<NamedPolicy>& evaders,
                     const std::vector<NamedPolicy>& pursuers, const Mat& initial_states,
                     const EpisodeOptions& options, std::uint64_t seed,
                     bool oob_counts_as_capture = false);

struct SafeRateReport {
  int states = 0;
  int safe = 0;
  double rate = 0.0;  // percent
  std::vector<double> gaps;  // actual cost - predicted V, per state
  // Histogram of gaps on [-0.5, 0.5] in 0.05 bins plus under/overflow.
  std::vector<double> bin_edges;
  std::vector<int> counts;
  int underflow = 0;
  int overflow = 0;
  double mass_below(double threshold) const;
  json to_json() const;
};

// Samples `n_states` with V(x, T) > 0, rolls the field's evader policy out
// against `adversary` for the field's horizon, and compares the realized
// cost with the predicted value.
SafeRateReport safe_rate(const GameProblem& problem, FieldPtr field, int n_states,
                         const Policy& adversary, std::uint64_t seed, double step = 0.02);

}  // namespace madr
