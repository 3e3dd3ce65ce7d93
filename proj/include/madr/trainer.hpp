// SPDX-License-Identifier: Apache-2.0
#pragma once

// Curriculum training of the value network. PDE and boundary
// self-supervision run from the first step; after a warmup, MPC datasets
// from both perspectives are collected with the current network and
// refreshed periodically.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "madr/game_models.hpp"
#include "madr/grid_solver.hpp"
#include "madr/io_util.hpp"
#include "madr/mpc_sampler.hpp"
#include "madr/value_field.hpp"
#include "madr/value_net.hpp"

namespace madr {

struct TrainConfig {
  // Optional; the CLI uses it when --problem is not given.
  std::string problem;
  NetworkArch arch;  // input_dim is filled from the problem
  // One epoch is one optimizer step on freshly sampled points.
  int total_epochs = 150000;
  double learning_rate = 2e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // The sampled tau upper bound grows linearly from 0 to T over this
  // fraction of the epochs.
  double curriculum_fraction = 0.8;
  double warmup_fraction = 0.3;
  // Epochs between MPC recollections; 0 means 10% of total_epochs.
  int refresh_interval = 0;
  int pde_batch = 1000;
  int boundary_batch = 250;
  // MPC points per perspective per step; 0 uses the whole dataset.
  int mpc_batch = 500;
  double lambda_pde = 1.0;
  // 0 balances the boundary weight once against the initial PDE term.
  double lambda_boundary = 0.0;
  double lambda_ft = 100.0;
  ResidualNorm residual_norm = ResidualNorm::kL1;
  GameMode mode = GameMode::kAvoid;
  // Skips MPC collection and supervision entirely.
  bool vanilla = false;
  SamplerConfig sampler;
  // 0 uses max |l| over sampled states.
  double value_scale = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  int log_interval = 100;

  void validate() const;
  static TrainConfig from_json(const json& j);
  json to_json() const;
  // Stable digest of the canonical JSON form.
  std::string digest() const;
};

int effective_refresh_interval(const TrainConfig& config);
int warmup_epochs(const TrainConfig& config);
// Sampled tau upper bound at `epoch` (0-based).
double curriculum_tau(const TrainConfig& config, double horizon, int epoch);
// True at the epochs where both MPC datasets are (re)collected.
bool is_refresh_epoch(const TrainConfig& config, int epoch);

struct TrainResult {
  ValueNetwork network;
  std::vector<json> metrics;
  json report;
};

using ProgressFn = std::function<void(const json& record)>;

// Runs the full schedule. When `out_dir` is non-empty it receives
// metrics.jsonl, checkpoints (step_<epoch>.ckpt, final.ckpt), the latest MPC
// datasets, and report.json. Throws NumericalError after writing
// failure.ckpt and failure.json if the loss becomes non-finite.
TrainResult train(const GameProblem& problem, const TrainConfig& config,
                  const std::filesystem::path& out_dir = {}, const ProgressFn& progress = {});

struct EvalReport {
  double iou = 0.0;
  double vol_ref = 0.0;
  double vol_cand = 0.0;
  double max_gap = 0.0;
  double mean_gap = 0.0;
  std::size_t window_nodes = 0;

  json to_json() const;
};

// Compares the field at full time-to-go against the t = 0 slice of `grid`
// on the window nodes. Throws ContractError if the problems differ.
EvalReport evaluate_checkpoint(const ValueField& field, const ValueGrid& grid,
                               const Window& window, double level = 0.0);

Window parse_window(const json& j);

}  // namespace madr
