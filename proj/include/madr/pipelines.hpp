// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON request handlers behind the C interface and the command-line tool.
// Each takes a request object (unknown keys are ConfigErrors), performs the
// workflow, writes any requested files, and returns a JSON summary.

#include "madr/arena.hpp"
#include "madr/io_util.hpp"
#include "madr/trainer.hpp"

namespace madr {

// {problem, grid, dt, substeps, cfl_safety, mode, out}
json run_solve_grid(const json& request);
// {config | config_path, problem, out_dir, follow}
json run_train(const json& request, const ProgressFn& progress = {});
// {problem, net, perspective, sampler, tau_lo, tau_hi, gradient_tau, seed, mode, out}
json run_collect_mpc(const json& request);
// {candidate, reference, window, level}
json run_eval_brt(const json& request);
// {problem, evaders, pursuers, init, episode, seed, oob_counts_as_capture, base_dir, out_dir}
json run_matchup(const json& request);
// {problem, net, adversary, states, seed, step, base_dir}
json run_safe_rate(const json& request);
// {problem, evader, pursuer, x0, episode, base_dir, csv}
json run_simulate(const json& request);

EpisodeOptions parse_episode_options(const json& j);

}  // namespace madr
