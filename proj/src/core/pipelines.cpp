// SPDX-License-Identifier: Apache-2.0
#include "madr/pipelines.hpp"

#include <chrono>
#include <filesystem>

#include "madr/errors.hpp"
#include "madr/grid_solver.hpp"
#include "madr/mpc_sampler.hpp"
#include "madr/policies.hpp"

namespace madr {

namespace {

namespace fs = std::filesystem;

std::string required_string(const json& j, const char* key, const char* context) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ConfigError(std::string(context) + ": '" + key + "' (string) is required");
  }
  return j[key].get<std::string>();
}

fs::path base_dir_of(const json& j) {
  return j.contains("base_dir") ? fs::path(j["base_dir"].get<std::string>()) : fs::path(".");
}

fs::path resolve_in(const fs::path& base, const std::string& p) {
  fs::path path = resolve_config_path(p);
  if (path.is_relative() && !fs::exists(path)) path = base / path;
  return path;
}

Vec parse_vec(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<NamedPolicy> parse_roster(const json& list, Player role, ProblemPtr game,
                                      const fs::path& base, FieldCache& cache) {
  if (!list.is_array() || list.empty()) {
    throw ConfigError(std::string("matchup: '") + player_name(role) + "s' must be a non-empty list");
  }
  std::vector<NamedPolicy> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    json d = list[i];
    if (!d.contains("role")) d["role"] = player_name(role);
    const std::string id = d.value("id", std::string(player_name(role)) + std::to_string(i));
    PolicyPtr p = make_policy(d, game, base, cache);
    if (p->role() != role) {
      throw ConfigError("matchup: policy '" + id + "' is listed as " + player_name(role) +
                        " but has another role");
    }
    out.push_back({id, std::move(p)});
  }
  return out;
}

}  // namespace

EpisodeOptions parse_episode_options(const json& j) {
  EpisodeOptions o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw ConfigError("episode: expected an object");
  check_keys(j, {"duration", "step", "stop_on_capture", "wall_mode", "keep_trajectory"}, "episode");
  o.duration = j.value("duration", o.duration);
  o.step = j.value("step", o.step);
  o.stop_on_capture = j.value("stop_on_capture", o.stop_on_capture);
  o.keep_trajectory = j.value("keep_trajectory", o.keep_trajectory);
  if (j.contains("wall_mode")) o.wall_mode = parse_wall_mode(j["wall_mode"].get<std::string>());
  if (!(o.step > 0.0)) throw ConfigError("episode: step must be positive");
  if (!(o.duration >= 0.0)) throw ConfigError("episode: duration must be >= 0");
  return o;
}

json run_solve_grid(const json& r) {
  check_keys(r, {"problem", "grid", "dt", "substeps", "cfl_safety", "mode", "out"}, "solve-grid");
  ProblemPtr problem = load_problem(required_string(r, "problem", "solve-grid"));
  GridSpec spec = parse_grid_spec(required_string(r, "grid", "solve-grid"), *problem);
  if (r.contains("dt")) spec.dt = r["dt"].get<double>();
  if (r.contains("substeps")) spec.substeps = r["substeps"].get<int>();
  if (r.contains("cfl_safety")) spec.cfl_safety = r["cfl_safety"].get<double>();
  spec.validate();
  const GameMode mode = r.contains("mode") ? parse_game_mode(r["mode"].get<std::string>())
                                           : GameMode::kAvoid;
  const auto start = std::chrono::steady_clock::now();
  SolveStats stats;
  ValueGrid grid = solve_hji_vi(*problem, spec, mode, &stats);
  json out = {{"problem", problem->name},
              {"mode", game_mode_name(mode)},
              {"nodes", grid.num_nodes()},
              {"slices", grid.num_times()},
              {"substeps", stats.substeps},
              {"substep_dt", stats.substep_dt},
              {"cfl_number", stats.cfl_number},
              {"alpha", std::vector<double>(stats.alpha.data(), stats.alpha.data() + stats.alpha.size())},
              {"seconds", seconds_since(start)}};
  const auto slice = grid.initial_slice();
  std::size_t unsafe = 0;
  for (double v : slice) unsafe += v <= 0.0 ? 1 : 0;
  out["unsafe_fraction"] = static_cast<double>(unsafe) / static_cast<double>(slice.size());
  if (r.contains("out")) {
    grid.save(r["out"].get<std::string>());
    out["out"] = r["out"];
  }
  return out;
}

json run_train(const json& r, const ProgressFn& progress) {
  check_keys(r, {"config", "config_path", "problem", "out_dir", "follow"}, "train");
  json cfg_json = json::object();
  if (r.contains("config") && r.contains("config_path")) {
    throw ConfigError("train: give either 'config' or 'config_path', not both");
  }
  if (r.contains("config")) cfg_json = r["config"];
  if (r.contains("config_path")) {
    cfg_json = read_json_file(resolve_config_path(r["config_path"].get<std::string>()));
  }
  TrainConfig config = TrainConfig::from_json(cfg_json);
  if (r.contains("problem")) config.problem = r["problem"].get<std::string>();
  if (config.problem.empty()) throw ConfigError("train: no problem given");
  ProblemPtr problem = load_problem(config.problem);
  const fs::path out_dir = r.contains("out_dir") ? fs::path(r["out_dir"].get<std::string>()) : fs::path();
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = r.value("follow", false) ? train_follow_value(*problem, config, out_dir, progress)
                                                : train(*problem, config, out_dir, progress);
  json out = result.report;
  out["seconds"] = seconds_since(start);
  if (!out_dir.empty()) out["out_dir"] = out_dir.string();
  return out;
}

json run_collect_mpc(const json& r) {
  check_keys(r,
             {"problem", "net", "perspective", "sampler", "tau_lo", "tau_hi", "gradient_tau", "seed",
              "mode", "out"},
             "collect-mpc");
  ProblemPtr problem = load_problem(required_string(r, "problem", "collect-mpc"));
  const std::string net = required_string(r, "net", "collect-mpc");
  FieldPtr field = load_field(resolve_config_path(net));
  if (field->problem_name() != problem->name) {
    throw ContractError("collect-mpc: value source is for '" + field->problem_name() +
                        "', not '" + problem->name + "'");
  }
  const Perspective perspective =
      parse_perspective(r.value("perspective", std::string("control")));
  SamplerConfig sampler = SamplerConfig::from_json(r.value("sampler", json::object()));
  sampler.validate(*problem);
  const double tau_lo = r.value("tau_lo", 0.0);
  const double tau_hi = r.value("tau_hi", problem->horizon);
  if (!(tau_lo >= 0.0 && tau_hi >= tau_lo && tau_hi <= problem->horizon)) {
    throw ConfigError("collect-mpc: need 0 <= tau_lo <= tau_hi <= horizon");
  }
  const GameMode mode = r.contains("mode") ? parse_game_mode(r["mode"].get<std::string>())
                                           : field->mode();
  const auto start = std::chrono::steady_clock::now();
  MpcDataset ds = collect_dataset(*problem, *field, sampler, perspective, tau_lo, tau_hi,
                                  r.value("seed", std::uint64_t{0}), r.value("gradient_tau", -1.0),
                                  net, mode);
  json out = {{"problem", ds.problem_name},
              {"perspective", perspective_name(ds.perspective)},
              {"samples", ds.samples.size()},
              {"skipped", ds.skipped},
              {"seconds", seconds_since(start)}};
  if (r.contains("out")) {
    ds.save(r["out"].get<std::string>());
    out["out"] = r["out"];
  }
  return out;
}

json run_eval_brt(const json& r) {
  check_keys(r, {"candidate", "reference", "window", "level"}, "eval-brt");
  FieldPtr candidate = load_field(resolve_config_path(required_string(r, "candidate", "eval-brt")));
  const ValueGrid reference =
      ValueGrid::load(resolve_config_path(required_string(r, "reference", "eval-brt")));
  const Window window = parse_window(r.value("window", json()));
  const EvalReport rep = evaluate_checkpoint(*candidate, reference, window, r.value("level", 0.0));
  json out = rep.to_json();
  out["problem"] = reference.problem_name();
  out["level"] = r.value("level", 0.0);
  return out;
}

json run_matchup(const json& r) {
  check_keys(r,
             {"problem", "evaders", "pursuers", "init", "episode", "seed", "oob_counts_as_capture",
              "base_dir", "out_dir", "episodes"},
             "matchup");
  const fs::path base = base_dir_of(r);
  ProblemPtr game = load_problem(required_string(r, "problem", "matchup"));
  FieldCache cache;
  const auto evaders = parse_roster(r.value("evaders", json()), Player::kEvader, game, base, cache);
  const auto pursuers = parse_roster(r.value("pursuers", json()), Player::kPursuer, game, base, cache);
  const std::uint64_t seed = r.value("seed", std::uint64_t{0});
  const EpisodeOptions options = parse_episode_options(r.value("episode", json()));

  const json init = r.value("init", json::object());
  check_keys(init, {"kind", "source", "problem", "lo", "hi", "states", "evader_box", "count"},
             "matchup.init");
  InitSampler sampler;
  const std::string kind = init.value("kind", std::string("safe_band"));
  int count = init.value("count", r.value("episodes", 100));
  if (kind == "safe_band") {
    sampler.kind = InitSampler::Kind::kSafeBand;
    sampler.field = cache.get(resolve_in(base, required_string(init, "source", "matchup.init")));
    sampler.field_problem = load_problem(init.value("problem", sampler.field->problem_name()));
    sampler.lo = init.value("lo", sampler.lo);
    sampler.hi = init.value("hi", sampler.hi);
    if (init.contains("evader_box")) {
      for (const auto& b : init["evader_box"]) {
        sampler.evader_box.push_back(Interval{b[0].get<double>(), b[1].get<double>()});
      }
    }
  } else if (kind == "uniform") {
    sampler.kind = InitSampler::Kind::kUniform;
  } else if (kind == "list") {
    sampler.kind = InitSampler::Kind::kList;
    const json& states = init.value("states", json::array());
    if (!states.is_array() || states.empty()) throw ConfigError("matchup.init: 'states' is empty");
    sampler.states.resize(game->state_dim(), static_cast<Eigen::Index>(states.size()));
    for (std::size_t c = 0; c < states.size(); ++c) {
      const Vec x = parse_vec(states[c], "matchup.init.states");
      if (x.size() != game->state_dim()) throw ConfigError("matchup.init: state dimension mismatch");
      sampler.states.col(static_cast<Eigen::Index>(c)) = x;
    }
    if (!init.contains("count")) count = static_cast<int>(states.size());
  } else {
    throw ConfigError("matchup.init: unknown kind '" + kind + "' (safe_band|uniform|list)");
  }
  if (count < 1) throw ConfigError("matchup: need at least one episode");
  const Mat x0 = sample_initial_states(*game, sampler, count, seed);
  const auto start = std::chrono::steady_clock::now();
  const MatchupTable table = matchup(*game, evaders, pursuers, x0, options, seed,
                                     r.value("oob_counts_as_capture", false));
  json out = table.to_json();
  out["seconds"] = seconds_since(start);
  if (r.contains("out_dir")) {
    const fs::path dir = r["out_dir"].get<std::string>();
    fs::create_directories(dir);
    write_text_file(dir / "matchup.json", out.dump(2) + "\n");
    write_text_file(dir / "matchup.txt", table.to_text());
    out["out_dir"] = dir.string();
  }
  return out;
}

json run_safe_rate(const json& r) {
  check_keys(r, {"problem", "net", "adversary", "states", "seed", "step", "base_dir"}, "safe-rate");
  const fs::path base = base_dir_of(r);
  ProblemPtr problem = load_problem(required_string(r, "problem", "safe-rate"));
  FieldCache cache;
  FieldPtr field = cache.get(resolve_in(base, required_string(r, "net", "safe-rate")));
  if (field->problem_name() != problem->name) {
    throw ContractError("safe-rate: value source is for '" + field->problem_name() + "', not '" +
                        problem->name + "'");
  }
  if (!r.contains("adversary")) throw ConfigError("safe-rate: 'adversary' descriptor is required");
  json d = r["adversary"];
  if (!d.contains("role")) d["role"] = "pursuer";
  PolicyPtr adversary = make_policy(d, problem, base, cache);
  if (adversary->role() != Player::kPursuer) {
    throw ConfigError("safe-rate: the adversary must play the pursuer role");
  }
  const auto start = std::chrono::steady_clock::now();
  const SafeRateReport rep = safe_rate(*problem, field, r.value("states", 1000), *adversary,
                                       r.value("seed", std::uint64_t{0}), r.value("step", 0.02));
  json out = rep.to_json();
  out["seconds"] = seconds_since(start);
  return out;
}

json run_simulate(const json& r) {
  check_keys(r, {"problem", "evader", "pursuer", "x0", "episode", "base_dir", "csv"}, "simulate");
  const fs::path base = base_dir_of(r);
  ProblemPtr game = load_problem(required_string(r, "problem", "simulate"));
  FieldCache cache;
  if (!r.contains("evader") || !r.contains("pursuer")) {
    throw ConfigError("simulate: 'evader' and 'pursuer' descriptors are required");
  }
  json ed = r["evader"], pd = r["pursuer"];
  if (!ed.contains("role")) ed["role"] = "evader";
  if (!pd.contains("role")) pd["role"] = "pursuer";
  PolicyPtr evader = make_policy(ed, game, base, cache);
  PolicyPtr pursuer = make_policy(pd, game, base, cache);
  const Vec x0 = parse_vec(r.value("x0", json()), "simulate: x0");
  if (x0.size() != game->state_dim()) throw ConfigError("simulate: x0 dimension mismatch");
  const RolloutRecord rec =
      simulate_episode(*game, *evader, *pursuer, x0, parse_episode_options(r.value("episode", json())));
  if (r.contains("csv")) write_text_file(r["csv"].get<std::string>(), rec.to_csv());
  return rec.to_json();
}

}  // namespace madr
