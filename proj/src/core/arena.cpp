// SPDX-License-Identifier: Apache-2.0
#include "madr/arena.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "madr/errors.hpp"

namespace madr {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

Vec uniform_in(const std::vector<Interval>& bounds, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t i = 0; i < bounds.size(); ++i) x[i] = bounds[i].lo + unit(rng) * bounds[i].width();
  return x;
}

json mat_rows(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    rows.push_back(std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows()));
  }
  return rows;
}

}  // namespace

int first_out_of_bounds_dim(const GameProblem& problem, const Vec& x) {
  for (int i = 0; i < problem.state_dim(); ++i) {
    if (problem.dynamics->is_angular(i)) continue;
    if (!problem.state_bounds[i].contains(x[i])) return i;
  }
  return -1;
}

void clamp_to_bounds(const GameProblem& problem, Vec& x) {
  for (int i = 0; i < problem.state_dim(); ++i) {
    if (problem.dynamics->is_angular(i)) continue;
    x[i] = std::clamp(x[i], problem.state_bounds[i].lo, problem.state_bounds[i].hi);
  }
}

const char* wall_mode_name(WallMode m) {
  switch (m) {
    case WallMode::kTerminate: return "terminate";
    case WallMode::kClamp: return "clamp";
    case WallMode::kIgnore: return "ignore";
  }
  return "terminate";
}

WallMode parse_wall_mode(const std::string& name) {
  if (name == "terminate") return WallMode::kTerminate;
  if (name == "clamp") return WallMode::kClamp;
  if (name == "ignore") return WallMode::kIgnore;
  throw ConfigError("unknown wall mode '" + name + "' (expected terminate|clamp|ignore)");
}

const char* outcome_name(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::kSurvived: return "survived";
    case OutcomeKind::kCaptured: return "captured";
    case OutcomeKind::kOutOfBounds: return "out_of_bounds";
    case OutcomeKind::kAborted: return "aborted";
  }
  return "survived";
}

json RolloutRecord::to_json() const {
  json out = {{"problem", problem_name},
              {"outcome",
               {{"kind", outcome_name(outcome.kind)},
                {"time", outcome.time},
                {"player", player_name(outcome.player)},
                {"reason", outcome.reason}}},
              {"cost", cost},
              {"ever_captured", ever_captured},
              {"first_capture_time", first_capture_time},
              {"capture_fraction", capture_fraction},
              {"times", times},
              {"ell", ell},
              {"states", mat_rows(states)},
              {"evader_inputs", mat_rows(evader_inputs)},
              {"pursuer_inputs", mat_rows(pursuer_inputs)}};
  return out;
}

std::string RolloutRecord::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t";
  for (Eigen::Index i = 0; i < states.rows(); ++i) os << ",x" << i;
  os << ",ell";
  for (Eigen::Index i = 0; i < evader_inputs.rows(); ++i) os << ",u" << i;
  for (Eigen::Index i = 0; i < pursuer_inputs.rows(); ++i) os << ",d" << i;
  os << '\n';
  for (std::size_t k = 0; k < times.size(); ++k) {
    os << times[k];
    for (Eigen::Index i = 0; i < states.rows(); ++i) os << ',' << states(i, k);
    os << ',' << ell[k];
    const bool has_input = static_cast<Eigen::Index>(k) < evader_inputs.cols();
    for (Eigen::Index i = 0; i < evader_inputs.rows(); ++i) {
      os << ',';
      if (has_input) os << evader_inputs(i, k);
    }
    for (Eigen::Index i = 0; i < pursuer_inputs.rows(); ++i) {
      os << ',';
      if (has_input) os << pursuer_inputs(i, k);
    }
    os << '\n';
  }
  return os.str();
}

RolloutRecord simulate_episode(const GameProblem& problem, const Policy& evader,
                               const Policy& pursuer, const Vec& x0,
                               const EpisodeOptions& options) {
  require(evader.role() == Player::kEvader, "simulate_episode: first policy must be the evader");
  require(pursuer.role() == Player::kPursuer, "simulate_episode: second policy must be the pursuer");
  require(x0.size() == problem.state_dim(), "simulate_episode: initial state dimension mismatch");
  if (!(options.step > 0.0)) throw ConfigError("episode: step must be positive");
  if (!(options.duration >= 0.0)) throw ConfigError("episode: duration must be >= 0");
  if (options.wall_mode == WallMode::kTerminate && first_out_of_bounds_dim(problem, x0) >= 0) {
    throw ConfigError("episode: initial state is outside the state bounds");
  }
  const auto& model = *problem.dynamics;
  const int n = problem.state_dim();
  const int S = static_cast<int>(std::lround(options.duration / options.step));

  RolloutRecord rec;
  rec.problem_name = problem.name;
  if (options.keep_trajectory) {
    rec.states.resize(n, S + 1);
    rec.evader_inputs.resize(model.control_box().dim(), S);
    rec.pursuer_inputs.resize(model.disturbance_box().dim(), S);
  }
  Vec x = x0;
  FlowTerms scratch;
  int recorded = 0;
  int captured_steps = 0;
  double cost = std::numeric_limits<double>::infinity();
  int k = 0;
  for (;; ++k) {
    const double t = k * options.step;
    const double ell = problem.boundary(x);
    ++recorded;
    cost = std::min(cost, ell);
    if (options.keep_trajectory) {
      rec.times.push_back(t);
      rec.ell.push_back(ell);
      rec.states.col(k) = x;
    }
    if (ell <= 0.0) {
      ++captured_steps;
      if (!rec.ever_captured) {
        rec.ever_captured = true;
        rec.first_capture_time = t;
        rec.outcome = Outcome{OutcomeKind::kCaptured, t, Player::kEvader, ""};
      }
      if (options.stop_on_capture) break;
    }
    if (options.wall_mode == WallMode::kTerminate) {
      const int dim = first_out_of_bounds_dim(problem, x);
      if (dim >= 0) {
        if (!rec.ever_captured) {
          rec.outcome = Outcome{OutcomeKind::kOutOfBounds, t, problem.dim_owner[dim], ""};
        }
        break;
      }
    }
    if (k == S) {
      if (!rec.ever_captured) rec.outcome = Outcome{OutcomeKind::kSurvived, t, Player::kEvader, ""};
      break;
    }
    const double remaining = options.duration - t;
    Vec u, d;
    try {
      u = clamp_inputs(model.control_box(), evader.action(x, remaining, k));
      d = clamp_inputs(model.disturbance_box(), pursuer.action(x, remaining, k));
    } catch (const Error& e) {
      rec.outcome = Outcome{OutcomeKind::kAborted, t, Player::kEvader, e.what()};
      break;
    }
    if (options.keep_trajectory) {
      rec.evader_inputs.col(k) = u;
      rec.pursuer_inputs.col(k) = d;
    }
    euler_step_inplace(model, x, u, d, options.step, scratch);
    if (!x.allFinite()) {
      rec.outcome = Outcome{OutcomeKind::kAborted, t + options.step, Player::kEvader,
                            "non-finite state"};
      break;
    }
    if (options.wall_mode == WallMode::kClamp) clamp_to_bounds(problem, x);
  }
  if (options.keep_trajectory) {
    rec.states.conservativeResize(n, recorded);
    rec.evader_inputs.conservativeResize(Eigen::NoChange, std::min(k, S));
    rec.pursuer_inputs.conservativeResize(Eigen::NoChange, std::min(k, S));
  }
  rec.cost = cost;
  rec.capture_fraction = static_cast<double>(captured_steps) / recorded;
  return rec;
}

Mat sample_initial_states(const GameProblem& game, const InitSampler& sampler, int count,
                          std::uint64_t seed) {
  require(count >= 0, "sample_initial_states: negative count");
  const int n = game.state_dim();
  Mat out(n, count);
  if (sampler.kind == InitSampler::Kind::kList) {
    if (sampler.states.rows() != n || sampler.states.cols() < 1) {
      throw ConfigError("init sampler: state list has the wrong shape");
    }
    for (int j = 0; j < count; ++j) out.col(j) = sampler.states.col(j % sampler.states.cols());
    return out;
  }
  std::mt19937_64 rng = make_rng(seed, 0x5a4d);
  if (sampler.kind == InitSampler::Kind::kUniform) {
    for (int j = 0; j < count; ++j) out.col(j) = uniform_in(game.state_bounds, rng);
    return out;
  }
  if (sampler.field == nullptr || sampler.field_problem == nullptr) {
    throw ConfigError("init sampler: safe band needs a value field and its problem");
  }
  const ValueField& field = *sampler.field;
  const GameProblem& fp = *sampler.field_problem;
  const bool lift = fp.state_dim() != n;
  if (lift && !(fp.state_dim() == 3 && n == 6)) {
    throw ConfigError("init sampler: cannot lift " + std::to_string(fp.state_dim()) +
                      "-D states into the " + std::to_string(n) + "-D game");
  }
  std::vector<Interval> evader_box = sampler.evader_box;
  if (lift && evader_box.empty()) {
    for (int i = 0; i < 2; ++i) {
      const Interval& b = game.state_bounds[i];
      const double c = 0.5 * (b.lo + b.hi), h = 0.25 * b.width();
      evader_box.push_back(Interval{c - h, c + h});
    }
  }
  std::uniform_real_distribution<double> heading(-kPi, kPi);
  const long max_attempts = static_cast<long>(sampler.max_attempts_per_state) * std::max(count, 1);
  long attempts = 0;
  for (int j = 0; j < count;) {
    if (++attempts > max_attempts) {
      throw ConfigError("init sampler: no states found in the band (" + std::to_string(sampler.lo) +
                        ", " + std::to_string(sampler.hi) + ") after " +
                        std::to_string(max_attempts) + " attempts");
    }
    const Vec xr = uniform_in(fp.state_bounds, rng);
    const double v = field.value(xr, field.horizon());
    if (!(v > sampler.lo && v < sampler.hi)) continue;
    Vec x = xr;
    if (lift) {
      const Vec e = uniform_in(evader_box, rng);
      x = lift_relative_state(xr, e[0], e[1], heading(rng));
      if (first_out_of_bounds_dim(game, x) >= 0) continue;
    }
    out.col(j++) = x;
  }
  return out;
}

json MatchupCell::to_json() const {
  return {{"evader", evader_id},
          {"pursuer", pursuer_id},
          {"episodes", episodes},
          {"captures", captures},
          {"capture_rate", capture_rate},
          {"mean_time_to_capture", mean_time_to_capture},
          {"mean_capture_fraction", mean_capture_fraction},
          {"evader_oob", evader_oob},
          {"pursuer_oob", pursuer_oob},
          {"aborted", aborted}};
}

const MatchupCell& MatchupTable::cell(std::size_t e, std::size_t p) const {
  require(e < evader_ids.size() && p < pursuer_ids.size(), "MatchupTable: index out of range");
  return cells[e * pursuer_ids.size() + p];
}

json MatchupTable::to_json() const {
  json c = json::array();
  for (const auto& cell : cells) c.push_back(cell.to_json());
  return {{"problem", problem_name},
          {"seed", seed},
          {"evaders", evader_ids},
          {"pursuers", pursuer_ids},
          {"cells", c}};
}

std::string MatchupTable::to_text() const {
  std::ostringstream os;
  os << "capture rate (%)  rows: evader, columns: pursuer\n";
  os << std::left << std::setw(16) << "";
  for (const auto& p : pursuer_ids) os << std::setw(14) << p;
  os << '\n';
  for (std::size_t e = 0; e < evader_ids.size(); ++e) {
    os << std::setw(16) << evader_ids[e];
    for (std::size_t p = 0; p < pursuer_ids.size(); ++p) {
      std::ostringstream v;
      v << std::fixed << std::setprecision(1) << cell(e, p).capture_rate;
      os << std::setw(14) << v.str();
    }
    os << '\n';
  }
  return os.str();
}

MatchupTable matchup(const GameProblem& problem, const std::vector<NamedPolicy>& evaders,
                     const std::vector<NamedPolicy>& pursuers, const Mat& initial_states,
                     const EpisodeOptions& options, std::uint64_t seed,
                     bool oob_counts_as_capture) {
  if (evaders.empty() || pursuers.empty()) throw ConfigError("matchup: need evaders and pursuers");
  if (initial_states.cols() == 0) throw ConfigError("matchup: no initial states");
  MatchupTable table;
  table.problem_name = problem.name;
  table.seed = seed;
  for (const auto& e : evaders) table.evader_ids.push_back(e.id);
  for (const auto& p : pursuers) table.pursuer_ids.push_back(p.id);
  EpisodeOptions opts = options;
  opts.keep_trajectory = false;
  for (const auto& e : evaders) {
    for (const auto& p : pursuers) {
      MatchupCell cell;
      cell.evader_id = e.id;
      cell.pursuer_id = p.id;
      double capture_time_sum = 0.0;
      double fraction_sum = 0.0;
      for (Eigen::Index k = 0; k < initial_states.cols(); ++k) {
        const RolloutRecord r =
            simulate_episode(problem, *e.policy, *p.policy, initial_states.col(k), opts);
        ++cell.episodes;
        fraction_sum += r.capture_fraction;
        switch (r.outcome.kind) {
          case OutcomeKind::kCaptured:
            ++cell.captures;
            capture_time_sum += r.outcome.time;
            break;
          case OutcomeKind::kOutOfBounds:
            if (r.outcome.player == Player::kEvader) {
              ++cell.evader_oob;
              if (oob_counts_as_capture) ++cell.captures;
            } else {
              ++cell.pursuer_oob;
            }
            break;
          case OutcomeKind::kAborted:
            ++cell.aborted;
            break;
          case OutcomeKind::kSurvived:
            break;
        }
      }
      cell.capture_rate = 100.0 * cell.captures / cell.episodes;
      const int timed = cell.captures - (oob_counts_as_capture ? cell.evader_oob : 0);
      cell.mean_time_to_capture = timed > 0 ? capture_time_sum / timed : 0.0;
      cell.mean_capture_fraction = fraction_sum / cell.episodes;
      table.cells.push_back(cell);
    }
  }
  return table;
}

double SafeRateReport::mass_below(double threshold) const {
  if (gaps.empty()) return 0.0;
  const auto below = std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g < threshold; });
  return static_cast<double>(below) / gaps.size();
}

json SafeRateReport::to_json() const {
  return {{"states", states},       {"safe", safe},         {"rate", rate},
          {"bin_edges", bin_edges}, {"counts", counts},     {"underflow", underflow},
          {"overflow", overflow},   {"mass_below_-0.05", mass_below(-0.05)}};
}

SafeRateReport safe_rate(const GameProblem& problem, FieldPtr field, int n_states,
                         const Policy& adversary, std::uint64_t seed, double step) {
  require(field != nullptr, "safe_rate: missing value field");
  if (n_states < 1) throw ConfigError("safe_rate: need at least one state");
  if (field->state_dim() != problem.state_dim()) {
    throw ContractError("safe_rate: field and problem dimensions differ");
  }
  auto problem_ptr = std::make_shared<const GameProblem>(problem);
  const GradientPolicy evader(Player::kEvader, field, problem_ptr, StateAdapter::kIdentity,
                              problem.dynamics->control_box(), "safe_rate");
  const double T = field->horizon();
  EpisodeOptions opts;
  opts.duration = T;
  opts.step = step;
  opts.stop_on_capture = false;
  opts.wall_mode = WallMode::kIgnore;
  opts.keep_trajectory = false;

  SafeRateReport rep;
  for (int b = 0; b <= 20; ++b) rep.bin_edges.push_back(-0.5 + 0.05 * b);
  rep.counts.assign(20, 0);
  std::mt19937_64 rng = make_rng(seed, 0x5afe);
  const long max_attempts = 1000L * n_states;
  long attempts = 0;
  while (rep.states < n_states) {
    if (++attempts > max_attempts) throw ConfigError("safe_rate: no states with V > 0 found");
    const Vec x = uniform_in(problem.state_bounds, rng);
    const double predicted = field->value(x, T);
    if (!(predicted > 0.0)) continue;
    const RolloutRecord r = simulate_episode(problem, evader, adversary, x, opts);
    ++rep.states;
    if (r.outcome.kind != OutcomeKind::kAborted && r.cost > 0.0) ++rep.safe;
    const double gap = r.cost - predicted;
    rep.gaps.push_back(gap);
    if (gap < rep.bin_edges.front()) {
      ++rep.underflow;
    } else if (gap >= rep.bin_edges.back()) {
      ++rep.overflow;
    } else {
      const int bin = std::min(19, static_cast<int>((gap - rep.bin_edges.front()) / 0.05));
      ++rep.counts[bin];
    }
  }
  rep.rate = 100.0 * rep.safe / rep.states;
  return rep;
}

}  // namespace madr
