// SPDX-License-Identifier: Apache-2.0
#include "madr/mpc_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "madr/errors.hpp"

namespace madr {

namespace {
constexpr char kMpcMagic[8] = {'M', 'A', 'D', 'R', 'M', 'P', 'C', '1'};
constexpr std::uint32_t kMpcVersion = 1;
constexpr double kTimeEps = 1e-9;

Vec json_vec(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

void check_vec(const Vec& v, int dim, const char* name) {
  if (v.size() != 0 && v.size() != dim) {
    throw ConfigError(std::string("sampler: ") + name + " has " + std::to_string(v.size()) +
                      " entries, expected " + std::to_string(dim));
  }
}

struct Resolved {
  Vec mean;
  Vec sigma;
};

Resolved resolve_noise(const SamplerConfig& c, const InputBox& box, Perspective p) {
  const Vec& mean = p == Perspective::kControl ? c.control_mean : c.disturbance_mean;
  const Vec& sigma = p == Perspective::kControl ? c.control_sigma : c.disturbance_sigma;
  return Resolved{mean.size() ? mean : box.center(), sigma.size() ? sigma : box.half_width()};
}

// Rolls all sequences forward in lockstep so opponent gradients can be
// evaluated as one batch per step.
void rollout_batch(const GameProblem& problem, const ValueField& field, const Vec& x0,
                   double tau0, const std::vector<Mat>& seqs, Perspective perspective,
                   double step, double gradient_tau, GameMode mode, std::vector<RolloutResult>& out,
                   bool keep_trajectory) {
  const auto& model = *problem.dynamics;
  const int n = model.state_dim();
  const int N = static_cast<int>(seqs.size());
  const int H = static_cast<int>(seqs.front().cols());
  const bool avoid = mode == GameMode::kAvoid;
  const bool control = perspective == Perspective::kControl;
  auto combine = [avoid](double a, double b) { return avoid ? std::min(a, b) : std::max(a, b); };

  out.assign(N, RolloutResult{});
  Mat X = x0.replicate(1, N);
  const double ell0 = problem.boundary(x0);
  for (auto& r : out) {
    r.cost = ell0;
    if (keep_trajectory) {
      r.trajectory.resize(n, H + 1);
      r.trajectory.col(0) = x0;
    }
  }
  const Vec taus = Vec::Constant(N, gradient_tau);
  const InputBox& own_box = control ? model.control_box() : model.disturbance_box();
  Mat G;
  Vec x(n);
  FlowTerms scratch;
  for (int h = 0; h < H; ++h) {
    field.gradients(X, taus, G);
    for (int i = 0; i < N; ++i) {
      RolloutResult& r = out[i];
      if (!r.finite) continue;
      x = X.col(i);
      const Vec opp = opponent_action(problem, x, G.col(i),
                                      control ? Player::kPursuer : Player::kEvader);
      const Vec own = clamp_inputs(own_box, seqs[i].col(h));
      euler_step_inplace(model, x, control ? own : opp, control ? opp : own, step, scratch);
      if (!x.allFinite()) {
        r.finite = false;
        X.col(i) = x0;
        continue;
      }
      X.col(i) = x;
      r.cost = combine(r.cost, problem.boundary(x));
      if (keep_trajectory) r.trajectory.col(h + 1) = x;
    }
  }
  const double remaining = tau0 - H * step;
  if (remaining > kTimeEps) {
    Vec v;
    field.values(X, Vec::Constant(N, remaining), v);
    for (int i = 0; i < N; ++i) {
      if (!out[i].finite) continue;
      if (!std::isfinite(v[i])) {
        out[i].finite = false;
        continue;
      }
      out[i].cost = combine(out[i].cost, v[i]);
      out[i].bootstrapped = true;
    }
  }
}
}  // namespace

const char* perspective_name(Perspective p) {
  return p == Perspective::kControl ? "control" : "disturbance";
}

Perspective parse_perspective(const std::string& name) {
  if (name == "control") return Perspective::kControl;
  if (name == "disturbance") return Perspective::kDisturbance;
  throw ConfigError("unknown perspective '" + name + "' (expected control|disturbance)");
}

void SamplerConfig::validate(const GameProblem& problem) const {
  if (dataset_size < 0) throw ConfigError("sampler: dataset_size must be >= 0");
  if (rollouts < 1) throw ConfigError("sampler: rollouts must be >= 1");
  if (refinements < 1) throw ConfigError("sampler: refinements must be >= 1");
  if (!(step > 0.0)) throw ConfigError("sampler: step must be positive");
  if (horizon_steps < 0) throw ConfigError("sampler: horizon_steps must be >= 0");
  if (horizon_steps * step > problem.horizon + kTimeEps) {
    throw ConfigError("sampler: horizon_steps * step exceeds the problem horizon");
  }
  if (!(refinement_horizon > 0.0)) throw ConfigError("sampler: refinement_horizon must be > 0");
  if (!(sigma_decay > 0.0 && sigma_decay <= 1.0)) {
    throw ConfigError("sampler: sigma_decay must lie in (0, 1]");
  }
  if (!(mppi_temperature > 0.0)) throw ConfigError("sampler: mppi_temperature must be > 0");
  const int mu = problem.dynamics->control_box().dim();
  const int md = problem.dynamics->disturbance_box().dim();
  check_vec(control_mean, mu, "control_mean");
  check_vec(control_sigma, mu, "control_sigma");
  check_vec(disturbance_mean, md, "disturbance_mean");
  check_vec(disturbance_sigma, md, "disturbance_sigma");
  if ((control_sigma.array() < 0).any() || (disturbance_sigma.array() < 0).any()) {
    throw ConfigError("sampler: sigma entries must be >= 0");
  }
}

SamplerConfig SamplerConfig::from_json(const json& j) {
  check_keys(j,
             {"dataset_size", "horizon_steps", "step", "rollouts", "refinements",
              "refinement_horizon", "control_mean", "control_sigma", "disturbance_mean",
              "disturbance_sigma", "sigma_decay", "update", "mppi_temperature"},
             "sampler config");
  SamplerConfig c;
  try {
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.horizon_steps = j.value("horizon_steps", c.horizon_steps);
    c.step = j.value("step", c.step);
    c.rollouts = j.value("rollouts", c.rollouts);
    c.refinements = j.value("refinements", c.refinements);
    c.refinement_horizon = j.value("refinement_horizon", c.refinement_horizon);
    if (j.contains("control_mean")) c.control_mean = json_vec(j["control_mean"]);
    if (j.contains("control_sigma")) c.control_sigma = json_vec(j["control_sigma"]);
    if (j.contains("disturbance_mean")) c.disturbance_mean = json_vec(j["disturbance_mean"]);
    if (j.contains("disturbance_sigma")) c.disturbance_sigma = json_vec(j["disturbance_sigma"]);
    c.sigma_decay = j.value("sigma_decay", c.sigma_decay);
    const std::string update = j.value("update", std::string("best_rollout"));
    if (update == "best_rollout") {
      c.update = IncumbentUpdate::kBestRollout;
    } else if (update == "mppi") {
      c.update = IncumbentUpdate::kMppi;
    } else {
      throw ConfigError("sampler: unknown update '" + update + "' (expected best_rollout|mppi)");
    }
    c.mppi_temperature = j.value("mppi_temperature", c.mppi_temperature);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sampler config: ") + e.what());
  }
  return c;
}

json SamplerConfig::to_json() const {
  json j = {{"dataset_size", dataset_size},
            {"horizon_steps", horizon_steps},
            {"step", step},
            {"rollouts", rollouts},
            {"refinements", refinements},
            {"refinement_horizon", refinement_horizon},
            {"sigma_decay", sigma_decay},
            {"update", update == IncumbentUpdate::kBestRollout ? "best_rollout" : "mppi"},
            {"mppi_temperature", mppi_temperature}};
  if (control_mean.size()) j["control_mean"] = vec_json(control_mean);
  if (control_sigma.size()) j["control_sigma"] = vec_json(control_sigma);
  if (disturbance_mean.size()) j["disturbance_mean"] = vec_json(disturbance_mean);
  if (disturbance_sigma.size()) j["disturbance_sigma"] = vec_json(disturbance_sigma);
  return j;
}

int rollout_steps(const SamplerConfig& config, double tau) {
  const int full = static_cast<int>(std::lround(tau / config.step));
  if (config.horizon_steps > 0) return std::max(1, std::min(config.horizon_steps, full));
  return std::max(1, static_cast<int>(
                         std::lround(std::min(config.refinement_horizon, tau) / config.step)));
}

Vec opponent_action(const GameProblem& problem, const Vec& x, const Vec& grad_x, Player role) {
  FlowTerms terms = flow_terms(*problem.dynamics, x);
  if (role == Player::kEvader) {
    return bang_bang_max(problem.dynamics->control_box(), terms.g.transpose() * grad_x);
  }
  return bang_bang_min(problem.dynamics->disturbance_box(), terms.w.transpose() * grad_x);
}

Vec opponent_from_gradient(const ValueField& field, const GameProblem& problem, const Vec& x,
                           double tau, Player role) {
  return opponent_action(problem, x, field.sample(x, tau).grad_x, role);
}

RolloutResult rollout_cost(const GameProblem& problem, const ValueField& field, const Vec& x0,
                           double tau0, const Mat& inputs, Perspective perspective, double step,
                           double gradient_tau, GameMode mode, bool keep_trajectory) {
  const InputBox& box = perspective == Perspective::kControl
                            ? problem.dynamics->control_box()
                            : problem.dynamics->disturbance_box();
  require(inputs.rows() == box.dim() && inputs.cols() >= 1,
          "rollout_cost: input sequence must be m x H with H >= 1");
  std::vector<RolloutResult> out;
  rollout_batch(problem, field, x0, tau0, {inputs}, perspective, step, gradient_tau, mode, out,
                keep_trajectory);
  return std::move(out.front());
}

double estimate_value(const GameProblem& problem, const ValueField& field, const Vec& x0,
                      double tau0, const SamplerConfig& config, Perspective perspective,
                      std::mt19937_64& rng, double gradient_tau, GameMode mode,
                      EstimateTrace* trace) {
  const bool control = perspective == Perspective::kControl;
  const InputBox& box =
      control ? problem.dynamics->control_box() : problem.dynamics->disturbance_box();
  const int m = box.dim();
  const int H = rollout_steps(config, tau0);
  const int N = config.rollouts;
  const double gtau = gradient_tau < 0.0 ? tau0 : gradient_tau;
  const Resolved noise = resolve_noise(config, box, perspective);

  Mat incumbent = noise.mean.replicate(1, H);
  double best = control ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
  bool found = false;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Mat> seqs(N, Mat(m, H));
  std::vector<RolloutResult> results;
  if (trace != nullptr) *trace = EstimateTrace{};

  for (int k = 0; k < config.refinements; ++k) {
    const Vec sigma = noise.sigma * std::pow(config.sigma_decay, k);
    for (Mat& s : seqs) {
      for (int h = 0; h < H; ++h) {
        for (int c = 0; c < m; ++c) {
          const double v = incumbent(c, h) + sigma[c] * normal(rng);
          s(c, h) = std::clamp(v, box.lower()[c], box.upper()[c]);
        }
      }
    }
    rollout_batch(problem, field, x0, tau0, seqs, perspective, config.step, gtau, mode, results,
                  false);

    int best_index = -1;
    for (int i = 0; i < N; ++i) {
      const RolloutResult& r = results[i];
      if (!r.finite) {
        if (trace != nullptr) ++trace->discarded;
        continue;
      }
      if (trace != nullptr) trace->bootstrapped |= r.bootstrapped;
      const bool better = !found || (control ? r.cost > best : r.cost < best);
      if (better) {
        best = r.cost;
        best_index = i;
        found = true;
        if (trace != nullptr) trace->best_inputs = seqs[i];
      }
      if (trace != nullptr) trace->incumbent.push_back(best);
    }
    if (config.update == IncumbentUpdate::kBestRollout) {
      if (best_index >= 0) incumbent = seqs[best_index];
    } else if (found) {
      // Exponential weighting relative to the best cost of this round.
      double ref = control ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
      for (const auto& r : results) {
        if (r.finite) ref = control ? std::max(ref, r.cost) : std::min(ref, r.cost);
      }
      if (std::isfinite(ref)) {
        Mat acc = Mat::Zero(m, H);
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
          if (!results[i].finite) continue;
          const double gap = control ? results[i].cost - ref : ref - results[i].cost;
          const double w = std::exp(gap / config.mppi_temperature);
          acc += w * seqs[i];
          total += w;
        }
        incumbent = acc / total;
      }
    }
  }
  if (!found) {
    throw EstimationError("estimate_value: every rollout was discarded (non-finite states)");
  }
  return best;
}

MpcTerm MpcDataset::to_term() const {
  MpcTerm term;
  const int M = static_cast<int>(samples.size());
  const int n = M ? static_cast<int>(samples.front().x.size()) : 0;
  term.states.resize(n, M);
  term.taus.resize(M);
  term.targets.resize(M);
  for (int i = 0; i < M; ++i) {
    term.states.col(i) = samples[i].x;
    term.taus[i] = samples[i].tau;
    term.targets[i] = samples[i].v_hat;
  }
  return term;
}

void MpcDataset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  BinaryWriter w(out);
  w.bytes(kMpcMagic, sizeof kMpcMagic);
  w.u32(kMpcVersion);
  w.str(problem_name);
  w.u8(perspective == Perspective::kControl ? 0 : 1);
  w.u8(mode == GameMode::kAvoid ? 0 : 1);
  w.str(config.to_json().dump());
  w.f64(gradient_tau);
  w.str(source_checkpoint);
  w.u64(seed);
  const std::uint32_t n = samples.empty() ? 0 : static_cast<std::uint32_t>(samples[0].x.size());
  w.u32(n);
  w.u64(samples.size());
  for (const auto& s : samples) {
    for (std::uint32_t i = 0; i < n; ++i) w.f32(static_cast<float>(s.x[i]));
    w.f32(static_cast<float>(s.tau));
    w.f32(static_cast<float>(s.v_hat));
  }
}

MpcDataset MpcDataset::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  BinaryReader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMpcMagic)) {
    throw IoError(path.string() + ": not an MPC dataset");
  }
  if (r.u32() != kMpcVersion) throw IoError(path.string() + ": unsupported dataset version");
  MpcDataset d;
  d.problem_name = r.str();
  d.perspective = r.u8() == 0 ? Perspective::kControl : Perspective::kDisturbance;
  d.mode = r.u8() == 0 ? GameMode::kAvoid : GameMode::kFollow;
  try {
    d.config = SamplerConfig::from_json(json::parse(r.str()));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad config header: " + e.what());
  }
  d.gradient_tau = r.f64();
  d.source_checkpoint = r.str();
  d.seed = r.u64();
  const std::uint32_t n = r.u32();
  const std::uint64_t count = r.u64();
  if (n > 64) throw IoError(path.string() + ": implausible state dimension");
  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.x.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) s.x[i] = r.f32();
    s.tau = r.f32();
    s.v_hat = r.f32();
  }
  return d;
}

MpcDataset collect_dataset(const GameProblem& problem, const ValueField& field,
                           const SamplerConfig& config, Perspective perspective, double tau_lo,
                           double tau_hi, std::uint64_t seed, double gradient_tau,
                           const std::string& source_checkpoint, GameMode mode) {
  config.validate(problem);
  if (!(tau_lo >= 0.0 && tau_lo <= tau_hi && tau_hi <= problem.horizon + kTimeEps)) {
    throw ConfigError("collect_dataset: tau window must lie within [0, horizon]");
  }
  MpcDataset d;
  d.problem_name = problem.name;
  d.perspective = perspective;
  d.mode = mode;
  d.config = config;
  d.gradient_tau = gradient_tau;
  d.source_checkpoint = source_checkpoint;
  d.seed = seed;
  d.samples.reserve(config.dataset_size);
  const int n = problem.state_dim();
  for (int j = 0; j < config.dataset_size; ++j) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(j)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MpcSample s;
    s.x.resize(n);
    for (int i = 0; i < n; ++i) {
      const Interval& b = problem.state_bounds[i];
      s.x[i] = b.lo + unit(rng) * b.width();
    }
    s.tau = tau_lo + unit(rng) * (tau_hi - tau_lo);
    try {
      s.v_hat = estimate_value(problem, field, s.x, s.tau, config, perspective, rng, gradient_tau,
                               mode);
    } catch (const EstimationError& e) {
      ++d.skipped;
      std::fprintf(stderr, "collect_dataset: skipped point %d: %s\n", j, e.what());
      continue;
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace madr
