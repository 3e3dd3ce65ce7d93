// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Trained networks and grid oracles are cached under --cache, keyed
// by the digest of their configuration, so reruns only evaluate.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "madr/arena.hpp"
#include "madr/errors.hpp"
#include "madr/game_models.hpp"
#include "madr/grid_solver.hpp"
#include "madr/io_util.hpp"
#include "madr/mpc_sampler.hpp"
#include "madr/policies.hpp"
#include "madr/trainer.hpp"
#include "madr/value_field.hpp"
#include "madr/value_net.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace madr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Result {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

struct Context {
  fs::path cache;
  fs::path config_dir;
  FieldCache fields;

  // Trains (once) the named acceptance config and returns its final checkpoint.
  fs::path trained(const std::string& name) {
    const json j = read_json_file(config_dir / (name + ".json"));
    const TrainConfig cfg = TrainConfig::from_json(j);
    const fs::path dir = cache / (name + "-" + cfg.digest());
    const fs::path ckpt = dir / "final.ckpt";
    if (fs::exists(ckpt)) return ckpt;
    std::cerr << "[acceptance] training " << name << " (" << cfg.total_epochs
              << " epochs) into " << dir << "\n";
    const fs::path tmp = cache / (name + "-" + cfg.digest() + ".partial");
    fs::remove_all(tmp);
    ProblemPtr p = load_problem(cfg.problem);
    const auto t0 = Clock::now();
    train(*p, cfg, tmp, [&](const json& rec) {
      if (rec.contains("epoch") && rec["epoch"].get<int>() % 5000 == 0) {
        std::cerr << "[acceptance]   " << name << " epoch " << rec["epoch"] << " loss "
                  << rec["loss"]["total"] << " (" << static_cast<int>(seconds_since(t0)) << " s)\n";
      }
    });
    fs::remove_all(dir);
    fs::rename(tmp, dir);
    return ckpt;
  }

  // Solves (once) a grid oracle.
  std::shared_ptr<const ValueGrid> oracle(const std::string& problem, const std::vector<int>& nodes,
                                          double dt, GameMode mode = GameMode::kAvoid) {
    std::string tag = problem + "_";
    for (std::size_t i = 0; i < nodes.size(); ++i) tag += (i ? "x" : "") + std::to_string(nodes[i]);
    tag += std::string("_") + game_mode_name(mode) + ".grid";
    const fs::path path = cache / ("oracle_" + tag);
    if (!fs::exists(path)) {
      std::cerr << "[acceptance] solving grid oracle " << tag << "\n";
      ProblemPtr p = load_problem(problem);
      const ValueGrid g = solve_hji_vi(*p, GridSpec::for_problem(*p, nodes, dt), mode);
      g.save(path.string() + ".partial");
      fs::rename(path.string() + ".partial", path);
    }
    return std::make_shared<const ValueGrid>(ValueGrid::load(path));
  }
};

Window window_15() {
  Window w;
  w.bounds = {{-1.5, 1.5}, {-1.5, 1.5}};
  return w;
}

// --- 1. analytic fixture ----------------------------------------------------------

double max_error(const ValueGrid& g, const std::function<double(double)>& exact, double radius) {
  const auto v = g.initial_slice();
  double err = 0.0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double x = g.node_state(i)[0];
    if (std::abs(x) <= radius) err = std::max(err, std::abs(v[i] - exact(x)));
  }
  return err;
}

Result analytic_fixture(Context&) {
  const auto t0 = Clock::now();
  ProblemPtr p = load_problem("integrator1d");
  auto solve = [&](const GameProblem& prob, int n) {
    return solve_hji_vi(prob, GridSpec::for_problem(prob, {n}, 0.1));
  };
  const auto exact = [](double x) { return std::abs(x) - 0.2; };
  const ValueGrid coarse = solve(*p, 401), fine = solve(*p, 801);
  const double dx = coarse.spec().axes[0].spacing();
  const double e1 = max_error(coarse, exact, 1.0), e2 = max_error(fine, exact, 1.0);
  // Both errors at round-off cannot shrink further; that counts as converged.
  const double floor = 1e-12;
  const bool converged = (e1 <= floor && e2 <= floor) || (e2 > 0.0 && e1 / e2 >= 1.5);
  const double secs = seconds_since(t0);

  // Non-degenerate companion: pursuer-favoured integrator with a kink.
  ProblemPtr q = load_problem(std::string(MADR_FIXTURE_DIR) + "/integrator1d_pursuit.json");
  const auto exact_q = [](double x) { return std::max(std::abs(x) - 0.5, 0.0) - 0.2; };
  const double q1 = max_error(solve(*q, 401), exact_q, 1.0);
  const double q2 = max_error(solve(*q, 801), exact_q, 1.0);

  Result r;
  r.pass = e1 <= 2.0 * dx && converged && secs < 10.0;
  r.detail = fmt("max_err(401)=%.3g <= 2dx=%.3g, max_err(801)=%.3g, %s, %.2f s; pursuit fixture "
                 "max_err %.4f -> %.4f (ratio %.2f)",
                 e1, 2.0 * dx, e2, e1 <= floor && e2 <= floor ? "exact at both resolutions" : "ratio",
                 secs, q1, q2, q1 / q2);
  r.data = {{"err_401", e1}, {"err_801", e2}, {"dx", dx}, {"seconds", secs},
            {"pursuit_err_401", q1}, {"pursuit_err_801", q2}};
  return r;
}

// --- 2. gradients -----------------------------------------------------------------

Result gradient_correctness(Context&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  const std::vector<std::string> names = {"dubins3d_rel", "dubins6d", "integrator1d",
                                          "dubins3d_cylinder"};
  std::vector<ProblemPtr> problems;
  for (const auto& n : names) problems.push_back(load_problem(n));
  double worst_in = 0.0, worst_param = 0.0;
  const int instances = 1000;
  for (int i = 0; i < instances; ++i) {
    const GameProblem& p = *problems[i % problems.size()];
    const ValueNetwork net = madr::testing::random_network(p, rng);
    worst_in = std::max(worst_in, madr::testing::input_gradient_error(net, p, rng, 3));
    LossBatch batch =
        madr::testing::random_batch(p, rng, i % 2 ? ResidualNorm::kL2 : ResidualNorm::kL1);
    if (i % 3 == 2) batch.mode = GameMode::kFollow;
    worst_param = std::max(worst_param, madr::testing::param_gradient_error(net, p, batch));
  }
  const double secs = seconds_since(t0);
  Result r;
  r.pass = worst_in < 1e-4 && worst_param < 1e-4 && secs < 60.0;
  r.detail = fmt("%d nets, worst input-gradient rel err %.2e, worst parameter-gradient rel err "
                 "%.2e, %.1f s",
                 instances, worst_in, worst_param, secs);
  r.data = {{"worst_input", worst_in}, {"worst_param", worst_param}, {"seconds", secs}};
  return r;
}

// --- 3. Hamiltonian ---------------------------------------------------------------

Result hamiltonian_oracle(Context&) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> dims(1, 3);
  std::vector<ProblemPtr> problems;
  for (const char* n : {"dubins3d_rel", "dubins6d", "integrator1d", "dubins3d_cylinder"}) {
    problems.push_back(load_problem(n));
  }
  int mismatches = 0, ties = 0;
  const int instances = 10000;
  for (int k = 0; k < instances; ++k) {
    FlowTerms t;
    Vec p, x;
    InputBox U = InputBox::symmetric(1, 1.0), D = InputBox::symmetric(1, 1.0);
    auto random_box = [&](int m) {
      const Vec lo = Vec::NullaryExpr(m, [&] { return unit(rng) - 1.0; });
      return InputBox(lo, lo + Vec::NullaryExpr(m, [&] { return 1.0 + unit(rng); }));
    };
    if (k % 2 == 0) {
      // Real dynamics at a random state, random input boxes.
      const GameProblem& prob = *problems[(k / 2) % problems.size()];
      x = madr::testing::uniform_state(prob, rng);
      t = flow_terms(*prob.dynamics, x);
      U = random_box(static_cast<int>(t.g.cols()));
      D = random_box(static_cast<int>(t.w.cols()));
      p = Vec::NullaryExpr(x.size(), [&] { return unit(rng); });
    } else {
      const int n = 3, mu = dims(rng), md = dims(rng);
      t.f = Vec::NullaryExpr(n, [&] { return unit(rng); });
      t.g = Mat::NullaryExpr(n, mu, [&] { return unit(rng); });
      t.w = Mat::NullaryExpr(n, md, [&] { return unit(rng); });
      // Every tenth synthetic instance has an exactly zero coefficient.
      if (k % 10 == 1) t.g.col(0).setZero();
      if (k % 10 == 3) t.w.col(md - 1).setZero();
      U = random_box(mu);
      D = random_box(md);
      p = Vec::NullaryExpr(n, [&] { return unit(rng); });
    }
    const HamiltonianResult h = hamiltonian_from_gradient(t, U, D, p);
    const auto e = madr::testing::enumerate_hamiltonian(t, U, D, p);
    const Vec cu = t.g.transpose() * p, cd = t.w.transpose() * p;
    bool ok = h.value == e.value;
    for (Eigen::Index j = 0; j < cu.size(); ++j) {
      if (cu[j] == 0.0) {
        ++ties;
        ok = ok && h.u_star[j] == U.center()[j];
      } else {
        ok = ok && h.u_star[j] == e.u_star[j];
      }
    }
    for (Eigen::Index j = 0; j < cd.size(); ++j) {
      if (cd[j] == 0.0) {
        ++ties;
        ok = ok && h.d_star[j] == D.center()[j];
      } else {
        ok = ok && h.d_star[j] == e.d_star[j];
      }
    }
    if (!ok) ++mismatches;
  }
  Result r;
  r.pass = mismatches == 0;
  r.detail = fmt("%d instances, %d mismatches, %d tied channels resolved to the box center",
                 instances, mismatches, ties);
  r.data = {{"instances", instances}, {"mismatches", mismatches}, {"ties", ties}};
  return r;
}

// --- 4. MPC convergence -----------------------------------------------------------

Result mpc_convergence(Context&) {
  const auto t0 = Clock::now();
  ProblemPtr p = load_problem("integrator1d");
  const madr::testing::IntegratorField field;
  SamplerConfig c;
  c.rollouts = 100;
  c.refinements = 10;
  std::vector<double> est;
  Vec x0(1);
  x0 << 0.5;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    est.push_back(estimate_value(*p, field, x0, 1.0, c, Perspective::kControl, rng));
  }
  std::vector<double> sorted = est;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[24] + sorted[25]);
  const double secs = seconds_since(t0);
  Result r;
  r.pass = std::abs(median - 0.3) <= 0.02 && secs < 60.0;
  r.detail = fmt("median over 50 seeds %.5f (analytic 0.3), range [%.4f, %.4f], %.2f s", median,
                 sorted.front(), sorted.back(), secs);
  r.data = {{"median", median}, {"min", sorted.front()}, {"max", sorted.back()}, {"seconds", secs}};
  return r;
}

// --- 5. MADR vs DP ----------------------------------------------------------------

const std::vector<int> kRelOracleNodes = {121, 121, 72};
const std::vector<int> kCylOracleNodes = {101, 101, 64};

Result madr_vs_dp(Context& ctx) {
  const auto oracle = ctx.oracle("dubins3d_rel", kRelOracleNodes, 0.1);
  const FieldPtr madr = ctx.fields.get(ctx.trained("madr_rel"));
  const FieldPtr vanilla = ctx.fields.get(ctx.trained("vanilla_rel"));
  const EvalReport m = evaluate_checkpoint(*madr, *oracle, window_15());
  const EvalReport v = evaluate_checkpoint(*vanilla, *oracle, window_15());
  const double ratio = m.vol_cand / m.vol_ref;
  Result r;
  r.pass = m.iou >= 0.95 && ratio >= 0.9 && ratio <= 1.3;
  r.detail = fmt("MADR iou %.4f, unsafe volume %.4f vs oracle %.4f (ratio %.3f); vanilla iou %.4f, "
                 "volume %.4f (ratio %.3f)",
                 m.iou, m.vol_cand, m.vol_ref, ratio, v.iou, v.vol_cand, v.vol_cand / v.vol_ref);
  r.data = {{"madr", m.to_json()}, {"vanilla", v.to_json()}};
  return r;
}

// --- 6. matchups ------------------------------------------------------------------

MatchupTable run_matchups(Context& ctx, int episodes, std::uint64_t seed) {
  ProblemPtr rel = load_problem("dubins3d_rel");
  const auto oracle = ctx.oracle("dubins3d_rel", kRelOracleNodes, 0.1);
  InitSampler init;
  init.kind = InitSampler::Kind::kSafeBand;
  init.field = std::make_shared<GridField>(oracle);
  init.field_problem = rel;
  init.lo = 0.0;
  init.hi = 0.1;
  const Mat x0 = sample_initial_states(*rel, init, episodes, seed);
  auto policy = [&](const std::string& net, const char* role) {
    return make_policy(json{{"kind", "net_gradient"}, {"role", role}, {"source", ctx.trained(net)}},
                       rel, ctx.cache, ctx.fields);
  };
  EpisodeOptions o;
  o.duration = rel->horizon;
  o.wall_mode = WallMode::kIgnore;
  o.keep_trajectory = false;
  return matchup(*rel, {{"madr", policy("madr_rel", "evader")}, {"vanilla", policy("vanilla_rel", "evader")}},
                 {{"madr", policy("madr_rel", "pursuer")}, {"vanilla", policy("vanilla_rel", "pursuer")}},
                 x0, o, seed);
}

Result matchup_directionality(Context& ctx) {
  const MatchupTable t = run_matchups(ctx, 200, 2024);
  const double diag = t.cell(0, 0).capture_rate;
  const double madr_vs_vanilla = t.cell(0, 1).capture_rate;
  const double vanilla_vs_madr = t.cell(1, 0).capture_rate;
  Result r;
  r.pass = madr_vs_vanilla < diag && vanilla_vs_madr > 3.0 * diag;
  r.detail = fmt("200 safe-band episodes: MADR/MADR %.1f%%, MADR evader vs vanilla pursuer %.1f%%, "
                 "vanilla evader vs MADR pursuer %.1f%%, vanilla/vanilla %.1f%%",
                 diag, madr_vs_vanilla, vanilla_vs_madr, t.cell(1, 1).capture_rate);
  r.data = t.to_json();
  return r;
}

// --- 7. safe rate -----------------------------------------------------------------

SafeRateReport run_safe_rate(Context& ctx, int states, std::uint64_t seed) {
  ProblemPtr cyl = load_problem("dubins3d_cylinder");
  const auto oracle = ctx.oracle("dubins3d_cylinder", kCylOracleNodes, 0.1);
  const GradientPolicy adversary(Player::kPursuer, std::make_shared<GridField>(oracle), cyl,
                                 StateAdapter::kIdentity, cyl->dynamics->disturbance_box(),
                                 "grid oracle");
  return safe_rate(*cyl, ctx.fields.get(ctx.trained("madr_cylinder")), states, adversary, seed);
}

Result safe_rate_robustness(Context& ctx) {
  const SafeRateReport s = run_safe_rate(ctx, 1000, 31);
  const double below = s.mass_below(-0.05);
  Result r;
  r.pass = s.rate >= 95.0 && below <= 0.05;
  r.detail = fmt("%d predicted-safe states, safe rate %.1f%%, gap mass below -0.05 %.2f%%",
                 s.states, s.rate, 100.0 * below);
  r.data = s.to_json();
  r.data.erase("gaps");
  return r;
}

// --- 8. follow filter -------------------------------------------------------------

// V = a.x on dubins3d_rel.
class LinearField final : public ValueField {
 public:
  explicit LinearField(Vec a) : a_(std::move(a)) {}
  int state_dim() const override { return 3; }
  double horizon() const override { return 3.0; }
  const std::string& problem_name() const override { return name_; }
  GameMode mode() const override { return GameMode::kAvoid; }
  double value(const Vec& x, double) const override { return a_.dot(x); }
  FieldSample sample(const Vec& x, double tau) const override { return {value(x, tau), 0.0, a_}; }
  std::uint64_t clamp_count() const override { return 0; }

 private:
  std::string name_ = "dubins3d_rel";
  Vec a_;
};

Result follow_filter(Context& ctx) {
  // Branch rule on synthetic values: w = (0, 0, 1), so only the heading
  // component of the pursuit gradient counts.
  ProblemPtr rel = load_problem("dubins3d_rel");
  const InputBox box = rel->dynamics->disturbance_box();
  Vec a0(3), a1(3), af(3), x(3);
  a0 << 0.7, -0.2, 0.0;
  a1 << 0.0, 0.0, 5.0;
  af << 0.0, 0.0, -1.0;
  x << 0.9, 0.4, -0.3;
  auto follow = std::make_shared<LinearField>(af);
  const FollowFilteredPolicy zero(std::make_shared<LinearField>(a0), follow, rel,
                                  StateAdapter::kIdentity, box);
  const FollowFilteredPolicy large(std::make_shared<LinearField>(a1), follow, rel,
                                   StateAdapter::kIdentity, box);
  const bool branch_ok = !zero.uses_pursuit_branch(x) && zero.action(x, 1.0, 0)[0] == 1.9 &&
                         large.uses_pursuit_branch(x) && large.action(x, 1.0, 0)[0] == -1.9;

  // Integration: 20 long clamped episodes on the two-vehicle game.
  ProblemPtr game = load_problem("dubins6d");
  const std::string pursuit = ctx.trained("madr_rel").string();
  const std::string follow_src = ctx.trained("follow_rel").string();
  auto evader = make_policy(json{{"kind", "net_gradient"}, {"role", "evader"}, {"source", pursuit}},
                            game, ctx.cache, ctx.fields);
  auto plain = make_policy(json{{"kind", "net_gradient"}, {"role", "pursuer"}, {"source", pursuit}},
                           game, ctx.cache, ctx.fields);
  auto filtered = make_policy(
      json{{"kind", "follow_filtered"}, {"source", pursuit}, {"follow_source", follow_src}}, game,
      ctx.cache, ctx.fields);
  InitSampler init;
  init.kind = InitSampler::Kind::kUniform;
  const Mat x0 = sample_initial_states(*game, init, 20, 5150);
  EpisodeOptions o;
  o.duration = 300.0;
  o.stop_on_capture = false;
  o.wall_mode = WallMode::kClamp;
  o.keep_trajectory = false;
  const MatchupTable t =
      matchup(*game, {{"madr", evader}}, {{"madr-follow", filtered}, {"madr", plain}}, x0, o, 5150);
  const double f = t.cell(0, 0).mean_capture_fraction, m = t.cell(0, 1).mean_capture_fraction;

  // How often the filter keeps pursuing, so an identical score is not mistaken for a win.
  const auto& ff = dynamic_cast<const FollowFilteredPolicy&>(*filtered);
  const Mat probe = sample_initial_states(*game, init, 2000, 77);
  std::vector<double> mags;
  int pursuing = 0;
  for (Eigen::Index j = 0; j < probe.cols(); ++j) {
    const Vec s = probe.col(j);
    mags.push_back(ff.pursuit_magnitude(s));
    pursuing += ff.uses_pursuit_branch(s) ? 1 : 0;
  }
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());

  Result r;
  r.pass = branch_ok && f >= m;
  r.detail = fmt("branch rule %s; 20 x 300 s episodes: capture-proximity fraction FOLLOW %.2f%% vs "
                 "plain %.2f%%; pursuit branch on %.1f%% of uniform states (median magnitude %.3g)",
                 branch_ok ? "ok" : "WRONG", 100.0 * f, 100.0 * m, 100.0 * pursuing / probe.cols(),
                 mags[mags.size() / 2]);
  r.data = t.to_json();
  r.data["pursuit_branch_share"] = static_cast<double>(pursuing) / probe.cols();
  return r;
}

// --- 9. determinism ---------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Result determinism(Context& ctx) {
  std::vector<std::string> failed;
  const fs::path scratch = ctx.cache / "determinism";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  ProblemPtr rel = load_problem("dubins3d_rel");
  {
    const GridSpec spec = GridSpec::for_problem(*rel, {31, 31, 24}, 0.25);
    solve_hji_vi(*rel, spec).save(scratch / "a.grid");
    solve_hji_vi(*rel, spec).save(scratch / "b.grid");
    if (file_bytes(scratch / "a.grid") != file_bytes(scratch / "b.grid")) failed.push_back("grid");
  }
  {
    TrainConfig c = TrainConfig::from_json(read_json_file(ctx.config_dir / "madr_rel.json"));
    c.total_epochs = 200;
    c.warmup_fraction = 0.25;
    c.refresh_interval = 75;
    c.pde_batch = 200;
    c.boundary_batch = 50;
    c.mpc_batch = 50;
    c.sampler.dataset_size = 40;
    c.sampler.rollouts = 20;
    c.sampler.refinements = 3;
    train(*rel, c, scratch / "ta");
    train(*rel, c, scratch / "tb");
    for (const char* f : {"final.ckpt", "mpc_control.bin", "mpc_disturbance.bin"}) {
      if (file_bytes(scratch / "ta" / f) != file_bytes(scratch / "tb" / f)) {
        failed.push_back(std::string("train/") + f);
      }
    }
  }
  {
    const FieldPtr net = ctx.fields.get(ctx.trained("madr_rel"));
    SamplerConfig s;
    s.dataset_size = 60;
    for (int rep = 0; rep < 2; ++rep) {
      collect_dataset(*rel, *net, s, Perspective::kDisturbance, 0.0, 3.0, 99, 3.0)
          .save(scratch / (rep ? "b.mpc" : "a.mpc"));
    }
    if (file_bytes(scratch / "a.mpc") != file_bytes(scratch / "b.mpc")) failed.push_back("mpc");
  }
  if (run_matchups(ctx, 40, 8).to_json() != run_matchups(ctx, 40, 8).to_json()) {
    failed.push_back("matchup");
  }
  if (run_safe_rate(ctx, 100, 4).to_json() != run_safe_rate(ctx, 100, 4).to_json()) {
    failed.push_back("safe_rate");
  }
  fs::remove_all(scratch);
  Result r;
  r.pass = failed.empty();
  std::string list;
  for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
  r.detail = failed.empty() ? "grid, training checkpoints and datasets, MPC dataset, matchup table "
                              "and safe-rate gaps are bit-identical on repeat"
                            : "differs on repeat: " + list;
  return r;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Result(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"madr acceptance suite"};
  std::string cache = "acceptance_cache";
  std::string config_dir = MADR_ACCEPTANCE_CONFIG_DIR;
  std::string report;
  std::vector<int> only;
  app.add_option("--cache", cache, "Directory for trained networks and grid oracles");
  app.add_option("--configs", config_dir, "Directory with the acceptance training configs");
  app.add_option("--report", report, "Write a JSON report here");
  app.add_option("--only", only, "Run only these criterion numbers");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  fs::create_directories(cache);
  // Absolute, so checkpoint paths survive being resolved against the cache again.
  ctx.cache = fs::absolute(cache);
  ctx.config_dir = fs::absolute(config_dir);

  const std::vector<Criterion> criteria = {
      {1, "analytic_fixture", analytic_fixture},
      {2, "gradient_correctness", gradient_correctness},
      {3, "hamiltonian_oracle", hamiltonian_oracle},
      {4, "mpc_convergence", mpc_convergence},
      {5, "madr_vs_dp", madr_vs_dp},
      {6, "matchup_directionality", matchup_directionality},
      {7, "safe_rate", safe_rate_robustness},
      {8, "follow_filter", follow_filter},
      {9, "determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  json out = json::array();
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Result r;
    try {
      r = c.run(ctx);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("error: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (!r.pass) ++failures;
    std::cout << (r.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << r.detail
              << std::endl;
    out.push_back({{"id", c.id}, {"name", c.name}, {"pass", r.pass}, {"detail", r.detail},
                   {"seconds", secs}, {"data", r.data}});
  }
  if (!report.empty()) write_text_file(report, out.dump(2));
  return failures == 0 ? 0 : 1;
}
