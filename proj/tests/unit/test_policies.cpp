// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "madr/errors.hpp"
#include "madr/policies.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace madr;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// V = a.x + b on dubins3d_rel, so every gradient is `a`.
class LinearField final : public ValueField {
 public:
  LinearField(Vec a, double b, GameMode mode = GameMode::kAvoid)
      : a_(std::move(a)), b_(b), mode_(mode) {}
  int state_dim() const override { return 3; }
  double horizon() const override { return 3.0; }
  const std::string& problem_name() const override { return name_; }
  GameMode mode() const override { return mode_; }
  double value(const Vec& x, double) const override { return a_.dot(x) + b_; }
  FieldSample sample(const Vec& x, double tau) const override {
    return FieldSample{value(x, tau), 0.0, a_};
  }
  std::uint64_t clamp_count() const override { return 0; }

 private:
  std::string name_ = "dubins3d_rel";
  Vec a_;
  double b_;
  GameMode mode_;
};

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

TEST_CASE("gradient actions are the bang-bang inputs of the relative game") {
  ProblemPtr rel = load_problem("dubins3d_rel");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec x = madr::testing::uniform_state(*rel, rng);
    const Vec p = vec({u(rng), u(rng), u(rng)});
    // g = (y, -x, -1) for the evader, w = (0, 0, 1) for the pursuer.
    const double cu = x[1] * p[0] - x[0] * p[1] - p[2];
    CHECK(gradient_action(*rel, x, p, Player::kEvader)[0] == 1.9 * sgn(cu));
    CHECK(gradient_action(*rel, x, p, Player::kPursuer)[0] == -1.9 * sgn(p[2]));
  }
}

TEST_CASE("a relative value drives the two-vehicle game through the adapter") {
  ProblemPtr rel = load_problem("dubins3d_rel");
  ProblemPtr pair = load_problem("dubins6d");
  auto field = std::make_shared<LinearField>(vec({0.3, -0.7, 0.2}), 0.0);
  const GradientPolicy ev(Player::kEvader, field, rel, StateAdapter::kDubinsRelative,
                          pair->dynamics->control_box());
  const GradientPolicy pu(Player::kPursuer, field, rel, StateAdapter::kDubinsRelative,
                          pair->dynamics->disturbance_box());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec s = madr::testing::uniform_state(*pair, rng);
    const Vec r = dubins_relative_state(s);
    CHECK(ev.action(s, 1.0, 0) == gradient_action(*rel, r, field->sample(r, 1.0).grad_x,
                                                  Player::kEvader));
    CHECK(pu.action(s, 1.0, 0) == gradient_action(*rel, r, field->sample(r, 1.0).grad_x,
                                                  Player::kPursuer));
  }
}

TEST_CASE("follow filter switches on the pursuit input magnitude") {
  ProblemPtr rel = load_problem("dubins3d_rel");
  const InputBox box = rel->dynamics->disturbance_box();
  // Follow gradient asks for d = +1.9, the pursuit gradient for d = -1.9.
  auto follow = std::make_shared<LinearField>(vec({0.0, 0.0, -1.0}), 0.0, GameMode::kFollow);
  auto flat = std::make_shared<LinearField>(vec({0.5, 0.5, 0.0}), 0.0);
  auto steep = std::make_shared<LinearField>(vec({0.0, 0.0, 2.0}), 0.0);
  const Vec x = vec({0.8, -0.4, 0.3});

  // w = (0, 0, 1): a gradient without a heading component gives magnitude 0.
  const FollowFilteredPolicy off(flat, follow, rel, StateAdapter::kIdentity, box);
  CHECK(off.pursuit_magnitude(x) == 0.0);
  CHECK_FALSE(off.uses_pursuit_branch(x));
  CHECK(off.action(x, 1.0, 0)[0] == 1.9);

  const FollowFilteredPolicy on(steep, follow, rel, StateAdapter::kIdentity, box);
  CHECK(on.pursuit_magnitude(x) == doctest::Approx(2.0 * 1.9));
  CHECK(on.uses_pursuit_branch(x));
  CHECK(on.action(x, 1.0, 0)[0] == -1.9);

  // The threshold is inclusive.
  const FollowFilteredPolicy edge(steep, follow, rel, StateAdapter::kIdentity, box, 3.8);
  CHECK(edge.uses_pursuit_branch(x));
  CHECK_THROWS_AS(FollowFilteredPolicy(steep, follow, rel, StateAdapter::kIdentity, box, -1.0),
                  ConfigError);
}

TEST_CASE("scripted policies hold their last column and clamp") {
  const InputBox box = InputBox::symmetric(1, 1.0);
  Mat seq(1, 3);
  seq << 0.5, -2.0, 0.25;
  const ScriptedPolicy p(Player::kEvader, box, seq);
  const Vec x = Vec::Zero(1);
  CHECK(p.action(x, 1.0, 0)[0] == 0.5);
  CHECK(p.action(x, 1.0, 1)[0] == -1.0);
  CHECK(p.action(x, 1.0, 2)[0] == 0.25);
  CHECK(p.action(x, 1.0, 50)[0] == 0.25);
}

TEST_CASE("external inputs start at the box center and are clamped") {
  const InputBox box(vec({0.0}), vec({2.0}));
  ExternalPolicy p(Player::kPursuer, box);
  CHECK(p.action(Vec::Zero(1), 1.0, 0)[0] == 1.0);
  p.set_input(vec({5.0}));
  CHECK(p.input()[0] == 2.0);
  CHECK_THROWS_AS(p.set_input(vec({1.0, 1.0})), ContractError);
}

TEST_CASE("policy descriptors build the requested kind and reject bad ones") {
  madr::testing::TempDir dir("policy");
  ProblemPtr rel = load_problem("dubins3d_rel");
  ProblemPtr pair = load_problem("dubins6d");
  solve_hji_vi(*rel, GridSpec::for_problem(*rel, {11, 11, 8}, 0.5)).save(dir / "v.grid");
  FieldCache cache;

  PolicyPtr g = make_policy(json{{"kind", "grid_gradient"}, {"role", "pursuer"}, {"source", "v.grid"}},
                            rel, dir.path(), cache);
  CHECK(g->kind() == PolicyKind::kGridGradient);
  CHECK(g->role() == Player::kPursuer);
  // Same file, same cached field.
  CHECK(cache.get(dir / "v.grid") == cache.get(dir / "." / "v.grid"));

  PolicyPtr lifted = make_policy(
      json{{"kind", "grid_gradient"}, {"role", "evader"}, {"source", "v.grid"}}, pair, dir.path(),
      cache);
  CHECK(lifted->describe()["adapter"] == "dubins_relative");

  PolicyPtr s = make_policy(json{{"kind", "scripted"}, {"role", "evader"},
                                 {"sequence", json::array({json::array({0.1})})}},
                            rel, dir.path(), cache);
  CHECK(s->action(Vec::Zero(3), 1.0, 7)[0] == doctest::Approx(0.1));

  CHECK_THROWS_AS(make_policy(json{{"kind", "telepathy"}}, rel, dir.path(), cache), ConfigError);
  CHECK_THROWS_AS(make_policy(json{{"kind", "grid_gradient"}, {"role", "evader"}}, rel, dir.path(),
                              cache),
                  ConfigError);
  CHECK_THROWS_AS(make_policy(json{{"kind", "net_gradient"}, {"role", "evader"},
                                   {"source", "v.grid"}},
                              rel, dir.path(), cache),
                  ConfigError);
  CHECK_THROWS_AS(make_policy(json{{"kind", "grid_gradient"}, {"role", "evader"},
                                   {"source", "missing.grid"}},
                              rel, dir.path(), cache),
                  IoError);
  CHECK_THROWS_AS(make_policy(json{{"kind", "follow_filtered"}, {"role", "evader"},
                                   {"source", "v.grid"}, {"follow_source", "v.grid"}},
                              rel, dir.path(), cache),
                  ConfigError);
  CHECK_THROWS_AS(make_policy(json{{"kind", "external"}, {"colour", 1}}, rel, dir.path(), cache),
                  ConfigError);
}

TEST_CASE("online MPC actions are deterministic per step") {
  ProblemPtr rel = load_problem("dubins3d_rel");
  auto field = std::make_shared<LinearField>(vec({0.3, -0.7, 0.2}), 0.0);
  SamplerConfig c;
  c.rollouts = 16;
  c.refinements = 2;
  const MpcOnlinePolicy p(Player::kEvader, field, rel, StateAdapter::kIdentity,
                          rel->dynamics->control_box(), c, 9);
  const Vec x = vec({0.5, 0.5, 0.1});
  const Vec a = p.action(x, 2.0, 4);
  CHECK(a == p.action(x, 2.0, 4));
  CHECK(rel->dynamics->control_box().contains(a));
}
