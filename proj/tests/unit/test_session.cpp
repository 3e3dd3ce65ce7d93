// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <thread>

#include "doctest.h"
#include "madr/arena.hpp"
#include "madr/errors.hpp"
#include "madr/session.hpp"
#include "support/test_support.hpp"

using namespace madr;

namespace {

// Piecewise inputs in [-1.9, 1.9] so both turning directions get exercised.
Mat human_script(int steps) {
  Mat m(1, steps);
  for (int k = 0; k < steps; ++k) m(0, k) = 1.9 * std::sin(0.13 * k) * (k % 17 < 9 ? 1.0 : -0.6);
  return m;
}

struct GridDir {
  madr::testing::TempDir dir{"session"};
  GridDir() {
    ProblemPtr rel = load_problem("dubins3d_rel");
    solve_hji_vi(*rel, GridSpec::for_problem(*rel, {21, 21, 16}, 0.5)).save(dir / "rel.grid");
  }
};

json base_request() {
  return {{"problem", "dubins6d"},
          {"evader_policy", {{"kind", "grid_gradient"}, {"source", "rel.grid"}}},
          {"pursuer_policy", {{"kind", "grid_gradient"}, {"source", "rel.grid"}}},
          {"role", "evader"},
          {"tick", 0.02},
          {"duration", 6.0},
          {"initial_state", {-1.0, 0.0, 0.0, 1.0, 0.5, kPi}},
          {"display_value", {{"source", "rel.grid"}}}};
}

Vec state_of(const json& snap) {
  const auto v = snap.at("state").get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("a human session replays the offline episode bit for bit") {
  GridDir g;
  struct Scenario {
    std::string wall;
    json x0;
    bool straight;
  };
  // A chase that ends in capture, then the evader driving into the -x wall.
  const json chase = {-1.0, 0.0, 0.0, 1.0, 0.5, kPi};
  const json wall_run = {-2.5, 1.5, kPi, 2.0, -1.5, 0.0};
  for (const Scenario& sc : {Scenario{"terminate", chase, false}, Scenario{"clamp", chase, false},
                             Scenario{"terminate", wall_run, true},
                             Scenario{"clamp", wall_run, true}}) {
    const std::string wall = sc.wall;
    SessionManager mgr(json::object(), g.dir.path());
    json req = base_request();
    req["wall_mode"] = wall;
    req["initial_state"] = sc.x0;
    auto s = mgr.create(req);
    const int S = 300;
    const Mat script = sc.straight ? Mat::Zero(1, S) : human_script(S);

    // Offline: the same machine descriptor, the human as a scripted evader.
    ProblemPtr game = load_problem("dubins6d");
    FieldCache cache;
    json pd = req["pursuer_policy"];
    pd["role"] = "pursuer";
    const PolicyPtr pursuer = make_policy(pd, game, g.dir.path(), cache);
    const ScriptedPolicy evader(Player::kEvader, game->dynamics->control_box(), script);
    EpisodeOptions o;
    o.duration = 6.0;
    o.step = 0.02;
    o.wall_mode = parse_wall_mode(wall);
    const RolloutRecord rec = simulate_episode(*game, evader, *pursuer, state_of(s->snapshot()), o);

    json snap = s->snapshot();
    int k = 0;
    while (snap["outcome"].is_null()) {
      REQUIRE(k < S);
      const json ack = s->handle_message({{"type", "input"}, {"channels", {script(0, k)}}});
      REQUIRE(ack["type"] == "state");
      snap = s->tick();
      ++k;
      REQUIRE(snap["tick"].get<int>() == k);
      const Vec x = state_of(snap);
      for (int i = 0; i < 6; ++i) REQUIRE(x[i] == rec.states(i, k));
      REQUIRE(snap["ell"].get<double>() == rec.ell[k]);
    }
    MESSAGE(wall << ": " << k << " ticks, outcome " << snap["outcome"].dump());
    CHECK(k == rec.states.cols() - 1);
    CHECK(snap["outcome"]["kind"] == outcome_name(rec.outcome.kind));
    CHECK(snap["outcome"]["time"].get<double>() == doctest::Approx(rec.outcome.time));
    CHECK(snap["outcome"]["player"] == player_name(rec.outcome.player));
    // Ticks after the end are no-ops.
    CHECK(s->tick()["tick"].get<int>() == k);
    CHECK(s->finished());
  }
}

TEST_CASE("capture is reported on the first tick inside the target") {
  GridDir g;
  SessionManager mgr(json::object(), g.dir.path());
  json req = base_request();
  // Head-on at 0.5 apart: the gap closes at 1.0 per second.
  req["initial_state"] = {0.0, 0.0, 0.0, 0.5, 0.0, kPi};
  req["pursuer_policy"] = {{"kind", "scripted"}, {"sequence", {{0.0}}}};
  auto s = mgr.create(req);
  double gap = 0.5;
  int expected = 0;
  while (gap - 0.36 > 0.0) {
    gap -= 0.02 * 1.0;
    ++expected;
  }
  json snap = s->snapshot();
  CHECK(snap["outcome"].is_null());
  int k = 0;
  while (snap["outcome"].is_null()) {
    snap = s->tick();
    ++k;
  }
  CHECK(k == expected);
  CHECK(snap["outcome"]["kind"] == "captured");
  CHECK(snap["ell"].get<double>() <= 0.0);
  CHECK(snap["outcome"]["time"].get<double>() == doctest::Approx(0.02 * expected));

  // Starting inside the target ends the episode before any tick.
  req["initial_state"] = {0.0, 0.0, 0.0, 0.1, 0.0, kPi};
  CHECK(mgr.create(req)->snapshot()["outcome"]["kind"] == "captured");
}

TEST_CASE("malformed messages leave the session untouched") {
  GridDir g;
  SessionManager mgr(json::object(), g.dir.path());
  auto s = mgr.create(base_request());
  s->handle_message({{"type", "input"}, {"channels", {1.0}}});
  s->tick();
  const json before = s->snapshot();
  for (const std::string text :
       {"not json", "[1,2]", R"({"kind":"input"})", R"({"type":"input"})",
        R"({"type":"input","channels":[1,2]})", R"({"type":"input","channels":["a"]})",
        R"({"type":"input","channels":[1e400]})", R"({"type":"role","value":"referee"})",
        R"({"type":"role"})", R"({"type":"dance"})"}) {
    const json r = s->handle_text(text);
    CHECK_MESSAGE(r["type"] == "error", text);
    CHECK(r["message"].is_string());
    CHECK(s->snapshot() == before);
  }
  // The last good input (1.0) is still held: the next tick matches a
  // session that never saw the garbage.
  auto clean = mgr.create(base_request());
  clean->handle_message({{"type", "input"}, {"channels", {1.0}}});
  clean->tick();
  CHECK(s->tick()["state"] == clean->tick()["state"]);
}

TEST_CASE("inputs default to the box center and are clamped") {
  GridDir g;
  SessionManager mgr(json::object(), g.dir.path());
  json req = base_request();
  req["pursuer_policy"] = {{"kind", "scripted"}, {"sequence", {{0.0}}}};
  auto s = mgr.create(req);
  const Vec x0 = state_of(s->snapshot());
  const Vec x1 = state_of(s->tick());
  // Zero turn rate: heading unchanged, straight-line motion at 0.5.
  CHECK(x1[2] == x0[2]);
  CHECK(x1[0] == doctest::Approx(x0[0] + 0.02 * 0.5));
  s->handle_message({{"type", "input"}, {"channels", {50.0}}});
  const Vec x2 = state_of(s->tick());
  CHECK(x2[2] == doctest::Approx(x1[2] + 0.02 * 1.9));
}

TEST_CASE("reset and role switches restart the episode") {
  GridDir g;
  SessionManager mgr(json::object(), g.dir.path());
  auto s = mgr.create(base_request());
  const json start = s->snapshot();
  CHECK(start["role"] == "evader");
  CHECK(start["value"].is_number());
  CHECK(start["states"]["evader"].size() == 3);
  CHECK(start["states"]["pursuer"].size() == 3);
  s->handle_message({{"type", "input"}, {"channels", {1.0}}});
  for (int i = 0; i < 5; ++i) s->tick();
  const json r = s->handle_message({{"type", "reset"}});
  CHECK(r["tick"] == 0);
  CHECK(r["state"] == start["state"]);
  // The held input went back to center.
  CHECK(s->tick()["state"][2] == start["state"][2]);
  const json p = s->handle_message({{"type", "role"}, {"value", "pursuer"}});
  CHECK(p["role"] == "pursuer");
  CHECK(p["tick"] == 0);
  s->tick();
  CHECK(s->tick_count() == 1);
}

TEST_CASE("sessions are isolated and individually addressable") {
  GridDir g;
  SessionManager mgr(base_request(), g.dir.path());
  auto a = mgr.create(json::object());
  auto b = mgr.create({{"role", "pursuer"}});
  CHECK(a->id() != b->id());
  CHECK(mgr.find(a->id()) == a);
  CHECK(b->snapshot()["role"] == "pursuer");
  std::thread ta([&] {
    for (int i = 0; i < 50; ++i) a->tick();
  });
  std::thread tb([&] {
    for (int i = 0; i < 20; ++i) b->tick();
  });
  ta.join();
  tb.join();
  CHECK(a->tick_count() == 50);
  CHECK(b->tick_count() == 20);
  CHECK(mgr.all().size() == 2);
  CHECK(mgr.remove(a->id()));
  CHECK_FALSE(mgr.remove(a->id()));
  CHECK(mgr.find(a->id()) == nullptr);
}

TEST_CASE("bad session requests are config errors") {
  GridDir g;
  SessionManager mgr(json::object(), g.dir.path());
  json req = base_request();
  req["colour"] = "red";
  CHECK_THROWS_AS(mgr.create(req), ConfigError);
  req = base_request();
  req["initial_state"] = {9.0, 0.0, 0.0, 1.0, 0.5, 0.0};
  CHECK_THROWS_AS(mgr.create(req), ConfigError);
  req = base_request();
  req.erase("pursuer_policy");
  CHECK_THROWS_AS(mgr.create(req), ConfigError);
  req = base_request();
  req["tick"] = 0.0;
  CHECK_THROWS_AS(mgr.create(req), ConfigError);
  req = base_request();
  req["display_value"] = {{"source", "missing.grid"}};
  CHECK_THROWS_AS(mgr.create(req), IoError);
}
