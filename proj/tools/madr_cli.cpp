// SPDX-License-Identifier: Apache-2.0
// madr: command-line entry point for all workflows and the play service.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "madr/madr.h"

using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure.
int exit_code(madr_status s) {
  switch (s) {
    case MADR_OK: return 0;
    case MADR_ERR_NUMERICAL:
    case MADR_ERR_ESTIMATION: return 3;
    case MADR_ERR_INTERNAL: return 1;
    default: return 2;
  }
}

struct CliError {
  madr_status status;
  std::string message;
};

std::string take(char* s) {
  std::string out = s ? s : "";
  madr_string_free(s);
  return out;
}

void check(madr_status s) {
  if (s != MADR_OK) throw CliError{s, madr_last_error()};
}

json call(madr_status (*fn)(const char*, char**), const json& request) {
  char* out = nullptr;
  check(fn(request.dump().c_str(), &out));
  return json::parse(take(out));
}

std::string config_path(const std::string& path) {
  if (std::ifstream(path).good()) return path;
  if (const char* dir = std::getenv("MADR_CONFIG_DIR")) {
    const std::string candidate = std::string(dir) + "/" + path;
    if (std::ifstream(candidate).good()) return candidate;
  }
  return path;
}

json read_json(const std::string& path) {
  std::ifstream in(config_path(path));
  if (!in) throw CliError{MADR_ERR_CONFIG, "cannot open '" + path + "'"};
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw CliError{MADR_ERR_CONFIG, "'" + path + "' is not valid JSON"};
  return j;
}

// A flag value that is either inline JSON or a path to a JSON file.
json json_arg(const std::string& text) {
  if (!text.empty() && (text.front() == '{' || text.front() == '[')) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CliError{MADR_ERR_CONFIG, "invalid inline JSON"};
    return j;
  }
  return read_json(text);
}

std::string dirname_of(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? "." : path.substr(0, pos);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliError{MADR_ERR_IO, "cannot write '" + path + "'"};
  out << text;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

// --- play service --------------------------------------------------------------------

// Latest snapshot per session plus a sequence number for event streams.
class EventHub {
 public:
  void publish(const std::string& id, std::string snapshot) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto& e = entries_[id];
      e.snapshot = std::move(snapshot);
      ++e.seq;
    }
    cv_.notify_all();
  }
  void close(const std::string& id) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      entries_[id].closed = true;
    }
    cv_.notify_all();
  }
  // Waits for a snapshot newer than `seq`; returns false on timeout.
  bool wait(const std::string& id, std::uint64_t& seq, std::string& snapshot, bool& closed) {
    std::unique_lock<std::mutex> lock(mu_);
    const bool fresh = cv_.wait_for(lock, std::chrono::seconds(1), [&] {
      auto it = entries_.find(id);
      return stopping_ || it == entries_.end() || it->second.seq != seq || it->second.closed;
    });
    auto it = entries_.find(id);
    if (stopping_ || it == entries_.end()) {
      closed = true;
      return false;
    }
    closed = it->second.closed;
    if (!fresh || it->second.seq == seq) return false;
    seq = it->second.seq;
    snapshot = it->second.snapshot;
    return true;
  }
  void stop() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
  }

 private:
  struct Entry {
    std::string snapshot;
    std::uint64_t seq = 0;
    bool closed = false;
  };
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Entry> entries_;
  bool stopping_ = false;
};

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void reply(httplib::Response& res, madr_status s, const std::string& body) {
  if (s == MADR_OK) {
    res.set_content(body, "application/json");
    return;
  }
  res.status = s == MADR_ERR_NOT_FOUND ? 404 : (s == MADR_ERR_INTERNAL ? 500 : 400);
  res.set_content(json{{"type", "error"}, {"message", madr_last_error()}}.dump(), "application/json");
}

struct ServeOptions {
  std::string config;
  std::string problem;
  std::string evader_policy;
  std::string pursuer_policy;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string assets;
  std::string tick_mode = "realtime";
  double tick = 0.02;
};

int play_serve(const ServeOptions& o) {
  json defaults = o.config.empty() ? json::object() : read_json(o.config);
  const std::string base_dir = o.config.empty() ? "." : dirname_of(config_path(o.config));
  if (!o.problem.empty()) defaults["problem"] = o.problem;
  if (!o.evader_policy.empty()) defaults["evader_policy"] = json_arg(o.evader_policy);
  if (!o.pursuer_policy.empty()) defaults["pursuer_policy"] = json_arg(o.pursuer_policy);
  const bool realtime = o.tick_mode == "realtime";
  if (!realtime && o.tick_mode != "lockstep") {
    throw CliError{MADR_ERR_CONFIG, "--tick-mode must be realtime or lockstep"};
  }
  if (!(o.tick > 0.0)) throw CliError{MADR_ERR_CONFIG, "--tick must be positive"};
  defaults["tick"] = o.tick;

  madr_sessions* sessions = nullptr;
  check(madr_sessions_create(defaults.dump().c_str(), base_dir.c_str(), &sessions));
  std::unique_ptr<madr_sessions, void (*)(madr_sessions*)> guard(sessions, madr_sessions_free);
  EventHub hub;
  httplib::Server server;

  if (!o.assets.empty() && !server.set_mount_point("/", o.assets)) {
    throw CliError{MADR_ERR_CONFIG, "--assets directory '" + o.assets + "' does not exist"};
  }

  server.Get("/api/health", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"ok", true}, {"tick_mode", o.tick_mode}, {"tick", o.tick}}.dump(),
                    "application/json");
  });

  server.Post("/api/session", [&](const httplib::Request& req, httplib::Response& res) {
    json request = json::parse(req.body.empty() ? "{}" : req.body, nullptr, false);
    if (request.is_discarded() || !request.is_object()) {
      res.status = 400;
      res.set_content(json{{"type", "error"}, {"message", "request is not a JSON object"}}.dump(),
                      "application/json");
      return;
    }
    // Every session advances at the server tick.
    request["tick"] = o.tick;
    char* out = nullptr;
    const madr_status s = madr_session_open(sessions, request.dump().c_str(), &out);
    const std::string body = take(out);
    if (s == MADR_OK) {
      hub.publish(json::parse(body)["session"].get<std::string>(), body);
      res.status = 201;
    }
    reply(res, s, body);
  });

  server.Post(R"(/api/session/([^/]+)/message)",
              [&](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                char* out = nullptr;
                const madr_status s = madr_session_message(sessions, id.c_str(), req.body.c_str(), &out);
                const std::string body = take(out);
                if (s == MADR_OK && json::parse(body).value("type", "") == "state") {
                  hub.publish(id, body);
                }
                reply(res, s, body);
              });

  server.Post(R"(/api/session/([^/]+)/tick)", [&](const httplib::Request& req, httplib::Response& res) {
    if (realtime) {
      res.status = 409;
      res.set_content(json{{"type", "error"}, {"message", "server ticks in realtime mode"}}.dump(),
                      "application/json");
      return;
    }
    const std::string id = req.matches[1];
    char* out = nullptr;
    const madr_status s = madr_session_tick(sessions, id.c_str(), &out);
    const std::string body = take(out);
    if (s == MADR_OK) hub.publish(id, body);
    reply(res, s, body);
  });

  server.Get(R"(/api/session/([^/]+)/state)", [&](const httplib::Request& req, httplib::Response& res) {
    char* out = nullptr;
    const madr_status s = madr_session_snapshot(sessions, req.matches[1].str().c_str(), &out);
    reply(res, s, take(out));
  });

  server.Delete(R"(/api/session/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const madr_status s = madr_session_close(sessions, id.c_str());
    if (s == MADR_OK) hub.close(id);
    reply(res, s, json{{"closed", id}}.dump());
  });

  server.Get(R"(/api/session/([^/]+)/events)", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    char* out = nullptr;
    const madr_status s = madr_session_snapshot(sessions, id.c_str(), &out);
    const std::string first = take(out);
    if (s != MADR_OK) {
      reply(res, s, first);
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto seq = std::make_shared<std::uint64_t>(0);
    auto sent_first = std::make_shared<bool>(false);
    res.set_chunked_content_provider(
        "text/event-stream", [&hub, id, seq, sent_first, first](std::size_t, httplib::DataSink& sink) {
          if (!*sent_first) {
            *sent_first = true;
            const std::string msg = "data: " + first + "\n\n";
            return sink.write(msg.data(), msg.size());
          }
          std::string snapshot;
          bool closed = false;
          if (hub.wait(id, *seq, snapshot, closed)) {
            const std::string msg = "data: " + snapshot + "\n\n";
            if (!sink.write(msg.data(), msg.size())) return false;
            if (json::parse(snapshot)["outcome"].is_null()) return true;
            sink.done();
            return true;
          }
          if (closed) {
            sink.done();
            return true;
          }
          const std::string keepalive = ": keepalive\n\n";
          return sink.write(keepalive.data(), keepalive.size());
        });
  });

  std::atomic<bool> running{true};
  std::thread ticker;
  if (realtime) {
    ticker = std::thread([&] {
      auto next = std::chrono::steady_clock::now();
      const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(o.tick));
      while (running.load()) {
        next += period;
        char* list = nullptr;
        if (madr_session_list(sessions, &list) == MADR_OK) {
          for (const auto& id : json::parse(take(list))) {
            const std::string sid = id.get<std::string>();
            char* snap = nullptr;
            if (madr_session_snapshot(sessions, sid.c_str(), &snap) != MADR_OK) continue;
            if (!json::parse(take(snap))["outcome"].is_null()) continue;
            char* out = nullptr;
            if (madr_session_tick(sessions, sid.c_str(), &out) == MADR_OK) hub.publish(sid, take(out));
          }
        }
        std::this_thread::sleep_until(next);
      }
    });
  }

  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  int port = o.port;
  if (port == 0) {
    port = server.bind_to_any_port(o.host);
  } else if (!server.bind_to_port(o.host, port)) {
    port = -1;
  }
  if (port < 0) {
    running = false;
    if (ticker.joinable()) ticker.join();
    throw CliError{MADR_ERR_CONFIG, "cannot bind " + o.host + ":" + std::to_string(o.port)};
  }
  std::cout << "listening on http://" << o.host << ":" << port << " (" << o.tick_mode << ")"
            << std::endl;
  server.listen_after_bind();
  running = false;
  hub.stop();
  if (ticker.joinable()) ticker.join();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability value learning toolkit (libmadr " + std::string(madr_version()) + ")"};
  app.require_subcommand(1);

  // solve-grid
  std::string sg_problem, sg_grid, sg_out, sg_mode = "avoid";
  double sg_dt = 0.0, sg_cfl = 0.0;
  int sg_substeps = -1;
  auto* sg = app.add_subcommand("solve-grid", "Solve the HJI variational inequality on a grid");
  sg->add_option("--problem", sg_problem, "Problem name or config file")->required();
  sg->add_option("--grid", sg_grid, "Node counts (e.g. 101x101x60) or grid spec file")->required();
  sg->add_option("--out", sg_out, "Output grid file")->required();
  sg->add_option("--dt", sg_dt, "Stored slice interval (s)");
  sg->add_option("--substeps", sg_substeps, "Euler substeps per slice (0 = CFL auto)");
  sg->add_option("--cfl-safety", sg_cfl, "CFL safety factor");
  sg->add_option("--mode", sg_mode, "avoid|follow");

  // train
  std::string tr_problem, tr_config, tr_out;
  bool tr_follow = false, tr_quiet = false;
  auto* tr = app.add_subcommand("train", "Train a value network");
  tr->add_option("--problem", tr_problem, "Problem name or config file");
  tr->add_option("--config", tr_config, "Training config file")->required();
  tr->add_option("--out-dir", tr_out, "Output directory")->required();
  tr->add_flag("--follow", tr_follow, "Train the follow-game value");
  tr->add_flag("--quiet", tr_quiet, "Do not echo metrics");

  // collect-mpc
  std::string cm_problem, cm_net, cm_persp = "control", cm_out, cm_sampler;
  std::uint64_t cm_seed = 0;
  double cm_tau_lo = 0.0, cm_tau_hi = -1.0, cm_grad_tau = -1.0;
  auto* cm = app.add_subcommand("collect-mpc", "Label states with sampled MPC value estimates");
  cm->add_option("--problem", cm_problem, "Problem name or config file")->required();
  cm->add_option("--net", cm_net, "Value source (checkpoint or grid)")->required();
  cm->add_option("--perspective", cm_persp, "control|disturbance");
  cm->add_option("--out", cm_out, "Output dataset file")->required();
  cm->add_option("--sampler", cm_sampler, "Sampler config (file or inline JSON)");
  cm->add_option("--seed", cm_seed, "Seed");
  cm->add_option("--tau-lo", cm_tau_lo, "Lower time-to-go");
  cm->add_option("--tau-hi", cm_tau_hi, "Upper time-to-go (default horizon)");
  cm->add_option("--gradient-tau", cm_grad_tau, "Time-to-go for opponent gradients");

  // eval-brt
  std::string ev_net, ev_ref, ev_window, ev_out;
  double ev_level = 0.0;
  auto* ev = app.add_subcommand("eval-brt", "Compare a value source with a reference grid");
  ev->add_option("--net", ev_net, "Candidate checkpoint or grid")->required();
  ev->add_option("--reference", ev_ref, "Reference grid")->required();
  ev->add_option("--window", ev_window, "JSON list of [lo, hi] pairs");
  ev->add_option("--level", ev_level, "Level set");
  ev->add_option("--out", ev_out, "Write the report here");

  // matchup
  std::string mu_config, mu_out;
  auto* mu = app.add_subcommand("matchup", "Play every evader against every pursuer");
  mu->add_option("--config", mu_config, "Matchup config")->required();
  mu->add_option("--out", mu_out, "Output directory")->required();

  // safe-rate
  std::string sr_config, sr_out;
  auto* sr = app.add_subcommand("safe-rate", "Adversarial safe rate of a value network");
  sr->add_option("--config", sr_config, "Safe-rate config")->required();
  sr->add_option("--out", sr_out, "Write the report here");

  // simulate
  std::string si_config, si_out, si_csv;
  auto* si = app.add_subcommand("simulate", "Run one episode");
  si->add_option("--config", si_config, "Episode config")->required();
  si->add_option("--out", si_out, "Write the rollout JSON here");
  si->add_option("--csv", si_csv, "Write a step-per-row CSV here");

  // play-serve
  ServeOptions so;
  auto* ps = app.add_subcommand("play-serve", "Serve interactive human-vs-policy sessions");
  ps->add_option("--config", so.config, "Session defaults file");
  ps->add_option("--problem", so.problem, "Problem name or config file");
  ps->add_option("--evader-policy", so.evader_policy, "Machine evader descriptor (file or JSON)");
  ps->add_option("--pursuer-policy", so.pursuer_policy, "Machine pursuer descriptor (file or JSON)");
  ps->add_option("--host", so.host, "Bind address");
  ps->add_option("--port", so.port, "Port (0 picks a free one)");
  ps->add_option("--assets", so.assets, "Static web client directory");
  ps->add_option("--tick-mode", so.tick_mode, "realtime|lockstep");
  ps->add_option("--tick", so.tick, "Tick period (s)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sg) {
      json r = {{"problem", sg_problem}, {"grid", sg_grid}, {"out", sg_out}, {"mode", sg_mode}};
      if (sg_dt > 0.0) r["dt"] = sg_dt;
      if (sg_substeps >= 0) r["substeps"] = sg_substeps;
      if (sg_cfl > 0.0) r["cfl_safety"] = sg_cfl;
      print(call(madr_solve_grid, r));
    } else if (*tr) {
      json r = {{"config_path", tr_config}, {"out_dir", tr_out}, {"follow", tr_follow}};
      if (!tr_problem.empty()) r["problem"] = tr_problem;
      char* out = nullptr;
      madr_progress_fn fn = nullptr;
      if (!tr_quiet) {
        fn = [](const char* record, void*) { std::cout << record << std::endl; };
      }
      check(madr_train(r.dump().c_str(), fn, nullptr, &out));
      print(json::parse(take(out)));
    } else if (*cm) {
      json r = {{"problem", cm_problem}, {"net", cm_net},   {"perspective", cm_persp},
                {"out", cm_out},         {"seed", cm_seed}, {"tau_lo", cm_tau_lo},
                {"gradient_tau", cm_grad_tau}};
      if (cm_tau_hi >= 0.0) r["tau_hi"] = cm_tau_hi;
      if (!cm_sampler.empty()) r["sampler"] = json_arg(cm_sampler);
      print(call(madr_collect_mpc, r));
    } else if (*ev) {
      json r = {{"candidate", ev_net}, {"reference", ev_ref}, {"level", ev_level}};
      if (!ev_window.empty()) r["window"] = json_arg(ev_window);
      const json rep = call(madr_eval_brt, r);
      if (!ev_out.empty()) write_file(ev_out, rep.dump(2) + "\n");
      print(rep);
    } else if (*mu) {
      json r = read_json(mu_config);
      if (!r.contains("base_dir")) r["base_dir"] = dirname_of(config_path(mu_config));
      r["out_dir"] = mu_out;
      const json table = call(madr_matchup, r);
      std::ifstream txt(mu_out + "/matchup.txt");
      std::cout << txt.rdbuf();
      std::cout << "wrote " << mu_out << "/matchup.json (" << table.value("seconds", 0.0) << " s)"
                << std::endl;
    } else if (*sr) {
      json r = read_json(sr_config);
      if (!r.contains("base_dir")) r["base_dir"] = dirname_of(config_path(sr_config));
      const json rep = call(madr_safe_rate, r);
      if (!sr_out.empty()) write_file(sr_out, rep.dump(2) + "\n");
      json summary = rep;
      summary.erase("gaps");
      print(summary);
    } else if (*si) {
      json r = read_json(si_config);
      if (!r.contains("base_dir")) r["base_dir"] = dirname_of(config_path(si_config));
      if (!si_csv.empty()) r["csv"] = si_csv;
      const json rec = call(madr_simulate, r);
      if (!si_out.empty()) write_file(si_out, rec.dump() + "\n");
      print(rec["outcome"]);
    } else if (*ps) {
      return play_serve(so);
    }
  } catch (const CliError& e) {
    std::cerr << "error (" << madr_status_name(e.status) << "): " << e.message << std::endl;
    return exit_code(e.status);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
