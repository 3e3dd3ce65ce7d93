// SPDX-License-Identifier: Apache-2.0
#include "madr/session.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "madr/errors.hpp"

namespace madr {

namespace {

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec parse_vec(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Player other(Player p) { return p == Player::kEvader ? Player::kPursuer : Player::kEvader; }

json error_message(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

}  // namespace

SessionConfig SessionConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("session: request must be a JSON object");
  check_keys(j,
             {"problem", "evader_policy", "pursuer_policy", "role", "tick", "duration", "wall_mode",
              "initial_state", "display_value"},
             "session");
  SessionConfig c;
  c.base_dir = base_dir;
  if (!j.contains("problem")) throw ConfigError("session: 'problem' is required");
  c.problem = load_problem(j["problem"].get<std::string>());
  if (j.contains("evader_policy")) c.evader_policy = j["evader_policy"];
  if (j.contains("pursuer_policy")) c.pursuer_policy = j["pursuer_policy"];
  if (j.contains("role")) c.human_role = parse_player(j["role"].get<std::string>());
  c.tick = j.value("tick", c.tick);
  c.duration = j.value("duration", c.duration);
  if (j.contains("wall_mode")) c.wall_mode = parse_wall_mode(j["wall_mode"].get<std::string>());
  if (j.contains("display_value")) c.display_value = j["display_value"];
  if (!(c.tick > 0.0) || !std::isfinite(c.tick)) throw ConfigError("session: tick must be positive");
  if (!(c.duration >= 0.0) || !std::isfinite(c.duration)) {
    throw ConfigError("session: duration must be >= 0");
  }
  if (j.contains("initial_state")) {
    c.initial_state = parse_vec(j["initial_state"], "session: initial_state");
    if (c.initial_state.size() != c.problem->state_dim()) {
      throw ConfigError("session: initial_state needs " + std::to_string(c.problem->state_dim()) +
                        " entries");
    }
  } else {
    c.initial_state = Vec(c.problem->state_dim());
    for (int i = 0; i < c.problem->state_dim(); ++i) {
      c.initial_state[i] = 0.5 * (c.problem->state_bounds[i].lo + c.problem->state_bounds[i].hi);
    }
  }
  return c;
}

Session::Session(std::string id, SessionConfig config, std::shared_ptr<FieldCache> cache)
    : id_(std::move(id)), config_(std::move(config)), cache_(std::move(cache)) {
  require(config_.problem != nullptr, "Session: missing problem");
  require(cache_ != nullptr, "Session: missing field cache");
  if (config_.wall_mode == WallMode::kTerminate &&
      first_out_of_bounds_dim(*config_.problem, config_.initial_state) >= 0) {
    throw ConfigError("session: initial state is outside the state bounds");
  }
  if (!config_.display_value.is_null()) {
    const json& dv = config_.display_value;
    if (!dv.is_object() || !dv.contains("source")) {
      throw ConfigError("session: display_value needs a 'source'");
    }
    check_keys(dv, {"source", "adapter"}, "session.display_value");
    std::filesystem::path p = dv["source"].get<std::string>();
    if (p.is_relative()) p = config_.base_dir / p;
    display_field_ = cache_->get(p);
    if (dv.contains("adapter")) {
      display_adapter_ = parse_adapter(dv["adapter"].get<std::string>());
    } else if (display_field_->state_dim() != config_.problem->state_dim()) {
      display_adapter_ = StateAdapter::kDubinsRelative;
    }
    const int expected =
        display_adapter_ == StateAdapter::kIdentity ? config_.problem->state_dim() : 3;
    if (display_field_->state_dim() != expected) {
      throw ConfigError("session: display value dimension does not match the game");
    }
  }
  rebuild_policies();
  reset_state();
}

void Session::rebuild_policies() {
  const Player machine_role = other(config_.human_role);
  const json& descriptor =
      machine_role == Player::kEvader ? config_.evader_policy : config_.pursuer_policy;
  if (descriptor.is_null()) {
    throw ConfigError(std::string("session: no ") + player_name(machine_role) +
                      "_policy for the machine side");
  }
  json d = descriptor;
  d["role"] = player_name(machine_role);
  PolicyPtr machine = make_policy(d, config_.problem, config_.base_dir, *cache_);
  machine_ = std::move(machine);
  human_ = std::make_shared<ExternalPolicy>(config_.human_role, human_box());
}

void Session::reset_state() {
  x_ = config_.initial_state;
  tick_ = 0;
  outcome_ = Outcome{};
  finished_ = false;
  evaluate_outcome_locked();
}

// Mirrors the per-step checks of simulate_episode: capture before walls,
// then the duration limit.
void Session::evaluate_outcome_locked() {
  const double t = static_cast<double>(tick_) * config_.tick;
  if (config_.problem->boundary(x_) <= 0.0) {
    outcome_ = Outcome{OutcomeKind::kCaptured, t, Player::kEvader, ""};
    finished_ = true;
    return;
  }
  if (config_.wall_mode == WallMode::kTerminate) {
    const int dim = first_out_of_bounds_dim(*config_.problem, x_);
    if (dim >= 0) {
      outcome_ = Outcome{OutcomeKind::kOutOfBounds, t, config_.problem->dim_owner[dim], ""};
      finished_ = true;
      return;
    }
  }
  if (config_.duration > 0.0) {
    const auto S = static_cast<std::uint64_t>(std::lround(config_.duration / config_.tick));
    if (tick_ >= S) {
      outcome_ = Outcome{OutcomeKind::kSurvived, t, Player::kEvader, ""};
      finished_ = true;
    }
  }
}

json Session::tick() {
  std::lock_guard<std::mutex> lock(mu_);
  if (finished_) return snapshot_locked();
  const auto& model = *config_.problem->dynamics;
  const double t = static_cast<double>(tick_) * config_.tick;
  const double remaining = config_.duration > 0.0 ? config_.duration - t
                                                  : std::numeric_limits<double>::infinity();
  const Policy& evader = config_.human_role == Player::kEvader ? *human_ : *machine_;
  const Policy& pursuer = config_.human_role == Player::kEvader ? *machine_ : *human_;
  Vec u, d;
  try {
    u = clamp_inputs(model.control_box(), evader.action(x_, remaining, tick_));
    d = clamp_inputs(model.disturbance_box(), pursuer.action(x_, remaining, tick_));
  } catch (const Error& e) {
    outcome_ = Outcome{OutcomeKind::kAborted, t, Player::kEvader, e.what()};
    finished_ = true;
    return snapshot_locked();
  }
  euler_step_inplace(model, x_, u, d, config_.tick, scratch_);
  ++tick_;
  if (!x_.allFinite()) {
    outcome_ = Outcome{OutcomeKind::kAborted, t + config_.tick, Player::kEvader, "non-finite state"};
    finished_ = true;
    return snapshot_locked();
  }
  if (config_.wall_mode == WallMode::kClamp) clamp_to_bounds(*config_.problem, x_);
  evaluate_outcome_locked();
  return snapshot_locked();
}

json Session::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return snapshot_locked();
}

json Session::snapshot_locked() const {
  const GameProblem& p = *config_.problem;
  std::vector<double> evader, pursuer;
  for (int i = 0; i < p.state_dim(); ++i) {
    (p.dim_owner[i] == Player::kEvader ? evader : pursuer).push_back(x_[i]);
  }
  const double t = static_cast<double>(tick_) * config_.tick;
  json out = {{"type", "state"},
              {"session", id_},
              {"tick", tick_},
              {"t", t},
              {"role", player_name(config_.human_role)},
              {"states", {{"evader", evader}, {"pursuer", pursuer}}},
              {"state", to_vector(x_)},
              {"ell", p.boundary(x_)},
              {"value", nullptr},
              {"outcome", nullptr}};
  if (display_field_) {
    const double remaining = config_.duration > 0.0 ? config_.duration - t : display_field_->horizon();
    const double tau = std::clamp(remaining, 0.0, display_field_->horizon());
    const double v = display_field_->value(adapt_state(display_adapter_, x_), tau);
    if (std::isfinite(v)) out["value"] = v;
  }
  if (finished_) {
    out["outcome"] = {{"kind", outcome_name(outcome_.kind)},
                      {"time", outcome_.time},
                      {"player", player_name(outcome_.player)}};
    if (!outcome_.reason.empty()) out["outcome"]["reason"] = outcome_.reason;
  }
  return out;
}

json Session::handle_message(const json& message) {
  if (!message.is_object() || !message.contains("type") || !message["type"].is_string()) {
    return error_message("message must be an object with a string 'type'");
  }
  const std::string type = message["type"].get<std::string>();
  if (type == "input") {
    if (!message.contains("channels")) return error_message("input: missing 'channels'");
    Vec v;
    try {
      v = parse_vec(message["channels"], "input: channels");
    } catch (const Error& e) {
      return error_message(e.what());
    }
    std::lock_guard<std::mutex> lock(mu_);
    const int dim = human_box().dim();
    if (v.size() != dim) {
      return error_message("input: expected " + std::to_string(dim) + " channels, got " +
                           std::to_string(v.size()));
    }
    if (!v.allFinite()) return error_message("input: channels must be finite");
    human_->set_input(v);
    return snapshot_locked();
  }
  if (type == "reset") {
    std::lock_guard<std::mutex> lock(mu_);
    human_ = std::make_shared<ExternalPolicy>(config_.human_role, human_box());
    reset_state();
    return snapshot_locked();
  }
  if (type == "role") {
    if (!message.contains("value") || !message["value"].is_string()) {
      return error_message("role: missing string 'value'");
    }
    std::lock_guard<std::mutex> lock(mu_);
    const Player previous = config_.human_role;
    try {
      config_.human_role = parse_player(message["value"].get<std::string>());
      rebuild_policies();
    } catch (const Error& e) {
      config_.human_role = previous;
      return error_message(e.what());
    }
    reset_state();
    return snapshot_locked();
  }
  return error_message("unknown message type '" + type + "'");
}

json Session::handle_text(const std::string& text) {
  json message = json::parse(text, nullptr, false);
  if (message.is_discarded()) return error_message("message is not valid JSON");
  return handle_message(message);
}

bool Session::finished() const {
  std::lock_guard<std::mutex> lock(mu_);
  return finished_;
}

std::uint64_t Session::tick_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return tick_;
}

const InputBox& Session::human_box() const {
  const auto& model = *config_.problem->dynamics;
  return config_.human_role == Player::kEvader ? model.control_box() : model.disturbance_box();
}

// --- manager ----------------------------------------------------------------------

SessionManager::SessionManager(json defaults, std::filesystem::path base_dir)
    : defaults_(defaults.is_null() ? json::object() : std::move(defaults)),
      base_dir_(std::move(base_dir)),
      cache_(std::make_shared<FieldCache>()) {
  if (!defaults_.is_object()) throw ConfigError("session defaults must be a JSON object");
}

std::shared_ptr<Session> SessionManager::create(const json& request) {
  json merged = defaults_;
  if (!request.is_null()) {
    if (!request.is_object()) throw ConfigError("session: request must be a JSON object");
    for (auto it = request.begin(); it != request.end(); ++it) merged[it.key()] = it.value();
  }
  SessionConfig config = SessionConfig::from_json(merged, base_dir_);
  std::string id;
  {
    std::lock_guard<std::mutex> lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, std::move(config), cache_);
  std::lock_guard<std::mutex> lock(mu_);
  sessions_[id] = session;
  return session;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

bool SessionManager::remove(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  return sessions_.erase(id) > 0;
}

std::vector<std::shared_ptr<Session>> SessionManager::all() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

}  // namespace madr
