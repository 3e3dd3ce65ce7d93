// SPDX-License-Identifier: Apache-2.0
#include "madr/policies.hpp"

#include <algorithm>
#include <cmath>

#include "madr/errors.hpp"

namespace madr {

namespace {

const InputBox& role_box(const GameProblem& problem, Player role) {
  return role == Player::kEvader ? problem.dynamics->control_box()
                                 : problem.dynamics->disturbance_box();
}

double clamp_tau(const ValueField& field, double tau) {
  return std::clamp(tau, 0.0, field.horizon());
}

Mat parse_sequence(const json& j, int dim) {
  if (!j.is_array() || j.empty()) throw ConfigError("scripted policy: 'sequence' must be non-empty");
  // A flat array is a single constant input.
  const bool flat = !j[0].is_array();
  const json rows = flat ? json::array({j}) : j;
  Mat seq(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (!rows[c].is_array() || static_cast<int>(rows[c].size()) != dim) {
      throw ConfigError("scripted policy: every input needs " + std::to_string(dim) + " channels");
    }
    for (int i = 0; i < dim; ++i) seq(i, static_cast<Eigen::Index>(c)) = rows[c][i].get<double>();
  }
  return seq;
}

void check_value_problem(const GameProblem& value_problem, const InputBox& game_box, Player role,
                         StateAdapter adapter, int game_dim) {
  const InputBox& vbox = role_box(value_problem, role);
  if (vbox.dim() != game_box.dim()) {
    throw ConfigError("policy: value problem '" + value_problem.name +
                      "' has a different input dimension for the " + player_name(role));
  }
  const int expected = adapter == StateAdapter::kIdentity ? game_dim : 3;
  if (value_problem.state_dim() != expected) {
    throw ConfigError("policy: value problem '" + value_problem.name + "' is " +
                      std::to_string(value_problem.state_dim()) + "-D but the adapter yields " +
                      std::to_string(expected) + "-D states");
  }
}

}  // namespace

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGridGradient: return "grid_gradient";
    case PolicyKind::kNetGradient: return "net_gradient";
    case PolicyKind::kMpcOnline: return "mpc_online";
    case PolicyKind::kFollowFiltered: return "follow_filtered";
    case PolicyKind::kScripted: return "scripted";
    case PolicyKind::kExternal: return "external";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& name) {
  for (PolicyKind k : {PolicyKind::kGridGradient, PolicyKind::kNetGradient, PolicyKind::kMpcOnline,
                       PolicyKind::kFollowFiltered, PolicyKind::kScripted, PolicyKind::kExternal}) {
    if (name == policy_kind_name(k)) return k;
  }
  throw ConfigError("unknown policy kind '" + name + "'");
}

const char* player_name(Player p) { return p == Player::kEvader ? "evader" : "pursuer"; }

Player parse_player(const std::string& name) {
  if (name == "evader") return Player::kEvader;
  if (name == "pursuer") return Player::kPursuer;
  throw ConfigError("unknown role '" + name + "' (expected evader|pursuer)");
}

const char* adapter_name(StateAdapter a) {
  return a == StateAdapter::kIdentity ? "identity" : "dubins_relative";
}

StateAdapter parse_adapter(const std::string& name) {
  if (name == "identity") return StateAdapter::kIdentity;
  if (name == "dubins_relative") return StateAdapter::kDubinsRelative;
  throw ConfigError("unknown state adapter '" + name + "'");
}

Vec dubins_relative_state(const Vec& s) {
  require(s.size() == 6, "dubins_relative_state: expected a 6-D pair state");
  const double dx = s[3] - s[0];
  const double dy = s[4] - s[1];
  const double c = std::cos(s[2]);
  const double sn = std::sin(s[2]);
  Vec r(3);
  r << c * dx + sn * dy, -sn * dx + c * dy, wrap_angle(s[5] - s[2]);
  return r;
}

Vec lift_relative_state(const Vec& rel, double xe, double ye, double theta_e) {
  require(rel.size() == 3, "lift_relative_state: expected a 3-D relative state");
  const double c = std::cos(theta_e);
  const double sn = std::sin(theta_e);
  Vec s(6);
  s << xe, ye, wrap_angle(theta_e), xe + c * rel[0] - sn * rel[1], ye + sn * rel[0] + c * rel[1],
      wrap_angle(theta_e + rel[2]);
  return s;
}

Vec adapt_state(StateAdapter adapter, const Vec& x) {
  return adapter == StateAdapter::kIdentity ? x : dubins_relative_state(x);
}

json Policy::describe() const {
  return {{"kind", policy_kind_name(kind())}, {"role", player_name(role_)}};
}

Vec gradient_action(const GameProblem& value_problem, const Vec& x, const Vec& grad_x,
                    Player role) {
  return opponent_action(value_problem, x, grad_x, role);
}

// --- gradient ---------------------------------------------------------------------

GradientPolicy::GradientPolicy(Player role, FieldPtr field, ProblemPtr value_problem,
                               StateAdapter adapter, const InputBox& game_box, std::string source)
    : Policy(role, game_box),
      field_(std::move(field)),
      value_problem_(std::move(value_problem)),
      adapter_(adapter),
      source_(std::move(source)) {
  require(field_ != nullptr && value_problem_ != nullptr, "GradientPolicy: missing value source");
  require(field_->state_dim() == value_problem_->state_dim(),
          "GradientPolicy: field and value problem dimensions differ");
}

PolicyKind GradientPolicy::kind() const {
  return dynamic_cast<const GridField*>(field_.get()) ? PolicyKind::kGridGradient
                                                      : PolicyKind::kNetGradient;
}

Vec GradientPolicy::action(const Vec& x, double tau, std::size_t) const {
  const Vec xa = adapt_state(adapter_, x);
  const FieldSample s = field_->sample(xa, clamp_tau(*field_, tau));
  if (!s.grad_x.allFinite()) {
    throw NumericalError("policy: non-finite value gradient at state " +
                         json(std::vector<double>(x.data(), x.data() + x.size())).dump());
  }
  return clamp_inputs(box(), gradient_action(*value_problem_, xa, s.grad_x, role()));
}

json GradientPolicy::describe() const {
  json j = Policy::describe();
  j["source"] = source_;
  j["adapter"] = adapter_name(adapter_);
  j["value_problem"] = value_problem_->name;
  return j;
}

// --- follow filter ----------------------------------------------------------------

FollowFilteredPolicy::FollowFilteredPolicy(FieldPtr pursuit, FieldPtr follow,
                                           ProblemPtr value_problem, StateAdapter adapter,
                                           const InputBox& game_box, double epsilon,
                                           std::string pursuit_source, std::string follow_source)
    : Policy(Player::kPursuer, game_box),
      pursuit_(std::move(pursuit)),
      follow_(std::move(follow)),
      value_problem_(std::move(value_problem)),
      adapter_(adapter),
      epsilon_(epsilon),
      pursuit_source_(std::move(pursuit_source)),
      follow_source_(std::move(follow_source)) {
  if (pursuit_ == nullptr) throw ConfigError("follow_filtered: missing pursuit value source");
  if (follow_ == nullptr) throw ConfigError("follow_filtered: missing follow value source");
  if (!(epsilon_ >= 0.0)) throw ConfigError("follow_filtered: epsilon must be >= 0");
  require(value_problem_ != nullptr, "follow_filtered: missing value problem");
}

double FollowFilteredPolicy::pursuit_magnitude(const Vec& x) const {
  const Vec xa = adapt_state(adapter_, x);
  const FieldSample s = pursuit_->sample(xa, pursuit_->horizon());
  const FlowTerms terms = flow_terms(*value_problem_->dynamics, xa);
  const Vec coef = terms.w.transpose() * s.grad_x;
  const Vec hw = value_problem_->dynamics->disturbance_box().half_width();
  return (coef.array().abs() * hw.array()).sum();
}

Vec FollowFilteredPolicy::action(const Vec& x, double tau, std::size_t) const {
  const Vec xa = adapt_state(adapter_, x);
  if (pursuit_magnitude(x) >= epsilon_) {
    const FieldSample s = pursuit_->sample(xa, pursuit_->horizon());
    return clamp_inputs(box(), gradient_action(*value_problem_, xa, s.grad_x, Player::kPursuer));
  }
  const FieldSample f = follow_->sample(xa, clamp_tau(*follow_, tau));
  return clamp_inputs(box(), gradient_action(*value_problem_, xa, f.grad_x, Player::kPursuer));
}

json FollowFilteredPolicy::describe() const {
  json j = Policy::describe();
  j["source"] = pursuit_source_;
  j["follow_source"] = follow_source_;
  j["epsilon"] = epsilon_;
  j["adapter"] = adapter_name(adapter_);
  return j;
}

// --- scripted / external --------------------------------------------------------

ScriptedPolicy::ScriptedPolicy(Player role, const InputBox& game_box, Mat sequence)
    : Policy(role, game_box), sequence_(std::move(sequence)) {
  require(sequence_.rows() == game_box.dim() && sequence_.cols() >= 1,
          "ScriptedPolicy: sequence must be m x S with S >= 1");
}

Vec ScriptedPolicy::action(const Vec&, double, std::size_t step) const {
  const Eigen::Index c = std::min<Eigen::Index>(static_cast<Eigen::Index>(step), sequence_.cols() - 1);
  return clamp_inputs(box(), sequence_.col(c));
}

json ScriptedPolicy::describe() const {
  json j = Policy::describe();
  json seq = json::array();
  for (Eigen::Index c = 0; c < sequence_.cols(); ++c) {
    json col = json::array();
    for (Eigen::Index r = 0; r < sequence_.rows(); ++r) col.push_back(sequence_(r, c));
    seq.push_back(col);
  }
  j["sequence"] = seq;
  return j;
}

ExternalPolicy::ExternalPolicy(Player role, const InputBox& game_box)
    : Policy(role, game_box), input_(game_box.center()) {}

Vec ExternalPolicy::action(const Vec&, double, std::size_t) const { return input(); }

void ExternalPolicy::set_input(const Vec& u) {
  require(u.size() == box().dim(), "external input has " + std::to_string(u.size()) +
                                       " channels, expected " + std::to_string(box().dim()));
  std::lock_guard<std::mutex> lock(mu_);
  input_ = clamp_inputs(box(), u);
}

Vec ExternalPolicy::input() const {
  std::lock_guard<std::mutex> lock(mu_);
  return input_;
}

// --- online MPC -----------------------------------------------------------------

MpcOnlinePolicy::MpcOnlinePolicy(Player role, FieldPtr field, ProblemPtr value_problem,
                                 StateAdapter adapter, const InputBox& game_box,
                                 SamplerConfig config, std::uint64_t seed, std::string source)
    : Policy(role, game_box),
      field_(std::move(field)),
      value_problem_(std::move(value_problem)),
      adapter_(adapter),
      config_(std::move(config)),
      seed_(seed),
      source_(std::move(source)) {
  require(field_ != nullptr && value_problem_ != nullptr, "MpcOnlinePolicy: missing value source");
  config_.validate(*value_problem_);
}

Vec MpcOnlinePolicy::action(const Vec& x, double tau, std::size_t step) const {
  const Vec xa = adapt_state(adapter_, x);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(step)};
  std::mt19937_64 rng(seq);
  EstimateTrace trace;
  const Perspective p = role() == Player::kEvader ? Perspective::kControl : Perspective::kDisturbance;
  estimate_value(*value_problem_, *field_, xa, std::max(clamp_tau(*field_, tau), config_.step),
                 config_, p, rng, -1.0, field_->mode(), &trace);
  return clamp_inputs(box(), trace.best_inputs.col(0));
}

json MpcOnlinePolicy::describe() const {
  json j = Policy::describe();
  j["source"] = source_;
  j["adapter"] = adapter_name(adapter_);
  j["sampler"] = config_.to_json();
  j["seed"] = seed_;
  return j;
}

// --- construction -----------------------------------------------------------------

FieldPtr FieldCache::get(const std::filesystem::path& path) {
  const std::string key = std::filesystem::weakly_canonical(path).string();
  std::lock_guard<std::mutex> lock(mu_);
  auto it = fields_.find(key);
  if (it != fields_.end()) return it->second;
  FieldPtr f = load_field(path);
  fields_.emplace(key, f);
  return f;
}

PolicyPtr make_policy(const json& d, ProblemPtr game, const std::filesystem::path& base_dir,
                      FieldCache& cache) {
  require(game != nullptr, "make_policy: missing game");
  check_keys(d,
             {"id", "kind", "role", "source", "follow_source", "epsilon", "adapter", "sequence",
              "sampler", "seed", "value_problem"},
             "policy descriptor");
  try {
    const PolicyKind kind = parse_policy_kind(d.at("kind").get<std::string>());
    const Player role = kind == PolicyKind::kFollowFiltered
                            ? Player::kPursuer
                            : parse_player(d.at("role").get<std::string>());
    if (kind == PolicyKind::kFollowFiltered && d.contains("role") &&
        d["role"].get<std::string>() != "pursuer") {
      throw ConfigError("follow_filtered policies play the pursuer");
    }
    const InputBox& game_box = role_box(*game, role);
    if (kind == PolicyKind::kScripted) {
      if (!d.contains("sequence")) throw ConfigError("scripted policy: missing 'sequence'");
      return std::make_shared<ScriptedPolicy>(role, game_box, parse_sequence(d["sequence"], game_box.dim()));
    }
    if (kind == PolicyKind::kExternal) return std::make_shared<ExternalPolicy>(role, game_box);

    auto resolve = [&](const std::string& key) -> std::pair<FieldPtr, std::string> {
      if (!d.contains(key)) return {nullptr, ""};
      std::filesystem::path p = d[key].get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      return {cache.get(p), p.string()};
    };
    auto [field, source] = resolve("source");
    if (field == nullptr) throw ConfigError(std::string(policy_kind_name(kind)) + ": missing 'source'");

    ProblemPtr value_problem;
    if (d.contains("value_problem")) {
      value_problem = load_problem(d["value_problem"].get<std::string>());
    } else if (field->problem_name() == game->name) {
      value_problem = game;
    } else {
      value_problem = load_problem(field->problem_name());
    }
    StateAdapter adapter;
    if (d.contains("adapter")) {
      adapter = parse_adapter(d["adapter"].get<std::string>());
    } else if (field->state_dim() == game->state_dim()) {
      adapter = StateAdapter::kIdentity;
    } else if (field->state_dim() == 3 && game->state_dim() == 6) {
      adapter = StateAdapter::kDubinsRelative;
    } else {
      throw ConfigError("policy: cannot map a " + std::to_string(field->state_dim()) +
                        "-D value source onto the " + std::to_string(game->state_dim()) +
                        "-D game '" + game->name + "'");
    }
    check_value_problem(*value_problem, game_box, role, adapter, game->state_dim());

    switch (kind) {
      case PolicyKind::kGridGradient:
      case PolicyKind::kNetGradient: {
        const bool is_grid = dynamic_cast<const GridField*>(field.get()) != nullptr;
        if (is_grid != (kind == PolicyKind::kGridGradient)) {
          throw ConfigError(std::string(policy_kind_name(kind)) + ": source '" + source +
                            "' is a " + (is_grid ? "grid" : "network"));
        }
        return std::make_shared<GradientPolicy>(role, field, value_problem, adapter, game_box, source);
      }
      case PolicyKind::kMpcOnline: {
        SamplerConfig sc = d.contains("sampler") ? SamplerConfig::from_json(d["sampler"])
                                                 : SamplerConfig{};
        return std::make_shared<MpcOnlinePolicy>(role, field, value_problem, adapter, game_box, sc,
                                                 d.value("seed", std::uint64_t{0}), source);
      }
      case PolicyKind::kFollowFiltered: {
        auto [follow, follow_source] = resolve("follow_source");
        if (follow == nullptr) throw ConfigError("follow_filtered: missing 'follow_source'");
        if (follow->state_dim() != field->state_dim()) {
          throw ConfigError("follow_filtered: pursuit and follow sources differ in dimension");
        }
        return std::make_shared<FollowFilteredPolicy>(
            field, follow, value_problem, adapter, game_box,
            d.value("epsilon", FollowFilteredPolicy::kDefaultEpsilon), source, follow_source);
      }
      default:
        break;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("policy descriptor: ") + e.what());
  }
  throw ConfigError("policy descriptor: unsupported kind");
}

TrainResult train_follow_value(const GameProblem& problem, TrainConfig config,
                               const std::filesystem::path& out_dir, const ProgressFn& progress) {
  config.mode = GameMode::kFollow;
  return train(problem, config, out_dir, progress);
}

}  // namespace madr
