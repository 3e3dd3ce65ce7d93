// SPDX-License-Identifier: Apache-2.0
#include "madr/game_models.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "madr/errors.hpp"
#include "madr/io_util.hpp"

namespace madr {

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

InputBox::InputBox(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  require(lower_.size() == upper_.size(), "input box: lower/upper dimension mismatch");
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    require(lower_[i] <= upper_[i], "input box: lower > upper in channel " + std::to_string(i));
  }
}

InputBox InputBox::symmetric(int dim, double bound) {
  return InputBox(Vec::Constant(dim, -bound), Vec::Constant(dim, bound));
}

bool InputBox::contains(const Vec& v) const {
  if (v.size() != lower_.size()) return false;
  return ((v.array() >= lower_.array()) && (v.array() <= upper_.array())).all();
}

Vec clamp_inputs(const InputBox& box, const Vec& v) {
  require(v.size() == box.dim(), "clamp_inputs: dimension mismatch");
  return v.cwiseMax(box.lower()).cwiseMin(box.upper());
}

DynamicsModel::DynamicsModel(std::string family, int state_dim, InputBox control,
                             InputBox disturbance, std::vector<int> angular_dims)
    : family_(std::move(family)),
      state_dim_(state_dim),
      control_(std::move(control)),
      disturbance_(std::move(disturbance)),
      angular_dims_(std::move(angular_dims)) {
  require(state_dim_ > 0, "dynamics: state_dim must be positive");
  for (int d : angular_dims_) {
    require(d >= 0 && d < state_dim_, "dynamics: angular dim out of range");
  }
}

bool DynamicsModel::is_angular(int dim) const {
  return std::find(angular_dims_.begin(), angular_dims_.end(), dim) != angular_dims_.end();
}

void DynamicsModel::prepare(FlowTerms& out) const {
  const int n = state_dim_;
  if (out.f.size() != n) out.f.resize(n);
  if (out.g.rows() != n || out.g.cols() != control_.dim()) {
    out.g.setZero(n, control_.dim());
  }
  if (out.w.rows() != n || out.w.cols() != disturbance_.dim()) {
    out.w.setZero(n, disturbance_.dim());
  }
}

nlohmann::json DynamicsModel::describe() const {
  auto box = [](const InputBox& b) {
    return json{{"lower", std::vector<double>(b.lower().data(), b.lower().data() + b.dim())},
                {"upper", std::vector<double>(b.upper().data(), b.upper().data() + b.dim())}};
  };
  return json{{"family", family_},
              {"state_dim", state_dim_},
              {"control_box", box(control_)},
              {"disturbance_box", box(disturbance_)}};
}

// --- concrete models --------------------------------------------------------

SingleIntegratorModel::SingleIntegratorModel(int dim, InputBox control, InputBox disturbance)
    : DynamicsModel("single_integrator", dim, std::move(control), std::move(disturbance), {}) {
  require(control_box().dim() == dim && disturbance_box().dim() == dim,
          "single_integrator: input boxes must match the state dimension");
}

void SingleIntegratorModel::eval_terms(std::span<const double>, FlowTerms& out) const {
  prepare(out);
  out.f.setZero();
  out.g.setIdentity();
  out.w.setIdentity();
}

DubinsRelativeModel::DubinsRelativeModel(double evader_speed, double pursuer_speed,
                                         InputBox control, InputBox disturbance)
    : DynamicsModel("dubins_relative", 3, std::move(control), std::move(disturbance), {2}),
      evader_speed_(evader_speed),
      pursuer_speed_(pursuer_speed) {
  require(control_box().dim() == 1 && disturbance_box().dim() == 1,
          "dubins_relative: inputs are scalar turn rates");
}

void DubinsRelativeModel::eval_terms(std::span<const double> x, FlowTerms& out) const {
  prepare(out);
  out.f[0] = -evader_speed_ + pursuer_speed_ * std::cos(x[2]);
  out.f[1] = pursuer_speed_ * std::sin(x[2]);
  out.f[2] = 0.0;
  out.g(0, 0) = x[1];
  out.g(1, 0) = -x[0];
  out.g(2, 0) = -1.0;
  out.w(0, 0) = 0.0;
  out.w(1, 0) = 0.0;
  out.w(2, 0) = 1.0;
}

nlohmann::json DubinsRelativeModel::describe() const {
  json j = DynamicsModel::describe();
  j["evader_speed"] = evader_speed_;
  j["pursuer_speed"] = pursuer_speed_;
  return j;
}

DubinsPairModel::DubinsPairModel(double evader_speed, double pursuer_speed, InputBox control,
                                 InputBox disturbance)
    : DynamicsModel("dubins_pair", 6, std::move(control), std::move(disturbance), {2, 5}),
      evader_speed_(evader_speed),
      pursuer_speed_(pursuer_speed) {
  require(control_box().dim() == 1 && disturbance_box().dim() == 1,
          "dubins_pair: inputs are scalar turn rates");
}

void DubinsPairModel::eval_terms(std::span<const double> x, FlowTerms& out) const {
  prepare(out);
  out.f[0] = evader_speed_ * std::cos(x[2]);
  out.f[1] = evader_speed_ * std::sin(x[2]);
  out.f[2] = 0.0;
  out.f[3] = pursuer_speed_ * std::cos(x[5]);
  out.f[4] = pursuer_speed_ * std::sin(x[5]);
  out.f[5] = 0.0;
  out.g.setZero();
  out.g(2, 0) = 1.0;
  out.w.setZero();
  out.w(5, 0) = 1.0;
}

nlohmann::json DubinsPairModel::describe() const {
  json j = DynamicsModel::describe();
  j["evader_speed"] = evader_speed_;
  j["pursuer_speed"] = pursuer_speed_;
  return j;
}

DubinsWindModel::DubinsWindModel(double speed, InputBox control, InputBox disturbance)
    : DynamicsModel("dubins_wind", 3, std::move(control), std::move(disturbance), {2}),
      speed_(speed) {
  require(control_box().dim() == 1 && disturbance_box().dim() == 2,
          "dubins_wind: one turn-rate input and a planar wind disturbance");
}

void DubinsWindModel::eval_terms(std::span<const double> x, FlowTerms& out) const {
  prepare(out);
  out.f[0] = speed_ * std::cos(x[2]);
  out.f[1] = speed_ * std::sin(x[2]);
  out.f[2] = 0.0;
  out.g.setZero();
  out.g(2, 0) = 1.0;
  out.w.setZero();
  out.w(0, 0) = 1.0;
  out.w(1, 1) = 1.0;
}

nlohmann::json DubinsWindModel::describe() const {
  json j = DynamicsModel::describe();
  j["speed"] = speed_;
  return j;
}

IntegratorPairModel::IntegratorPairModel(InputBox control, InputBox disturbance)
    : DynamicsModel("integrator_pair", 4, std::move(control), std::move(disturbance), {}) {
  require(control_box().dim() == 2 && disturbance_box().dim() == 2,
          "integrator_pair: planar velocity inputs");
}

void IntegratorPairModel::eval_terms(std::span<const double>, FlowTerms& out) const {
  prepare(out);
  out.f.setZero();
  out.g.setZero();
  out.w.setZero();
  out.g(0, 0) = 1.0;
  out.g(1, 1) = 1.0;
  out.w(2, 0) = 1.0;
  out.w(3, 1) = 1.0;
}

// --- boundary ---------------------------------------------------------------

BoundaryFn BoundaryFn::circle(std::vector<int> dims, Vec center, double radius) {
  require(!dims.empty(), "circle boundary: no dims");
  require(static_cast<Eigen::Index>(dims.size()) == center.size(),
          "circle boundary: center dimension mismatch");
  BoundaryFn b;
  b.kind_ = Kind::kCircle;
  b.dims_a_ = std::move(dims);
  b.center_ = std::move(center);
  b.radius_ = radius;
  return b;
}

BoundaryFn BoundaryFn::player_distance(std::vector<int> evader_dims,
                                       std::vector<int> pursuer_dims, double radius) {
  require(!evader_dims.empty() && evader_dims.size() == pursuer_dims.size(),
          "player distance boundary: dims mismatch");
  BoundaryFn b;
  b.kind_ = Kind::kPlayerDistance;
  b.dims_a_ = std::move(evader_dims);
  b.dims_b_ = std::move(pursuer_dims);
  b.radius_ = radius;
  return b;
}

double BoundaryFn::operator()(std::span<const double> x) const {
  double sq = 0.0;
  if (kind_ == Kind::kCircle) {
    for (std::size_t i = 0; i < dims_a_.size(); ++i) {
      double d = x[dims_a_[i]] - center_[static_cast<Eigen::Index>(i)];
      sq += d * d;
    }
  } else {
    for (std::size_t i = 0; i < dims_a_.size(); ++i) {
      double d = x[dims_a_[i]] - x[dims_b_[i]];
      sq += d * d;
    }
  }
  return std::sqrt(sq) - radius_;
}

double BoundaryFn::lipschitz() const {
  return kind_ == Kind::kCircle ? 1.0 : std::sqrt(2.0);
}

nlohmann::json BoundaryFn::describe() const {
  if (kind_ == Kind::kCircle) {
    return json{{"type", "circle"},
                {"dims", dims_a_},
                {"center", std::vector<double>(center_.data(), center_.data() + center_.size())},
                {"radius", radius_}};
  }
  return json{{"type", "players_distance"},
              {"evader_dims", dims_a_},
              {"pursuer_dims", dims_b_},
              {"radius", radius_}};
}

// --- problems ---------------------------------------------------------------

void GameProblem::validate() const {
  require(dynamics != nullptr, "problem '" + name + "': missing dynamics");
  require(horizon > 0.0, "problem '" + name + "': horizon must be positive");
  require(static_cast<int>(state_bounds.size()) == state_dim(),
          "problem '" + name + "': state bounds dimension mismatch");
  require(static_cast<int>(dim_owner.size()) == state_dim(),
          "problem '" + name + "': player ownership dimension mismatch");
  for (const auto& b : state_bounds) {
    require(b.lo < b.hi, "problem '" + name + "': empty state bound");
  }
}

nlohmann::json GameProblem::describe() const {
  json bounds = json::array();
  for (const auto& b : state_bounds) bounds.push_back({b.lo, b.hi});
  json players = json::array();
  for (auto p : dim_owner) players.push_back(p == Player::kEvader ? "evader" : "pursuer");
  return json{{"name", name},
              {"dynamics", dynamics->describe()},
              {"boundary", boundary.describe()},
              {"horizon", horizon},
              {"bounds", bounds},
              {"players", players}};
}

FlowTerms flow_terms(const DynamicsModel& model, const Vec& x) {
  require(x.size() == model.state_dim(),
          "flow_terms: state has dimension " + std::to_string(x.size()) + ", expected " +
              std::to_string(model.state_dim()));
  FlowTerms out;
  model.eval_terms(std::span<const double>(x.data(), x.size()), out);
  return out;
}

void euler_step_inplace(const DynamicsModel& model, Vec& x, const Vec& u, const Vec& d,
                        double dt, FlowTerms& scratch) {
  model.eval_terms(std::span<const double>(x.data(), x.size()), scratch);
  x.noalias() += dt * scratch.f;
  x.noalias() += dt * (scratch.g * u);
  x.noalias() += dt * (scratch.w * d);
  for (int a : model.angular_dims()) x[a] = wrap_angle(x[a]);
}

Vec euler_step(const DynamicsModel& model, const Vec& x, const Vec& u, const Vec& d,
               double dt) {
  require(x.size() == model.state_dim(), "euler_step: state dimension mismatch");
  require(u.size() == model.control_box().dim(), "euler_step: control dimension mismatch");
  require(d.size() == model.disturbance_box().dim(),
          "euler_step: disturbance dimension mismatch");
  Vec next = x;
  FlowTerms scratch;
  euler_step_inplace(model, next, u, d, dt, scratch);
  return next;
}

double eval_boundary(const GameProblem& problem, const Vec& x) {
  require(x.size() == problem.state_dim(), "eval_boundary: state dimension mismatch");
  return problem.boundary(x);
}

bool in_bounds(const GameProblem& problem, const Vec& x) {
  for (int i = 0; i < problem.state_dim(); ++i) {
    if (problem.dynamics->is_angular(i)) continue;
    if (!problem.state_bounds[i].contains(x[i])) return false;
  }
  return true;
}

namespace {

constexpr double kDubinsSpeed = 0.5;
constexpr double kDubinsTurnRate = 1.9;
constexpr double kCaptureRadius = 0.36;
constexpr double kPillarRadius = 0.5;
constexpr double kWindBound = 0.2;

ProblemPtr finish(GameProblem p) {
  p.validate();
  return std::make_shared<const GameProblem>(std::move(p));
}

std::vector<Player> owners(int n, Player p) { return std::vector<Player>(n, p); }

}  // namespace

std::vector<std::string> builtin_problem_names() {
  return {"dubins6d", "dubins3d_rel", "integrator1d", "dubins3d_cylinder"};
}

ProblemPtr make_builtin_problem(std::string_view name) {
  GameProblem p;
  p.name = std::string(name);
  if (name == "dubins6d") {
    p.dynamics = std::make_shared<DubinsPairModel>(
        kDubinsSpeed, kDubinsSpeed, InputBox::symmetric(1, kDubinsTurnRate),
        InputBox::symmetric(1, kDubinsTurnRate));
    p.boundary = BoundaryFn::player_distance({0, 1}, {3, 4}, kCaptureRadius);
    p.horizon = 3.0;
    p.state_bounds = {{-3, 3}, {-2, 2}, {-kPi, kPi}, {-3, 3}, {-2, 2}, {-kPi, kPi}};
    p.dim_owner = {Player::kEvader,  Player::kEvader,  Player::kEvader,
                   Player::kPursuer, Player::kPursuer, Player::kPursuer};
    return finish(std::move(p));
  }
  if (name == "dubins3d_rel") {
    p.dynamics = std::make_shared<DubinsRelativeModel>(
        kDubinsSpeed, kDubinsSpeed, InputBox::symmetric(1, kDubinsTurnRate),
        InputBox::symmetric(1, kDubinsTurnRate));
    p.boundary = BoundaryFn::circle({0, 1}, Vec::Zero(2), kCaptureRadius);
    p.horizon = 3.0;
    p.state_bounds = {{-2, 2}, {-2, 2}, {-kPi, kPi}};
    p.dim_owner = owners(3, Player::kEvader);
    return finish(std::move(p));
  }
  if (name == "integrator1d") {
    p.dynamics = std::make_shared<SingleIntegratorModel>(
        1, InputBox::symmetric(1, 1.0), InputBox::symmetric(1, 0.5));
    p.boundary = BoundaryFn::circle({0}, Vec::Zero(1), 0.2);
    p.horizon = 1.0;
    p.state_bounds = {{-1, 1}};
    p.dim_owner = owners(1, Player::kEvader);
    return finish(std::move(p));
  }
  if (name == "dubins3d_cylinder") {
    p.dynamics = std::make_shared<DubinsWindModel>(
        kDubinsSpeed, InputBox::symmetric(1, kDubinsTurnRate), InputBox::symmetric(2, kWindBound));
    p.boundary = BoundaryFn::circle({0, 1}, Vec::Zero(2), kPillarRadius);
    p.horizon = 2.0;
    p.state_bounds = {{-2, 2}, {-2, 2}, {-kPi, kPi}};
    p.dim_owner = owners(3, Player::kEvader);
    return finish(std::move(p));
  }
  throw ConfigError("unknown problem '" + std::string(name) + "'");
}

namespace {

Vec vec_from_json(const json& j, std::string_view what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

InputBox box_from_json(const json& j, std::string_view what) {
  check_keys(j, {"lower", "upper"}, what);
  try {
    return InputBox(vec_from_json(j.at("lower"), what), vec_from_json(j.at("upper"), what));
  } catch (const ContractError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

ProblemPtr problem_from_json(const json& config) {
  check_keys(config,
             {"name", "family", "state_dim", "control_box", "disturbance_box", "speed",
              "evader_speed", "pursuer_speed", "boundary", "horizon", "bounds", "players"},
             "problem config");
  try {
    GameProblem p;
    p.name = config.value("name", std::string("custom"));
    const std::string family = config.at("family").get<std::string>();
    InputBox control = box_from_json(config.at("control_box"), "control_box");
    InputBox disturbance = box_from_json(config.at("disturbance_box"), "disturbance_box");
    const double speed = config.value("speed", kDubinsSpeed);
    const double ve = config.value("evader_speed", speed);
    const double vp = config.value("pursuer_speed", speed);
    if (family == "single_integrator") {
      int n = config.at("state_dim").get<int>();
      p.dynamics = std::make_shared<SingleIntegratorModel>(n, control, disturbance);
    } else if (family == "dubins_relative") {
      p.dynamics = std::make_shared<DubinsRelativeModel>(ve, vp, control, disturbance);
    } else if (family == "dubins_pair") {
      p.dynamics = std::make_shared<DubinsPairModel>(ve, vp, control, disturbance);
    } else if (family == "dubins_wind") {
      p.dynamics = std::make_shared<DubinsWindModel>(speed, control, disturbance);
    } else if (family == "integrator_pair") {
      p.dynamics = std::make_shared<IntegratorPairModel>(control, disturbance);
    } else {
      throw ConfigError("unknown dynamics family '" + family + "'");
    }
    const int n = p.dynamics->state_dim();
    if (config.contains("state_dim") && config.at("state_dim").get<int>() != n) {
      throw ConfigError("state_dim does not match family '" + family + "'");
    }

    const json& b = config.at("boundary");
    const std::string type = b.at("type").get<std::string>();
    if (type == "circle") {
      check_keys(b, {"type", "dims", "center", "radius"}, "boundary");
      auto dims = b.at("dims").get<std::vector<int>>();
      Vec center = b.contains("center") ? vec_from_json(b.at("center"), "center")
                                        : Vec::Zero(static_cast<Eigen::Index>(dims.size()));
      p.boundary = BoundaryFn::circle(dims, center, b.at("radius").get<double>());
    } else if (type == "cylinder") {
      check_keys(b, {"type", "radius"}, "boundary");
      p.boundary = BoundaryFn::circle({0, 1}, Vec::Zero(2), b.at("radius").get<double>());
    } else if (type == "players_distance") {
      check_keys(b, {"type", "evader_dims", "pursuer_dims", "radius"}, "boundary");
      auto ed = b.at("evader_dims").get<std::vector<int>>();
      auto pd = b.at("pursuer_dims").get<std::vector<int>>();
      p.boundary = BoundaryFn::player_distance(ed, pd, b.at("radius").get<double>());
    } else {
      throw ConfigError("unknown boundary primitive '" + type + "'");
    }

    p.horizon = config.at("horizon").get<double>();
    const json& bounds = config.at("bounds");
    if (!bounds.is_array() || static_cast<int>(bounds.size()) != n) {
      throw ConfigError("bounds must list one [lo, hi] pair per state dimension");
    }
    for (const auto& pair : bounds) {
      p.state_bounds.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    }
    if (config.contains("players")) {
      for (const auto& s : config.at("players")) {
        const auto name = s.get<std::string>();
        if (name != "evader" && name != "pursuer") throw ConfigError("players: bad entry " + name);
        p.dim_owner.push_back(name == "evader" ? Player::kEvader : Player::kPursuer);
      }
    } else if (family == "dubins_pair") {
      p.dim_owner = {Player::kEvader,  Player::kEvader,  Player::kEvader,
                     Player::kPursuer, Player::kPursuer, Player::kPursuer};
    } else if (family == "integrator_pair") {
      p.dim_owner = {Player::kEvader, Player::kEvader, Player::kPursuer, Player::kPursuer};
    } else {
      p.dim_owner = owners(n, Player::kEvader);
    }
    return finish(std::move(p));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("problem config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("problem config: ") + e.what());
  }
}

ProblemPtr load_problem(const std::string& name_or_path) {
  for (const auto& n : builtin_problem_names()) {
    if (n == name_or_path) return make_builtin_problem(n);
  }
  auto path = resolve_config_path(name_or_path);
  if (!std::filesystem::exists(path)) {
    throw ConfigError("unknown problem '" + name_or_path + "' (not built in, no such file)");
  }
  return problem_from_json(read_json_file(path));
}

}  // namespace madr
