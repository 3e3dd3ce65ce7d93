// SPDX-License-Identifier: Apache-2.0
#pragma once

// Control-and-disturbance affine games: dynamics, boundary functions and the
// built-in problem registry.
//
// Every model has the form
//   x' = f(x) + g(x) u + w(x) d,   u in U (control box), d in D (disturbance box)
// where Player I (the evader) picks u to keep the boundary function positive and
// Player II (the pursuer / disturbance) picks d to drive it non-positive.

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace madr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Axis-aligned box of admissible inputs.
class InputBox {
 public:
  InputBox() = default;
  InputBox(Vec lower, Vec upper);
  static InputBox symmetric(int dim, double bound);

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  Vec half_width() const { return 0.5 * (upper_ - lower_); }
  bool contains(const Vec& v) const;

 private:
  Vec lower_;
  Vec upper_;
};

// Per-coordinate clamp of `v` into `box`.
Vec clamp_inputs(const InputBox& box, const Vec& v);

// The affine decomposition of the flow at one state.
struct FlowTerms {
  Vec f;  // n
  Mat g;  // n x m_u
  Mat w;  // n x m_d

  // f + g u + w d
  Vec flow(const Vec& u, const Vec& d) const { return f + g * u + w * d; }
};

class DynamicsModel {
 public:
  DynamicsModel(std::string family, int state_dim, InputBox control,
                InputBox disturbance, std::vector<int> angular_dims);
  virtual ~DynamicsModel() = default;

  const std::string& family() const { return family_; }
  int state_dim() const { return state_dim_; }
  const InputBox& control_box() const { return control_; }
  const InputBox& disturbance_box() const { return disturbance_; }
  const std::vector<int>& angular_dims() const { return angular_dims_; }
  bool is_angular(int dim) const;

  // Fills `out` with f(x), g(x), w(x). `x` must have state_dim entries; `out`
  // is resized on first use and reused afterwards.
  virtual void eval_terms(std::span<const double> x, FlowTerms& out) const = 0;

  // Model parameters for config echo and file headers.
  virtual nlohmann::json describe() const;

 protected:
  void prepare(FlowTerms& out) const;

 private:
  std::string family_;
  int state_dim_;
  InputBox control_;
  InputBox disturbance_;
  std::vector<int> angular_dims_;
};

// x' = u + d on R^n.
class SingleIntegratorModel final : public DynamicsModel {
 public:
  SingleIntegratorModel(int dim, InputBox control, InputBox disturbance);
  void eval_terms(std::span<const double> x, FlowTerms& out) const override;
};

// Pursuer position and heading expressed in the evader's body frame:
//   x_r' = -v_e + v_p cos(th_r) + u y_r
//   y_r' =  v_p sin(th_r) - u x_r
//   th_r' = d - u
// with u the evader turn rate and d the pursuer turn rate.
class DubinsRelativeModel final : public DynamicsModel {
 public:
  DubinsRelativeModel(double evader_speed, double pursuer_speed, InputBox control,
                      InputBox disturbance);
  void eval_terms(std::span<const double> x, FlowTerms& out) const override;
  nlohmann::json describe() const override;
  double evader_speed() const { return evader_speed_; }
  double pursuer_speed() const { return pursuer_speed_; }

 private:
  double evader_speed_;
  double pursuer_speed_;
};

// Two Dubins cars, state (x_e, y_e, th_e, x_p, y_p, th_p); u turns the
// evader, d turns the pursuer.
class DubinsPairModel final : public DynamicsModel {
 public:
  DubinsPairModel(double evader_speed, double pursuer_speed, InputBox control,
                  InputBox disturbance);
  void eval_terms(std::span<const double> x, FlowTerms& out) const override;
  nlohmann::json describe() const override;
  double evader_speed() const { return evader_speed_; }
  double pursuer_speed() const { return pursuer_speed_; }

 private:
  double evader_speed_;
  double pursuer_speed_;
};

// Single Dubins car (x, y, th) with an additive planar velocity disturbance.
class DubinsWindModel final : public DynamicsModel {
 public:
  DubinsWindModel(double speed, InputBox control, InputBox disturbance);
  void eval_terms(std::span<const double> x, FlowTerms& out) const override;
  nlohmann::json describe() const override;

 private:
  double speed_;
};

// Two planar single integrators, state (x_e, y_e, x_p, y_p); u is the
// evader velocity, d the pursuer velocity.
class IntegratorPairModel final : public DynamicsModel {
 public:
  IntegratorPairModel(InputBox control, InputBox disturbance);
  void eval_terms(std::span<const double> x, FlowTerms& out) const override;
};

// Signed-distance boundary function l(x); the failure set is {l <= 0}.
class BoundaryFn {
 public:
  enum class Kind { kCircle, kPlayerDistance };

  // || x[dims] - center || - radius
  static BoundaryFn circle(std::vector<int> dims, Vec center, double radius);
  // || x[evader_dims] - x[pursuer_dims] || - radius
  static BoundaryFn player_distance(std::vector<int> evader_dims,
                                    std::vector<int> pursuer_dims, double radius);

  double operator()(std::span<const double> x) const;
  double operator()(const Vec& x) const {
    return (*this)(std::span<const double>(x.data(), x.size()));
  }

  Kind kind() const { return kind_; }
  double radius() const { return radius_; }
  // Declared Lipschitz constant with respect to the Euclidean state norm.
  double lipschitz() const;
  nlohmann::json describe() const;

 private:
  Kind kind_ = Kind::kCircle;
  std::vector<int> dims_a_;
  std::vector<int> dims_b_;
  Vec center_;
  double radius_ = 0.0;
};

enum class Player { kEvader, kPursuer };

// One avoid game. Immutable after construction.
struct GameProblem {
  std::string name;
  std::shared_ptr<const DynamicsModel> dynamics;
  BoundaryFn boundary;
  double horizon = 0.0;
  std::vector<Interval> state_bounds;
  // Which player each state coordinate belongs to (used for out-of-bounds
  // attribution); single-vehicle games attribute everything to the evader.
  std::vector<Player> dim_owner;

  int state_dim() const { return dynamics->state_dim(); }
  // Throws ContractError if the invariants do not hold.
  void validate() const;
  nlohmann::json describe() const;
};

using ProblemPtr = std::shared_ptr<const GameProblem>;

// Returns the three affine terms at `x`; throws ContractError on dimension
// mismatch.
FlowTerms flow_terms(const DynamicsModel& model, const Vec& x);

// x + (f + g u + w d) dt with angular coordinates wrapped into (-pi, pi].
Vec euler_step(const DynamicsModel& model, const Vec& x, const Vec& u, const Vec& d,
               double dt);

// In-place variant that reuses `scratch`; used by the rollout loops.
void euler_step_inplace(const DynamicsModel& model, Vec& x, const Vec& u,
                        const Vec& d, double dt, FlowTerms& scratch);

double eval_boundary(const GameProblem& problem, const Vec& x);

// True if every non-angular coordinate of `x` is inside the state bounds.
bool in_bounds(const GameProblem& problem, const Vec& x);

std::vector<std::string> builtin_problem_names();
ProblemPtr make_builtin_problem(std::string_view name);
ProblemPtr problem_from_json(const nlohmann::json& config);
// Accepts a built-in name, a path to a JSON problem file, or a file name
// relative to the directory in MADR_CONFIG_DIR.
ProblemPtr load_problem(const std::string& name_or_path);

}  // namespace madr
