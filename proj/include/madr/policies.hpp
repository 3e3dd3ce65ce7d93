// SPDX-License-Identifier: Apache-2.0
#pragma once

// State-feedback policies for both players. Value-driven policies read the
// gradient of a ValueField and pick the bang-bang input of their role; a
// state adapter lets a 3-D relative value drive the 6-D two-vehicle game.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "madr/game_models.hpp"
#include "madr/io_util.hpp"
#include "madr/mpc_sampler.hpp"
#include "madr/trainer.hpp"
#include "madr/value_field.hpp"

namespace madr {

enum class PolicyKind {
  kGridGradient,
  kNetGradient,
  kMpcOnline,
  kFollowFiltered,
  kScripted,
  kExternal
};

const char* policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);
const char* player_name(Player p);
Player parse_player(const std::string& name);

// Maps a game state into the coordinates of the value source.
enum class StateAdapter { kIdentity, kDubinsRelative };

const char* adapter_name(StateAdapter a);
StateAdapter parse_adapter(const std::string& name);

// Pursuer pose expressed in the evader's body frame:
//   x_r = cos(th_e) dx + sin(th_e) dy,  y_r = -sin(th_e) dx + cos(th_e) dy,
//   th_r = th_p - th_e,  with (dx, dy) = pursuer - evader.
Vec dubins_relative_state(const Vec& pair_state);
// Inverse of dubins_relative_state for a given evader pose.
Vec lift_relative_state(const Vec& rel, double xe, double ye, double theta_e);
Vec adapt_state(StateAdapter adapter, const Vec& x);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyKind kind() const = 0;
  Player role() const { return role_; }
  // Input for this policy's role at game state `x`, time-to-go `tau`, and
  // step index `step` (scripted and sampled policies use it).
  virtual Vec action(const Vec& x, double tau, std::size_t step) const = 0;
  virtual json describe() const;

 protected:
  Policy(Player role, const InputBox& box) : role_(role), box_(box) {}
  const InputBox& box() const { return box_; }

 private:
  Player role_;
  InputBox box_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// Bang-bang input for `role` from a value gradient at `x` of `value_problem`.
Vec gradient_action(const GameProblem& value_problem, const Vec& x, const Vec& grad_x,
                    Player role);

class GradientPolicy final : public Policy {
 public:
  GradientPolicy(Player role, FieldPtr field, ProblemPtr value_problem, StateAdapter adapter,
                 const InputBox& game_box, std::string source = "");
  PolicyKind kind() const override;
  Vec action(const Vec& x, double tau, std::size_t step) const override;
  json describe() const override;
  const ValueField& field() const { return *field_; }

 private:
  FieldPtr field_;
  ProblemPtr value_problem_;
  StateAdapter adapter_;
  std::string source_;
};

// Pursuer that follows the pursuit-game action while the pursuit value's
// input Hamiltonian magnitude sum_j |(grad^T w)_j| half_width_j (gradient at
// the full-horizon slice) is at least epsilon, and otherwise plays the input
// that minimizes the follow-game value. Both branches use the pursuer's own
// payoff direction (argmin of grad . w d).
class FollowFilteredPolicy final : public Policy {
 public:
  static constexpr double kDefaultEpsilon = 1e-3;

  FollowFilteredPolicy(FieldPtr pursuit, FieldPtr follow, ProblemPtr value_problem,
                       StateAdapter adapter, const InputBox& game_box,
                       double epsilon = kDefaultEpsilon, std::string pursuit_source = "",
                       std::string follow_source = "");
  PolicyKind kind() const override { return PolicyKind::kFollowFiltered; }
  Vec action(const Vec& x, double tau, std::size_t step) const override;
  json describe() const override;

  // The switching quantity evaluated at game state `x`.
  double pursuit_magnitude(const Vec& x) const;
  bool uses_pursuit_branch(const Vec& x) const { return pursuit_magnitude(x) >= epsilon_; }

 private:
  FieldPtr pursuit_;
  FieldPtr follow_;
  ProblemPtr value_problem_;
  StateAdapter adapter_;
  double epsilon_;
  std::string pursuit_source_;
  std::string follow_source_;
};

// Plays column `step` of a fixed input sequence, holding the last column
// afterwards. A single column is a constant policy.
class ScriptedPolicy final : public Policy {
 public:
  ScriptedPolicy(Player role, const InputBox& game_box, Mat sequence);
  PolicyKind kind() const override { return PolicyKind::kScripted; }
  Vec action(const Vec& x, double tau, std::size_t step) const override;
  json describe() const override;

 private:
  Mat sequence_;
};

// Re-plans every step with the sampling estimator and plays the first input
// of the best sequence. Each call seeds its generator from (seed, step).
class MpcOnlinePolicy final : public Policy {
 public:
  MpcOnlinePolicy(Player role, FieldPtr field, ProblemPtr value_problem, StateAdapter adapter,
                  const InputBox& game_box, SamplerConfig config, std::uint64_t seed,
                  std::string source = "");
  PolicyKind kind() const override { return PolicyKind::kMpcOnline; }
  Vec action(const Vec& x, double tau, std::size_t step) const override;
  json describe() const override;

 private:
  FieldPtr field_;
  ProblemPtr value_problem_;
  StateAdapter adapter_;
  SamplerConfig config_;
  std::uint64_t seed_;
  std::string source_;
};

// Input supplied from outside (a human client). Starts at the box center.
class ExternalPolicy final : public Policy {
 public:
  ExternalPolicy(Player role, const InputBox& game_box);
  PolicyKind kind() const override { return PolicyKind::kExternal; }
  Vec action(const Vec& x, double tau, std::size_t step) const override;
  // Clamps into the box; throws ContractError on a dimension mismatch.
  void set_input(const Vec& u);
  Vec input() const;

 private:
  mutable std::mutex mu_;
  Vec input_;
};

// Loads value sources once per path. Safe for concurrent use.
class FieldCache {
 public:
  FieldPtr get(const std::filesystem::path& path);

 private:
  std::mutex mu_;
  std::map<std::string, FieldPtr> fields_;
};

// Builds a policy for `game` from a descriptor:
//   {"kind": "net_gradient"|"grid_gradient"|"mpc_online"|"follow_filtered"|
//            "scripted"|"external",
//    "role": "evader"|"pursuer", "source": PATH, "follow_source": PATH,
//    "epsilon": 1e-3, "adapter": "identity"|"dubins_relative",
//    "sequence": [[...], ...], "sampler": {...}, "seed": 0}
// Relative paths resolve against `base_dir`. The adapter defaults to
// identity when the source and game dimensions agree and to
// dubins_relative for a 3-D source driving the 6-D game.
PolicyPtr make_policy(const json& descriptor, ProblemPtr game,
                      const std::filesystem::path& base_dir, FieldCache& cache);

// Follow-game training: the avoid pipeline with max aggregation in both the
// variational inequality and the rollout cost.
TrainResult train_follow_value(const GameProblem& problem, TrainConfig config,
                               const std::filesystem::path& out_dir = {},
                               const ProgressFn& progress = {});

}  // namespace madr
