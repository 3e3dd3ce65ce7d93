// SPDX-License-Identifier: Apache-2.0
#pragma once

// Interactive human-vs-policy sessions and their JSON wire protocol.
//
// Client -> server:
//   {"type": "input", "channels": [..]}   held until the next input
//   {"type": "reset"}
//   {"type": "role", "value": "evader" | "pursuer"}
// Server -> client:
//   {"type": "state", "tick", "t", "states": {"evader": [..], "pursuer": [..]},
//    "ell", "value", "outcome": {"kind", "time", "player"}}
//   {"type": "error", "message"}

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "madr/arena.hpp"
#include "madr/policies.hpp"

namespace madr {

struct SessionConfig {
  ProblemPtr problem;
  // Machine policy descriptors per role; the machine plays whichever role
  // the human does not.
  json evader_policy;
  json pursuer_policy;
  std::filesystem::path base_dir;
  Player human_role = Player::kEvader;
  double tick = 0.02;
  // 0 means open-ended: policies always see their full horizon.
  double duration = 0.0;
  WallMode wall_mode = WallMode::kTerminate;
  Vec initial_state;
  // Optional value shown in snapshots (read-only).
  json display_value;  // {"source": PATH, "adapter": ...}

  // Keys: problem, evader_policy, pursuer_policy, role, tick, duration,
  // wall_mode, initial_state, display_value.
  static SessionConfig from_json(const json& j, const std::filesystem::path& base_dir);
};

class Session {
 public:
  Session(std::string id, SessionConfig config, std::shared_ptr<FieldCache> cache);

  const std::string& id() const { return id_; }
  // Applies one client message; returns a state snapshot or an error
  // message. Malformed messages never alter the session.
  json handle_message(const json& message);
  json handle_text(const std::string& text);
  // Advances one tick unless the episode has ended; returns the snapshot.
  json tick();
  json snapshot() const;
  bool finished() const;
  std::uint64_t tick_count() const;

 private:
  void rebuild_policies();
  void reset_state();
  json snapshot_locked() const;
  void evaluate_outcome_locked();
  const InputBox& human_box() const;

  std::string id_;
  SessionConfig config_;
  std::shared_ptr<FieldCache> cache_;
  PolicyPtr machine_;
  std::shared_ptr<ExternalPolicy> human_;
  FieldPtr display_field_;
  StateAdapter display_adapter_ = StateAdapter::kIdentity;

  mutable std::mutex mu_;
  Vec x_;
  std::uint64_t tick_ = 0;
  Outcome outcome_;
  bool finished_ = false;
  FlowTerms scratch_;
};

class SessionManager {
 public:
  SessionManager(json defaults, std::filesystem::path base_dir);
  // `request` overrides the defaults key by key.
  std::shared_ptr<Session> create(const json& request);
  std::shared_ptr<Session> find(const std::string& id) const;
  bool remove(const std::string& id);
  std::vector<std::shared_ptr<Session>> all() const;

 private:
  json defaults_;
  std::filesystem::path base_dir_;
  std::shared_ptr<FieldCache> cache_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace madr
