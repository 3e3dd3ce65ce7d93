// SPDX-License-Identifier: Apache-2.0
#include "madr/madr.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "madr/errors.hpp"
#include "madr/game_models.hpp"
#include "madr/pipelines.hpp"
#include "madr/session.hpp"
#include "madr/value_field.hpp"

struct madr_problem {
  madr::ProblemPtr problem;
};

struct madr_field {
  madr::FieldPtr field;
};

struct madr_sessions {
  std::unique_ptr<madr::SessionManager> manager;
};

namespace {

thread_local std::string g_last_error;

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

madr_status fail(madr_status status, const char* message) {
  g_last_error = message;
  return status;
}

// Runs `fn`, mapping exceptions onto status codes.
template <typename Fn>
madr_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return MADR_OK;
  } catch (const madr::Error& e) {
    return fail(static_cast<madr_status>(static_cast<int>(e.kind())), e.what());
  } catch (const NotFound& e) {
    return fail(MADR_ERR_NOT_FOUND, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MADR_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MADR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MADR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MADR_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

nlohmann::json parse_request(const char* text) {
  if (text == nullptr) return nlohmann::json::object();
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw madr::ConfigError("request is not valid JSON");
  if (!j.is_object()) throw madr::ConfigError("request must be a JSON object");
  return j;
}

void check_out(const void* out) {
  if (out == nullptr) throw madr::ContractError("output pointer is NULL");
}

template <typename Fn>
madr_status json_call(const char* request, char** out, Fn&& fn) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    *out = dup_string(fn(parse_request(request)).dump());
  });
}

std::shared_ptr<madr::Session> find_session(madr_sessions* s, const char* id) {
  if (s == nullptr || s->manager == nullptr) throw madr::ContractError("sessions handle is NULL");
  if (id == nullptr) throw madr::ContractError("session id is NULL");
  auto session = s->manager->find(id);
  if (!session) throw NotFound(std::string("no session '") + id + "'");
  return session;
}

}  // namespace

extern "C" {

const char* madr_version(void) { return "0.1.0"; }

const char* madr_last_error(void) { return g_last_error.c_str(); }

const char* madr_status_name(madr_status status) {
  switch (status) {
    case MADR_OK: return "ok";
    case MADR_ERR_CONFIG: return "config";
    case MADR_ERR_NUMERICAL: return "numerical";
    case MADR_ERR_CONTRACT: return "contract";
    case MADR_ERR_DOMAIN: return "domain";
    case MADR_ERR_IO: return "io";
    case MADR_ERR_ESTIMATION: return "estimation";
    case MADR_ERR_NOT_FOUND: return "not_found";
    case MADR_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void madr_string_free(char* s) { std::free(s); }

madr_status madr_problem_load(const char* name_or_path, madr_problem** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (name_or_path == nullptr) throw madr::ContractError("problem name is NULL");
    *out = new madr_problem{madr::load_problem(name_or_path)};
  });
}

void madr_problem_free(madr_problem* problem) { delete problem; }

int madr_problem_state_dim(const madr_problem* problem) {
  return problem ? problem->problem->state_dim() : -1;
}

madr_status madr_problem_describe(const madr_problem* problem, char** out_json) {
  return guarded([&] {
    check_out(out_json);
    if (problem == nullptr) throw madr::ContractError("problem handle is NULL");
    const madr::GameProblem& p = *problem->problem;
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : p.state_bounds) bounds.push_back({b.lo, b.hi});
    nlohmann::json owners = nlohmann::json::array();
    for (auto o : p.dim_owner) owners.push_back(o == madr::Player::kEvader ? "evader" : "pursuer");
    const auto& u = p.dynamics->control_box();
    const auto& d = p.dynamics->disturbance_box();
    auto box_json = [](const madr::InputBox& b) {
      const madr::Vec& lo = b.lower();
      const madr::Vec& hi = b.upper();
      return nlohmann::json{{"lo", std::vector<double>(lo.data(), lo.data() + lo.size())},
                            {"hi", std::vector<double>(hi.data(), hi.data() + hi.size())}};
    };
    nlohmann::json angular = nlohmann::json::array();
    for (int i = 0; i < p.state_dim(); ++i) angular.push_back(p.dynamics->is_angular(i));
    *out_json = dup_string(nlohmann::json{{"name", p.name},
                                          {"state_dim", p.state_dim()},
                                          {"horizon", p.horizon},
                                          {"state_bounds", bounds},
                                          {"angular", angular},
                                          {"dim_owner", owners},
                                          {"control_box", box_json(u)},
                                          {"disturbance_box", box_json(d)}}
                               .dump());
  });
}

madr_status madr_problem_boundary(const madr_problem* problem, const double* x, double* out) {
  return guarded([&] {
    check_out(out);
    if (problem == nullptr || x == nullptr) throw madr::ContractError("NULL argument");
    const int n = problem->problem->state_dim();
    *out = problem->problem->boundary(madr::Vec(Eigen::Map<const madr::Vec>(x, n)));
  });
}

madr_status madr_field_load(const char* path, madr_field** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (path == nullptr) throw madr::ContractError("path is NULL");
    *out = new madr_field{madr::load_field(madr::resolve_config_path(path))};
  });
}

void madr_field_free(madr_field* field) { delete field; }

int madr_field_state_dim(const madr_field* field) { return field ? field->field->state_dim() : -1; }

double madr_field_horizon(const madr_field* field) { return field ? field->field->horizon() : 0.0; }

madr_status madr_field_value(const madr_field* field, const double* x, double tau, double* out) {
  return guarded([&] {
    check_out(out);
    if (field == nullptr || x == nullptr) throw madr::ContractError("NULL argument");
    const int n = field->field->state_dim();
    *out = field->field->value(madr::Vec(Eigen::Map<const madr::Vec>(x, n)), tau);
  });
}

madr_status madr_field_sample(const madr_field* field, const double* x, double tau, double* value,
                              double* dvalue_dtau, double* grad_out) {
  return guarded([&] {
    check_out(value);
    check_out(grad_out);
    if (field == nullptr || x == nullptr) throw madr::ContractError("NULL argument");
    const int n = field->field->state_dim();
    const madr::FieldSample s = field->field->sample(madr::Vec(Eigen::Map<const madr::Vec>(x, n)), tau);
    *value = s.value;
    if (dvalue_dtau) *dvalue_dtau = s.dvalue_dtau;
    for (int i = 0; i < n; ++i) grad_out[i] = s.grad_x[i];
  });
}

madr_status madr_solve_grid(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_solve_grid(r); });
}

madr_status madr_train(const char* request_json, madr_progress_fn progress, void* user,
                       char** out_json) {
  return json_call(request_json, out_json, [&](const nlohmann::json& r) {
    madr::ProgressFn fn;
    if (progress != nullptr) {
      fn = [progress, user](const nlohmann::json& record) { progress(record.dump().c_str(), user); };
    }
    return madr::run_train(r, fn);
  });
}

madr_status madr_collect_mpc(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_collect_mpc(r); });
}

madr_status madr_eval_brt(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_eval_brt(r); });
}

madr_status madr_matchup(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_matchup(r); });
}

madr_status madr_safe_rate(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_safe_rate(r); });
}

madr_status madr_simulate(const char* request_json, char** out_json) {
  return json_call(request_json, out_json, [](const nlohmann::json& r) { return madr::run_simulate(r); });
}

madr_status madr_sessions_create(const char* defaults_json, const char* base_dir,
                                 madr_sessions** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    auto manager = std::make_unique<madr::SessionManager>(parse_request(defaults_json),
                                                          base_dir ? base_dir : ".");
    *out = new madr_sessions{std::move(manager)};
  });
}

void madr_sessions_free(madr_sessions* sessions) { delete sessions; }

madr_status madr_session_open(madr_sessions* sessions, const char* request_json, char** out_json) {
  return guarded([&] {
    check_out(out_json);
    *out_json = nullptr;
    if (sessions == nullptr) throw madr::ContractError("sessions handle is NULL");
    auto session = sessions->manager->create(parse_request(request_json));
    *out_json = dup_string(session->snapshot().dump());
  });
}

madr_status madr_session_message(madr_sessions* sessions, const char* id, const char* message_json,
                                 char** out_json) {
  return guarded([&] {
    check_out(out_json);
    *out_json = nullptr;
    auto session = find_session(sessions, id);
    *out_json = dup_string(session->handle_text(message_json ? message_json : "").dump());
  });
}

madr_status madr_session_tick(madr_sessions* sessions, const char* id, char** out_json) {
  return guarded([&] {
    check_out(out_json);
    *out_json = nullptr;
    *out_json = dup_string(find_session(sessions, id)->tick().dump());
  });
}

madr_status madr_session_snapshot(madr_sessions* sessions, const char* id, char** out_json) {
  return guarded([&] {
    check_out(out_json);
    *out_json = nullptr;
    *out_json = dup_string(find_session(sessions, id)->snapshot().dump());
  });
}

madr_status madr_session_close(madr_sessions* sessions, const char* id) {
  return guarded([&] {
    find_session(sessions, id);
    sessions->manager->remove(id);
  });
}

madr_status madr_session_list(madr_sessions* sessions, char** out_json) {
  return guarded([&] {
    check_out(out_json);
    *out_json = nullptr;
    if (sessions == nullptr) throw madr::ContractError("sessions handle is NULL");
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& s : sessions->manager->all()) ids.push_back(s->id());
    *out_json = dup_string(ids.dump());
  });
}

}  // extern "C"
