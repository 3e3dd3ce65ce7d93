/* SPDX-License-Identifier: Apache-2.0 */
#ifndef MADR_MADR_H_
#define MADR_MADR_H_

/*
 * C interface to the reachability toolkit. Pipelines take a JSON request
 * string and return a JSON result string that the caller releases with
 * madr_string_free. Every function returns a status code; on failure
 * madr_last_error() describes the error for the calling thread.
 */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(MADR_BUILDING_LIBRARY)
#    define MADR_API __declspec(dllexport)
#  else
#    define MADR_API __declspec(dllimport)
#  endif
#else
#  define MADR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum madr_status {
  MADR_OK = 0,
  MADR_ERR_CONFIG = 2,
  MADR_ERR_NUMERICAL = 3,
  MADR_ERR_CONTRACT = 4,
  MADR_ERR_DOMAIN = 5,
  MADR_ERR_IO = 6,
  MADR_ERR_ESTIMATION = 7,
  MADR_ERR_NOT_FOUND = 8,
  MADR_ERR_INTERNAL = 9
} madr_status;

typedef struct madr_problem madr_problem;
typedef struct madr_field madr_field;
typedef struct madr_sessions madr_sessions;

/* Called with one JSON metrics record per logged epoch. */
typedef void (*madr_progress_fn)(const char* record_json, void* user);

MADR_API const char* madr_version(void);
/* Message of the last failed call on this thread ("" if none). */
MADR_API const char* madr_last_error(void);
MADR_API const char* madr_status_name(madr_status status);
MADR_API void madr_string_free(char* s);

/* Problems: built-in name or path to a JSON problem config. */
MADR_API madr_status madr_problem_load(const char* name_or_path, madr_problem** out);
MADR_API void madr_problem_free(madr_problem* problem);
MADR_API int madr_problem_state_dim(const madr_problem* problem);
MADR_API madr_status madr_problem_describe(const madr_problem* problem, char** out_json);
MADR_API madr_status madr_problem_boundary(const madr_problem* problem, const double* x,
                                           double* out);

/* Value fields: grid files or network checkpoints. */
MADR_API madr_status madr_field_load(const char* path, madr_field** out);
MADR_API void madr_field_free(madr_field* field);
MADR_API int madr_field_state_dim(const madr_field* field);
MADR_API double madr_field_horizon(const madr_field* field);
MADR_API madr_status madr_field_value(const madr_field* field, const double* x, double tau,
                                      double* out);
/* grad_out receives state_dim entries; dvalue_dtau may be NULL. */
MADR_API madr_status madr_field_sample(const madr_field* field, const double* x, double tau,
                                       double* value, double* dvalue_dtau, double* grad_out);

/*
 * Pipelines. Request keys:
 *   solve_grid:  problem, grid ("NxNxN" or spec path), dt, substeps,
 *                cfl_safety, mode, out
 *   train:       config (object) | config_path, problem, out_dir, follow
 *   collect_mpc: problem, net, perspective, sampler, tau_lo, tau_hi,
 *                gradient_tau, seed, out
 *   eval_brt:    candidate, reference, window, level
 *   matchup:     problem, evaders, pursuers, init, episode, seed,
 *                oob_counts_as_capture, base_dir, out_dir
 *   safe_rate:   problem, net, adversary, states, seed, step, base_dir
 *   simulate:    problem, evader, pursuer, x0, episode, base_dir
 */
MADR_API madr_status madr_solve_grid(const char* request_json, char** out_json);
MADR_API madr_status madr_train(const char* request_json, madr_progress_fn progress, void* user,
                                char** out_json);
MADR_API madr_status madr_collect_mpc(const char* request_json, char** out_json);
MADR_API madr_status madr_eval_brt(const char* request_json, char** out_json);
MADR_API madr_status madr_matchup(const char* request_json, char** out_json);
MADR_API madr_status madr_safe_rate(const char* request_json, char** out_json);
MADR_API madr_status madr_simulate(const char* request_json, char** out_json);

/* Interactive sessions speaking the JSON wire protocol. */
MADR_API madr_status madr_sessions_create(const char* defaults_json, const char* base_dir,
                                          madr_sessions** out);
MADR_API void madr_sessions_free(madr_sessions* sessions);
/* Returns the first snapshot; its "session" key holds the new id. */
MADR_API madr_status madr_session_open(madr_sessions* sessions, const char* request_json,
                                       char** out_json);
MADR_API madr_status madr_session_message(madr_sessions* sessions, const char* id,
                                          const char* message_json, char** out_json);
MADR_API madr_status madr_session_tick(madr_sessions* sessions, const char* id,
                                       char** out_json);
MADR_API madr_status madr_session_snapshot(madr_sessions* sessions, const char* id,
                                           char** out_json);
MADR_API madr_status madr_session_close(madr_sessions* sessions, const char* id);
/* JSON array of open session ids. */
MADR_API madr_status madr_session_list(madr_sessions* sessions, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* MADR_MADR_H_ */
