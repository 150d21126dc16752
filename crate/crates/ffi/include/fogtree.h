#ifndef FOGTREE_H
#define FOGTREE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_ARGUMENT = 1,
  FT_STATUS_INVALID_UTF8 = 2,
  FT_STATUS_PARSE = 3,
  FT_STATUS_INFEASIBLE = 4,
  FT_STATUS_RUNTIME = 5,
  FT_STATUS_RESOURCE_VIOLATION = 6,
  FT_STATUS_PANIC = 7,
} FtStatus;

typedef struct FtInstance FtInstance;

typedef struct FtShell FtShell;

typedef struct FtSolution FtSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on the calling thread. The pointer is
// valid until the next failing call on this thread.
const char *ft_last_error(void);

// # Safety
// `s` must come from this library and not have been freed.
void ft_string_free(char *s);

// Loads an allocation instance from JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FtStatus ft_instance_from_json(const char *json, struct FtInstance **out);

// # Safety
// `inst` must come from [`ft_instance_from_json`] and not have been freed.
void ft_instance_free(struct FtInstance *inst);

// Solves an instance exactly; `oracle` selects the exhaustive solver.
//
// # Safety
// `inst` must be a live instance handle; `out` must be writable.
enum FtStatus ft_solve(const struct FtInstance *inst, bool oracle, struct FtSolution **out);

// # Safety
// `sol` must be a live solution handle; `z` must be writable.
enum FtStatus ft_solution_z(const struct FtSolution *sol, double *z);

// The solution as JSON; free the result with [`ft_string_free`].
//
// # Safety
// `sol` must be a live solution handle; `out` must be writable.
enum FtStatus ft_solution_to_json(const struct FtSolution *sol, char **out);

// # Safety
// `sol` must come from [`ft_solve`] and not have been freed.
void ft_solution_free(struct FtSolution *sol);

// Parses and validates DSL source. Returns `FT_STATUS_PARSE` on a syntax
// error or when validation finds problems; `diagnostics` receives the count.
//
// # Safety
// `src` must be a NUL-terminated string; `diagnostics` may be null.
enum FtStatus ft_dsl_check(const char *src, uintptr_t *diagnostics);

// Runs a named experiment and returns one JSON summary per result.
//
// # Safety
// `name` must be a NUL-terminated string, `config_json` NUL-terminated or
// null; `out` must be writable.
enum FtStatus ft_experiment_run(const char *name,
                                const char *config_json,
                                uint64_t seed,
                                bool use_seed,
                                char **out);

// Opens a job shell holding every node of a JSON topology.
//
// # Safety
// `topology_json` must be a NUL-terminated string; `out` must be writable.
enum FtStatus ft_shell_new(const char *topology_json, struct FtShell **out);

// Executes one shell command line; `out` receives its output, which is
// empty after `quit`.
//
// # Safety
// `shell` must be a live shell handle, `line` NUL-terminated, `out` writable.
enum FtStatus ft_shell_exec(struct FtShell *shell, const char *line, char **out);

// # Safety
// `shell` must come from [`ft_shell_new`] and not have been freed.
void ft_shell_free(struct FtShell *shell);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOGTREE_H */
