#ifndef RESOLVENT_H
#define RESOLVENT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RvStatus {
  RV_STATUS_OK = 0,
  RV_STATUS_NULL_POINTER = 1,
  RV_STATUS_INVALID_ARGUMENT = 2,
  RV_STATUS_DIMENSION_MISMATCH = 3,
  RV_STATUS_PARSE = 4,
  RV_STATUS_NUMERICAL = 5,
  RV_STATUS_IO = 6,
  RV_STATUS_BUFFER_TOO_SMALL = 7,
  RV_STATUS_PANIC = 8,
} RvStatus;

typedef enum RvAlgorithm {
  /**
   * Iterate the averaged resolvent on X.
   */
  RV_ALGORITHM_AVERAGED_RESOLVENT = 0,
  /**
   * Iterate the parallel product-space map.
   */
  RV_ALGORITHM_PARALLEL = 1,
  /**
   * Iterate the sequential sweep (heuristic).
   */
  RV_ALGORITHM_SWEEP = 2,
} RvAlgorithm;

typedef enum RvOutcome {
  RV_OUTCOME_CONVERGED = 0,
  RV_OUTCOME_MAX_ITERS = 1,
  RV_OUTCOME_DIVERGED = 2,
} RvOutcome;

/**
 * Opaque problem handle.
 */
typedef struct RvProblem RvProblem;

/**
 * Opaque handle to a finished run.
 */
typedef struct RvRun RvRun;

typedef struct RvStoppingRule {
  size_t max_iters;
  double step_tol;
  double divergence_threshold;
} RvStoppingRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *rv_last_error_message(void);

/**
 * Library defaults: 10000 iterations, step tolerance 1e-10, divergence at 1e12.
 */
struct RvStoppingRule rv_default_stopping_rule(void);

/**
 * Parses a problem from JSON `{"weights": [...], "models": [...], "dim": n}`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a writable pointer.
 */
enum RvStatus rv_problem_from_json(const char *json, struct RvProblem **out);

/**
 * Builds an equally weighted problem over `m` seeded random hyperplanes in `R^n`.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum RvStatus rv_problem_random_hyperplanes(size_t n,
                                            size_t m,
                                            uint64_t seed,
                                            struct RvProblem **out);

/**
 * # Safety
 * `problem` must come from an `rv_problem_*` constructor and not be freed twice.
 */
void rv_problem_free(struct RvProblem *problem);

/**
 * Dimension `n`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rv_problem_dim(const struct RvProblem *problem);

/**
 * Number of operators `m`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rv_problem_num_sets(const struct RvProblem *problem);

/**
 * Evaluates the averaged resolvent at `x` (length `n`).
 *
 * # Safety
 * `x` must hold `len` values; `out` must hold `cap` values; `written` must be writable.
 */
enum RvStatus rv_averaged_resolvent(const struct RvProblem *problem,
                                    const double *x,
                                    size_t len,
                                    double *out,
                                    size_t cap,
                                    size_t *written);

/**
 * Runs one algorithm from `x0`.
 *
 * For the averaged resolvent `x0` has length `n`. For the product-space
 * algorithms it has length `m*n` (blocks back to back) or `n`, in which case
 * it is copied into every block. `allow_two_sets` permits `m = 2` for the
 * parallel iteration.
 *
 * # Safety
 * `x0` must hold `len` values and `out` must be a writable pointer.
 */
enum RvStatus rv_run(const struct RvProblem *problem,
                     enum RvAlgorithm algorithm,
                     const double *x0,
                     size_t len,
                     struct RvStoppingRule rule,
                     bool allow_two_sets,
                     struct RvRun **out);

/**
 * # Safety
 * `run` must come from `rv_run` and not be freed twice.
 */
void rv_run_free(struct RvRun *run);

/**
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum RvStatus rv_run_outcome(const struct RvRun *run, enum RvOutcome *out);

/**
 * Steps taken, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t rv_run_iterations(const struct RvRun *run);

/**
 * Final iterate: `n` values, or `m*n` for product-space runs.
 *
 * # Safety
 * `run` must be a live handle; `out` must hold `cap` values; `written` must be writable.
 */
enum RvStatus rv_run_final_point(const struct RvRun *run, double *out, size_t cap, size_t *written);

/**
 * Final iterate mapped back to `X` (the weighted block combination), `n` values.
 *
 * # Safety
 * As for `rv_run_final_point`.
 */
enum RvStatus rv_run_projected_final(const struct RvRun *run,
                                     double *out,
                                     size_t cap,
                                     size_t *written);

/**
 * Relative error in dB per iteration, starting with 0 at iteration 0.
 *
 * # Safety
 * As for `rv_run_final_point`.
 */
enum RvStatus rv_run_db_curve(const struct RvRun *run, double *out, size_t cap, size_t *written);

/**
 * Minimum-norm least-squares solution of a system given as JSON
 * `{"rows": [[...]], "rhs": [...]}`.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must hold `cap` values; `written` must be writable.
 */
enum RvStatus rv_least_squares_json(const char *json, double *out, size_t cap, size_t *written);

/**
 * Runs an experiment described by a JSON config and writes the CSV and
 * columns files. `out_path` overrides the config's `output_path` when non-null.
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out_path` must be null or NUL-terminated.
 */
enum RvStatus rv_experiment_run_json(const char *config_json, const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESOLVENT_H */
