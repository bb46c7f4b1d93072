#ifndef ASYNC_ADMM_H
#define ASYNC_ADMM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum AdmmCode {
  ADMM_CODE_OK = 0,
  ADMM_CODE_NULL_POINTER = 1,
  ADMM_CODE_INVALID_UTF8 = 2,
  ADMM_CODE_CONFIG = 3,
  ADMM_CODE_RUN = 4,
  ADMM_CODE_IO = 5,
  ADMM_CODE_ANALYSIS = 6,
  ADMM_CODE_OUT_OF_RANGE = 7,
  ADMM_CODE_BUFFER_TOO_SMALL = 8,
  ADMM_CODE_PANIC = 9,
} AdmmCode;

/**
 * How a finished run ended.
 */
typedef enum AdmmRunStatus {
  ADMM_RUN_STATUS_CONVERGED = 0,
  ADMM_RUN_STATUS_SOLVER_FAILURE = 1,
  ADMM_RUN_STATUS_ITERATION_CAP = 2,
  ADMM_RUN_STATUS_TIME_CAP = 3,
} AdmmRunStatus;

/**
 * Run configuration being assembled.
 */
typedef struct AdmmConfig AdmmConfig;

/**
 * A finished run.
 */
typedef struct AdmmRun AdmmRun;

/**
 * Scalar results of a run.
 */
typedef struct AdmmRunStats {
  size_t workers;
  uint64_t iterations;
  double max_residue;
  double constraint_mismatch;
  double objective;
  double virtual_ms;
  double average_wait_fraction;
  size_t omega;
  bool lemma2_holds;
} AdmmRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next call.
 */
const char *admm_last_error(void);

/**
 * Parses config text in the key-value grammar.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdmmCode admm_config_parse(const char *source, struct AdmmConfig **out);

/**
 * Reads a config file; relative paths in it resolve against its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdmmCode admm_config_read(const char *path, struct AdmmConfig **out);

/**
 * Applies one `key=value` override.
 *
 * # Safety
 * `config` must come from this library; `assignment` must be a
 * NUL-terminated string.
 */
enum AdmmCode admm_config_set(struct AdmmConfig *config, const char *assignment);

/**
 * # Safety
 * `config` must come from this library or be null.
 */
void admm_config_free(struct AdmmConfig *config);

/**
 * Runs the configuration and writes its artifacts to the configured
 * output directory. A run that stops at a cap or on a solver failure still
 * returns a handle; inspect it with [`admm_run_status`].
 *
 * # Safety
 * `config` must come from this library and `out` must be a valid pointer.
 */
enum AdmmCode admm_run(const struct AdmmConfig *config, struct AdmmRun **out);

/**
 * # Safety
 * `run` must come from this library or be null.
 */
void admm_run_free(struct AdmmRun *run);

/**
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum AdmmCode admm_run_status(const struct AdmmRun *run, enum AdmmRunStatus *out);

/**
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum AdmmCode admm_run_stats(const struct AdmmRun *run, struct AdmmRunStats *out);

/**
 * Copies worker `worker`'s solution into `buf`. `len` is the capacity in
 * doubles; `needed` (optional) receives the required length. Pass a null
 * `buf` to query the length.
 *
 * # Safety
 * `run` must come from this library; `buf` must hold `len` doubles.
 */
enum AdmmCode admm_run_solution(const struct AdmmRun *run,
                                size_t worker,
                                double *buf,
                                size_t len,
                                size_t *needed);

/**
 * The run summary as JSON. Release with [`admm_string_free`].
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum AdmmCode admm_run_summary_json(const struct AdmmRun *run, char **out);

/**
 * Diagnoses a trace file and returns the report as JSON. Release with
 * [`admm_string_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdmmCode admm_analyze_trace(const char *path, char **out);

/**
 * Penalty and proximal-weight lower bounds for the given constants.
 *
 * # Safety
 * `rho_min` and `alpha_min` must be valid pointers.
 */
enum AdmmCode admm_parameter_bounds(double gamma,
                                    double m1,
                                    double m2,
                                    double c,
                                    size_t omega,
                                    double rho,
                                    double *rho_min,
                                    double *alpha_min);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void admm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASYNC_ADMM_H */
