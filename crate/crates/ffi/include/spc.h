#ifndef SPC_H
#define SPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpcStatus {
  SPC_STATUS_OK = 0,
  SPC_STATUS_NULL_POINTER = 1,
  SPC_STATUS_INVALID_ARGUMENT = 2,
  SPC_STATUS_DOMAIN = 3,
  SPC_STATUS_IO = 4,
  SPC_STATUS_PARSE = 5,
  SPC_STATUS_BACKEND = 6,
  SPC_STATUS_CHECKPOINT = 7,
  SPC_STATUS_NO_CERTIFICATE = 8,
  SPC_STATUS_PANIC = 99,
} SpcStatus;

typedef enum SpcChargeMode {
  SPC_CHARGE_MODE_NON_RESUMING = 0,
  SPC_CHARGE_MODE_RESUMING = 1,
} SpcChargeMode;

/**
 * Opaque scheduler over a runtime matrix.
 */
typedef struct SpcScheduler SpcScheduler;

typedef struct SpcCertificate {
  double epsilon;
  double delta;
  double lambda;
  double confidence;
  uint64_t r_winner;
  uint64_t t;
} SpcCertificate;

/**
 * One scheduler step.
 */
typedef struct SpcEvent {
  uint64_t t;
  size_t config;
  uint64_t instance;
  double cap_s;
  double measured_s;
  bool completed;
  double lcb_s;
  uint64_t r;
  uint64_t q;
  double charged_total_s;
  double charged_s;
} SpcEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *spc_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void spc_string_free(char *s);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum SpcStatus spc_epsilon(uint32_t k, uint64_t r, uint64_t t, double *out);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum SpcStatus spc_beta(double p, uint64_t r, uint64_t t, double *out);

/**
 * Lower confidence bound of `len` capped runtimes (any order).
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be valid for
 * writes.
 */
enum SpcStatus spc_lcb(const double *values, size_t len, uint64_t t, double kappa0, double *out);

/**
 * Smallest certified `δ`; returns `SPC_STATUS_NO_CERTIFICATE` when none
 * exists at these parameters.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum SpcStatus spc_certify_delta(uint64_t r,
                                 uint64_t t,
                                 double epsilon,
                                 double lambda,
                                 struct SpcCertificate *out);

/**
 * Scheduler over a matrix CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SpcStatus spc_scheduler_new_from_path(const char *path,
                                           double kappa0,
                                           double multiplier,
                                           uint64_t seed,
                                           enum SpcChargeMode mode,
                                           struct SpcScheduler **out);

/**
 * Scheduler over matrix CSV text.
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SpcStatus spc_scheduler_new_from_csv(const char *csv,
                                          double kappa0,
                                          double multiplier,
                                          uint64_t seed,
                                          enum SpcChargeMode mode,
                                          struct SpcScheduler **out);

/**
 * Restores a scheduler from a checkpoint produced by
 * [`spc_scheduler_snapshot`], over the same matrix CSV text.
 *
 * # Safety
 * `csv` and `snapshot` must be NUL-terminated strings; `out` must be valid
 * for writes.
 */
enum SpcStatus spc_scheduler_restore(const char *csv,
                                     const char *snapshot,
                                     enum SpcChargeMode mode,
                                     struct SpcScheduler **out);

/**
 * # Safety
 * `scheduler` must be null or a live handle; it is invalid afterwards.
 */
void spc_scheduler_free(struct SpcScheduler *scheduler);

/**
 * Advances the scheduler by one step.
 *
 * # Safety
 * `scheduler` must be a live handle; `out` may be null.
 */
enum SpcStatus spc_scheduler_step(struct SpcScheduler *scheduler, struct SpcEvent *out);

/**
 * Steps until `budget_seconds` of charged time is spent or `max_steps`
 * steps were taken (0 means no step limit).
 *
 * # Safety
 * `scheduler` must be a live handle; `steps_taken` may be null.
 */
enum SpcStatus spc_scheduler_run(struct SpcScheduler *scheduler,
                                 double budget_seconds,
                                 uint64_t max_steps,
                                 uint64_t *steps_taken);

/**
 * # Safety
 * `scheduler` must be a live handle; `out` must be valid for writes.
 */
enum SpcStatus spc_scheduler_winner(const struct SpcScheduler *scheduler, size_t *out);

/**
 * Number of configurations.
 *
 * # Safety
 * `scheduler` must be a live handle; `out` must be valid for writes.
 */
enum SpcStatus spc_scheduler_num_configs(const struct SpcScheduler *scheduler, size_t *out);

/**
 * Iteration counter `t` and total charged seconds.
 *
 * # Safety
 * `scheduler` must be a live handle; outputs may be null.
 */
enum SpcStatus spc_scheduler_progress(const struct SpcScheduler *scheduler,
                                      uint64_t *t,
                                      double *charged_total_s);

/**
 * Active instances and current bound of one configuration.
 *
 * # Safety
 * `scheduler` must be a live handle; outputs may be null.
 */
enum SpcStatus spc_scheduler_config_state(const struct SpcScheduler *scheduler,
                                          size_t config,
                                          uint64_t *r,
                                          double *lcb_s);

/**
 * Checkpoint JSON of the scheduler; release with [`spc_string_free`].
 *
 * # Safety
 * `scheduler` must be a live handle; `out` must be valid for writes.
 */
enum SpcStatus spc_scheduler_snapshot(const struct SpcScheduler *scheduler, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPC_H */
