#ifndef D2DCACHE_H
#define D2DCACHE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Monte-Carlo metric selector for [`d2d_simulate`].
 */
typedef enum D2dMetric {
  /**
   * One value.
   */
  D2D_METRIC_SUCCESS_PROB = 0,
  /**
   * One value per group.
   */
  D2D_METRIC_ASSOC_PROB = 1,
  /**
   * One value per group.
   */
  D2D_METRIC_ACTIVE_RATIO = 2,
  /**
   * One value, offloaded requesters per m².
   */
  D2D_METRIC_OFFLOAD_GAIN = 3,
} D2dMetric;

/**
 * Caching policy selector for [`d2d_optimize`].
 */
typedef enum D2dPolicy {
  D2D_POLICY_PROPOSED_EXACT = 0,
  D2D_POLICY_PROPOSED_ASYMPTOTIC = 1,
  D2D_POLICY_UNIFORM = 2,
  D2D_POLICY_ONE_UT = 3,
} D2dPolicy;

/**
 * Result of every fallible call.
 */
typedef enum D2dStatus {
  D2D_STATUS_OK = 0,
  /**
   * Solver or model failure not covered below.
   */
  D2D_STATUS_INTERNAL = 1,
  /**
   * Malformed or inconsistent configuration.
   */
  D2D_STATUS_CONFIG = 2,
  D2D_STATUS_NON_CONVERGENCE = 3,
  /**
   * A Monte-Carlo estimate was conditioned on an event that never occurred.
   */
  D2D_STATUS_DEGENERATE_ESTIMATE = 4,
  /**
   * Null pointer, invalid UTF-8, wrong buffer length or out-of-domain value.
   */
  D2D_STATUS_INVALID_ARGUMENT = 5,
  D2D_STATUS_PANIC = 6,
} D2dStatus;

/**
 * Opaque experiment handle.
 */
typedef struct D2dExperiment D2dExperiment;

/**
 * Analytic metrics of one strategy.
 */
typedef struct D2dEval {
  double success_prob;
  /**
   * Offloaded requesters per m².
   */
  double offload_gain;
} D2dEval;

/**
 * Summary of one optimizer run; the densities go to a separate buffer.
 */
typedef struct D2dOptimum {
  /**
   * Total caching density.
   */
  double x;
  /**
   * Bias-weighted caching density.
   */
  double y;
  /**
   * Gain of the returned strategy under the full model.
   */
  double gain;
  /**
   * Objective value reported by the solver itself.
   */
  double reported_gain;
  uint64_t iterations;
} D2dOptimum;

typedef struct D2dEstimate {
  double mean;
  /**
   * NaN for a single realization.
   */
  double std_error;
  double ci99_half;
  uint64_t realizations;
} D2dEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *d2d_version(void);

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call on the same thread.
 */
const char *d2d_last_error(void);

/**
 * Builds an experiment from config text (`block.key = value` lines).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum D2dStatus d2d_experiment_parse(const char *text, struct D2dExperiment **out);

/**
 * Builds an experiment from a config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum D2dStatus d2d_experiment_load(const char *path, struct D2dExperiment **out);

/**
 * Applies one `block.key=value` override. The handle is unchanged on failure.
 *
 * # Safety
 * `exp` must come from this library and `assignment` be a NUL-terminated string.
 */
enum D2dStatus d2d_experiment_set(struct D2dExperiment *exp, const char *assignment);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `exp` must come from this library and not be used afterwards.
 */
void d2d_experiment_free(struct D2dExperiment *exp);

/**
 * Number of user groups, or 0 for a null handle.
 *
 * # Safety
 * `exp` must be null or come from this library.
 */
size_t d2d_experiment_group_count(const struct D2dExperiment *exp);

/**
 * Analytic success probability and offloading gain of a strategy.
 *
 * Pass `c = NULL` to use the config's `strategy.c`; otherwise `len` must
 * equal the group count.
 *
 * # Safety
 * `c` must point to `len` doubles when not null; `out` must be writable.
 */
enum D2dStatus d2d_eval(const struct D2dExperiment *exp,
                        const double *c,
                        size_t len,
                        struct D2dEval *out);

/**
 * Runs one caching policy. The densities are written to `c_out`, which
 * must hold exactly the group count.
 *
 * # Safety
 * `c_out` must point to `len` writable doubles; `out` must be writable.
 */
enum D2dStatus d2d_optimize(const struct D2dExperiment *exp,
                            enum D2dPolicy policy,
                            double *c_out,
                            size_t len,
                            struct D2dOptimum *out);

/**
 * Monte-Carlo estimate of one metric using the config's `sim` block.
 *
 * Writes one estimate for scalar metrics and one per group otherwise;
 * `written` receives the count. Fails with an invalid-argument status if
 * `out_len` is too small.
 *
 * # Safety
 * `c` as in [`d2d_eval`]; `out` must point to `out_len` writable estimates
 * and `written` be writable.
 */
enum D2dStatus d2d_simulate(const struct D2dExperiment *exp,
                            const double *c,
                            size_t len,
                            enum D2dMetric metric,
                            struct D2dEstimate *out,
                            size_t out_len,
                            size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2DCACHE_H */
