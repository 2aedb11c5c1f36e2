#ifndef MULTIPHOTON_H
#define MULTIPHOTON_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 to 5 match the command-line exit codes.
 */
typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_NULL_POINTER = 1,
  MP_STATUS_INVALID_CONFIG = 2,
  MP_STATUS_INFEASIBLE = 3,
  MP_STATUS_DATA_MISMATCH = 4,
  MP_STATUS_CAPACITY = 5,
  MP_STATUS_INVALID_ARGUMENT = 6,
  MP_STATUS_IO = 7,
  MP_STATUS_PANIC = 8,
} MpStatus;

/**
 * Click counts of a simulated or recorded run.
 */
typedef struct MpCounts MpCounts;

/**
 * Photon-number distribution.
 */
typedef struct MpDistribution MpDistribution;

/**
 * Estimate with standard error. When `upper_bound` is set, `value` is 0
 * and `std_error` is a one-sided 68% upper bound.
 */
typedef struct MpEstimate {
  double value;
  double std_error;
  uint64_t n_effective;
  bool upper_bound;
} MpEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on this thread.
 */
const char *mp_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mp_string_free(char *s);

/**
 * Single-emitter distribution on {0..3} with the given mean, `g(2)`, `g(3)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_distribution_solve(double mean, double g2, double g3, struct MpDistribution **out);

/**
 * # Safety
 * `probs` must point to `len` readable doubles; `out` must be writable.
 */
enum MpStatus mp_distribution_from_probs(const double *probs,
                                         size_t len,
                                         struct MpDistribution **out);

/**
 * Distribution of the total photon number of `m` independent copies.
 *
 * # Safety
 * `emitter` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_distribution_cluster(const struct MpDistribution *emitter,
                                      size_t m,
                                      struct MpDistribution **out);

/**
 * Normalized correlation function `g(k)`.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_distribution_g(const struct MpDistribution *dist, size_t k, double *out);

/**
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_distribution_mean(const struct MpDistribution *dist, double *out);

/**
 * Number of stored probabilities, `n_max + 1`; 0 for a null handle.
 *
 * # Safety
 * `dist` must be a live handle or null.
 */
size_t mp_distribution_len(const struct MpDistribution *dist);

/**
 * Copies the probabilities into `buf`, which must hold `mp_distribution_len` values.
 *
 * # Safety
 * `dist` must be a live handle; `buf` must have room for `len` doubles.
 */
enum MpStatus mp_distribution_probs(const struct MpDistribution *dist, double *buf, size_t len);

/**
 * # Safety
 * `dist` must come from this library and not have been freed, or be null.
 */
void mp_distribution_free(struct MpDistribution *dist);

/**
 * `g(2)` of a cluster of `m` emitters with single-emitter `g2_1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_g2_cluster(double m, double g2_1, double *out);

/**
 * `g(3)` of a cluster of `m` emitters.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_g3_cluster(double m, double g2_1, double g3_1, double *out);

/**
 * Cluster size implied by a measured `g(2)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_estimate_m(double g2, double g2_1, double *out);

/**
 * Simulates the run described by a TOML configuration. `workers` 0 uses all cores.
 *
 * # Safety
 * `config_toml` must be a nul-terminated string; `out` must be writable.
 */
enum MpStatus mp_simulate_toml(const char *config_toml, size_t workers, struct MpCounts **out);

/**
 * Counts from a full pattern histogram of `2^bins` entries, indexed by click mask.
 *
 * # Safety
 * `histogram` must point to `len` readable values; `out` must be writable.
 */
enum MpStatus mp_counts_from_histogram(size_t bins,
                                       const uint64_t *histogram,
                                       size_t len,
                                       struct MpCounts **out);

/**
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_pulses(const struct MpCounts *counts, uint64_t *out);

/**
 * Pulses in which every bin of `subset` (a bit mask) clicked.
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_coincidence(const struct MpCounts *counts, uint32_t subset, uint64_t *out);

/**
 * `g(k)` on one bin subset (bit mask).
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_g(const struct MpCounts *counts, uint32_t subset, struct MpEstimate *out);

/**
 * `g(k)` pooled over all subsets of `k` bins.
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_g_symmetrized(const struct MpCounts *counts,
                                      size_t k,
                                      struct MpEstimate *out);

/**
 * `theta(k)` on one bin subset (bit mask).
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_theta(const struct MpCounts *counts,
                              uint32_t subset,
                              struct MpEstimate *out);

/**
 * `theta(k)` pooled over all subsets of `k` bins.
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_theta_symmetrized(const struct MpCounts *counts,
                                          size_t k,
                                          struct MpEstimate *out);

/**
 * Witness report as a JSON string (free with [`mp_string_free`]).
 * `bootstrap_resamples` 0 selects propagated errors.
 *
 * # Safety
 * `counts` must be a live handle; `out` must be writable.
 */
enum MpStatus mp_counts_report_json(const struct MpCounts *counts,
                                    double sigma,
                                    size_t bootstrap_resamples,
                                    uint64_t seed,
                                    char **out);

/**
 * # Safety
 * `counts` must come from this library and not have been freed, or be null.
 */
void mp_counts_free(struct MpCounts *counts);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIPHOTON_H */
