#ifndef LRSBE_H
#define LRSBE_H

/* This file is generated by cbindgen from lrsbe-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum LrsbeStatus {
  LRSBE_STATUS_OK = 0,
  LRSBE_STATUS_NULL_POINTER = 1,
  LRSBE_STATUS_INVALID_ARGUMENT = 2,
  LRSBE_STATUS_NUMERICAL_ERROR = 3,
  LRSBE_STATUS_UTF8_ERROR = 4,
} LrsbeStatus;

/**
 * Opaque ground-truth channel realization.
 */
typedef struct LrsbeChannel LrsbeChannel;

/**
 * Opaque estimation result.
 */
typedef struct LrsbeEstimate LrsbeEstimate;

/**
 * Opaque noisy measurement.
 */
typedef struct LrsbeMeasurement LrsbeMeasurement;

/**
 * Opaque pilot set.
 */
typedef struct LrsbePilots LrsbePilots;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *lrsbe_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *lrsbe_version(void);

/**
 * Synthesize a ground-truth channel realization.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum LrsbeStatus lrsbe_channel_synthesize(uintptr_t m_h,
                                          uintptr_t m_v,
                                          uintptr_t k_users,
                                          uintptr_t rank_r,
                                          uintptr_t sparse_blocks,
                                          uintptr_t block_len_gen,
                                          double power_split,
                                          double energy_concentration,
                                          double gain,
                                          uint64_t seed,
                                          struct LrsbeChannel **out);

/**
 * Parse a channel realization from its JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LrsbeStatus lrsbe_channel_from_json(const char *json, struct LrsbeChannel **out);

/**
 * Serialize a channel to JSON; free the string with `lrsbe_string_free`.
 *
 * # Safety
 * `channel` must be a live handle; `out` must be writable.
 */
enum LrsbeStatus lrsbe_channel_to_json(const struct LrsbeChannel *channel, char **out);

/**
 * Length `M·K` of the collective channel vector.
 *
 * # Safety
 * `channel` must be a live handle.
 */
uintptr_t lrsbe_channel_len(const struct LrsbeChannel *channel);

/**
 * Copy the collective ground-truth channel into caller buffers of length
 * `lrsbe_channel_len`.
 *
 * # Safety
 * `channel` must be live; `re`/`im` must hold `len` doubles.
 */
enum LrsbeStatus lrsbe_channel_collective(const struct LrsbeChannel *channel,
                                          double *re,
                                          double *im,
                                          uintptr_t len);

/**
 * # Safety
 * `channel` must come from this library and not be freed twice.
 */
void lrsbe_channel_free(struct LrsbeChannel *channel);

/**
 * Cyclic DFT pilot assignment for `k_users` users over `n_pilots`
 * orthogonal sequences.
 *
 * # Safety
 * `out` must be writable.
 */
enum LrsbeStatus lrsbe_pilots_create(uintptr_t n_pilots,
                                     uintptr_t k_users,
                                     uint64_t seed,
                                     struct LrsbePilots **out);

/**
 * # Safety
 * `pilots` must come from this library and not be freed twice.
 */
void lrsbe_pilots_free(struct LrsbePilots *pilots);

/**
 * Observe a channel through the pilots at the given SNR (dB); pass
 * `INFINITY` for a noiseless measurement.
 *
 * # Safety
 * `channel` and `pilots` must be live handles; `out` must be writable.
 */
enum LrsbeStatus lrsbe_measure(const struct LrsbeChannel *channel,
                               const struct LrsbePilots *pilots,
                               double snr_db,
                               uint64_t seed,
                               struct LrsbeMeasurement **out);

/**
 * # Safety
 * `meas` must come from this library and not be freed twice.
 */
void lrsbe_measurement_free(struct LrsbeMeasurement *meas);

/**
 * Run one estimator. `solver` is one of `lrsbe | omp | ista | sbe | bsbe`;
 * `options_json` may be NULL for defaults or a JSON object matching the
 * library's solver options schema.
 *
 * # Safety
 * Handles must be live; strings NUL-terminated; `out` writable.
 */
enum LrsbeStatus lrsbe_estimate(const char *solver,
                                const struct LrsbeMeasurement *meas,
                                const struct LrsbePilots *pilots,
                                uintptr_t m_h,
                                uintptr_t m_v,
                                uintptr_t k_users,
                                const char *options_json,
                                struct LrsbeEstimate **out);

/**
 * Length of the estimated collective channel.
 *
 * # Safety
 * `est` must be a live handle.
 */
uintptr_t lrsbe_estimate_len(const struct LrsbeEstimate *est);

/**
 * Copy the estimate into caller buffers of length `lrsbe_estimate_len`.
 *
 * # Safety
 * `est` must be live; `re`/`im` must hold `len` doubles.
 */
enum LrsbeStatus lrsbe_estimate_channel(const struct LrsbeEstimate *est,
                                        double *re,
                                        double *im,
                                        uintptr_t len);

/**
 * # Safety
 * `est` must be a live handle.
 */
uintptr_t lrsbe_estimate_iterations(const struct LrsbeEstimate *est);

/**
 * # Safety
 * `est` must be a live handle.
 */
bool lrsbe_estimate_converged(const struct LrsbeEstimate *est);

/**
 * # Safety
 * `est` must be a live handle.
 */
double lrsbe_estimate_runtime_ms(const struct LrsbeEstimate *est);

/**
 * # Safety
 * `est` must come from this library and not be freed twice.
 */
void lrsbe_estimate_free(struct LrsbeEstimate *est);

/**
 * Per-user normalized MSE between a reference channel and an estimate,
 * in dB. `len` must be a multiple of `k_users`.
 *
 * # Safety
 * All arrays must hold `len` doubles; `out_db` must be writable.
 */
enum LrsbeStatus lrsbe_nmse_db(const double *true_re,
                               const double *true_im,
                               const double *hat_re,
                               const double *hat_im,
                               uintptr_t len,
                               uintptr_t k_users,
                               double *out_db);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void lrsbe_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LRSBE_H */
