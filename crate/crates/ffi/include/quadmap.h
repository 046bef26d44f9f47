/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef QUADMAP_H
#define QUADMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible function.
 */
typedef enum QmStatus {
  /**
   * Success.
   */
  QM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  QM_STATUS_NULL_POINTER = 1,
  /**
   * An argument is outside its valid range.
   */
  QM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A codec string or other text input is malformed.
   */
  QM_STATUS_PARSE = 3,
  /**
   * The caller buffer is too small; the required size was reported.
   */
  QM_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A truncation or tolerance could not be met.
   */
  QM_STATUS_TOLERANCE = 5,
  /**
   * Any other library error.
   */
  QM_STATUS_FAILED = 6,
  /**
   * The library panicked; this is a bug.
   */
  QM_STATUS_PANIC = 7,
} QmStatus;

/**
 * Spin measure selector for metric chains.
 */
typedef enum QmSpinMeasure {
  /**
   * Spins in {-1, +1} with equal weight.
   */
  QM_SPIN_MEASURE_ISING = 0,
  /**
   * Real spins.
   */
  QM_SPIN_MEASURE_GAUSSIAN = 1,
} QmSpinMeasure;

/**
 * A rooted map with holes.
 */
typedef struct QmMap QmMap;

/**
 * A seeded Markov chain on metric maps.
 */
typedef struct QmMetricChain QmMetricChain;

/**
 * A seeded sampler of the truncated Boltzmann law at a fixed semi-perimeter.
 */
typedef struct QmSampler QmSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library, NUL-terminated and statically allocated.
 */
const char *qm_version(void);

/**
 * Copies the message of the last failed call on this thread into `buf`.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
 */
enum QmStatus qm_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * Number of rooted quadrangulations with semi-perimeter `ell` and `f` internal
 * faces, as a decimal string.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
 */
enum QmStatus qm_census_count(size_t ell, size_t f, char *buf, size_t len, size_t *needed);

/**
 * Parses a codec string into a new map handle stored in `out`.
 *
 * # Safety
 * `codec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QmStatus qm_map_decode(const char *codec, struct QmMap **out);

/**
 * Releases a map handle. Null is ignored.
 *
 * # Safety
 * `map` must be null or a handle not yet freed.
 */
void qm_map_free(struct QmMap *map);

/**
 * Writes the codec string of a hole-free map into `buf`.
 *
 * # Safety
 * `map` must be a live handle; `buf` null or valid for `len` bytes; `needed`
 * null or valid.
 */
enum QmStatus qm_map_encode(const struct QmMap *map, char *buf, size_t len, size_t *needed);

/**
 * Semi-perimeter, internal face count and hole count of a map. Any output
 * pointer may be null.
 *
 * # Safety
 * `map` must be a live handle; non-null outputs must be valid.
 */
enum QmStatus qm_map_info(const struct QmMap *map,
                          size_t *semi_perimeter,
                          size_t *faces,
                          size_t *holes);

/**
 * Probability of a hole-free map under the truncated Boltzmann law with
 * weight `q` per face.
 *
 * # Safety
 * `map` must be a live handle and `out` valid.
 */
enum QmStatus qm_boltzmann_probability(const struct QmMap *map, double q, double *out);

/**
 * Creates a seeded Boltzmann sampler for semi-perimeter `ell`, weight `q`
 * and largest face count `face_cap`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QmStatus qm_sampler_new(size_t ell,
                             double q,
                             size_t face_cap,
                             uint64_t seed,
                             struct QmSampler **out);

/**
 * Draws the next map from a sampler into a new map handle.
 *
 * # Safety
 * `sampler` must be a live handle and `out` valid.
 */
enum QmStatus qm_sampler_next(struct QmSampler *sampler, struct QmMap **out);

/**
 * Releases a sampler. Null is ignored.
 *
 * # Safety
 * `sampler` must be null or a handle not yet freed.
 */
void qm_sampler_free(struct QmSampler *sampler);

/**
 * Total mass of the Brownian bridge from `u` to `v` over time `w`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QmStatus qm_bridge_mass(double u, double v, double w, double *out);

/**
 * Creates a metric chain with semi-perimeter `ell`, boundary values
 * `boundary[0..2*ell]`, vertex weight `q`, length rate `lambda` and at most
 * `cap` internal vertices. The burn-in runs before this call returns.
 *
 * # Safety
 * `boundary` must be valid for `boundary_len` reads and `out` valid.
 */
enum QmStatus qm_metric_chain_new(size_t ell,
                                  const double *boundary,
                                  size_t boundary_len,
                                  double q,
                                  double lambda,
                                  size_t cap,
                                  enum QmSpinMeasure mu,
                                  uint64_t seed,
                                  struct QmMetricChain **out);

/**
 * Advances a metric chain by one recorded sample and reports the root edge
 * length and the value at the far end of the root edge. Outputs may be null.
 *
 * # Safety
 * `chain` must be a live handle; non-null outputs must be valid.
 */
enum QmStatus qm_metric_chain_advance(struct QmMetricChain *chain,
                                      double *root_length,
                                      double *far_value);

/**
 * Releases a metric chain. Null is ignored.
 *
 * # Safety
 * `chain` must be null or a handle not yet freed.
 */
void qm_metric_chain_free(struct QmMetricChain *chain);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUADMAP_H */
