#ifndef ELLIPTICAL_MOMENTS_H
#define ELLIPTICAL_MOMENTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmStatus {
  EM_STATUS_OK = 0,
  EM_STATUS_NULL_POINTER = 1,
  EM_STATUS_DOMAIN = 2,
  EM_STATUS_MOMENT_NONEXISTENCE = 3,
  EM_STATUS_DIMENSION_MISMATCH = 4,
  EM_STATUS_NOT_POSITIVE_DEFINITE = 5,
  EM_STATUS_NON_CONVERGENCE = 6,
  EM_STATUS_INVALID_BLOCKS = 7,
  EM_STATUS_RANK_DEFICIENT = 8,
  EM_STATUS_CONFIG = 9,
  EM_STATUS_IO = 10,
  EM_STATUS_PANIC = 11,
} EmStatus;

typedef enum EmFamily {
  EM_FAMILY_GAUSSIAN = 0,
  EM_FAMILY_STUDENT_T = 1,
} EmFamily;

/**
 * A block collection over `p` coordinates.
 */
typedef struct EmBlocks EmBlocks;

/**
 * An `n × p` sample, owned by the library.
 */
typedef struct EmSamples EmSamples;

/**
 * A confidence interval around the marginal estimate.
 */
typedef struct EmInterval {
  double value;
  double lower;
  double upper;
  /**
   * Nonzero when the variance estimate was negative and clamped to zero.
   */
  int32_t clamped;
} EmInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *em_last_error(void);

/**
 * Copies an `n × p` row-major array into a new sample handle.
 *
 * # Safety
 * `data` must be valid for `n * p` reads and `out` for one write.
 */
enum EmStatus em_samples_new(const double *data, size_t n, size_t p, struct EmSamples **out);

/**
 * # Safety
 * `samples` must be null or come from [`em_samples_new`], freed once.
 */
void em_samples_free(struct EmSamples *samples);

/**
 * Builds `count` blocks over `p` coordinates. Block `b` holds
 * `lengths[b]` indices, stored consecutively in `indices`.
 *
 * # Safety
 * `lengths` must be valid for `count` reads, `indices` for their sum, and
 * `out` for one write.
 */
enum EmStatus em_blocks_new(const size_t *indices,
                            const size_t *lengths,
                            size_t count,
                            size_t p,
                            struct EmBlocks **out);

/**
 * # Safety
 * `blocks` must be null or come from [`em_blocks_new`], freed once.
 */
void em_blocks_free(struct EmBlocks *blocks);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum EmStatus em_marginal_constant(size_t p, uint32_t m, double *out);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum EmStatus em_block_constant(size_t p, size_t block_size, uint32_t m, double *out);

/**
 * `θ_m` of the radial family in dimension `p`; `nu` is ignored for Gaussian.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum EmStatus em_theta(enum EmFamily kind, double nu, size_t p, uint32_t m, double *out);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum EmStatus em_normal_quantile(double prob, double *out);

/**
 * Ideal estimator with known location `mu` (length p) and precision
 * `omega` (p × p).
 *
 * # Safety
 * `samples` must be a live handle, `mu` valid for `p` reads, `omega` for
 * `p * p`, and `out` for one write.
 */
enum EmStatus em_ideal(const struct EmSamples *samples,
                       const double *mu,
                       const double *omega,
                       uint32_t m,
                       double *out);

/**
 * # Safety
 * `samples` must be a live handle and `out` valid for one write.
 */
enum EmStatus em_marginal(const struct EmSamples *samples,
                          size_t j,
                          double mu_j,
                          double sigma_jj,
                          uint32_t m,
                          double *out);

/**
 * Marginal aggregation with location `mu` and scale diagonal `sigma_diag`.
 *
 * # Safety
 * `samples` must be a live handle, `mu` and `sigma_diag` valid for `p`
 * reads, and `out` for one write.
 */
enum EmStatus em_mae(const struct EmSamples *samples,
                     const double *mu,
                     const double *sigma_diag,
                     uint32_t m,
                     double *out);

/**
 * Blockwise aggregation; the blocks' scatter submatrices are taken from
 * the full `p × p` matrix `sigma`.
 *
 * # Safety
 * `samples` and `blocks` must be live handles, `mu` valid for `p` reads,
 * `sigma` for `p * p`, and `out` for one write.
 */
enum EmStatus em_bae(const struct EmSamples *samples,
                     const struct EmBlocks *blocks,
                     const double *mu,
                     const double *sigma,
                     uint32_t m,
                     double *out);

/**
 * Interval at level `1 − alpha` around the marginal estimate, given
 * plug-ins for `θ_m` and `θ_{2m}`.
 *
 * # Safety
 * `samples` must be a live handle and `out` valid for one write.
 */
enum EmStatus em_confidence_interval(const struct EmSamples *samples,
                                     size_t j,
                                     double mu_j,
                                     double sigma_jj,
                                     uint32_t m,
                                     double theta_m,
                                     double theta_2m,
                                     double alpha,
                                     struct EmInterval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELLIPTICAL_MOMENTS_H */
