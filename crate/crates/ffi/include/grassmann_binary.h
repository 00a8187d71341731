#ifndef GRASSMANN_BINARY_H
#define GRASSMANN_BINARY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GbStatus {
  GB_STATUS_OK = 0,
  GB_STATUS_NULL_POINTER = 1,
  GB_STATUS_INVALID_ARGUMENT = 2,
  GB_STATUS_INDEX_OUT_OF_RANGE = 3,
  GB_STATUS_SINGULAR = 4,
  GB_STATUS_INVALID_MODEL = 5,
  GB_STATUS_DIMENSION_TOO_LARGE = 6,
  GB_STATUS_ZERO_EVIDENCE = 7,
  GB_STATUS_NON_CONVERGENCE = 8,
  GB_STATUS_BUFFER_TOO_SMALL = 9,
  GB_STATUS_PANIC = 10,
  GB_STATUS_INTERNAL = 11,
} GbStatus;

typedef enum GbValidity {
  GB_VALIDITY_VALID = 0,
  GB_VALIDITY_INVALID = 1,
  GB_VALIDITY_UNCHECKED = 2,
} GbValidity;

// Opaque model handle. Release with [`gb_model_free`].
typedef struct GbModel GbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating if needed. Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t gb_last_error_message(char *buf, size_t len);

// Builds a model from a row-major `p * p` Σ matrix. With `strict` set an
// invalid model is rejected with `GB_STATUS_INVALID_MODEL`; otherwise it is
// returned and flagged (see [`gb_model_validity`]).
//
// # Safety
// `sigma` must point to `p * p` doubles and `out` to a writable handle slot.
enum GbStatus gb_model_from_sigma(const double *sigma, size_t p, bool strict, struct GbModel **out);

// Builds a model from a row-major `p * p` Λ = Σ⁻¹ matrix.
//
// # Safety
// As for [`gb_model_from_sigma`].
enum GbStatus gb_model_from_lambda(const double *lambda,
                                   size_t p,
                                   bool strict,
                                   struct GbModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from this library not yet freed.
void gb_model_free(struct GbModel *model);

// Number of variables, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t gb_model_dim(const struct GbModel *model);

// Validity verdict. When invalid and `witness_mask` is non-null, receives a
// bitmask of the zero positions of a state with negative probability.
//
// # Safety
// Pointers must be null or valid for writes; `model` must be live.
enum GbStatus gb_model_validity(const struct GbModel *model,
                                enum GbValidity *out,
                                uint64_t *witness_mask);

// Copies Σ into `buf` (row-major, `p * p` values).
//
// # Safety
// `buf` must point to `len` writable doubles.
enum GbStatus gb_model_sigma(const struct GbModel *model, double *buf, size_t len);

// Probability of the state `x` (`p` bytes, each 0 or 1).
//
// # Safety
// `x` must point to `p` bytes; `out` must be writable.
enum GbStatus gb_model_joint_prob(const struct GbModel *model,
                                  const uint8_t *x,
                                  size_t p,
                                  double *out);

// Writes all `2^p` probabilities. Entry `k` is the state whose bit `i` is
// variable `i`.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum GbStatus gb_model_joint_table(const struct GbModel *model, double *buf, size_t len);

// Marginal over the `k` variables in `keep`, renumbered in increasing order.
//
// # Safety
// `keep` must point to `k` indices; `out` must be writable.
enum GbStatus gb_model_marginal(const struct GbModel *model,
                                const size_t *keep,
                                size_t k,
                                struct GbModel **out);

// Distribution of the unobserved variables given `k` observations
// (`indices[j]` took value `values[j]`). `evidence` receives the marginal
// probability of the observation when non-null.
//
// # Safety
// `indices` and `values` must point to `k` elements; `out` must be writable.
enum GbStatus gb_model_conditional(const struct GbModel *model,
                                   const size_t *indices,
                                   const uint8_t *values,
                                   size_t k,
                                   struct GbModel **out,
                                   double *evidence);

// `E[x_i]`.
//
// # Safety
// `out` must be writable.
enum GbStatus gb_model_mean(const struct GbModel *model, size_t i, double *out);

// `Cov[x_i, x_j]`.
//
// # Safety
// `out` must be writable.
enum GbStatus gb_model_covariance(const struct GbModel *model, size_t i, size_t j, double *out);

// Pearson correlation of `x_i` and `x_j`.
//
// # Safety
// `out` must be writable.
enum GbStatus gb_model_pearson(const struct GbModel *model, size_t i, size_t j, double *out);

// Shannon entropy in nats.
//
// # Safety
// `out` must be writable.
enum GbStatus gb_model_entropy(const struct GbModel *model, double *out);

// Draws `n` samples with a ChaCha20 stream seeded by `seed`. Row `r` is
// written to `buf[r * p .. (r + 1) * p]`.
//
// # Safety
// `buf` must point to `len` writable bytes.
enum GbStatus gb_model_sample(const struct GbModel *model,
                              size_t n,
                              uint64_t seed,
                              uint8_t *buf,
                              size_t len);

// MAP fit with pseudo-count `gamma` to `n` rows of `p` bytes each. On
// `GB_STATUS_NON_CONVERGENCE` the best iterate is still stored in `out`.
// `converged` receives the convergence flag when non-null.
//
// # Safety
// `rows` must point to `n * p` bytes; `out` must be writable.
enum GbStatus gb_fit_map(const uint8_t *rows,
                         size_t n,
                         size_t p,
                         double gamma,
                         struct GbModel **out,
                         bool *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRASSMANN_BINARY_H */
