#ifndef MIXPRIOR_H
#define MIXPRIOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpModelKind {
  MP_MODEL_KIND_FLOW = 0,
  MP_MODEL_KIND_VAE = 1,
} MpModelKind;

// Result code of every fallible call.
typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_NULL_POINTER = 1,
  MP_STATUS_INVALID_ARGUMENT = 2,
  MP_STATUS_SHAPE = 3,
  MP_STATUS_NUMERIC = 4,
  MP_STATUS_IO = 5,
  MP_STATUS_FORMAT = 6,
  MP_STATUS_CONFIG = 7,
  MP_STATUS_PANIC = 8,
} MpStatus;

// Trained model together with the prior it was trained against.
typedef struct MpModel MpModel;

typedef struct MpPrior MpPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. The pointer stays
// valid until the next failing call on the same thread.
const char *mp_last_error(void);

// Library version as a static NUL-terminated string.
const char *mp_version(void);

// Load a model dump written by `mixprior train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MpStatus mp_model_load(const char *path, struct MpModel **out);

// Load a model dump from memory.
//
// # Safety
// `bytes` must point to `len` readable bytes and `out` must be valid.
enum MpStatus mp_model_from_bytes(const uint8_t *bytes, size_t len, struct MpModel **out);

// # Safety
// `model` must be null or a handle from `mp_model_load`, freed once.
void mp_model_free(struct MpModel *model);

// # Safety
// `model` must be a live handle; `kind`, `data_dim` and `latent_dim` may be null.
enum MpStatus mp_model_info(const struct MpModel *model,
                            enum MpModelKind *kind,
                            size_t *data_dim,
                            size_t *latent_dim);

// Per-row log-likelihood of `x` (`rows × cols`, row-major). Flows are
// exact; VAEs use an importance-weighted estimate with `iw_samples`
// draws seeded by `seed`. `out` receives `rows` values.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum MpStatus mp_model_log_likelihood(const struct MpModel *model,
                                      const double *x,
                                      size_t rows,
                                      size_t cols,
                                      size_t iw_samples,
                                      uint64_t seed,
                                      double *out);

// Latent codes of `x`: `z = f(x)` for a flow, the posterior mean for a
// VAE. `out` receives `rows × latent_dim` values.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum MpStatus mp_model_encode(const struct MpModel *model,
                              const double *x,
                              size_t rows,
                              size_t cols,
                              double *out);

// Copy of the prior stored in a model dump.
//
// # Safety
// `model` must be a live handle and `out` valid.
enum MpStatus mp_model_prior(const struct MpModel *model, struct MpPrior **out);

// Build a prior from a JSON prior block (the `prior` object of an
// experiment config) in `dim` latent dimensions.
//
// # Safety
// `json` must be NUL-terminated and `out` valid.
enum MpStatus mp_prior_from_json(const char *json, size_t dim, struct MpPrior **out);

// # Safety
// `prior` must be null or a live handle, freed once.
void mp_prior_free(struct MpPrior *prior);

// # Safety
// `prior` must be a live handle; `dim` and `k` may be null.
enum MpStatus mp_prior_info(const struct MpPrior *prior, size_t *dim, size_t *k);

// Log-density of each row of `z` (`rows × cols`). `out` receives `rows` values.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum MpStatus mp_prior_log_pdf(const struct MpPrior *prior,
                               const double *z,
                               size_t rows,
                               size_t cols,
                               double *out);

// Draw `n` samples. `out` receives `n × dim` values; `labels` (nullable)
// receives the component index of each draw.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum MpStatus mp_prior_sample(const struct MpPrior *prior,
                              size_t n,
                              uint64_t seed,
                              double *out,
                              size_t *labels);

// Second-order likelihood-gap estimate from per-component statistics.
//
// `*_sigma2` are `k × dim` row-major and `*_weights` have `k` entries.
// `g` holds one factor per dimension, or is null for all ones.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum MpStatus mp_second_order_delta(const double *in_sigma2,
                                    const double *in_weights,
                                    size_t in_k,
                                    const double *out_sigma2,
                                    const double *out_weights,
                                    size_t out_k,
                                    size_t dim,
                                    const double *g,
                                    double sigma2_psi,
                                    double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MIXPRIOR_H */
