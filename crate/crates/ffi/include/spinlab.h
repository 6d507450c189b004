#ifndef SPINLAB_H
#define SPINLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpinlabStatus {
  SPINLAB_STATUS_OK = 0,
  SPINLAB_STATUS_NULL_POINTER = 1,
  SPINLAB_STATUS_INVALID_ARGUMENT = 2,
  SPINLAB_STATUS_NUMERICAL = 3,
  SPINLAB_STATUS_IO = 4,
  SPINLAB_STATUS_PANIC = 5,
} SpinlabStatus;

// Opaque finitely-atomic measure on `[0, 1]`.
typedef struct SpinlabMeasure SpinlabMeasure;

// Opaque model handle.
typedef struct SpinlabModel SpinlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *spinlab_last_error(void);

// Library version as a static NUL-terminated string.
const char *spinlab_version(void);

// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SpinlabStatus spinlab_model_sk(struct SpinlabModel **out);

// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum SpinlabStatus spinlab_model_bipartite(double lambda1,
                                           double lambda2,
                                           struct SpinlabModel **out);

// Parses a model from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` writable.
enum SpinlabStatus spinlab_model_from_toml(const char *toml, struct SpinlabModel **out);

// # Safety
// `model` must come from a `spinlab_model_*` constructor and not be used
// afterwards. Null is ignored.
void spinlab_model_free(struct SpinlabModel *model);

// Number of species of a model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t spinlab_model_species(const struct SpinlabModel *model);

// Disorder-averaged `(1/N) log(2^{-N} Σ e^{βH})` with its standard error.
//
// # Safety
// `model` must be a live handle; `mean` and `std_error` writable.
enum SpinlabStatus spinlab_quenched_free_energy(const struct SpinlabModel *model,
                                                size_t n,
                                                double beta,
                                                size_t samples,
                                                uint64_t seed,
                                                double *mean,
                                                double *std_error);

// Disorder-averaged enriched free energy at `(t, h)`; `h` holds one field
// per species.
//
// # Safety
// `h` must point to `h_len` readable values; outputs writable.
enum SpinlabStatus spinlab_enriched_free_energy(const struct SpinlabModel *model,
                                                size_t n,
                                                double t,
                                                const double *h,
                                                size_t h_len,
                                                size_t samples,
                                                uint64_t seed,
                                                double *mean,
                                                double *std_error);

// # Safety
// `atoms` and `weights` must each hold `len` values; `out` writable.
enum SpinlabStatus spinlab_measure_new(const double *atoms,
                                       const double *weights,
                                       size_t len,
                                       struct SpinlabMeasure **out);

// # Safety
// `measure` must come from [`spinlab_measure_new`] and not be used
// afterwards. Null is ignored.
void spinlab_measure_free(struct SpinlabMeasure *measure);

// Parisi functional of `measure` at inverse temperature `beta`.
//
// # Safety
// `measure` must be a live handle and `out` writable.
enum SpinlabStatus spinlab_parisi_functional(const struct SpinlabMeasure *measure,
                                             double beta,
                                             double *out);

// Minimum of the Parisi functional over `k`-atomic measures.
//
// # Safety
// `out` must be writable.
enum SpinlabStatus spinlab_optimize_parisi(double beta, size_t k, uint64_t seed, double *out);

// `h - E log cosh(√(2h) Z)`; NaN for negative `h`.
double spinlab_psi1_scalar(double h);

// `ψ₁` of the step path with `steps` values on the mesh
// `0 = mesh[0] < … < mesh[steps] = 1`.
//
// # Safety
// `mesh` must hold `steps + 1` values, `values` `steps` values; `out`
// writable.
enum SpinlabStatus spinlab_psi1_path(const double *mesh,
                                     const double *values,
                                     size_t steps,
                                     double *out);

// Hopf-Lax value at `(t, q = 0)` for a single-species model.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum SpinlabStatus spinlab_hopf_lax_origin(const struct SpinlabModel *model,
                                           double t,
                                           size_t restarts,
                                           uint64_t seed,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINLAB_H */
