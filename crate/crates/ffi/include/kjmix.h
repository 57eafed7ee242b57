#ifndef KJMIX_H
#define KJMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result codes shared by every entry point.
 */
typedef enum KjStatus {
  KJ_STATUS_OK = 0,
  KJ_STATUS_NULL_POINTER = 1,
  /*
   Bad sizes, weights, or configuration values.
   */
  KJ_STATUS_INVALID_ARGUMENT = 2,
  /*
   A parameter lies outside its admissible range.
   */
  KJ_STATUS_DOMAIN = 3,
  /*
   All mass sits on the uniform component.
   */
  KJ_STATUS_DEGENERATE = 4,
  KJ_STATUS_EMPTY_SAMPLE = 5,
  /*
   The optimizer or EM could not produce an estimate.
   */
  KJ_STATUS_FIT_FAILED = 6,
  /*
   An output buffer is shorter than required.
   */
  KJ_STATUS_BUFFER_TOO_SMALL = 7,
  /*
   A Rust panic was caught at the boundary.
   */
  KJ_STATUS_PANIC = 8,
} KjStatus;

/*
 Opaque handle to a mixture in the reparametrized form.
 */
typedef struct KjMixture KjMixture;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Builds a mixture from `m` components and `m + 1` weights (the last one uniform).

 # Safety
 `mu`, `rho`, `lambda` must point to `m` doubles, `weights` to `m + 1` doubles, and `out`
 to writable storage for one handle.
 */
enum KjStatus kj_mixture_new(size_t m,
                             const double *mu,
                             const double *rho,
                             const double *lambda,
                             const double *weights,
                             struct KjMixture **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `mixture` must come from this library and must not be used afterwards.
 */
void kj_mixture_free(struct KjMixture *mixture);

/*
 Number of Kato-Jones components (excluding the uniform one).

 # Safety
 `mixture` must be a live handle and `out` writable.
 */
enum KjStatus kj_mixture_components(const struct KjMixture *mixture, size_t *out);

/*
 Copies parameters into caller buffers: `m` entries each for `mu`, `rho`, `lambda` and
 `m + 1` for `weights`. `capacity` is the length of the smallest buffer.

 # Safety
 Each non-null pointer must be writable for `capacity` doubles.
 */
enum KjStatus kj_mixture_params(const struct KjMixture *mixture,
                                double *mu,
                                double *rho,
                                double *lambda,
                                double *weights,
                                size_t capacity);

/*
 Mixture density at `theta`.

 # Safety
 `mixture` must be a live handle and `out` writable.
 */
enum KjStatus kj_mixture_density(const struct KjMixture *mixture, double theta, double *out);

/*
 Trigonometric moment `E[exp(i p Θ)]` of order `p ≥ 1`.

 # Safety
 `mixture` must be a live handle and `re`, `im` writable.
 */
enum KjStatus kj_mixture_trig_moment(const struct KjMixture *mixture,
                                     uint32_t p,
                                     double *re,
                                     double *im);

/*
 Draws `n` angles in `[0, 2π)` into `out`, deterministically in `seed`.

 # Safety
 `mixture` must be a live handle and `out` writable for `n` doubles.
 */
enum KjStatus kj_mixture_sample(const struct KjMixture *mixture,
                                size_t n,
                                uint64_t seed,
                                double *out);

/*
 Moment estimate with `m` components from `starts` random starts. `q = 2m`, `c = 0.9`.

 # Safety
 `data` must point to `n` doubles; `out` and `etm` (if non-null) must be writable.
 */
enum KjStatus kj_fit_mmm(const double *data,
                         size_t n,
                         size_t m,
                         size_t starts,
                         uint64_t seed,
                         struct KjMixture **out,
                         double *etm);

/*
 Maximum likelihood by EM from `init` with default tolerances.

 # Safety
 `data` must point to `n` doubles, `init` must be a live handle, and `out` and
 `loglik` (if non-null) must be writable.
 */
enum KjStatus kj_em_fit(const double *data,
                        size_t n,
                        const struct KjMixture *init,
                        struct KjMixture **out,
                        double *loglik);

/*
 Original-form weights `π_k` and concentrations `γ_k`; `μ`, `ρ`, `λ` are unchanged.

 # Safety
 `mixture` must be a live handle; `pi` and `gamma` must be writable for `capacity` doubles.
 */
enum KjStatus kj_recover_original(const struct KjMixture *mixture,
                                  double *pi,
                                  double *gamma,
                                  size_t capacity);

/*
 Upper bound `γ̄(ρ, λ) = (1 − ρ²) / (2(1 − ρ cos λ))` on the concentration.

 # Safety
 `out` must be writable.
 */
enum KjStatus kj_gamma_bar(double rho, double lambda, double *out);

/*
 Copies the calling thread's last error message, NUL-terminated and truncated to fit.
 Returns the full message length in bytes (without the terminator), so a return value
 `>= len` signals truncation. Passing a null buffer just queries the length.

 # Safety
 `buf` must be null or writable for `len` bytes.
 */
size_t kj_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KJMIX_H */
