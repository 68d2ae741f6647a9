#ifndef SPECFLOW_H
#define SPECFLOW_H

/* Generated by cbindgen from specflow-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every call.
 */
typedef enum {
  SF_STATUS_OK = 0,
  SF_STATUS_INVALID_INPUT = 2,
  SF_STATUS_NUMERICAL_FAILURE = 3,
  SF_STATUS_IDENTITY_VIOLATION = 4,
  SF_STATUS_NULL_POINTER = 5,
  SF_STATUS_INTERNAL_PANIC = 6,
} SfStatus;

/**
 * Opaque operator path handle.
 */
typedef struct SfPath SfPath;

/**
 * Kernel/cokernel data of the discretised operator.
 */
typedef struct {
  int64_t ker;
  int64_t coker;
  int64_t index;
  double gap_ratio;
  uint8_t reliable;
} SfIndexReport;

/**
 * Outcome of the full identity suite on one path.
 */
typedef struct {
  int64_t sf;
  int64_t index;
  int64_t ker;
  int64_t coker;
  int64_t pair_index;
  int64_t relative_dimension;
  uint8_t identities_hold;
} SfIdentityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of this thread, or NULL when no error occurred yet.
 * The caller owns the returned string and frees it with [`sf_string_free`].
 */
char *sf_last_error_message(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a function of this library and not freed
 * before.
 */
void sf_string_free(char *s);

/**
 * Library version as a static string; do not free.
 */
const char *sf_version(void);

/**
 * Build a path from a JSON specification (the CLI schema).
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
SfStatus sf_path_from_json(const char *json, SfPath **out);

/**
 * Build a named preset path ("scalar-tanh", "scalar-tanh-reversed",
 * "tanh-diag", "rotation").
 *
 * # Safety
 * `name` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
SfStatus sf_path_preset(const char *name, SfPath **out);

/**
 * Release a path handle.
 *
 * # Safety
 * `path` must come from this library and not be freed twice.
 */
void sf_path_free(SfPath *path);

/**
 * Ambient dimension of the path, or 0 for a null handle.
 *
 * # Safety
 * `path` must be a live handle from this library or null.
 */
uintptr_t sf_path_dim(const SfPath *path);

/**
 * Spectral flow of an asymptotically hyperbolic path, both methods.
 *
 * # Safety
 * `path` must be a live handle; output pointers must be writable or null.
 */
SfStatus sf_spectral_flow(const SfPath *path, int64_t *out_sf, uint8_t *out_methods_agree);

/**
 * Kernel, cokernel and index of the discretised operator; pass
 * `rank_tol <= 0` for the default.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
SfStatus sf_numeric_index(const SfPath *path, double rank_tol, SfIndexReport *out);

/**
 * The full identity suite `sf = -ind F_A = -dim(E^-(+inf), E^-(-inf))`,
 * `ind F_A = ind(W^s, W^u)`. Returns `SF_STATUS_IDENTITY_VIOLATION` when
 * the integers disagree (the report is still filled in).
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
SfStatus sf_verify_identity(const SfPath *path, SfIdentityReport *out);

/**
 * Orthonormal basis of the stable space. `basis_out` must hold
 * `2 * dim * dim` doubles; the basis occupies the first `2 * dim * k`
 * entries row-major interleaved, with `k` written to `out_dim`.
 *
 * # Safety
 * `path` must be a live handle; `basis_out` must point to at least
 * `2 dim^2` writable doubles and `out_dim` to a writable slot.
 */
SfStatus sf_stable_space(const SfPath *path,
                         double horizon,
                         double tol,
                         double *basis_out,
                         uintptr_t *out_dim);

/**
 * Positive spectral projector of a hyperbolic matrix with row-major
 * interleaved input and output of `2 * dim * dim` doubles each.
 *
 * # Safety
 * `a` and `out` must point to `2 dim^2` readable / writable doubles.
 */
SfStatus sf_spectral_projector_plus(uintptr_t dim, const double *a, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECFLOW_H */
