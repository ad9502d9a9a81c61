#ifndef CARTAN_KAK_H
#define CARTAN_KAK_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CK_OK 0

#define CK_ERR_NULL -1

#define CK_ERR_INVALID_INPUT -2

#define CK_ERR_DECOMPOSITION -3

#define CK_ERR_VERIFICATION -4

#define CK_ERR_PANIC -5

#define CK_LOCAL 0

#define CK_NONLOCAL 1

/**
 * Opaque factorization of a unitary.
 */
typedef struct CkFactorization CkFactorization;

/**
 * Opaque quotient algebra.
 */
typedef struct CkQuotientAlgebra CkQuotientAlgebra;

/**
 * One factor `exp(i angle g)`; the generator label is fetched separately.
 */
typedef struct CkFactor {
  double angle;
  /**
   * `CK_LOCAL` or `CK_NONLOCAL`.
   */
  int32_t locality;
  /**
   * Tree level, 1 for the outermost center.
   */
  uint32_t level;
  /**
   * Position inside its abelian block.
   */
  uint32_t ordinal;
} CkFactor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if it succeeded.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *ck_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ck_string_free(char *s);

/**
 * Quotient algebra generated by the diagonal center of su(dim).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
int32_t ck_quotient_algebra_intrinsic(size_t dim, struct CkQuotientAlgebra **out);

/**
 * Parses a quotient algebra from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t ck_quotient_algebra_from_json(const char *json, struct CkQuotientAlgebra **out);

/**
 * Number of conjugate pairs.
 *
 * # Safety
 * `qa` must be a live handle and `out` a valid pointer.
 */
int32_t ck_quotient_algebra_pair_count(const struct CkQuotientAlgebra *qa, size_t *out);

/**
 * # Safety
 * `qa` must be a live handle and `out` a valid pointer.
 */
int32_t ck_quotient_algebra_to_json(const struct CkQuotientAlgebra *qa, char **out);

/**
 * Checks every bracket between generators. Returns `CK_ERR_VERIFICATION`
 * when some bracket leaves its expected space; the largest residual is
 * written either way if `max_residual` is non-null.
 *
 * # Safety
 * `qa` must be a live handle; `max_residual` may be null.
 */
int32_t ck_quotient_algebra_verify(const struct CkQuotientAlgebra *qa, double *max_residual);

/**
 * # Safety
 * `qa` must be null or a live handle; it is invalid afterwards.
 */
void ck_quotient_algebra_free(struct CkQuotientAlgebra *qa);

/**
 * Factorizes a `dim`×`dim` unitary given as row-major real and imaginary
 * parts, using the default decomposition sequence.
 *
 * # Safety
 * `re` and `im` must each point to `dim*dim` doubles; `out` must be valid.
 */
int32_t ck_decompose(size_t dim,
                     const double *re,
                     const double *im,
                     uint64_t seed,
                     struct CkFactorization **out);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
int32_t ck_factorization_len(const struct CkFactorization *f, size_t *out);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
int32_t ck_factorization_factor(const struct CkFactorization *f,
                                size_t index,
                                struct CkFactor *out);

/**
 * Generator label and tree index of one factor, as `label@index`.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
int32_t ck_factorization_factor_label(const struct CkFactorization *f, size_t index, char **out);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
int32_t ck_factorization_reconstruction_error(const struct CkFactorization *f, double *out);

/**
 * # Safety
 * `f` must be a live handle; `re` and `im` must be valid pointers.
 */
int32_t ck_factorization_global_phase(const struct CkFactorization *f, double *re, double *im);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
int32_t ck_factorization_to_json(const struct CkFactorization *f, char **out);

/**
 * # Safety
 * `f` must be null or a live handle; it is invalid afterwards.
 */
void ck_factorization_free(struct CkFactorization *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARTAN_KAK_H */
