#ifndef QSTOCH_H
#define QSTOCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum QsStatus {
  QsStatus_Ok = 0,
  QsStatus_NullPointer = 1,
  /*
   Bad dimension, index or buffer length.
   */
  QsStatus_InvalidArgument = 2,
  /*
   Gauge parameter off the line `Re κ = 1/2`.
   */
  QsStatus_InvalidGauge = 3,
  /*
   A resolvent or factor is numerically singular.
   */
  QsStatus_Singular = 4,
  /*
   Malformed JSON or schema violation.
   */
  QsStatus_Parse = 5,
  QsStatus_Panic = 99,
} QsStatus;

/*
 Opaque coefficient array.
 */
typedef struct QsCoeffBlock QsCoeffBlock;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next failing call on the same thread.
 */
const char *qs_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qs_version(void);

/*
 Allocates a zero coefficient array with `(channels + 1)²` blocks of size `dim`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum QsStatus qs_coeff_new(size_t dim, size_t channels, struct QsCoeffBlock **out);

/*
 Releases a handle. NULL is ignored.

 # Safety
 `h` must come from this library and must not be used afterwards.
 */
void qs_coeff_free(struct QsCoeffBlock *h);

/*
 Block dimension, or 0 for NULL.

 # Safety
 `h` must be NULL or a live handle.
 */
size_t qs_coeff_dim(const struct QsCoeffBlock *h);

/*
 Number of noise channels, or 0 for NULL.

 # Safety
 `h` must be NULL or a live handle.
 */
size_t qs_coeff_channels(const struct QsCoeffBlock *h);

/*
 Overwrites block `(alpha, beta)` from `len = 2·d·d` interleaved doubles.

 # Safety
 `h` must be a live handle and `data` must point to `len` readable doubles.
 */
enum QsStatus qs_coeff_set_block(struct QsCoeffBlock *h,
                                 size_t alpha,
                                 size_t beta,
                                 const double *data,
                                 size_t len);

/*
 Copies block `(alpha, beta)` into `out` as `len = 2·d·d` interleaved doubles.

 # Safety
 `h` must be a live handle and `out` must point to `len` writable doubles.
 */
enum QsStatus qs_coeff_get_block(const struct QsCoeffBlock *h,
                                 size_t alpha,
                                 size_t beta,
                                 double *out,
                                 size_t len);

/*
 Stratonovich coefficients to Itô coefficients; allocates `*out`.

 # Safety
 `e` must be a live handle; `out` must be writable.
 */
enum QsStatus qs_strat_to_ito(const struct QsCoeffBlock *e,
                              double kappa_re,
                              double kappa_im,
                              struct QsCoeffBlock **out);

/*
 Itô coefficients to Stratonovich coefficients; allocates `*out`.

 # Safety
 `g` must be a live handle; `out` must be writable.
 */
enum QsStatus qs_ito_to_strat(const struct QsCoeffBlock *g,
                              double kappa_re,
                              double kappa_im,
                              struct QsCoeffBlock **out);

/*
 Itô unitarity conditions; writes the largest residual and the verdict.

 # Safety
 `g` must be a live handle; output pointers must be writable.
 */
enum QsStatus qs_check_ito_unitarity(const struct QsCoeffBlock *g,
                                     double tol,
                                     double *max_residual,
                                     bool *passed);

/*
 Stratonovich self-adjointness `E_{αβ}† = E_{βα}`.

 # Safety
 `e` must be a live handle; output pointers must be writable.
 */
enum QsStatus qs_check_strat_selfadjoint(const struct QsCoeffBlock *e,
                                         double tol,
                                         double *max_residual,
                                         bool *passed);

/*
 Parses a coefficient-file document. `is_ito`, `kappa_re` and `kappa_im`
 receive the representation and gauge stored in the file.

 # Safety
 `json` must be a NUL-terminated string; output pointers must be writable.
 */
enum QsStatus qs_coeff_from_json(const char *json,
                                 struct QsCoeffBlock **out,
                                 bool *is_ito,
                                 double *kappa_re,
                                 double *kappa_im);

/*
 Serializes a handle as a coefficient-file document. Free the string with
 `qs_string_free`.

 # Safety
 `h` must be a live handle; `out` must be writable.
 */
enum QsStatus qs_coeff_to_json(const struct QsCoeffBlock *h,
                               bool is_ito,
                               double kappa_re,
                               double kappa_im,
                               char **out);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from `qs_coeff_to_json` and must not be used afterwards.
 */
void qs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSTOCH_H */
