#ifndef HYPOU_H
#define HYPOU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Library errors keep the numeric codes of the Rust error type.
 */
typedef enum HypouStatus {
  HYPOU_STATUS_OK = 0,
  HYPOU_STATUS_NULL_POINTER = 1,
  HYPOU_STATUS_INVALID_UTF8 = 2,
  HYPOU_STATUS_BUFFER_TOO_SMALL = 3,
  HYPOU_STATUS_PANIC = 4,
  HYPOU_STATUS_DIMENSION_MISMATCH = 10,
  HYPOU_STATUS_INVALID_SYSTEM = 11,
  HYPOU_STATUS_NOT_HYPOELLIPTIC = 12,
  HYPOU_STATUS_STRUCTURE = 13,
  HYPOU_STATUS_QUADRATURE = 20,
  HYPOU_STATUS_SINGULAR_COVARIANCE = 21,
  HYPOU_STATUS_COVERAGE = 22,
  HYPOU_STATUS_SPLIT_STEP = 30,
  HYPOU_STATUS_NONMONOTONE_CONVERGENCE = 31,
  HYPOU_STATUS_MC_BUDGET = 32,
  HYPOU_STATUS_EXPONENT = 40,
  HYPOU_STATUS_CLASS = 41,
  HYPOU_STATUS_INVALID_ARGUMENT = 50,
  HYPOU_STATUS_CONFIG = 60,
  HYPOU_STATUS_IO = 61,
} HypouStatus;

/**
 * A solution on a space-time grid, time-major.
 */
typedef struct HypouField HypouField;

/**
 * An OU system (A, B0, nu).
 */
typedef struct HypouSystem HypouSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hypou_version(void);

/**
 * Message of the last failed call on this thread ("" after a successful call). The pointer
 * stays valid until the next hypou call on the same thread.
 */
const char *hypou_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library that has not been freed.
 */
void hypou_string_free(char *s);

/**
 * Parses a system descriptor such as `{"N":2,"d0":1,"A":[[0,0],[1,0]],"B0":[[1]],"nu":1}`.
 * Systems failing the Kalman condition are rejected unless `permissive` is non-zero.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HypouStatus hypou_system_from_json(const char *json, int permissive, struct HypouSystem **out);

/**
 * # Safety
 * `sys` must be NULL or a handle from [`hypou_system_from_json`] that has not been freed.
 */
void hypou_system_free(struct HypouSystem *sys);

/**
 * Writes N.
 *
 * # Safety
 * `sys` must be a live handle and `n` a valid pointer.
 */
enum HypouStatus hypou_system_dim(const struct HypouSystem *sys, size_t *n);

/**
 * Kalman verdict, block sizes and exponents as JSON; free the string with [`hypou_string_free`].
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum HypouStatus hypou_structure_report_json(const struct HypouSystem *sys, char **out);

/**
 * Covariance of the OU noise over [s, t], written row-major into `cov` (N*N entries).
 *
 * # Safety
 * `sys` must be a live handle and `cov` must hold `len` doubles.
 */
enum HypouStatus hypou_ou_covariance(const struct HypouSystem *sys,
                                     double s,
                                     double t,
                                     double *cov,
                                     size_t len);

/**
 * Solves the OU problem described by a `solve` config (the JSON accepted by `hypou solve`).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HypouStatus hypou_solve_json(const char *config_json, struct HypouField **out);

/**
 * Solves with the added diffusion S(t) of a `perturb` config.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HypouStatus hypou_perturb_json(const char *config_json, struct HypouField **out);

/**
 * # Safety
 * `field` must be NULL or a handle returned by this library that has not been freed.
 */
void hypou_field_free(struct HypouField *field);

/**
 * Number of time levels (nt + 1) and of spatial nodes.
 *
 * # Safety
 * `field` must be a live handle; the output pointers must be valid.
 */
enum HypouStatus hypou_field_shape(const struct HypouField *field,
                                   size_t *n_times,
                                   size_t *n_space);

/**
 * Copies all values, time-major with the last spatial axis fastest.
 *
 * # Safety
 * `field` must be a live handle and `buf` must hold `len` doubles.
 */
enum HypouStatus hypou_field_values(const struct HypouField *field, double *buf, size_t len);

/**
 * sup |u| over the grid.
 *
 * # Safety
 * `field` must be a live handle and `out` a valid pointer.
 */
enum HypouStatus hypou_field_sup_abs(const struct HypouField *field, double *out);

/**
 * The field in the CSV layout of `hypou solve`; free with [`hypou_string_free`].
 *
 * # Safety
 * `field` must be a live handle and `out` a valid pointer.
 */
enum HypouStatus hypou_field_csv(const struct HypouField *field, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPOU_H */
