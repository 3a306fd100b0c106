#ifndef HOMPOP_H
#define HOMPOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HompopKind {
  HOMPOP_KIND_HOMOGENIZED = 0,
  HOMPOP_KIND_HOMOGENIZED_EVEN = 1,
  HOMPOP_KIND_DENOMINATOR = 2,
  HOMPOP_KIND_POWER_X0 = 3,
  HOMPOP_KIND_STANDARD_LASSERRE = 4,
} HompopKind;

typedef enum HompopStatus {
  HOMPOP_STATUS_OK = 0,
  HOMPOP_STATUS_NULL_POINTER = 1,
  HOMPOP_STATUS_INVALID_UTF8 = 2,
  HOMPOP_STATUS_PARSE_ERROR = 3,
  HOMPOP_STATUS_INVALID_ARGUMENT = 4,
  HOMPOP_STATUS_SOLVER_ERROR = 5,
  /**
   * The requested value is not available (no bound, index out of range).
   */
  HOMPOP_STATUS_NO_VALUE = 6,
  HOMPOP_STATUS_BUFFER_TOO_SMALL = 7,
  HOMPOP_STATUS_PANIC = 8,
} HompopStatus;

/**
 * Parsed problem.
 */
typedef struct HompopProblem HompopProblem;

/**
 * Result of a solve.
 */
typedef struct HompopReport HompopReport;

/**
 * Solver settings. Orders equal to 0 select the defaults.
 */
typedef struct HompopOptions {
  enum HompopKind kind;
  /**
   * Power of `x0` for `HOMPOP_KIND_POWER_X0`.
   */
  uint32_t power;
  uint32_t min_order;
  uint32_t max_order;
  double rank_tol;
  double tau_tol;
  double gap_tol;
  bool verify;
  uint64_t seed;
} HompopOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hompop_last_error(void);

struct HompopOptions hompop_options_default(void);

/**
 * Parse a problem in the text format into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HompopStatus hompop_problem_parse(const char *text, struct HompopProblem **out);

/**
 * # Safety
 * `p` must come from [`hompop_problem_parse`] and not be used afterwards.
 */
void hompop_problem_free(struct HompopProblem *p);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live problem handle.
 */
size_t hompop_problem_nvars(const struct HompopProblem *p);

/**
 * Run the hierarchy. `opts` may be null for the defaults.
 *
 * Returns `HOMPOP_STATUS_SOLVER_ERROR` (with `*out` still set) when every
 * order failed, so the report can be inspected.
 *
 * # Safety
 * `p` must be a live problem handle, `opts` null or valid, `out` valid.
 */
enum HompopStatus hompop_solve(const struct HompopProblem *p,
                               const struct HompopOptions *opts,
                               struct HompopReport **out);

/**
 * Compute minimizers at infinity at relaxation order `order`.
 *
 * # Safety
 * As [`hompop_solve`].
 */
enum HompopStatus hompop_minimizers_at_infinity(const struct HompopProblem *p,
                                                uint32_t order,
                                                const struct HompopOptions *opts,
                                                struct HompopReport **out);

/**
 * # Safety
 * `r` must come from a solve call and not be used afterwards.
 */
void hompop_report_free(struct HompopReport *r);

/**
 * Best lower bound found.
 *
 * # Safety
 * `r` must be a live report handle and `out` valid.
 */
enum HompopStatus hompop_report_bound(const struct HompopReport *r, double *out);

/**
 * Whether the hierarchy reached certified convergence.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
bool hompop_report_converged(const struct HompopReport *r);

/**
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t hompop_report_num_minimizers(const struct HompopReport *r);

/**
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t hompop_report_num_at_infinity(const struct HompopReport *r);

/**
 * Copy regular minimizer `i` into `buf` (at least `nvars` entries).
 *
 * # Safety
 * `r` must be a live report handle and `buf` valid for `len` writes.
 */
enum HompopStatus hompop_report_minimizer(const struct HompopReport *r,
                                          size_t i,
                                          double *buf,
                                          size_t len);

/**
 * Copy minimizer at infinity `i` (a unit vector) into `buf`.
 *
 * # Safety
 * As [`hompop_report_minimizer`].
 */
enum HompopStatus hompop_report_at_infinity(const struct HompopReport *r,
                                            size_t i,
                                            double *buf,
                                            size_t len);

/**
 * Full report as JSON, or null on failure. Release with [`hompop_string_free`].
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
char *hompop_report_json(const struct HompopReport *r);

/**
 * # Safety
 * `s` must come from [`hompop_report_json`] and not be used afterwards.
 */
void hompop_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMPOP_H */
