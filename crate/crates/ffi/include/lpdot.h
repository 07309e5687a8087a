#ifndef LPDOT_H
#define LPDOT_H

/* Generated by cbindgen from the lpdot-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every ABI function.
 */
typedef enum {
  LPDOT_STATUS_T_OK = 0,
  /**
   * Null pointer, malformed UTF-8 or otherwise invalid argument.
   */
  LPDOT_STATUS_T_BAD_ARGUMENT = 1,
  /**
   * Pipeline construction failed (see `lpdot_last_error`).
   */
  LPDOT_STATUS_T_CONSTRUCT_FAILED = 2,
  /**
   * Norm computation failed (function not in the space, bad box, …).
   */
  LPDOT_STATUS_T_NORM_FAILED = 3,
  /**
   * The provided buffer is too small; the required size was written.
   */
  LPDOT_STATUS_T_BUFFER_TOO_SMALL = 4,
  /**
   * A panic was caught at the boundary.
   */
  LPDOT_STATUS_T_PANICKED = 5,
} lpdot_status_t;

/**
 * Opaque pipeline handle.
 */
typedef struct lpdot_pipeline_t lpdot_pipeline_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lpdot_version(void);

/**
 * Copy the most recent error message for this thread into `buf`.
 *
 * `cap` is the buffer capacity in bytes including the NUL terminator;
 * `written` (optional) receives the full required size.
 */
lpdot_status_t lpdot_last_error(char *buf, uintptr_t cap, uintptr_t *written);

/**
 * Run the exponent-construction pipeline.
 *
 * `exponent_spec`: `conj-log`, `log`, `const:V`, `step:V1,V2,…` or
 * `profile:<text format>`. On success `*out` owns the handle; free it with
 * [`lpdot_pipeline_free`].
 */
lpdot_status_t lpdot_pipeline_run(const char *exponent_spec,
                                  uintptr_t dim,
                                  uintptr_t levels,
                                  uint64_t seed,
                                  lpdot_pipeline_t **out);

/**
 * Release a pipeline handle. Null is a no-op.
 */
void lpdot_pipeline_free(lpdot_pipeline_t *pipeline);

/**
 * Number of cut points (`K + 1`).
 */
lpdot_status_t lpdot_pipeline_cut_count(const lpdot_pipeline_t *pipeline, uintptr_t *out);

/**
 * Copy the cut points `t_1 > t_2 > …` into `buf` (capacity in doubles).
 */
lpdot_status_t lpdot_pipeline_cut_points(const lpdot_pipeline_t *pipeline,
                                         double *buf,
                                         uintptr_t cap,
                                         uintptr_t *written);

/**
 * Copy the run manifest (JSON, NUL-terminated) into `buf`.
 */
lpdot_status_t lpdot_pipeline_manifest_json(const lpdot_pipeline_t *pipeline,
                                            char *buf,
                                            uintptr_t cap,
                                            uintptr_t *written);

/**
 * Evaluate the constructed exponent `q̄` at a point of `Ω`.
 */
lpdot_status_t lpdot_pipeline_exponent_at(const lpdot_pipeline_t *pipeline,
                                          const double *coords,
                                          uintptr_t dim,
                                          double *out);

/**
 * Evaluate the Hölder conjugate `p̄` at a point of `Ω`.
 */
lpdot_status_t lpdot_pipeline_conjugate_at(const lpdot_pipeline_t *pipeline,
                                           const double *coords,
                                           uintptr_t dim,
                                           double *out);

/**
 * Luxemburg norm of a dyadic-box indicator under the constructed exponent
 * (`conjugate = 0`) or its Hölder conjugate (`conjugate != 0`).
 *
 * The box is given per axis as `[nums[i]·2^{-depths[i]}, (nums[i]+1)·2^{-depths[i]})`.
 */
lpdot_status_t lpdot_pipeline_box_norm(const lpdot_pipeline_t *pipeline,
                                       const uint64_t *nums,
                                       const uint32_t *depths,
                                       uintptr_t dim,
                                       int32_t conjugate,
                                       double tol,
                                       double *out);

/**
 * Evaluate the `index`-th Walsh–Paley function (first nonconstant has
 * index 1) of the `dim`-dimensional product system at a point.
 */
lpdot_status_t lpdot_walsh_eval(uintptr_t dim, uintptr_t index, const double *coords, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPDOT_H */
