#ifndef BLOWUP_H
#define BLOWUP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum BlowupStatus {
  BLOWUP_STATUS_OK = 0,
  BLOWUP_STATUS_NULL_POINTER = 1,
  BLOWUP_STATUS_INVALID_ARGUMENT = 2,
  BLOWUP_STATUS_CONFIG = 3,
  BLOWUP_STATUS_DATA = 4,
  BLOWUP_STATUS_DOMAIN = 5,
  BLOWUP_STATUS_MODE = 6,
  BLOWUP_STATUS_SOLVER_FAILURE = 7,
  BLOWUP_STATUS_INSUFFICIENT_SERIES = 8,
  BLOWUP_STATUS_IO = 9,
  BLOWUP_STATUS_INTERNAL = 10,
  BLOWUP_STATUS_PANIC = 11,
  // The call completed but hard checks failed (run and verify only).
  BLOWUP_STATUS_CHECKS_FAILED = 12,
} BlowupStatus;

// A solution field: synthetic, solved on the grid, or loaded from a snapshot.
typedef struct BlowupField BlowupField;

// Output of a full run; owns its JSON text.
typedef struct BlowupReport BlowupReport;

// A scale series with its moment records.
typedef struct BlowupSeries BlowupSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. Valid until
// the next failing call on the same thread.
const char *blowup_last_error(void);

// `c_n = |∂B₁|/(2n(n+2))`.
//
// # Safety
// `out_value` must be valid for writes.
enum BlowupStatus blowup_gram_constant(size_t n, double *out_value);

// `κ_n = n(n+2)/|∂B₁|`.
//
// # Safety
// `out_value` must be valid for writes.
enum BlowupStatus blowup_kappa(size_t n, double *out_value);

// Builds a synthetic field from patch-config JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out_field` valid for writes.
enum BlowupStatus blowup_field_synthetic(const char *json, struct BlowupField **out_field);

// Runs the grid solver from solver-config JSON. A non-converged fixed
// point still returns a field; `out_converged` reports it.
//
// # Safety
// `json` must be a NUL-terminated string; the out pointers valid for writes.
enum BlowupStatus blowup_field_solve(const char *json,
                                     struct BlowupField **out_field,
                                     bool *out_converged);

// Loads `<base>.bin` and `<base>.mask.bin`.
//
// # Safety
// `base` must be a NUL-terminated path; `out_field` valid for writes.
enum BlowupStatus blowup_field_load_snapshot(const char *base, struct BlowupField **out_field);

// Releases a field; null is ignored.
//
// # Safety
// `field` must come from a `blowup_field_*` constructor and not be used again.
void blowup_field_free(struct BlowupField *field);

// # Safety
// `field` must be a live handle; `out_n` valid for writes.
enum BlowupStatus blowup_field_dimension(const struct BlowupField *field, size_t *out_n);

// `u(x)` at a point of `dimension` coordinates.
//
// # Safety
// `x` must hold `dimension` values; `out_value` valid for writes.
enum BlowupStatus blowup_field_value(const struct BlowupField *field,
                                     const double *x,
                                     double *out_value);

// `∇u(x)` into `out_gradient` (`dimension` values).
//
// # Safety
// `x` and `out_gradient` must hold `dimension` values.
enum BlowupStatus blowup_field_gradient(const struct BlowupField *field,
                                        const double *x,
                                        double *out_gradient);

// Whether `x` lies in the inactive set.
//
// # Safety
// `x` must hold `dimension` values; `out_inactive` valid for writes.
enum BlowupStatus blowup_field_inactive(const struct BlowupField *field,
                                        const double *x,
                                        bool *out_inactive);

// `B(t)` of the rescaled field as the dense row-major `n×n` matrix, with the
// default sphere rule.
//
// # Safety
// `out_b` must hold `dimension²` values.
enum BlowupStatus blowup_field_projection(const struct BlowupField *field, double t, double *out_b);

// Computes the moment series on `steps + 1` uniform scales of
// `[t_start, t_end]`. `samples == 0` selects closed-form moments (falling
// back to sampling where the field has none); otherwise sampled moments
// with `seed`.
//
// # Safety
// `field` must be a live handle; `out_series` valid for writes.
enum BlowupStatus blowup_series_compute(const struct BlowupField *field,
                                        double t_start,
                                        double t_end,
                                        size_t steps,
                                        size_t k_max,
                                        size_t samples,
                                        uint64_t seed,
                                        struct BlowupSeries **out_series);

// # Safety
// `series` must come from [`blowup_series_compute`] and not be used again.
void blowup_series_free(struct BlowupSeries *series);

// # Safety
// `series` must be a live handle; `out_len` valid for writes.
enum BlowupStatus blowup_series_len(const struct BlowupSeries *series, size_t *out_len);

// Scalars of record `index`: `t, F, F₀, I, I₀, ε` in that order.
//
// # Safety
// `out_values` must hold 6 values.
enum BlowupStatus blowup_series_scalars(const struct BlowupSeries *series,
                                        size_t index,
                                        double *out_values);

// `B` of record `index`, dense row-major `n×n`.
//
// # Safety
// `out_b` must hold `dimension²` values.
enum BlowupStatus blowup_series_b(const struct BlowupSeries *series, size_t index, double *out_b);

// Runs a JSON run config end to end and writes its outputs. The report is
// returned even when hard checks fail; the status is then
// `ChecksFailed`.
//
// # Safety
// `json` must be NUL-terminated; `out_report` valid for writes.
enum BlowupStatus blowup_run(const char *json, struct BlowupReport **out_report);

// # Safety
// `report` must be a live handle; `out_passed` valid for writes.
enum BlowupStatus blowup_report_passed(const struct BlowupReport *report, bool *out_passed);

// The report as JSON; owned by the handle.
//
// # Safety
// `report` must be a live handle; `out_json` valid for writes.
enum BlowupStatus blowup_report_json(const struct BlowupReport *report, const char **out_json);

// # Safety
// `report` must come from [`blowup_run`] and not be used again.
void blowup_report_free(struct BlowupReport *report);

// Runs the bundled acceptance matrix into `out_dir`.
//
// # Safety
// `out_dir` must be NUL-terminated; `out_passed` valid for writes.
enum BlowupStatus blowup_verify(const char *out_dir, bool *out_passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOWUP_H */
