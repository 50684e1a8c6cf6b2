#ifndef POAS_H
#define POAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum PoasStatus {
  POAS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  POAS_STATUS_NULL_POINTER = 1,
  /**
   * Bad dimensions, non-UTF-8 text or otherwise invalid input values.
   */
  POAS_STATUS_INVALID_ARGUMENT = 2,
  POAS_STATUS_IO = 3,
  /**
   * Malformed profile or schedule text.
   */
  POAS_STATUS_PARSE = 4,
  /**
   * Valid input with no acceptable plan (alignment, feasibility).
   */
  POAS_STATUS_UNSATISFIABLE = 5,
  POAS_STATUS_NUMERICAL = 6,
  /**
   * The caller's buffer is shorter than the data.
   */
  POAS_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * Internal invariant violation or panic.
   */
  POAS_STATUS_INTERNAL = 8,
} PoasStatus;

/**
 * A loaded machine profile.
 */
typedef struct PoasProfile PoasProfile;

/**
 * A planned schedule.
 */
typedef struct PoasSchedule PoasSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next `poas_*` call on the same thread.
 */
const char *poas_last_error(void);

/**
 * Loads a profile file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PoasStatus poas_profile_load(const char *path, struct PoasProfile **out);

/**
 * Parses profile text held in memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PoasStatus poas_profile_from_text(const char *text, struct PoasProfile **out);

/**
 * # Safety
 * `profile` must come from `poas_profile_load`/`poas_profile_from_text`
 * and not be used afterwards. Null is ignored.
 */
void poas_profile_free(struct PoasProfile *profile);

/**
 * Number of devices; 0 for a null handle.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t poas_profile_device_count(const struct PoasProfile *profile);

/**
 * Splits an `m x n x k` GEMM across the profile's devices.
 *
 * # Safety
 * `profile` must be a live handle and `out` a valid pointer.
 */
enum PoasStatus poas_plan(const struct PoasProfile *profile,
                          uint64_t m,
                          uint64_t n,
                          uint64_t k,
                          struct PoasSchedule **out);

/**
 * # Safety
 * `schedule` must come from `poas_plan` and not be used afterwards. Null is ignored.
 */
void poas_schedule_free(struct PoasSchedule *schedule);

/**
 * Predicted makespan in seconds.
 *
 * # Safety
 * `schedule` must be a live handle and `out` a valid pointer.
 */
enum PoasStatus poas_schedule_makespan(const struct PoasSchedule *schedule, double *out);

/**
 * Copies per-device row counts, in profile order, into `rows[0..len]`.
 * `written` receives the device count even when the buffer is too small.
 *
 * # Safety
 * `rows` must point to `len` writable values (it may be null when `len`
 * is 0); `schedule` must be a live handle and `written` a valid pointer.
 */
enum PoasStatus poas_schedule_rows(const struct PoasSchedule *schedule,
                                   uint64_t *rows,
                                   size_t len,
                                   size_t *written);

/**
 * The schedule as JSON; release with `poas_string_free`.
 *
 * # Safety
 * `schedule` must be a live handle and `out` a valid pointer.
 */
enum PoasStatus poas_schedule_to_json(const struct PoasSchedule *schedule, char **out);

/**
 * Writes the schedule file.
 *
 * # Safety
 * `schedule` must be a live handle and `path` a NUL-terminated string.
 */
enum PoasStatus poas_schedule_save(const struct PoasSchedule *schedule, const char *path);

/**
 * # Safety
 * `s` must come from a `poas_*` function returning an owned string. Null is ignored.
 */
void poas_string_free(char *s);

/**
 * Least-squares `seconds = slope * ops + intercept`.
 *
 * # Safety
 * `ops` and `seconds` must point to `len` values; `slope` and `intercept`
 * must be valid pointers.
 */
enum PoasStatus poas_fit_linear(const uint64_t *ops,
                                const double *seconds,
                                size_t len,
                                double *slope,
                                double *intercept);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POAS_H */
