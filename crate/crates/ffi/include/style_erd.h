#ifndef STYLE_ERD_H
#define STYLE_ERD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SeStatus {
  SE_STATUS_OK = 0,
  SE_STATUS_NULL_POINTER = 1,
  SE_STATUS_INVALID_UTF8 = 2,
  SE_STATUS_IO = 3,
  SE_STATUS_FORMAT = 4,
  SE_STATUS_RANGE = 5,
  SE_STATUS_DOMAIN = 6,
  SE_STATUS_SHAPE = 7,
  SE_STATUS_LIFECYCLE = 8,
  SE_STATUS_OTHER = 9,
  SE_STATUS_PANIC = 10,
} SeStatus;

/**
 * A loaded generator.
 */
typedef struct SeGenerator SeGenerator;

/**
 * One stream: recurrent state plus the causal feature builder.
 */
typedef struct SeSession SeSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t se_last_error(char *buf, size_t len);

/**
 * Loads a generator checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SeStatus se_generator_load(const char *path, struct SeGenerator **out);

/**
 * An untrained generator of default size on the built-in 13-joint
 * skeleton. Useful for wiring tests.
 *
 * # Safety
 * `out` must be writable.
 */
enum SeStatus se_generator_new_untrained(size_t styles,
                                         size_t contents,
                                         uint64_t seed,
                                         struct SeGenerator **out);

/**
 * # Safety
 * `generator` must come from this library and not be used afterwards.
 */
void se_generator_free(struct SeGenerator *generator);

/**
 * Joint, style and content counts; any output pointer may be null.
 *
 * # Safety
 * `generator` must be a live handle.
 */
enum SeStatus se_generator_info(const struct SeGenerator *generator,
                                size_t *joints,
                                size_t *styles,
                                size_t *contents);

/**
 * Opens a stream in `source_style`/`content` targeting `target_style`.
 * `fps <= 0` uses the default of 60.
 *
 * # Safety
 * `generator` must be a live handle; `out` must be writable.
 */
enum SeStatus se_session_open(const struct SeGenerator *generator,
                              size_t source_style,
                              size_t content,
                              size_t target_style,
                              double fps,
                              struct SeSession **out);

/**
 * # Safety
 * `session` must come from this library and not be used afterwards.
 */
void se_session_free(struct SeSession *session);

/**
 * Switches to a single style at full strength.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SeStatus se_session_set_style(struct SeSession *session, size_t style);

/**
 * `(1 - alpha) * first + alpha * second`, `alpha` in `[0, 1]`. An invalid
 * target leaves the current one in force.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SeStatus se_session_set_blend(struct SeSession *session,
                                   size_t first,
                                   size_t second,
                                   double alpha);

/**
 * `style` at strength `alpha` in `[0, 1]` over neutral.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SeStatus se_session_set_scaled(struct SeSession *session, size_t style, double alpha);

/**
 * Stylizes one frame. `rotations` holds `4 * J` values, `root` 3 values;
 * `out_rotations` receives `4 * J` values and `out_positions` (may be
 * null) `3 * J`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `session` must be live.
 */
enum SeStatus se_session_step(struct SeSession *session,
                              const double *rotations,
                              const double *root,
                              double *out_rotations,
                              double *out_positions);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STYLE_ERD_H */
