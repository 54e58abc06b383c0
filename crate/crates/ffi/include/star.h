#ifndef STAR_H
#define STAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StarStatus {
  STAR_STATUS_OK = 0,
  STAR_STATUS_NULL_POINTER = 1,
  STAR_STATUS_INVALID_ARGUMENT = 2,
  STAR_STATUS_IO = 3,
  STAR_STATUS_PARSE = 4,
  STAR_STATUS_BUFFER_TOO_SMALL = 5,
  STAR_STATUS_RECOGNITION = 6,
  STAR_STATUS_PANIC = 7,
} StarStatus;

/**
 * Loaded character database.
 */
typedef struct StarDb StarDb;

/**
 * Stroke encoding dictionary.
 */
typedef struct StarDict StarDict;

/**
 * Trained model with its dictionary and support bank.
 */
typedef struct StarRecognizer StarRecognizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next failing call.
 */
const char *star_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum StarStatus star_db_load(const char *path, struct StarDb **out);

/**
 * Synthetic database from the built-in generator.
 *
 * # Safety
 * `out` must be writable.
 */
enum StarStatus star_db_generate(uint32_t radicals,
                                 size_t chars,
                                 uint64_t seed,
                                 struct StarDb **out);

/**
 * # Safety
 * `db` must come from `star_db_load`/`star_db_generate` or be NULL.
 */
void star_db_free(struct StarDb *db);

/**
 * Number of characters, or 0 for NULL.
 *
 * # Safety
 * `db` must be a valid handle or NULL.
 */
size_t star_db_len(const struct StarDb *db);

/**
 * Renders one 32×32 glyph into `out_pixels` (row-major, values in [-1, 1]).
 *
 * # Safety
 * `db` must be valid; `out_pixels` must hold `n_pixels` floats.
 */
enum StarStatus star_render_glyph(const struct StarDb *db,
                                  uint32_t char_id,
                                  uint64_t seed,
                                  float *out_pixels,
                                  size_t n_pixels);

/**
 * # Safety
 * `db` must be valid; `out` must be writable.
 */
enum StarStatus star_dict_build(const struct StarDb *db, struct StarDict **out);

/**
 * # Safety
 * `dict` must come from `star_dict_build` or be NULL.
 */
void star_dict_free(struct StarDict *dict);

/**
 * Characters sharing the stroke encoding `digits` (e.g. "31234"), ascending.
 * `*out_len` is 0 when the encoding is absent. If the buffer is too small,
 * `*out_len` still receives the required size.
 *
 * # Safety
 * `dict` must be valid; `out_ids` must hold `cap` entries.
 */
enum StarStatus star_dict_lookup(const struct StarDict *dict,
                                 const char *digits,
                                 uint32_t *out_ids,
                                 size_t cap,
                                 size_t *out_len);

/**
 * Rectifies `digits` against the dictionary and returns the candidate
 * characters. `mode` is 0 for every nearest encoding, 1 for the first only.
 *
 * # Safety
 * `dict` must be valid; `out_ids` must hold `cap` entries; `out_distance` may be NULL.
 */
enum StarStatus star_dict_candidates(const struct StarDict *dict,
                                     const char *digits,
                                     int mode,
                                     uint32_t *out_ids,
                                     size_t cap,
                                     size_t *out_len,
                                     size_t *out_distance);

/**
 * Edit distance between two stroke digit strings.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated; `out` must be writable.
 */
enum StarStatus star_levenshtein(const char *a, const char *b, size_t *out);

/**
 * `(star / sota − 1) × 100`.
 *
 * # Safety
 * `out` must be writable.
 */
enum StarStatus star_improved_ratio(double star, double sota, double *out);

/**
 * Loads a checkpoint and builds the support bank over `db`.
 *
 * # Safety
 * `db` must be valid; `checkpoint` NUL-terminated; `out` writable.
 */
enum StarStatus star_recognizer_new(const struct StarDb *db,
                                    const char *checkpoint,
                                    size_t support_k,
                                    uint64_t seed,
                                    struct StarRecognizer **out);

/**
 * # Safety
 * `r` must come from `star_recognizer_new` or be NULL.
 */
void star_recognizer_free(struct StarRecognizer *r);

/**
 * Recognizes one 32×32 image (row-major, values in [-1, 1]). Writes the
 * predicted char id and, if `out_trace_json` is non-NULL, a JSON trace
 * to be released with `star_string_free`.
 *
 * # Safety
 * `r` must be valid; `pixels` must hold `n_pixels` floats; outputs writable or NULL where allowed.
 */
enum StarStatus star_recognize(const struct StarRecognizer *r,
                               const float *pixels,
                               size_t n_pixels,
                               int mode,
                               uint32_t *out_char,
                               char **out_trace_json);

/**
 * # Safety
 * `s` must come from this library or be NULL.
 */
void star_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STAR_H */
