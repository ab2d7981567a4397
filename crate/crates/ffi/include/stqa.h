#ifndef STQA_H
#define STQA_H

#include <stddef.h>
#include <stdint.h>

// Status codes. `Ok` is zero; everything else is an error.
typedef enum StqaStatus {
  STQA_STATUS_OK = 0,
  STQA_STATUS_NULL_ARGUMENT = 1,
  STQA_STATUS_INVALID_UTF8 = 2,
  STQA_STATUS_IO = 3,
  STQA_STATUS_MALFORMED_RECORD = 4,
  STQA_STATUS_INVALID_ARGUMENT = 5,
  STQA_STATUS_CHECKPOINT = 6,
  STQA_STATUS_CONFIG_MISMATCH = 7,
  STQA_STATUS_CONFIG = 8,
  STQA_STATUS_JSON = 9,
  STQA_STATUS_INTERNAL = 10,
  STQA_STATUS_PANIC = 11,
} StqaStatus;

// Opaque model handle.
typedef struct StqaModel StqaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a checkpoint. On success `*out` receives a handle to free with `stqa_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum StqaStatus stqa_model_load(const char *path, struct StqaModel **out);

// Releases a handle from `stqa_model_load`. Null is ignored.
//
// # Safety
// `model` must come from `stqa_model_load` and not have been freed.
void stqa_model_free(struct StqaModel *model);

// Hex SHA-256 of the model-relevant config keys.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum StqaStatus stqa_model_config_hash(const struct StqaModel *model, char **out);

// Predicts one sample given as a single JSON record; `*out` receives the
// prediction as a JSON object (sample_id, answer, score, pool, probabilities).
//
// # Safety
// `model` must be a live handle; `sample_json` NUL-terminated; `out` writable.
enum StqaStatus stqa_predict(const struct StqaModel *model, const char *sample_json, char **out);

// ANLS of one prediction against a JSON array of gold answers (tau 0.5, lowercased).
//
// # Safety
// Both strings NUL-terminated; `out` writable.
enum StqaStatus stqa_anls(const char *prediction, const char *gold_json, double *out);

// Unit-cost edit distance in Unicode scalar values.
//
// # Safety
// Both strings NUL-terminated; `out` writable.
enum StqaStatus stqa_levenshtein(const char *a, const char *b, uintptr_t *out);

// Edit distance divided by the longer length; 0 for two empty strings.
//
// # Safety
// Both strings NUL-terminated; `out` writable.
enum StqaStatus stqa_normalized_levenshtein(const char *a, const char *b, double *out);

// Message of the last failed call on this thread, or null. Owned by the
// library; valid until the next call on the same thread.
const char *stqa_last_error(void);

// Frees a string returned through an `out` parameter. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void stqa_string_free(char *s);

// Library version, static storage.
const char *stqa_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STQA_H */
