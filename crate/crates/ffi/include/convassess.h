#ifndef CONVASSESS_H
#define CONVASSESS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_ARGUMENT = 1,
  CA_STATUS_INVALID_UTF8 = 2,
  CA_STATUS_CONFIG = 3,
  /**
   * Malformed transcript, energy or overlap input.
   */
  CA_STATUS_FORMAT = 4,
  /**
   * The conversation cannot be assessed (for example no provider speech).
   */
  CA_STATUS_ASSESSMENT = 5,
  /**
   * Segment index or metric name does not exist.
   */
  CA_STATUS_OUT_OF_RANGE = 6,
  CA_STATUS_PANIC = 7,
} CaStatus;

typedef enum CaLabel {
  CA_LABEL_NONE = 0,
  CA_LABEL_GOOD = 1,
  CA_LABEL_BAD = 2,
} CaLabel;

typedef struct CaAssessment CaAssessment;

/**
 * A configured engine. Not safe for concurrent use; one per thread.
 */
typedef struct CaEngine CaEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an engine from `key = value` configuration text. Pass null for
 * the defaults. On success `*out` owns a new engine.
 *
 * # Safety
 * `config_text` must be null or a valid C string; `out` must be writable.
 */
enum CaStatus ca_engine_new(const char *config_text, struct CaEngine **out);

/**
 * # Safety
 * `engine` must be null or a handle from [`ca_engine_new`] not yet freed.
 */
void ca_engine_free(struct CaEngine *engine);

/**
 * Assesses one transcript. `energy_csv` and `overlaps_csv` hold side file
 * contents and may be null.
 *
 * # Safety
 * `engine` must be a live handle; string arguments null or valid C
 * strings; `out` writable.
 */
enum CaStatus ca_analyze(struct CaEngine *engine,
                         const char *transcript_json,
                         const char *energy_csv,
                         const char *overlaps_csv,
                         struct CaAssessment **out);

/**
 * # Safety
 * `assessment` must be null or a handle from [`ca_analyze`] not yet freed.
 */
void ca_assessment_free(struct CaAssessment *assessment);

/**
 * Serialized assessment. Free `*out` with [`ca_string_free`].
 *
 * # Safety
 * `assessment` must be a live handle and `out` writable.
 */
enum CaStatus ca_assessment_to_json(const struct CaAssessment *assessment, char **out);

/**
 * Number of transcript segments covered by the assessment.
 *
 * # Safety
 * `assessment` must be a live handle and `out` writable.
 */
enum CaStatus ca_assessment_segment_count(const struct CaAssessment *assessment, size_t *out);

/**
 * Label for one segment and metric (`understanding`, `empathy`, `emotion`,
 * `presence` or `clarity`).
 *
 * # Safety
 * `assessment` must be a live handle, `metric` a valid C string and `out`
 * writable.
 */
enum CaStatus ca_assessment_label(const struct CaAssessment *assessment,
                                  size_t segment,
                                  const char *metric,
                                  enum CaLabel *out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ca_string_free(char *s);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next `ca_*` call on the same thread.
 */
const char *ca_last_error(void);

/**
 * Library version as a static C string.
 */
const char *ca_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVASSESS_H */
