#ifndef TWEETCHECK_H
#define TWEETCHECK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_INVALID_UTF8 = 2,
  TC_STATUS_INVALID_ARGUMENT = 3,
  TC_STATUS_NOT_FOUND = 4,
  TC_STATUS_IO = 5,
  TC_STATUS_SCHEMA_MISMATCH = 6,
  TC_STATUS_UNDEFINED = 7,
  TC_STATUS_INTERNAL = 8,
  TC_STATUS_PANIC = 9,
} TcStatus;

/**
 * Predicted class.
 */
typedef enum TcLabel {
  TC_LABEL_FAKE = 0,
  TC_LABEL_GENUINE = 1,
} TcLabel;

/**
 * A loaded checkpoint plus its feature pipeline. Classification is
 * read-only, so one handle may be shared across threads.
 */
typedef struct TcClassifier TcClassifier;

typedef struct TcPrediction {
  /**
   * A [`TcLabel`] value.
   */
  int32_t label;
  double confidence;
  double prob_fake;
  double prob_genuine;
} TcPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next `tc_` call on the same thread.
 */
const char *tc_last_error(void);

/**
 * Library version as a static string.
 */
const char *tc_version(void);

/**
 * Loads a JSON checkpoint. External knowledge uses the offline hashing
 * embedder with the checkpoint's knowledge width and no search client.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TcStatus tc_classifier_load(const char *path, struct TcClassifier **out);

/**
 * # Safety
 * `handle` must come from [`tc_classifier_load`] and not be used afterwards.
 */
void tc_classifier_free(struct TcClassifier *handle);

/**
 * Classifies one tweet given as a JSON record; `user_json` may be null.
 *
 * # Safety
 * `handle` must be live; strings NUL-terminated; `out` writable.
 */
enum TcStatus tc_classify(const struct TcClassifier *handle,
                          const char *tweet_json,
                          const char *user_json,
                          struct TcPrediction *out);

/**
 * Like [`tc_classify`] but writes a JSON object
 * `{"label", "confidence", "probabilities"}` to `out_json`.
 *
 * # Safety
 * As for [`tc_classify`]; free the result with [`tc_string_free`].
 */
enum TcStatus tc_classify_json(const struct TcClassifier *handle,
                               const char *tweet_json,
                               char **out_json);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void tc_string_free(char *s);

/**
 * Nominal Krippendorff's alpha over a row-major `annotators × items` matrix
 * of category codes; entries equal to `missing` are treated as absent.
 *
 * # Safety
 * `codes` must point to `annotators * items` readable values.
 */
enum TcStatus tc_krippendorff_alpha(const int32_t *codes,
                                    size_t annotators,
                                    size_t items,
                                    int32_t missing,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWEETCHECK_H */
