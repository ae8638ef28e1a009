#ifndef HEARCHECK_H
#define HEARCHECK_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_ARGUMENT = 1,
  HC_STATUS_INVALID_UTF8 = 2,
  HC_STATUS_INVALID_ARGUMENT = 3,
  HC_STATUS_IO = 4,
  HC_STATUS_UNSUPPORTED_ENCODING = 5,
  HC_STATUS_RATE_MISMATCH = 6,
  HC_STATUS_EMPTY_AUDIO = 7,
  HC_STATUS_BAD_RECORDS = 8,
  HC_STATUS_UNSUPPORTED_TEMPLATE = 9,
  HC_STATUS_BUFFER_TOO_SMALL = 10,
} HcStatus;

/**
 * Parsed yes/no answer.
 */
typedef enum HcAnswer {
  HC_ANSWER_YES = 0,
  HC_ANSWER_NO = 1,
  HC_ANSWER_UNPARSED = 2,
} HcAnswer;

/**
 * A mono audio clip.
 */
typedef struct HcClip HcClip;

/**
 * Metrics rows scored from an evaluation records file.
 */
typedef struct HcReport HcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *hc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * Decodes a WAV file to mono at `sample_rate` Hz.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HcStatus hc_clip_load(const char *path, uint32_t sample_rate, struct HcClip **out);

/**
 * Builds a clip from `len` samples, clamped to [-1, 1].
 *
 * # Safety
 * `samples` must point to `len` floats; `out` must be writable.
 */
enum HcStatus hc_clip_from_samples(const float *samples,
                                   size_t len,
                                   uint32_t sample_rate,
                                   struct HcClip **out);

/**
 * All-zero clip of `duration_s` seconds.
 *
 * # Safety
 * `out` must be writable.
 */
enum HcStatus hc_clip_silence(double duration_s, uint32_t sample_rate, struct HcClip **out);

/**
 * Scales `clip` so its peak is `target_peak`, in (0, 1].
 *
 * # Safety
 * `clip` must be a live handle; `out` must be writable.
 */
enum HcStatus hc_clip_normalize(const struct HcClip *clip, float target_peak, struct HcClip **out);

/**
 * Adds `event` onto `base` starting at `offset_s`, hard-clipping the sum.
 *
 * # Safety
 * `base` and `event` must be live handles; `out` must be writable.
 */
enum HcStatus hc_clip_overlay(const struct HcClip *base,
                              const struct HcClip *event,
                              double offset_s,
                              struct HcClip **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `clip` must be null or a live handle.
 */
size_t hc_clip_len(const struct HcClip *clip);

/**
 * Sample rate in Hz, or 0 for a null handle.
 *
 * # Safety
 * `clip` must be null or a live handle.
 */
uint32_t hc_clip_sample_rate(const struct HcClip *clip);

/**
 * Copies all samples into `buf`, which must hold at least `hc_clip_len` floats.
 *
 * # Safety
 * `clip` must be a live handle; `buf` must point to `cap` writable floats.
 */
enum HcStatus hc_clip_copy_samples(const struct HcClip *clip, float *buf, size_t cap);

/**
 * Writes `clip` as 16-bit mono PCM WAV.
 *
 * # Safety
 * `clip` must be a live handle; `path` a NUL-terminated string.
 */
enum HcStatus hc_clip_write_wav(const struct HcClip *clip, const char *path);

/**
 * Releases a clip. Null is ignored.
 *
 * # Safety
 * `clip` must be null or a handle not yet freed.
 */
void hc_clip_free(struct HcClip *clip);

/**
 * Maps a free-form response to yes/no.
 *
 * # Safety
 * `text` must be a NUL-terminated string.
 */
enum HcStatus hc_parse_answer(const char *text, enum HcAnswer *out);

/**
 * Negated form of a templated question. Free the result with `hc_string_free`.
 *
 * # Safety
 * `question` must be a NUL-terminated string; `out` must be writable.
 */
enum HcStatus hc_negate_question(const char *question, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void hc_string_free(char *s);

/**
 * Scores an evaluation records file (JSON lines).
 *
 * # Safety
 * `records_path` must be a NUL-terminated string; `out` must be writable.
 */
enum HcStatus hc_report_from_records(const char *records_path, struct HcReport **out);

/**
 * Number of (model, task, setting) rows.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t hc_report_rows(const struct HcReport *report);

/**
 * Report as JSON. Free the result with `hc_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum HcStatus hc_report_to_json(const struct HcReport *report, char **out);

/**
 * Report as a markdown table. Free the result with `hc_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum HcStatus hc_report_to_markdown(const struct HcReport *report, char **out);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void hc_report_free(struct HcReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEARCHECK_H */
