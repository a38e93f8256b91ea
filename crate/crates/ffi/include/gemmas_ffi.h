#ifndef GEMMAS_FFI_H
#define GEMMAS_FFI_H

/* Generated by cbindgen from gemmas-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum {
  GEMMAS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  GEMMAS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GEMMAS_STATUS_INVALID_UTF8 = 2,
  /**
   * The file could not be read.
   */
  GEMMAS_STATUS_IO = 3,
  /**
   * The document failed schema or graph validation.
   */
  GEMMAS_STATUS_PARSE = 4,
  /**
   * Arguments were structurally valid but semantically wrong.
   */
  GEMMAS_STATUS_INVALID_INPUT = 5,
  /**
   * Metric computation failed.
   */
  GEMMAS_STATUS_METRIC = 6,
} GemmasStatus;

/**
 * An owned metrics report (opaque).
 */
typedef struct GemmasReport GemmasReport;

/**
 * An owned benchmark run (opaque).
 */
typedef struct GemmasRun GemmasRun;

/**
 * Analysis knobs; get defaults from `gemmas_analysis_options_default`.
 */
typedef struct {
  /**
   * Syntactic channel weight in [0, 1]; semantic gets the remainder.
   */
  double lambda1;
  /**
   * Inclusive contribution threshold for path necessity.
   */
  double upr_threshold;
  /**
   * Token display divisor (1000 reports kilotokens).
   */
  double token_scale;
  /**
   * Worker cap for per-trace parallelism; 0 means single-threaded.
   */
  uint32_t workers;
} GemmasAnalysisOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread; do not free it.
 */
const char *gemmas_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *gemmas_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a `gemmas_*` function and not freed before.
 */
void gemmas_string_free(char *s);

/**
 * Parse a run document from a byte buffer.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out_run` must be a valid
 * pointer to write the handle through.
 */
GemmasStatus gemmas_run_parse(const uint8_t *data, size_t len, GemmasRun **out_run);

/**
 * Read and parse a run document from a file path.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_run` must be valid to write.
 */
GemmasStatus gemmas_run_read_file(const char *path, GemmasRun **out_run);

/**
 * Generate a deterministic synthetic run.
 *
 * # Safety
 * `out_run` must be valid to write.
 */
GemmasStatus gemmas_run_generate(size_t agents,
                                 size_t problems,
                                 double edge_density,
                                 double correctness_rate,
                                 size_t vocabulary_size,
                                 uint64_t seed,
                                 GemmasRun **out_run);

/**
 * Serialize a run back to the trace schema; null on error.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
char *gemmas_run_serialize(const GemmasRun *run);

/**
 * Validate every trace graph. Returns `Ok` and writes null when valid;
 * returns `InvalidInput` and writes a newline-separated violation listing
 * (free with `gemmas_string_free`) when not.
 *
 * # Safety
 * `run` must be a live handle; `out_message` must be valid to write.
 */
GemmasStatus gemmas_run_validate(const GemmasRun *run, char **out_message);

/**
 * Number of traces in the run; 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t gemmas_run_trace_count(const GemmasRun *run);

/**
 * Release a run handle.
 *
 * # Safety
 * `run` must be null or a live handle; it must not be used afterwards.
 */
void gemmas_run_free(GemmasRun *run);

/**
 * Default analysis options (equal channel weights, 0.5 threshold,
 * kilotoken scale, four workers).
 */
GemmasAnalysisOptions gemmas_analysis_options_default(void);

/**
 * Analyze a run with the local embedding provider.
 *
 * # Safety
 * `run` must be a live handle; `options` may be null (defaults apply);
 * `out_report` must be valid to write.
 */
GemmasStatus gemmas_analyze(const GemmasRun *run,
                            const GemmasAnalysisOptions *options,
                            GemmasReport **out_report);

/**
 * Run accuracy in [0, 1]; NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double gemmas_report_accuracy(const GemmasReport *report);

/**
 * Mean prompt tokens per problem at the configured scale.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double gemmas_report_prompt_tokens(const GemmasReport *report);

/**
 * Mean completion tokens per problem at the configured scale.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double gemmas_report_completion_tokens(const GemmasReport *report);

/**
 * Mean information diversity score. Returns false when the metric is
 * undefined for every trace (no connected pairs); `out_value` is written
 * only on true.
 *
 * # Safety
 * `report` must be null or a live handle; `out_value` must be valid to write.
 */
bool gemmas_report_ids(const GemmasReport *report, double *out_value);

/**
 * Mean unnecessary path ratio; same defined-ness contract as
 * `gemmas_report_ids`.
 *
 * # Safety
 * `report` must be null or a live handle; `out_value` must be valid to write.
 */
bool gemmas_report_upr(const GemmasReport *report, double *out_value);

/**
 * Full report (aggregates plus per-problem values) as a JSON string; null on
 * error.
 *
 * # Safety
 * `report` must be a live handle.
 */
char *gemmas_report_to_json(const GemmasReport *report);

/**
 * Release a report handle.
 *
 * # Safety
 * `report` must be null or a live handle; it must not be used afterwards.
 */
void gemmas_report_free(GemmasReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEMMAS_FFI_H */
