#ifndef TRILINGUA_H
#define TRILINGUA_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TrlStatus {
  TRL_STATUS_OK = 0,
  TRL_STATUS_NULL_ARGUMENT = 1,
  TRL_STATUS_INVALID_UTF8 = 2,
  TRL_STATUS_INVALID_ARGUMENT = 3,
  TRL_STATUS_IO = 4,
  TRL_STATUS_INVALID_CORPUS = 5,
  TRL_STATUS_INVALID_CONFIG = 6,
  TRL_STATUS_BACKEND = 7,
  TRL_STATUS_PANIC = 8,
} TrlStatus;

/*
 Parsed key-value document.
 */
typedef struct TrlKnvDoc TrlKnvDoc;

/*
 Configured pipeline, plus the in-process mock when the config asks for one.
 */
typedef struct TrlPipeline TrlPipeline;

typedef struct TrlRunSummary {
  size_t total;
  size_t processed;
  size_t skipped;
  size_t failed;
  bool interrupted;
} TrlRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. Valid until the
 next trilingua call on the same thread.
 */
const char *trl_last_error(void);

/*
 Releases a string returned through a `char **` out pointer.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void trl_string_free(char *s);

/*
 Unicode-normalizes `input` the way the pipeline does before rendering.

 # Safety
 `input` must be a NUL-terminated string; `out` a writable pointer.
 */
enum TrlStatus trl_normalize_text(const char *input, char **out);

/*
 Token F1 between a prediction and a reference. `english` selects
 lowercasing and article removal.

 # Safety
 `pred` and `gold` must be NUL-terminated strings; `out` writable.
 */
enum TrlStatus trl_token_f1(const char *pred, const char *gold, bool english, double *out);

/*
 Greedy cosine-matching F1 over row-major `n x dim` matrices.

 # Safety
 `cand` must hold `n_cand * dim` doubles and `refs` `n_ref * dim`.
 */
enum TrlStatus trl_greedy_embed_f1(const double *cand,
                                   size_t n_cand,
                                   const double *refs,
                                   size_t n_ref,
                                   size_t dim,
                                   double *out_precision,
                                   double *out_recall,
                                   double *out_f1);

/*
 Win percentage in tenths (867 means 86.7%), rounded half-up.

 # Safety
 `out_tenths` must be writable.
 */
enum TrlStatus trl_win_rate(uint64_t wins, uint64_t total, uint64_t *out_tenths);

/*
 Parses key-value text. Malformed lines become diagnostics, never errors.

 # Safety
 `text` must be a NUL-terminated string; `out` writable.
 */
enum TrlStatus trl_knv_parse(const char *text, struct TrlKnvDoc **out);

/*
 # Safety
 `doc` must be NULL or a live handle.
 */
size_t trl_knv_pair_count(const struct TrlKnvDoc *doc);

/*
 Key of pair `index`, or NULL when out of range.

 # Safety
 `doc` must be NULL or a live handle.
 */
const char *trl_knv_pair_key(const struct TrlKnvDoc *doc, size_t index);

/*
 Value of pair `index`, or NULL when out of range.

 # Safety
 `doc` must be NULL or a live handle.
 */
const char *trl_knv_pair_value(const struct TrlKnvDoc *doc, size_t index);

/*
 # Safety
 `doc` must be NULL or a live handle.
 */
size_t trl_knv_diagnostic_count(const struct TrlKnvDoc *doc);

/*
 Code of diagnostic `index` (`preamble`, `orphan_line`, `dup_key`,
 `empty_key`), or NULL when out of range.

 # Safety
 `doc` must be NULL or a live handle.
 */
const char *trl_knv_diagnostic_code(const struct TrlKnvDoc *doc, size_t index);

/*
 Raw input line of diagnostic `index`, or NULL when out of range.

 # Safety
 `doc` must be NULL or a live handle.
 */
const char *trl_knv_diagnostic_line(const struct TrlKnvDoc *doc, size_t index);

/*
 1-based input line number of diagnostic `index`, or 0 when out of range.

 # Safety
 `doc` must be NULL or a live handle.
 */
size_t trl_knv_diagnostic_line_no(const struct TrlKnvDoc *doc, size_t index);

/*
 Serializes the parsed pairs, one `key: value` line each.

 # Safety
 `doc` must be a live handle; `out` writable.
 */
enum TrlStatus trl_knv_serialize(const struct TrlKnvDoc *doc, char **out);

/*
 # Safety
 `doc` must be NULL or a handle from [`trl_knv_parse`] not freed before.
 */
void trl_knv_free(struct TrlKnvDoc *doc);

/*
 Validates a corpus file and reports its record count.

 # Safety
 `path` must be a NUL-terminated string; `out_records` writable.
 */
enum TrlStatus trl_validate_corpus(const char *path, size_t *out_records);

/*
 Builds a pipeline from a TOML or JSON config file.

 # Safety
 `config_path` must be a NUL-terminated string; `out` writable.
 */
enum TrlStatus trl_pipeline_new(const char *config_path, struct TrlPipeline **out);

/*
 Runs a corpus file, checkpointing and writing ordered results to
 `out_path`. `out_summary` may be NULL.

 # Safety
 `pipeline` must be a live handle; paths NUL-terminated strings.
 */
enum TrlStatus trl_pipeline_run(const struct TrlPipeline *pipeline,
                                const char *corpus_path,
                                const char *out_path,
                                struct TrlRunSummary *out_summary);

/*
 Runs one record given as a JSON object and returns the result as JSON.
 Backend failures are reported inside the result, not as a status.

 # Safety
 `pipeline` must be a live handle; `record_json` a NUL-terminated string;
 `out` writable.
 */
enum TrlStatus trl_pipeline_run_record(const struct TrlPipeline *pipeline,
                                       const char *record_json,
                                       char **out);

/*
 # Safety
 `pipeline` must be NULL or a handle from [`trl_pipeline_new`] not freed
 before.
 */
void trl_pipeline_free(struct TrlPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRILINGUA_H */
