#ifndef JOINSAMPLE_H
#define JOINSAMPLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum JsStatus {
  JS_STATUS_OK = 0,
  JS_STATUS_NULL_ARGUMENT = 1,
  JS_STATUS_INVALID_UTF8 = 2,
  JS_STATUS_INVALID_ARGUMENT = 3,
  // Query text or file could not be read or parsed, or is not acyclic.
  JS_STATUS_QUERY = 4,
  // A relation file could not be read or does not fit the query.
  JS_STATUS_DATA = 5,
  // Index construction or a probe failed (bad positions, overflow).
  JS_STATUS_INDEX = 6,
  // Sampling rejected its input (e.g. a probability outside [0, 1]).
  JS_STATUS_SAMPLING = 7,
  JS_STATUS_OUT_OF_RANGE = 8,
  JS_STATUS_PANIC = 99,
} JsStatus;

// Values of `JsOptions::index`.
enum JsIndexKind
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  JS_INDEX_KIND_CSR = 0,
  JS_INDEX_KIND_USR = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum JsIndexKind JsIndexKind;
#else
typedef uint32_t JsIndexKind;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Values of `JsOptions::method`.
enum JsMethod
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  JS_METHOD_NAIVE = 0,
  JS_METHOD_GEO = 1,
  JS_METHOD_BINOM = 2,
  JS_METHOD_HYBRID = 3,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum JsMethod JsMethod;
#else
typedef uint32_t JsMethod;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// A sampled or probed relation.
typedef struct JsRelation JsRelation;

// An index built over a query and its data, ready to sample.
typedef struct JsSampler JsSampler;

// Sampler settings. Start from `js_options_default()`.
typedef struct JsOptions {
  // A `JsIndexKind`.
  uint32_t index;
  // 1 = probe with the cursor cache, 0 = without, negative = index default.
  int32_t caching;
  // A `JsMethod`; for per-tuple sampling it draws each root row's positions.
  uint32_t method;
  // Hybrid switch-over probability.
  double threshold;
  // Nonzero: every tuple is kept with probability `p`. Zero: per-tuple
  // probabilities come from the query's bern attribute.
  uint8_t uniform;
  double p;
} JsOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Defaults: chained index, index-default caching, per-tuple hybrid sampling.
struct JsOptions js_options_default(void);

// Reads a query file, loads its relations and builds the index.
//
// `data_dir` may be null, in which case relation files are resolved
// against the query file's directory. `options` may be null for defaults.
//
// # Safety
// String arguments must be null or valid NUL-terminated strings; `options`
// must be null or point to a `JsOptions`; `out` must be writable.
enum JsStatus js_sampler_open(const char *query_path,
                              const char *data_dir,
                              const struct JsOptions *options,
                              struct JsSampler **out);

// Like `js_sampler_open`, but with the query given as text. `data_dir`
// is required.
//
// # Safety
// As for `js_sampler_open`.
enum JsStatus js_sampler_open_text(const char *query,
                                   const char *data_dir,
                                   const struct JsOptions *options,
                                   struct JsSampler **out);

// Number of join tuples the index represents.
//
// # Safety
// `sampler` must come from `js_sampler_open*`; `out` must be writable.
enum JsStatus js_sampler_total(const struct JsSampler *sampler, uint64_t *out);

// Draws one Poisson sample. The same seed gives the same sample.
//
// # Safety
// `sampler` must come from `js_sampler_open*`; `out` must be writable.
enum JsStatus js_sampler_sample(const struct JsSampler *sampler,
                                uint64_t seed,
                                struct JsRelation **out);

// Fetches the join tuples at strictly increasing `positions`.
//
// # Safety
// `positions` must point to `len` values (or be null when `len` is 0);
// `sampler` must come from `js_sampler_open*`; `out` must be writable.
enum JsStatus js_sampler_get(const struct JsSampler *sampler,
                             const uint64_t *positions,
                             size_t len,
                             struct JsRelation **out);

// # Safety
// `sampler` must be null or come from `js_sampler_open*`, freed once.
void js_sampler_free(struct JsSampler *sampler);

// Number of rows; 0 for a null handle.
//
// # Safety
// `rel` must be null or a live relation handle.
size_t js_relation_len(const struct JsRelation *rel);

// Number of attributes; 0 for a null handle.
//
// # Safety
// `rel` must be null or a live relation handle.
size_t js_relation_width(const struct JsRelation *rel);

// Name of attribute `col`, borrowed from the handle; null when out of range.
//
// # Safety
// `rel` must be null or a live relation handle.
const char *js_relation_attr(const struct JsRelation *rel, size_t col);

// Value at (`row`, `col`) rendered as text; free with `js_string_free`.
//
// # Safety
// `rel` must be a live relation handle; `out` must be writable.
enum JsStatus js_relation_value(const struct JsRelation *rel, size_t row, size_t col, char **out);

// The relation as CSV with a header line; free with `js_string_free`.
//
// # Safety
// `rel` must be a live relation handle; `out` must be writable.
enum JsStatus js_relation_to_csv(const struct JsRelation *rel, char **out);

// # Safety
// `rel` must be null or a relation handle, freed once.
void js_relation_free(struct JsRelation *rel);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void js_string_free(char *s);

// Message of the last failed call on this thread, or null after a
// success. Valid until the next call on this thread.
const char *js_last_error_message(void);

// Static name of a status code; "unknown status" for other values.
const char *js_status_name(int32_t status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINSAMPLE_H */
