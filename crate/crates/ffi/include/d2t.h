#ifndef D2T_H
#define D2T_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum D2tStatus {
  D2T_STATUS_OK = 0,
  D2T_STATUS_NULL_POINTER = 1,
  D2T_STATUS_INVALID_UTF8 = 2,
  D2T_STATUS_PARSE = 3,
  D2T_STATUS_IO = 4,
  D2T_STATUS_INVALID_ARGUMENT = 5,
  D2T_STATUS_PANIC = 6,
} D2tStatus;

typedef struct D2tMr D2tMr;

typedef struct D2tSchema D2tSchema;

typedef struct D2tSurfaceForms D2tSurfaceForms;

typedef struct D2tTokenizer D2tTokenizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *d2t_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void d2t_string_free(char *s);

/**
 * The built-in restaurant slot schema.
 */
struct D2tSchema *d2t_schema_restaurant(void);

/**
 * # Safety
 * `schema` must come from this library or be null.
 */
void d2t_schema_free(struct D2tSchema *schema);

/**
 * Parse `act(key=value,...)`.
 *
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum D2tStatus d2t_mr_parse(const struct D2tSchema *schema, const char *text, struct D2tMr **out);

/**
 * Canonical text form of the MR.
 *
 * # Safety
 * Pointers must be valid.
 */
enum D2tStatus d2t_mr_to_string(const struct D2tMr *mr, char **out);

/**
 * Flatten the MR into the `[GENERATE] <2cs>` model input.
 *
 * # Safety
 * Pointers must be valid.
 */
enum D2tStatus d2t_mr_linearize(const struct D2tMr *mr, char **out);

/**
 * # Safety
 * `mr` must come from this library or be null.
 */
void d2t_mr_free(struct D2tMr *mr);

/**
 * Load a surface-form table (TSV).
 *
 * # Safety
 * Pointers must be valid.
 */
enum D2tStatus d2t_surface_forms_load(const char *path, struct D2tSurfaceForms **out);

/**
 * An empty table: every value is its only surface form.
 */
struct D2tSurfaceForms *d2t_surface_forms_empty(void);

/**
 * # Safety
 * `table` must come from this library or be null.
 */
void d2t_surface_forms_free(struct D2tSurfaceForms *table);

/**
 * Slot error rate of `n` predictions for `n` MR strings, as a fraction
 * of examples with a missing slot.
 *
 * # Safety
 * Arrays must hold `n` valid NUL-terminated strings.
 */
enum D2tStatus d2t_ser(const struct D2tSchema *schema,
                       const struct D2tSurfaceForms *table,
                       const char *const *mrs,
                       const char *const *predictions,
                       size_t n,
                       double *out_rate);

/**
 * Corpus-level metric (`bleu`, `nist`, `rouge_l`, `cider`, `meteor_lite`)
 * with one reference per hypothesis.
 *
 * # Safety
 * Arrays must hold `n` valid NUL-terminated strings.
 */
enum D2tStatus d2t_metric(const char *name,
                          const char *const *hypotheses,
                          const char *const *references,
                          size_t n,
                          double *out_value);

/**
 * Load a tokenizer saved by `tokenizer-train`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum D2tStatus d2t_tokenizer_load(const char *path, struct D2tTokenizer **out);

/**
 * # Safety
 * `tok` must come from this library or be null.
 */
void d2t_tokenizer_free(struct D2tTokenizer *tok);

/**
 * # Safety
 * `tok` must be valid.
 */
size_t d2t_tokenizer_vocab_size(const struct D2tTokenizer *tok);

/**
 * Encode `text`; the ids buffer goes to `*out_ids` and its length to
 * `*out_len`. Free with [`d2t_ids_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum D2tStatus d2t_tokenizer_encode(const struct D2tTokenizer *tok,
                                    const char *text,
                                    uint32_t **out_ids,
                                    size_t *out_len);

/**
 * # Safety
 * `ids`/`len` must come from [`d2t_tokenizer_encode`].
 */
void d2t_ids_free(uint32_t *ids, size_t len);

/**
 * Decode `len` ids back to text.
 *
 * # Safety
 * `ids` must point to `len` values.
 */
enum D2tStatus d2t_tokenizer_decode(const struct D2tTokenizer *tok,
                                    const uint32_t *ids,
                                    size_t len,
                                    char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2T_H */
