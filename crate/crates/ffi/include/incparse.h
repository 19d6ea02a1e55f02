/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef INCPARSE_H
#define INCPARSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Base beam factor used by the command-line tools.
 */
#define INCPARSE_DEFAULT_BASE_BEAM 1e-11

typedef enum IncparseStatus {
  INCPARSE_STATUS_OK = 0,
  INCPARSE_STATUS_NULL_ARGUMENT = 1,
  INCPARSE_STATUS_INVALID_UTF8 = 2,
  INCPARSE_STATUS_IO = 3,
  INCPARSE_STATUS_SYNTAX = 4,
  INCPARSE_STATUS_CONFIG = 5,
  INCPARSE_STATUS_ZERO_PROBABILITY = 6,
  INCPARSE_STATUS_MODEL_FORMAT = 7,
  INCPARSE_STATUS_OUT_OF_VOCABULARY = 8,
  INCPARSE_STATUS_INDEX_OUT_OF_RANGE = 9,
  INCPARSE_STATUS_INTERNAL = 10,
} IncparseStatus;

/*
 A trained model bundle.
 */
typedef struct IncparseModel IncparseModel;

/*
 The result of parsing one sentence.
 */
typedef struct IncparseParse IncparseParse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static string.
 */
const char *incparse_version(void);

/*
 Message of the last failure on this thread, or NULL. Valid until the next
 failing call on the same thread.
 */
const char *incparse_last_error(void);

/*
 Loads a model file.

 # Safety
 `path` must be a valid C string and `out` a valid pointer.
 */
enum IncparseStatus incparse_model_load(const char *path, struct IncparseModel **out);

/*
 Trains a model from two bracketed treebanks. `conditioning` is a preset
 name or an `a,b,c` triple; NULL selects "all".

 # Safety
 String arguments must be valid C strings or NULL where allowed, and `out`
 a valid pointer.
 */
enum IncparseStatus incparse_model_train(const char *train_path,
                                         const char *heldout_path,
                                         const char *conditioning,
                                         struct IncparseModel **out);

/*
 Writes the model file.

 # Safety
 `model` must come from this library and `path` be a valid C string.
 */
enum IncparseStatus incparse_model_save(const struct IncparseModel *model, const char *path);

/*
 # Safety
 `model` must come from this library and not be used afterwards. NULL is ignored.
 */
void incparse_model_free(struct IncparseModel *model);

/*
 Parses one whitespace-tokenized sentence. `base_beam` of 0 disables
 pruning; `max_queue` of 0 selects the default. Unknown words map to the
 unknown token. A garden path is not an error: the result reports it.

 # Safety
 `model` must come from this library, `sentence` be a valid C string and
 `out` a valid pointer.
 */
enum IncparseStatus incparse_parse(const struct IncparseModel *model,
                                   const char *sentence,
                                   double base_beam,
                                   uintptr_t max_queue,
                                   struct IncparseParse **out);

/*
 Best tree in bracketed form, owned by the parse handle.

 # Safety
 `parse` must come from this library or be NULL.
 */
const char *incparse_parse_tree(const struct IncparseParse *parse);

/*
 True when no complete parse was found.

 # Safety
 `parse` must come from this library or be NULL.
 */
bool incparse_parse_failed(const struct IncparseParse *parse);

/*
 Natural log of the summed probability of the complete parses found;
 negative infinity after a garden path.

 # Safety
 `parse` must come from this library or be NULL.
 */
double incparse_parse_log_prob(const struct IncparseParse *parse);

/*
 Number of tokens scored, the end marker included.

 # Safety
 `parse` must come from this library or be NULL.
 */
uintptr_t incparse_parse_num_words(const struct IncparseParse *parse);

/*
 Token `index` after normalization, owned by the parse handle.

 # Safety
 `parse` must come from this library and `out` be a valid pointer.
 */
enum IncparseStatus incparse_parse_word(const struct IncparseParse *parse,
                                        uintptr_t index,
                                        const char **out);

/*
 Conditional probability of token `index` given the ones before it,
 smoothed with the unigram.

 # Safety
 `parse` must come from this library and `out` be a valid pointer.
 */
enum IncparseStatus incparse_parse_word_prob(const struct IncparseParse *parse,
                                             uintptr_t index,
                                             double *out);

/*
 # Safety
 `parse` must come from this library and not be used afterwards. NULL is ignored.
 */
void incparse_parse_free(struct IncparseParse *parse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INCPARSE_H */
