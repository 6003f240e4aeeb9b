#ifndef LEMMATA_H
#define LEMMATA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum LemmataStatus {
  LEMMATA_STATUS_OK = 0,
  LEMMATA_STATUS_NULL_POINTER = 1,
  LEMMATA_STATUS_INVALID_UTF8 = 2,
  LEMMATA_STATUS_INVALID_ARGUMENT = 3,
  LEMMATA_STATUS_PROVER_UNAVAILABLE = 4,
  LEMMATA_STATUS_PROVER_FAILURE = 5,
  LEMMATA_STATUS_PARSE_ERROR = 6,
  LEMMATA_STATUS_PANIC = 7,
} LemmataStatus;

typedef enum LemmataUtilityCategory {
  LEMMATA_UTILITY_CATEGORY_MEMORY = 0,
  LEMMATA_UTILITY_CATEGORY_SIMPLIFICATION = 1,
  LEMMATA_UTILITY_CATEGORY_TYPING = 2,
  LEMMATA_UTILITY_CATEGORY_ARITHMETIC = 3,
  LEMMATA_UTILITY_CATEGORY_DATA_STRUCTURE = 4,
  LEMMATA_UTILITY_CATEGORY_STRING = 5,
  LEMMATA_UTILITY_CATEGORY_OTHERS = 6,
} LemmataUtilityCategory;

typedef enum LemmataPropertyType {
  LEMMATA_PROPERTY_TYPE_LOOP = 0,
  LEMMATA_PROPERTY_TYPE_RTE = 1,
  LEMMATA_PROPERTY_TYPE_ASSERTION = 2,
  LEMMATA_PROPERTY_TYPE_CONTRACT = 3,
} LemmataPropertyType;

// Opaque prover factory.
typedef struct LemmataProver LemmataProver;

// Opaque prover session. Borrows nothing from the factory that started it.
typedef struct LemmataSession LemmataSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *lemmata_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and must not be freed twice.
void lemmata_string_free(char *s);

// Library version, statically allocated.
const char *lemmata_version(void);

// Factory replaying a mock script given as JSON text.
//
// # Safety
// `script_json` must be a NUL-terminated string; `out` must be writable.
enum LemmataStatus lemmata_prover_new_mock(const char *script_json, struct LemmataProver **out);

// Factory for an interactive prover process. A null `program` means
// `$LEMMATA_COQTOP` or `coqtop` from `PATH`. Nothing is started until a
// session is.
//
// # Safety
// `program` must be null or NUL-terminated; `out` must be writable.
enum LemmataStatus lemmata_prover_new_coqtop(const char *program, struct LemmataProver **out);

// # Safety
// `prover` must be null or a handle from this library, freed at most once.
void lemmata_prover_free(struct LemmataProver *prover);

// Starts a session and runs `preamble` (may be null).
//
// # Safety
// `prover` must be a live handle; strings NUL-terminated; `out` writable.
enum LemmataStatus lemmata_session_start(const struct LemmataProver *prover_handle,
                                         const char *preamble,
                                         struct LemmataSession **out);

// # Safety
// `session` must be null or a handle from this library, freed at most once.
void lemmata_session_free(struct LemmataSession *session);

// Executes one sentence. A rejection is not an error: `accepted` is set to
// false and the session state is unchanged. `message` (may be null)
// receives the prover's message.
//
// # Safety
// `session` must be a live handle; `sentence` NUL-terminated; `accepted`
// writable; `message` null or writable.
enum LemmataStatus lemmata_session_exec(struct LemmataSession *handle,
                                        const char *sentence,
                                        bool *accepted,
                                        char **message);

// Number of accepted sentences since the preamble. Depth 0 is the state
// right after the preamble.
//
// # Safety
// `session` must be a live handle; `depth` writable.
enum LemmataStatus lemmata_session_depth(struct LemmataSession *handle, size_t *depth);

// Returns to the state reached after `depth` accepted sentences.
//
// # Safety
// `session` must be a live handle.
enum LemmataStatus lemmata_session_rollback(struct LemmataSession *handle, size_t depth);

// Current goals as a JSON array of strings.
//
// # Safety
// `session` must be a live handle; `out` writable.
enum LemmataStatus lemmata_session_goals(struct LemmataSession *handle, char **out);

// Certifies a whole file in a fresh session. `trusted_prefix` (may be null)
// is the goal preamble whose assumptions are not counted. The report is a
// JSON object with `accepted`, `admitted_count`, `axiom_count_added` and
// `first_error`.
//
// # Safety
// `prover` must be a live handle; strings NUL-terminated; `report` writable.
enum LemmataStatus lemmata_certify(const struct LemmataProver *prover_handle,
                                   const char *file_text,
                                   const char *trusted_prefix,
                                   char **report);

// Splits prover source into sentences, as a JSON array of objects with
// `text`, `start` and `terminated`.
//
// # Safety
// `src` NUL-terminated; `out` writable.
enum LemmataStatus lemmata_split_sentences(const char *src, char **out);

// Number of terms in a lemma statement.
//
// # Safety
// `statement` NUL-terminated; `count` writable.
enum LemmataStatus lemmata_count_terms(const char *statement, uint64_t *count);

// Utility category of a helper lemma, from its name.
//
// # Safety
// `name` NUL-terminated; `category` writable.
enum LemmataStatus lemmata_categorize_lemma(const char *name,
                                            enum LemmataUtilityCategory *category);

// Property type of an annotation. Unrecognised annotations count as
// contracts.
//
// # Safety
// `annotation` NUL-terminated; `kind` writable.
enum LemmataStatus lemmata_classify_property(const char *annotation,
                                             enum LemmataPropertyType *kind);

// Report label of a utility category, statically allocated.
const char *lemmata_utility_category_label(enum LemmataUtilityCategory category);

// Report label of a property type, statically allocated.
const char *lemmata_property_type_label(enum LemmataPropertyType kind);

// Description of a status code, statically allocated.
const char *lemmata_status_message(enum LemmataStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEMMATA_H */
