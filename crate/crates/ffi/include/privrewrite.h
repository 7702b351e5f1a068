#ifndef PRIVREWRITE_H
#define PRIVREWRITE_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrwStatus {
  PRW_STATUS_OK = 0,
  PRW_STATUS_NULL_POINTER = 1,
  PRW_STATUS_INVALID_UTF8 = 2,
  PRW_STATUS_INVALID_ARGUMENT = 3,
  PRW_STATUS_EMPTY_POOL = 4,
  PRW_STATUS_IO = 5,
  PRW_STATUS_CORRUPT_SNAPSHOT = 6,
  PRW_STATUS_VERSION_MISMATCH = 7,
  PRW_STATUS_REMOTE_UNAVAILABLE = 8,
  PRW_STATUS_CONFIG = 9,
  PRW_STATUS_PANIC = 10,
  PRW_STATUS_OTHER = 11,
} PrwStatus;

/**
 * Opaque engine handle: configuration, embedder, detector and style pool.
 */
typedef struct PrwEngine PrwEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread; do not free.
 */
const char *prw_last_error_message(void);

/**
 * Creates an engine from a TOML config (null for defaults) with an empty pool.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
enum PrwStatus prw_engine_new(const char *config_toml, struct PrwEngine **out);

/**
 * # Safety
 * `engine` must be null or a handle from [`prw_engine_new`] not yet freed.
 */
void prw_engine_free(struct PrwEngine *engine);

/**
 * Replaces the engine's pool with a snapshot file.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum PrwStatus prw_pool_load(struct PrwEngine *engine, const char *path);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum PrwStatus prw_pool_save(const struct PrwEngine *engine, const char *path);

/**
 * Inserts `text` into the pool. `out_node` receives the new or merged-into
 * node id and `out_merged` whether it was a merge. Either may be null.
 *
 * # Safety
 * Pointers must be valid or null where allowed; `text` NUL-terminated.
 */
enum PrwStatus prw_pool_insert(struct PrwEngine *engine,
                               const char *text,
                               uintptr_t *out_node,
                               bool *out_merged);

/**
 * Recomputes the pool's outlier statistics now.
 *
 * # Safety
 * `engine` must be a valid handle.
 */
enum PrwStatus prw_pool_refresh_stats(struct PrwEngine *engine);

/**
 * # Safety
 * Pointers must be valid.
 */
enum PrwStatus prw_pool_len(const struct PrwEngine *engine, uintptr_t *out);

/**
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum PrwStatus prw_is_outlier(const struct PrwEngine *engine,
                              const char *text,
                              bool *out_flag,
                              double *out_avg_distance,
                              double *out_tau);

/**
 * Detected entities as a JSON array of `{category, surface, start, end}`
 * (character offsets).
 *
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum PrwStatus prw_detect_entities_json(const struct PrwEngine *engine,
                                        const char *text,
                                        char **out_json);

/**
 * Full prompt for `text` given the current pool.
 *
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum PrwStatus prw_build_prompt(const struct PrwEngine *engine,
                                const char *text,
                                char **out_prompt);

/**
 * Reward breakdown (JSON) of a raw generation for `source` against the
 * current pool.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum PrwStatus prw_score(const struct PrwEngine *engine,
                         const char *source,
                         const char *raw_generation,
                         char **out_json);

/**
 * `{reasoning, rewrite, well_formed}` as JSON.
 *
 * # Safety
 * Pointers must be valid; `raw` NUL-terminated.
 */
enum PrwStatus prw_parse_generation(const char *raw, char **out_json);

/**
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum PrwStatus prw_length_reward(const char *x, const char *y, double alpha, double *out);

/**
 * `-ln sigma(beta * delta)`; pass zeros for the reference log-probs to use
 * the policy-only margin.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PrwStatus prw_dpo_loss(double logp_chosen,
                            double logp_rejected,
                            double ref_logp_chosen,
                            double ref_logp_rejected,
                            double beta,
                            double *out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer returned through an out-parameter of this
 * library, not yet freed.
 */
void prw_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVREWRITE_H */
