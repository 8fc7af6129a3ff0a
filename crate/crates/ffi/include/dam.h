#ifndef DAM_H
#define DAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every exported function.
 */
typedef enum DamStatus {
  DAM_STATUS_OK = 0,
  DAM_STATUS_NULL_POINTER = 1,
  DAM_STATUS_INVALID_ARGUMENT = 2,
  DAM_STATUS_INVALID_UTF8 = 3,
  DAM_STATUS_NOT_FOUND = 4,
  DAM_STATUS_IO = 5,
  DAM_STATUS_CORRUPT = 6,
  DAM_STATUS_PROVIDER = 7,
  DAM_STATUS_PANIC = 8,
} DamStatus;

/**
 * A conversation pipeline: providers, configuration and its own store.
 */
typedef struct DamEngine DamEngine;

/**
 * A memory store.
 */
typedef struct DamStore DamStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string. Never free it.
 */
const char *dam_version(void);

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *dam_last_error_message(void);

/**
 * Release a string returned by the library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void dam_string_free(char *s);

/**
 * Shannon entropy in bits of a profile given as three confidences, which
 * are normalized first.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum DamStatus dam_belief_entropy(double positive, double negative, double neutral, double *out);

/**
 * Strength-weighted update of `prior` (weight `prior_weight`) with
 * `evidence` (strength `strength`). Profiles are arrays of three doubles in
 * positive, negative, neutral order.
 *
 * # Safety
 * `prior`, `evidence` and `out_profile` must point to three doubles;
 * `out_weight` to one.
 */
enum DamStatus dam_bayes_update(const double *prior,
                                double prior_weight,
                                const double *evidence,
                                double strength,
                                double *out_profile,
                                double *out_weight);

/**
 * An empty store for embeddings of dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DamStatus dam_store_new(size_t dim, struct DamStore **out);

/**
 * Load a store file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DamStatus dam_store_load(const char *path, struct DamStore **out);

/**
 * Write a store file atomically.
 *
 * # Safety
 * `store` must be a live handle and `path` a NUL-terminated string.
 */
enum DamStatus dam_store_save(struct DamStore *store, const char *path);

/**
 * # Safety
 * `store` must be a live handle or NULL; it is invalid afterwards.
 */
void dam_store_free(struct DamStore *store);

/**
 * # Safety
 * `store` must be a live handle and `out` a valid pointer.
 */
enum DamStatus dam_store_len(struct DamStore *store, size_t *out);

/**
 * Sum of belief entropy over the units of the store.
 *
 * # Safety
 * `store` must be a live handle and `out` a valid pointer.
 */
enum DamStatus dam_store_global_entropy(struct DamStore *store, double *out);

/**
 * All units as a JSON array, in key order.
 *
 * # Safety
 * `store` must be a live handle and `out` a valid pointer. Free the result
 * with `dam_string_free`.
 */
enum DamStatus dam_store_units_json(struct DamStore *store, char **out);

/**
 * An engine with an empty store. `config_toml` may be NULL for the default
 * (mock) configuration. `DAM_*` environment variables are not consulted.
 *
 * # Safety
 * `config_toml` must be NULL or a NUL-terminated string; `out` a valid
 * pointer.
 */
enum DamStatus dam_engine_new(const char *config_toml, struct DamEngine **out);

/**
 * # Safety
 * `engine` must be a live handle or NULL; it is invalid afterwards.
 */
void dam_engine_free(struct DamEngine *engine);

/**
 * Run one conversation turn. The outcome (response, routing, actions,
 * warnings, objective) is returned as a JSON object.
 *
 * # Safety
 * `engine` must be a live handle, `text` a NUL-terminated string and `out`
 * a valid pointer. Free the result with `dam_string_free`.
 */
enum DamStatus dam_engine_turn(struct DamEngine *engine, const char *text, char **out);

/**
 * Compression pass over the engine's whole store; the actions are returned
 * as a JSON array.
 *
 * # Safety
 * `engine` must be a live handle and `out` a valid pointer. Free the result
 * with `dam_string_free`.
 */
enum DamStatus dam_engine_compact(struct DamEngine *engine, char **out);

/**
 * A copy of the engine's current store as a new handle.
 *
 * # Safety
 * `engine` must be a live handle and `out` a valid pointer.
 */
enum DamStatus dam_engine_store(struct DamEngine *engine, struct DamStore **out);

/**
 * Replace the engine's store with a copy of `store`.
 *
 * # Safety
 * `engine` and `store` must be live handles.
 */
enum DamStatus dam_engine_set_store(struct DamEngine *engine, struct DamStore *store);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAM_H */
