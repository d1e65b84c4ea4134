/* C bindings for the koopgen generator-learning library. */

#pragma once

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from koopgen-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum KgStatus {
  // Success.
  KG_STATUS_OK = 0,
  // A pointer or size argument was invalid.
  KG_STATUS_INVALID_ARGUMENT = 1,
  // A JSON payload failed to parse or validate.
  KG_STATUS_PARSE_ERROR = 2,
  // The learning pipeline failed numerically.
  KG_STATUS_NUMERICAL_ERROR = 3,
  // An internal panic was caught at the boundary.
  KG_STATUS_PANIC = 4,
} KgStatus;

// A learned generator model (opaque).
typedef struct KgModel KgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; do not free.
const char *kg_version(void);

// Returns the last error message of this thread as a caller-owned string,
// or null when no error has been recorded. Free with `kg_string_free`.
char *kg_last_error_message(void);

// Frees a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must be a pointer obtained from this library and not freed before.
void kg_string_free(char *s);

// Learns a generator from a JSON learn-config (same schema as the CLI
// `learn` subcommand) and returns an owned model handle.
//
// # Safety
// `config_json` must point to a NUL-terminated string and `out_model` to a
// writable pointer slot.
enum KgStatus kg_learn_json(const char *config_json, struct KgModel **out_model);

// Deserializes a model from its JSON form (as produced by
// `kg_model_to_json` or the CLI).
//
// # Safety
// `json` must point to a NUL-terminated string and `out_model` to a
// writable pointer slot.
enum KgStatus kg_model_from_json(const char *json, struct KgModel **out_model);

// Serializes the model to JSON; returns null on failure. Free with
// `kg_string_free`.
//
// # Safety
// `model` must be a live handle from this library.
char *kg_model_to_json(const struct KgModel *model);

// Dictionary size N (the generator matrix is N x N).
//
// # Safety
// `model` must be a live handle from this library.
uintptr_t kg_model_size(const struct KgModel *model);

// State dimension d of the underlying system.
//
// # Safety
// `model` must be a live handle from this library.
uintptr_t kg_model_dim(const struct KgModel *model);

// Copies the N x N generator matrix row-major into `out` (`len >= N*N`).
//
// # Safety
// `model` must be live; `out` must point to at least `len` doubles.
enum KgStatus kg_model_matrix(const struct KgModel *model, double *out, uintptr_t len);

// Copies the identified d x N field coefficients row-major into `out`
// (`len >= d*N`). Row j holds the dictionary weights of component j.
//
// # Safety
// `model` must be live; `out` must point to at least `len` doubles.
enum KgStatus kg_model_field_coefficients(struct KgModel *model, double *out, uintptr_t len);

// Evaluates the identified vector field at `x` (`x_len == d`), writing d
// components to `out`.
//
// # Safety
// `model` must be live; `x` and `out` must point to `x_len`/`out_len`
// doubles.
enum KgStatus kg_model_eval_field(struct KgModel *model,
                                  const double *x,
                                  uintptr_t x_len,
                                  double *out,
                                  uintptr_t out_len);

// Releases a model handle. Null is a no-op.
//
// # Safety
// `model` must be a handle from this library, freed at most once.
void kg_model_free(struct KgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
