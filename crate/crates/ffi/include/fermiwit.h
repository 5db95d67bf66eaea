#ifndef FERMIWIT_H
#define FERMIWIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FwStatus {
  FW_STATUS_OK = 0,
  FW_STATUS_NULL_POINTER = 1,
  FW_STATUS_INVALID_INPUT = 2,
  FW_STATUS_SOLVER_FAILURE = 3,
  FW_STATUS_PANIC = 4,
} FwStatus;

/**
 * A density matrix on a fixed-particle-number sector.
 */
typedef struct FwState FwState;

/**
 * An optimized witness with its robustness and validation report.
 */
typedef struct FwWitness FwWitness;

typedef struct FwWitnessOptions {
  size_t samples;
  size_t rounds;
  size_t restarts;
  size_t validation_samples;
  uint64_t seed;
} FwWitnessOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fw_last_error(void);

/**
 * Parses a state file (JSON, row-major `[re, im]` pairs).
 *
 * # Safety
 * `json` is a nul-terminated string and `out_state` is writable.
 */
enum FwStatus fw_state_from_json(const char *json, struct FwState **out_state);

/**
 * Serializes a state; free the string with [`fw_string_free`].
 *
 * # Safety
 * `state` is a valid handle and `out_json` is writable.
 */
enum FwStatus fw_state_to_json(const struct FwState *state, char **out_json);

/**
 * Mixed ground state of the half-filled extended Hubbard ring.
 *
 * # Safety
 * `out_state` is writable.
 */
enum FwStatus fw_hubbard_ground_state(size_t sites,
                                      double u,
                                      double v,
                                      double *out_energy,
                                      struct FwState **out_state);

/**
 * # Safety
 * `state` is null or a handle not yet freed.
 */
void fw_state_free(struct FwState *state);

/**
 * Mode count, particle count and sector dimension.
 *
 * # Safety
 * `state` is a valid handle; output pointers are writable.
 */
enum FwStatus fw_state_shape(const struct FwState *state,
                             size_t *out_modes,
                             size_t *out_particles,
                             size_t *out_dim);

/**
 * Schliemann concurrence (two fermions in four modes).
 *
 * # Safety
 * `state` is a valid handle and `out_value` is writable.
 */
enum FwStatus fw_concurrence(const struct FwState *state, double *out_value);

/**
 * Geometric discord (two fermions in four modes).
 *
 * # Safety
 * `state` is a valid handle and `out_value` is writable.
 */
enum FwStatus fw_discord(const struct FwState *state,
                         size_t restarts,
                         uint64_t seed,
                         double *out_value);

/**
 * Default witness options for a sector.
 *
 * # Safety
 * `out_options` is writable.
 */
enum FwStatus fw_witness_options_default(size_t modes,
                                         size_t particles,
                                         struct FwWitnessOptions *out_options);

/**
 * Optimal witness for `state`; `options` may be null for the defaults.
 *
 * # Safety
 * `state` is a valid handle, `options` is null or readable, `out_witness`
 * is writable.
 */
enum FwStatus fw_optimal_witness(const struct FwState *state,
                                 const struct FwWitnessOptions *options,
                                 struct FwWitness **out_witness);

/**
 * Robustness, certified upper bound, and the smallest expectation over the
 * validation Slater determinants.
 *
 * # Safety
 * `witness` is a valid handle; output pointers are writable or null.
 */
enum FwStatus fw_witness_values(const struct FwWitness *witness,
                                double *out_robustness,
                                double *out_dual_bound,
                                double *out_validation_min);

/**
 * Serializes the witness with its report; free with [`fw_string_free`].
 *
 * # Safety
 * `witness` is a valid handle and `out_json` is writable.
 */
enum FwStatus fw_witness_to_json(const struct FwWitness *witness, char **out_json);

/**
 * # Safety
 * `witness` is null or a handle not yet freed.
 */
void fw_witness_free(struct FwWitness *witness);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void fw_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FERMIWIT_H */
