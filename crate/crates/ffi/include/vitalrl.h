#ifndef VITALRL_H
#define VITALRL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VRL_VITAL_HEART_RATE 0

#define VRL_VITAL_RESP_RATE 1

#define VRL_VITAL_SPO2 2

#define VRL_VITAL_TEMPERATURE 3

#define VRL_VITAL_SEDATION 4

#define VRL_NUM_ACTIONS 5

typedef enum VrlStatus {
  VRL_STATUS_OK = 0,
  VRL_STATUS_NULL_POINTER = 1,
  VRL_STATUS_INVALID_ARGUMENT = 2,
  VRL_STATUS_PARSE = 3,
  VRL_STATUS_CONFIG = 4,
  VRL_STATUS_NUMERICAL = 5,
  VRL_STATUS_EPISODE_COMPLETE = 6,
  VRL_STATUS_IO = 7,
  VRL_STATUS_PANIC = 8,
} VrlStatus;

/**
 * A single-vital monitoring environment over a caller-supplied stream.
 */
typedef struct VrlEnv VrlEnv;

/**
 * A loaded Q-network and the vital it was trained on.
 */
typedef struct VrlModel VrlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *vrl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vrl_version(void);

/**
 * Early warning score (0..=4) of a reading. Sedation readings are codes 0..=3.
 *
 * # Safety
 * `out_score` must be null or point to writable memory.
 */
enum VrlStatus vrl_classify(uint32_t vital, double value, uint8_t *out_score);

/**
 * Reward for taking `action` when the true score is `score`.
 *
 * # Safety
 * `out_reward` must be null or point to writable memory.
 */
enum VrlStatus vrl_reward(uint8_t score, uint8_t action, int32_t *out_reward);

/**
 * Parse a model document (NUL-terminated JSON text).
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out_model` must point to writable memory.
 */
enum VrlStatus vrl_model_load(const char *json, struct VrlModel **out_model);

/**
 * Read and parse a model document from a file path.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out_model` must point to writable memory.
 */
enum VrlStatus vrl_model_load_file(const char *path, struct VrlModel **out_model);

/**
 * Number of inputs the model expects.
 *
 * # Safety
 * `model` must come from `vrl_model_load*`; `out_dim` must point to writable memory.
 */
enum VrlStatus vrl_model_input_dim(const struct VrlModel *model, size_t *out_dim);

/**
 * Vital code the model was trained on.
 *
 * # Safety
 * `model` must come from `vrl_model_load*`; `out_vital` must point to writable memory.
 */
enum VrlStatus vrl_model_vital(const struct VrlModel *model, uint32_t *out_vital);

/**
 * Q-values for one state; writes `VRL_NUM_ACTIONS` values to `out_q`.
 *
 * # Safety
 * `state` must hold `len` doubles; `out_q` must hold `VRL_NUM_ACTIONS` doubles.
 */
enum VrlStatus vrl_model_forward(const struct VrlModel *model,
                                 const double *state,
                                 size_t len,
                                 double *out_q);

/**
 * Greedy action (lowest index on ties) for one state.
 *
 * # Safety
 * `state` must hold `len` doubles; `out_action` must point to writable memory.
 */
enum VrlStatus vrl_model_greedy_action(const struct VrlModel *model,
                                       const double *state,
                                       size_t len,
                                       uint8_t *out_action);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from `vrl_model_load*` and not be used afterwards.
 */
void vrl_model_free(struct VrlModel *model);

/**
 * Environment over `len` readings of one vital. Episodes last `monitor_length`
 * steps, so `len` must be at least `monitor_length + 1`. Observations carry the
 * last `window` normalized readings.
 *
 * # Safety
 * `values` must hold `len` doubles; `out_env` must point to writable memory.
 */
enum VrlStatus vrl_env_new(uint32_t vital,
                           const double *values,
                           size_t len,
                           size_t monitor_length,
                           size_t window,
                           struct VrlEnv **out_env);

/**
 * Start a new episode. Writes the first observation's features (window
 * length) to `out_features` unless it is null.
 *
 * # Safety
 * `env` must come from `vrl_env_new`; `out_features` must be null or hold `cap` doubles.
 */
enum VrlStatus vrl_env_reset(struct VrlEnv *env, double *out_features, size_t cap);

/**
 * Take one step. Writes the reward, the done flag (0 or 1) and the next
 * observation's features.
 *
 * # Safety
 * `env` must come from `vrl_env_new`; out pointers must be null or writable
 * (`out_features` holding `cap` doubles).
 */
enum VrlStatus vrl_env_step(struct VrlEnv *env,
                            uint8_t action,
                            int32_t *out_reward,
                            uint8_t *out_done,
                            double *out_features,
                            size_t cap);

/**
 * Sum of rewards in the current episode.
 *
 * # Safety
 * `env` must come from `vrl_env_new`; `out_score` must point to writable memory.
 */
enum VrlStatus vrl_env_episode_score(const struct VrlEnv *env, int64_t *out_score);

/**
 * Release an environment. Null is ignored.
 *
 * # Safety
 * `env` must be null or come from `vrl_env_new` and not be used afterwards.
 */
void vrl_env_free(struct VrlEnv *env);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VITALRL_H */
