#ifndef PDMP_H
#define PDMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every FFI call.
 */
typedef enum PdmpStatus {
  PdmpStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  PdmpStatus_NullPointer = 1,
  /**
   * The configuration text was rejected (bad UTF-8, syntax, or values).
   */
  PdmpStatus_InvalidConfig = 2,
  /**
   * An index or time argument was out of range.
   */
  PdmpStatus_OutOfRange = 3,
  /**
   * The trajectory hit its event cap before reaching t_end.
   */
  PdmpStatus_ExplosionSuspected = 4,
  /**
   * A thinned kernel observed a rate above its certified bound.
   */
  PdmpStatus_RateBoundViolated = 5,
} PdmpStatus;

/**
 * Sampler handle: parsed configuration plus the built jump mechanisms.
 */
typedef struct PdmpSampler PdmpSampler;

/**
 * Trajectory handle returned by `pdmp_simulate`.
 */
typedef struct PdmpTrajectory PdmpTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message for the calling thread into `buf` (always
 * NUL-terminated, truncated to `cap` bytes). Returns the full message
 * length in bytes excluding the terminator; 0 means no error is recorded.
 * `buf` may be null to query the length.
 */
uintptr_t pdmp_last_error(char *buf, uintptr_t cap);

/**
 * Parse an INI configuration (same format as `pdmp-kit --config` files) and
 * build the sampler it describes. On success `*out` owns a new handle.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PdmpStatus pdmp_sampler_new(const char *config_text, struct PdmpSampler **out);

/**
 * Release a sampler handle. Null is a no-op.
 *
 * # Safety
 * `sampler` must come from `pdmp_sampler_new` and not be used afterwards.
 */
void pdmp_sampler_free(struct PdmpSampler *sampler);

/**
 * Position/velocity dimension of the sampler's state space.
 *
 * # Safety
 * `sampler` must be a live handle from `pdmp_sampler_new`.
 */
uintptr_t pdmp_sampler_dim(const struct PdmpSampler *sampler);

/**
 * Simulate one trajectory to the configured `t_end`, overriding the config
 * seed with `seed`. A trajectory handle is produced even on non-Ok status
 * (explosion / rate-bound violation) so the partial path can be inspected;
 * `*out` is null only when the sampler handle itself is unusable.
 *
 * # Safety
 * `sampler` must be a live handle and `out` a valid pointer.
 */
enum PdmpStatus pdmp_simulate(const struct PdmpSampler *sampler,
                              uint64_t seed,
                              struct PdmpTrajectory **out);

/**
 * Release a trajectory handle. Null is a no-op.
 *
 * # Safety
 * `traj` must come from `pdmp_simulate` and not be used afterwards.
 */
void pdmp_trajectory_free(struct PdmpTrajectory *traj);

/**
 * Number of recorded jump events.
 *
 * # Safety
 * `traj` must be a live handle from `pdmp_simulate`.
 */
uintptr_t pdmp_trajectory_len(const struct PdmpTrajectory *traj);

/**
 * Read event `k` (0-based). `x` and `y` must point to `dim` doubles each;
 * any output pointer may be null to skip that field. `phantom` is 1 when
 * the jump left the state unchanged.
 *
 * # Safety
 * `traj` must be a live handle; non-null output buffers must be large enough.
 */
enum PdmpStatus pdmp_trajectory_event(const struct PdmpTrajectory *traj,
                                      uintptr_t k,
                                      double *time,
                                      uintptr_t *mech,
                                      int32_t *phantom,
                                      double *x,
                                      double *y);

/**
 * State at time `t` in [0, t_end], following the deterministic flow from
 * the last jump before `t`. `x` and `y` must hold `dim` doubles each.
 *
 * # Safety
 * `traj` must be a live handle; `x`/`y` (when non-null) must be large enough.
 */
enum PdmpStatus pdmp_trajectory_state_at(const struct PdmpTrajectory *traj,
                                         double t,
                                         double *x,
                                         double *y);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PDMP_H */
