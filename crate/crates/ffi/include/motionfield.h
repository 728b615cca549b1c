#ifndef MOTIONFIELD_H
#define MOTIONFIELD_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_UTF8 = 2,
  MF_STATUS_INVALID_ARGUMENT = 3,
  MF_STATUS_IO = 4,
  MF_STATUS_FORMAT = 5,
  MF_STATUS_DIMENSION_MISMATCH = 6,
  MF_STATUS_MISSING_FIELD = 7,
  MF_STATUS_DIVERGENCE = 8,
  MF_STATUS_PANIC = 9,
} MfStatus;

/**
 * Loaded fields.
 */
typedef struct MfFields MfFields;

/**
 * A motion sequence with an optional skeleton.
 */
typedef struct MfMotion MfMotion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *mf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *mf_last_error_message(void);

/**
 * Rotation `exp(hat(w))` of the axial vector `w[3]` into `r_out[9]`.
 *
 * # Safety
 * `w` must point to 3 readable doubles and `r_out` to 9 writable doubles.
 */
enum MfStatus mf_so3_exp(const double *w, double *r_out);

/**
 * Axial vector of a rotation, angle in `[0, π]`.
 *
 * # Safety
 * `r` must point to 9 readable doubles and `w_out` to 3 writable doubles.
 */
enum MfStatus mf_so3_log(const double *r, double *w_out);

/**
 * Geodesic distance (rotation angle of `r1ᵀ r2`).
 *
 * # Safety
 * `r1` and `r2` must point to 9 readable doubles each; `out` must be
 * writable.
 */
enum MfStatus mf_so3_distance(const double *r1, const double *r2, double *out);

/**
 * Loads `field_pose.json`, `field_velocity.json` and
 * `field_acceleration.json` from `dir`; absent files leave that field
 * unset.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum MfStatus mf_fields_load(const char *dir, struct MfFields **out);

/**
 * Joint count of the loaded fields, 0 when none are loaded.
 *
 * # Safety
 * `fields` must be a live handle; `out` must be writable.
 */
enum MfStatus mf_fields_joints(const struct MfFields *fields, size_t *out);

/**
 * # Safety
 * `fields` must be NULL or a handle from [`mf_fields_load`] not yet freed.
 */
void mf_fields_free(struct MfFields *fields);

/**
 * Pose field value at `quats[4 * joints]`.
 *
 * # Safety
 * `fields` must be a live handle, `quats` must hold `4 * joints` doubles
 * and `out` must be writable.
 */
enum MfStatus mf_pose_field_value(const struct MfFields *fields,
                                  const double *quats,
                                  size_t joints,
                                  double *out);

/**
 * Projects a pose onto the pose field's zero level set. `max_iterations`
 * of 0 keeps the default. `value_out` may be NULL.
 *
 * # Safety
 * `fields` must be a live handle; `quats_in` and `quats_out` must hold
 * `4 * joints` doubles; `value_out` must be NULL or writable.
 */
enum MfStatus mf_project_pose(const struct MfFields *fields,
                              const double *quats_in,
                              size_t joints,
                              uint32_t max_iterations,
                              double *quats_out,
                              double *value_out);

/**
 * Reads a motion file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MfStatus mf_motion_read(const char *path, struct MfMotion **out);

/**
 * Builds a motion from `frames * joints` quaternions and optional root
 * translations (`frames * 3` doubles, NULL for zeros); velocities and
 * accelerations are estimated from the poses.
 *
 * # Safety
 * `quats` must hold `4 * frames * joints` doubles, `translations` NULL or
 * `3 * frames` doubles; `out` must be writable.
 */
enum MfStatus mf_motion_from_quats(double fps,
                                   size_t frames,
                                   size_t joints,
                                   const double *quats,
                                   const double *translations,
                                   struct MfMotion **out);

/**
 * # Safety
 * `motion` must be a live handle and `path` a NUL-terminated string.
 */
enum MfStatus mf_motion_write(const struct MfMotion *motion, const char *path);

/**
 * # Safety
 * `motion` must be a live handle; `frames` and `joints` must be writable.
 */
enum MfStatus mf_motion_shape(const struct MfMotion *motion, size_t *frames, size_t *joints);

/**
 * Copies the quaternions of one frame into `out[len]`, `len = 4 * joints`.
 *
 * # Safety
 * `motion` must be a live handle and `out` must hold `len` doubles.
 */
enum MfStatus mf_motion_frame_quats(const struct MfMotion *motion,
                                    size_t frame,
                                    double *out,
                                    size_t len);

/**
 * # Safety
 * `motion` must be NULL or a handle from this library not yet freed.
 */
void mf_motion_free(struct MfMotion *motion);

/**
 * Fits a motion to its own joint positions with the field priors.
 * `config_json` is a fit configuration object or NULL for defaults.
 *
 * # Safety
 * `fields` and `motion` must be live handles, `config_json` NULL or a
 * NUL-terminated string, `out` writable.
 */
enum MfStatus mf_denoise(const struct MfFields *fields,
                         const struct MfMotion *motion,
                         const char *config_json,
                         struct MfMotion **out);

/**
 * Rolls out from the first state of `motion`, driven by the stored
 * accelerations of all frames but the last. `config_json` is an
 * integrator configuration object or NULL for defaults.
 *
 * # Safety
 * `fields` and `motion` must be live handles, `config_json` NULL or a
 * NUL-terminated string, `out` writable.
 */
enum MfStatus mf_rollout(const struct MfFields *fields,
                         const struct MfMotion *motion,
                         const char *config_json,
                         struct MfMotion **out);

/**
 * Mean joint position error in millimeters.
 *
 * # Safety
 * `pred` and `reference` must be live handles and `out` writable.
 */
enum MfStatus mf_mpjpe_mm(const struct MfMotion *pred,
                          const struct MfMotion *reference,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIONFIELD_H */
