#ifndef LIDAR_OT_H
#define LIDAR_OT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum LidarOtStatus {
  LIDAR_OT_STATUS_OK = 0,
  LIDAR_OT_STATUS_NULL_POINTER = 1,
  LIDAR_OT_STATUS_INVALID_INPUT = 2,
  LIDAR_OT_STATUS_INVALID_PARAMETER = 3,
  LIDAR_OT_STATUS_CAPACITY = 4,
  LIDAR_OT_STATUS_BUFFER_TOO_SMALL = 5,
  LIDAR_OT_STATUS_PANIC = 6,
} LidarOtStatus;

/**
 * How an EMD total is reduced over matched pairs.
 */
typedef enum LidarOtReduction {
  LIDAR_OT_REDUCTION_MEAN = 0,
  LIDAR_OT_REDUCTION_SUM = 1,
} LidarOtReduction;

/**
 * Opaque point cloud.
 */
typedef struct LidarOtCloud LidarOtCloud;

/**
 * Opaque set of unit projection directions.
 */
typedef struct LidarOtDirections LidarOtDirections;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lidar_ot_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lidar_ot_version(void);

/**
 * Build a cloud from `n_points` packed `x, y, z` triples.
 *
 * # Safety
 * `xyz` must point to `3 * n_points` readable doubles and `out` must be
 * writable.
 */
enum LidarOtStatus lidar_ot_cloud_new(const double *xyz,
                                      size_t n_points,
                                      struct LidarOtCloud **out);

/**
 * Release a cloud. Null is ignored.
 *
 * # Safety
 * `cloud` must come from [`lidar_ot_cloud_new`] and not be freed twice.
 */
void lidar_ot_cloud_free(struct LidarOtCloud *cloud);

/**
 * Number of points, or 0 for null.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t lidar_ot_cloud_len(const struct LidarOtCloud *cloud);

/**
 * Copy the points into `out` (`3 * capacity_points` doubles).
 *
 * # Safety
 * `cloud` must be a live handle and `out` must hold `3 * capacity_points`
 * writable doubles.
 */
enum LidarOtStatus lidar_ot_cloud_points(const struct LidarOtCloud *cloud,
                                         double *out,
                                         size_t capacity_points);

/**
 * `count` uniform unit directions, deterministic per `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LidarOtStatus lidar_ot_directions_sample(size_t count,
                                              uint64_t seed,
                                              struct LidarOtDirections **out);

/**
 * Directions from `n` packed vectors, each normalized to unit length.
 *
 * # Safety
 * `xyz` must point to `3 * n` readable doubles and `out` must be writable.
 */
enum LidarOtStatus lidar_ot_directions_new(const double *xyz,
                                           size_t n,
                                           struct LidarOtDirections **out);

/**
 * Release a direction set. Null is ignored.
 *
 * # Safety
 * `dirs` must come from a `lidar_ot_directions_*` constructor and not be
 * freed twice.
 */
void lidar_ot_directions_free(struct LidarOtDirections *dirs);

/**
 * Number of directions, or 0 for null.
 *
 * # Safety
 * `dirs` must be null or a live handle.
 */
size_t lidar_ot_directions_len(const struct LidarOtDirections *dirs);

/**
 * Sliced Wasserstein distance over the given directions.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_swd(const struct LidarOtCloud *x,
                                const struct LidarOtCloud *y,
                                const struct LidarOtDirections *dirs,
                                double *out);

/**
 * Symmetric Chamfer distance (mean squared nearest-neighbour distances).
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_chamfer(const struct LidarOtCloud *x,
                                    const struct LidarOtCloud *y,
                                    double *out);

/**
 * Symmetric Hausdorff distance.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_hausdorff(const struct LidarOtCloud *x,
                                      const struct LidarOtCloud *y,
                                      double *out);

/**
 * Exact EMD (optimal bijection) for equal sizes up to the solver cap.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_emd_exact(const struct LidarOtCloud *x,
                                      const struct LidarOtCloud *y,
                                      enum LidarOtReduction reduce,
                                      double *out);

/**
 * Auction EMD within `N * epsilon` of the optimum (sum reduction).
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_emd_auction(const struct LidarOtCloud *x,
                                        const struct LidarOtCloud *y,
                                        double epsilon,
                                        enum LidarOtReduction reduce,
                                        double *out);

/**
 * Entropy-regularized transport cost.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LidarOtStatus lidar_ot_sinkhorn(const struct LidarOtCloud *x,
                                     const struct LidarOtCloud *y,
                                     double regularization,
                                     size_t max_iters,
                                     double *out);

/**
 * Gradient of the SWD with respect to the points of `x`, written as
 * `3 * len(x)` doubles.
 *
 * # Safety
 * Handles must be live; `out` must hold `3 * capacity_points` doubles.
 */
enum LidarOtStatus lidar_ot_swd_gradient(const struct LidarOtCloud *x,
                                         const struct LidarOtCloud *y,
                                         const struct LidarOtDirections *dirs,
                                         double *out,
                                         size_t capacity_points);

/**
 * Gradient of the Chamfer distance with respect to the points of `x`.
 *
 * # Safety
 * Handles must be live; `out` must hold `3 * capacity_points` doubles.
 */
enum LidarOtStatus lidar_ot_chamfer_gradient(const struct LidarOtCloud *x,
                                             const struct LidarOtCloud *y,
                                             double *out,
                                             size_t capacity_points);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIDAR_OT_H */
