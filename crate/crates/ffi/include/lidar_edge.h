#ifndef LIDAR_EDGE_H
#define LIDAR_EDGE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LeStatus {
  LE_STATUS_OK = 0,
  LE_STATUS_NULL_POINTER = 1,
  LE_STATUS_INVALID_ARGUMENT = 2,
  LE_STATUS_DIMENSION = 3,
  LE_STATUS_IO = 4,
  LE_STATUS_FORMAT = 5,
  LE_STATUS_MODEL = 6,
  LE_STATUS_INTERNAL = 7,
} LeStatus;

/**
 * Opaque grayscale image with finite pixel values.
 */
typedef struct LeImage LeImage;

/**
 * Opaque trained network (nested or patch).
 */
typedef struct LeModel LeModel;

/**
 * Pixel counts and derived scores.
 */
typedef struct LeMetrics {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t tn;
  double accuracy;
  double precision;
  double recall;
  double f1;
} LeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *le_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *le_last_error(void);

/**
 * Copies `height * width` row-major values into a new image.
 *
 * # Safety
 * `data` must point to `height * width` readable doubles and `out` must be
 * a valid pointer to a handle slot.
 */
enum LeStatus le_image_new(size_t height, size_t width, const double *data, struct LeImage **out);

/**
 * Reads an 8- or 16-bit binary PGM.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum LeStatus le_image_read_pgm(const char *path, struct LeImage **out);

/**
 * Releases an image; NULL is ignored.
 *
 * # Safety
 * `img` must come from this library and not be used afterwards.
 */
void le_image_free(struct LeImage *img);

/**
 * # Safety
 * `img` must be a live image handle; `height` and `width` valid pointers.
 */
enum LeStatus le_image_dims(const struct LeImage *img, size_t *height, size_t *width);

/**
 * Sobel edges: magnitude at least `threshold` times its maximum.
 *
 * # Safety
 * `img` must be a live image handle and `out` must hold `out_len` bytes.
 */
enum LeStatus le_sobel(const struct LeImage *img, double threshold, uint8_t *out, size_t out_len);

/**
 * Roberts cross edges; same threshold convention as [`le_sobel`].
 *
 * # Safety
 * `img` must be a live image handle and `out` must hold `out_len` bytes.
 */
enum LeStatus le_roberts(const struct LeImage *img, double threshold, uint8_t *out, size_t out_len);

/**
 * Canny edges. `low` and `high` are fractions of the maximum gradient
 * magnitude after smoothing with `sigma`.
 *
 * # Safety
 * `img` must be a live image handle and `out` must hold `out_len` bytes.
 */
enum LeStatus le_canny(const struct LeImage *img,
                       double sigma,
                       double low,
                       double high,
                       uint8_t *out,
                       size_t out_len);

/**
 * Confusion counts and scores of a binary prediction against ground truth.
 * Nonzero bytes count as edges; `tolerance` is the matching radius.
 *
 * # Safety
 * `pred` and `truth` must each hold `height * width` bytes; `out` must be valid.
 */
enum LeStatus le_metrics(const uint8_t *pred,
                         const uint8_t *truth,
                         size_t height,
                         size_t width,
                         size_t tolerance,
                         struct LeMetrics *out);

/**
 * Loads an LEDM model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum LeStatus le_model_load(const char *path, struct LeModel **out);

/**
 * Releases a model; NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void le_model_free(struct LeModel *model);

/**
 * Per-pixel edge probabilities. Nested models require the image size they
 * were built for; patch models accept any size.
 *
 * # Safety
 * `model` and `img` must be live handles; `out` must hold `out_len` doubles.
 */
enum LeStatus le_model_predict(const struct LeModel *model,
                               const struct LeImage *img,
                               double *out,
                               size_t out_len);

/**
 * One-way distance `c * tof / 2` for a round-trip time of flight.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LeStatus le_tof_to_distance(double tof, double c, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIDAR_EDGE_H */
