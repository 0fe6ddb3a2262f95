#ifndef STWNN_H
#define STWNN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Zero is success.
 */
typedef enum StwnnStatus {
  STWNN_STATUS_OK = 0,
  STWNN_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument, shape, configuration or incompatible weights.
   */
  STWNN_STATUS_INVALID_ARGUMENT = 2,
  STWNN_STATUS_INSUFFICIENT_DATA = 3,
  /**
   * Not a file of the expected kind, or an unsupported version.
   */
  STWNN_STATUS_FORMAT = 4,
  /**
   * Structurally damaged file.
   */
  STWNN_STATUS_CORRUPT = 5,
  STWNN_STATUS_IO = 6,
  /**
   * Caller buffer too small; required sizes are still written.
   */
  STWNN_STATUS_BUFFER_TOO_SMALL = 7,
  STWNN_STATUS_PANIC = 8,
} StwnnStatus;

/**
 * Opaque trained network.
 */
typedef struct StwnnModel StwnnModel;

/**
 * Opaque CSI stream.
 */
typedef struct StwnnStream StwnnStream;

/**
 * Segmentation settings for [`stwnn_predict_stream`]. Fill with
 * [`stwnn_segmentation_default`] and adjust.
 */
typedef struct StwnnSegmentation {
  size_t window;
  size_t overlap;
  /**
   * Number of used entries in `scales`.
   */
  size_t n_scales;
  size_t scales[8];
  /**
   * Subcarrier, time and antenna extent after resizing.
   */
  size_t target_shape[3];
} StwnnSegmentation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *stwnn_last_error(void);

/**
 * Writes the default segmentation settings to `out`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one struct.
 */
enum StwnnStatus stwnn_segmentation_default(struct StwnnSegmentation *out);

/**
 * Generates a labelled synthetic stream for `class_id` of `n_classes`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum StwnnStatus stwnn_stream_synth(size_t class_id,
                                    size_t n_classes,
                                    uint64_t seed,
                                    double duration_s,
                                    double noise_std,
                                    size_t n_tx,
                                    size_t n_rx,
                                    size_t n_sub,
                                    double sample_rate_hz,
                                    struct StwnnStream **out);

/**
 * Reads a CSI1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable for one pointer.
 */
enum StwnnStatus stwnn_stream_load(const char *path, struct StwnnStream **out);

/**
 * Writes a CSI1 file.
 *
 * # Safety
 * `stream` must come from this library; `path` must be NUL-terminated.
 */
enum StwnnStatus stwnn_stream_save(const struct StwnnStream *stream, const char *path);

/**
 * Packet count, or 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or come from this library.
 */
size_t stwnn_stream_len(const struct StwnnStream *stream);

/**
 * # Safety
 * `stream` must be null or come from this library and not be used afterwards.
 */
void stwnn_stream_free(struct StwnnStream *stream);

/**
 * Reads a WGT1 file; the architecture comes from the file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable for one pointer.
 */
enum StwnnStatus stwnn_model_load(const char *path, struct StwnnModel **out);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t stwnn_model_n_classes(const struct StwnnModel *model);

/**
 * Expected input channels (one per temporal scale), or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t stwnn_model_in_channels(const struct StwnnModel *model);

/**
 * # Safety
 * `model` must be null or come from this library and not be used afterwards.
 */
void stwnn_model_free(struct StwnnModel *model);

/**
 * Class probabilities for one input of shape `[channels, time, sub, ant]`
 * laid out row-major in `data`. Writes `n_classes` values to `probs`.
 *
 * # Safety
 * `data` must hold the product of `shape` doubles; `probs` must hold
 * `capacity` doubles.
 */
enum StwnnStatus stwnn_model_forward(const struct StwnnModel *model,
                                     const double *data,
                                     const size_t *shape,
                                     double *probs,
                                     size_t capacity);

/**
 * Segments `stream` and predicts a class per window. `*count` receives the
 * number of windows even when `labels` is too small.
 *
 * # Safety
 * Handles must come from this library; `seg` may be null for defaults;
 * `labels` must hold `capacity` entries; `count` must be writable.
 */
enum StwnnStatus stwnn_predict_stream(const struct StwnnModel *model,
                                      const struct StwnnStream *stream,
                                      const struct StwnnSegmentation *seg,
                                      size_t *labels,
                                      size_t capacity,
                                      size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STWNN_H */
