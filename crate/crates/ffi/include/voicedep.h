#ifndef VOICEDEP_H
#define VOICEDEP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum VdStatus {
  VD_STATUS_OK = 0,
  VD_STATUS_NULL_POINTER = 1,
  VD_STATUS_INVALID_ARGUMENT = 2,
  VD_STATUS_IO = 3,
  VD_STATUS_FORMAT = 4,
  VD_STATUS_SHAPE = 5,
  VD_STATUS_DATA = 6,
  VD_STATUS_TRAINING = 7,
  VD_STATUS_PREDICTIONS = 8,
  VD_STATUS_PANIC = 9,
} VdStatus;

/**
 * Several models sharing one input shape.
 */
typedef struct VdEnsemble VdEnsemble;

/**
 * A trained network.
 */
typedef struct VdModel VdModel;

/**
 * Speaker-level metrics with the depressed class as positive.
 */
typedef struct VdMetrics {
  double accuracy;
  double precision_depressed;
  double recall_depressed;
  double f1_depressed;
  double precision_non_depressed;
  double recall_non_depressed;
  double f1_non_depressed;
  size_t tp;
  size_t fp;
  size_t tn;
  size_t fn_;
} VdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vd_version(void);

/**
 * Load a model file. On success `*out` owns a handle for [`vd_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VdStatus vd_model_load(const char *path, struct VdModel **out);

/**
 * Release a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`vd_model_load`] and not be used afterwards.
 */
void vd_model_free(struct VdModel *model);

/**
 * Input matrix dimensions expected by `model`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum VdStatus vd_model_input_dims(const struct VdModel *model, size_t *f0, size_t *t0);

/**
 * Depression probability of one normalized feature matrix.
 *
 * # Safety
 * `features` must point to `len` readable doubles; `probability` must be writable.
 */
enum VdStatus vd_model_predict(const struct VdModel *model,
                               const double *features,
                               size_t len,
                               double *probability);

/**
 * Normalized log-spectrogram of a mono crop with the default STFT settings.
 *
 * Call with `out = NULL` to query `*f0` and `*t0`; then pass a buffer of at
 * least `f0 * t0` doubles in `out_capacity`.
 *
 * # Safety
 * `samples` must point to `n_samples` floats; `out` (if not NULL) to
 * `out_capacity` writable doubles; `f0` and `t0` must be writable.
 */
enum VdStatus vd_featurize(const float *samples,
                           size_t n_samples,
                           uint32_t sample_rate,
                           double *out,
                           size_t out_capacity,
                           size_t *f0,
                           size_t *t0);

/**
 * Fuse one speaker's crop probabilities from several machines.
 *
 * `probabilities` is row-major `machines x crops`. `method` is 1, 2 or 3.
 * Writes 1 (depressed) or 0 to `label`.
 *
 * # Safety
 * `probabilities` must point to `machines * crops` doubles; `label` must be writable.
 */
enum VdStatus vd_fuse(const double *probabilities,
                      size_t machines,
                      size_t crops,
                      uint8_t method,
                      double threshold,
                      uint64_t tie_seed,
                      uint8_t *label);

/**
 * Metrics over `n` paired labels (0 or 1).
 *
 * # Safety
 * `truth` and `predicted` must point to `n` bytes; `out` must be writable.
 */
enum VdStatus vd_metrics(const uint8_t *truth,
                         const uint8_t *predicted,
                         size_t n,
                         struct VdMetrics *out);

/**
 * Load `count` model files into one ensemble handle.
 *
 * # Safety
 * `paths` must point to `count` NUL-terminated strings; `out` must be writable.
 */
enum VdStatus vd_ensemble_load(const char *const *paths, size_t count, struct VdEnsemble **out);

/**
 * Release an ensemble. NULL is ignored.
 *
 * # Safety
 * `ensemble` must come from [`vd_ensemble_load`] and not be used afterwards.
 */
void vd_ensemble_free(struct VdEnsemble *ensemble);

/**
 * Number of machines, or 0 for NULL.
 *
 * # Safety
 * `ensemble` must be NULL or a live handle.
 */
size_t vd_ensemble_size(const struct VdEnsemble *ensemble);

/**
 * Score `n_crops` consecutive feature matrices of one speaker with every
 * machine and fuse them into a speaker label.
 *
 * # Safety
 * `features` must point to `n_crops * f0 * t0` doubles; `label` must be writable.
 */
enum VdStatus vd_ensemble_classify(const struct VdEnsemble *ensemble,
                                   const double *features,
                                   size_t n_crops,
                                   uint8_t method,
                                   double threshold,
                                   uint64_t tie_seed,
                                   uint8_t *label);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOICEDEP_H */
