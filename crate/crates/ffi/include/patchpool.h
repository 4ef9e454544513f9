#ifndef PATCHPOOL_H
#define PATCHPOOL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_NULL_POINTER = 1,
  PP_STATUS_INVALID_ARGUMENT = 2,
  PP_STATUS_IO_ERROR = 3,
  PP_STATUS_CORRUPT_MODEL = 4,
  PP_STATUS_DIMENSION_MISMATCH = 5,
  PP_STATUS_CONFIG_INVALID = 6,
  PP_STATUS_DATA_ERROR = 7,
  PP_STATUS_NUMERIC_ERROR = 8,
  PP_STATUS_BUFFER_TOO_SMALL = 9,
  PP_STATUS_PANIC = 10,
} PpStatus;

typedef enum PpPoolMode {
  PP_POOL_MODE_MAX = 0,
  PP_POOL_MODE_AVERAGE = 1,
} PpPoolMode;

/**
 * Pipeline settings under construction.
 */
typedef struct PpConfig PpConfig;

/**
 * A trained pipeline.
 */
typedef struct PpModel PpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t pp_last_error_message(char *buf, size_t len);

/**
 * Default settings for `image_size x image_size` inputs. Returns NULL if
 * `image_size` is 0.
 */
struct PpConfig *pp_config_new(size_t image_size);

/**
 * # Safety
 * `config` must be NULL or come from `pp_config_new` and not be freed yet.
 */
void pp_config_free(struct PpConfig *config);

/**
 * # Safety
 * `config` must be a live config; `sizes` must point to `len` values.
 */
enum PpStatus pp_config_set_patch_sizes(struct PpConfig *config, const size_t *sizes, size_t len);

/**
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_stride(struct PpConfig *config, size_t stride);

/**
 * Sets the PCA output dimension; 0 keeps raw (unprojected) patches.
 *
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_pca_dim(struct PpConfig *config, size_t dim);

/**
 * # Safety
 * `config` must be a live config; `levels` must point to `len` values.
 */
enum PpStatus pp_config_set_pyramid(struct PpConfig *config, const size_t *levels, size_t len);

/**
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_pool_mode(struct PpConfig *config, enum PpPoolMode mode);

/**
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_lambda(struct PpConfig *config, double lambda);

/**
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_seed(struct PpConfig *config, uint64_t seed);

/**
 * Enables or disables contrast normalization, polarity splitting and
 * feature standardization.
 *
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_set_stages(struct PpConfig *config,
                                   bool contrast_normalization,
                                   bool polarity_splitting,
                                   bool standardization);

/**
 * Checks the configuration without training.
 *
 * # Safety
 * `config` must be a live config.
 */
enum PpStatus pp_config_validate(const struct PpConfig *config);

/**
 * Trains on a `root/<class>/<images>` directory; images are resized to
 * the configured side. On success `*out` owns a new model.
 *
 * # Safety
 * `config` must be a live config, `dataset_dir` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum PpStatus pp_model_train_dir(const struct PpConfig *config,
                                 const char *dataset_dir,
                                 struct PpModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PpStatus pp_model_load(const char *path, struct PpModel **out);

/**
 * # Safety
 * `model` must be a live model and `path` a NUL-terminated string.
 */
enum PpStatus pp_model_save(const struct PpModel *model, const char *path);

/**
 * # Safety
 * `model` must be NULL or a model not yet freed.
 */
void pp_model_free(struct PpModel *model);

/**
 * Feature vector length `D`; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live model.
 */
size_t pp_model_feature_dim(const struct PpModel *model);

/**
 * # Safety
 * `model` must be NULL or a live model.
 */
size_t pp_model_class_count(const struct PpModel *model);

/**
 * Side length of the images the model accepts; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live model.
 */
size_t pp_model_image_size(const struct PpModel *model);

/**
 * Copies the label of class `index` into `buf` (NUL-terminated).
 *
 * # Safety
 * `model` must be a live model; `buf` must point to `len` writable bytes.
 */
enum PpStatus pp_model_class_label(const struct PpModel *model,
                                   size_t index,
                                   char *buf,
                                   size_t len);

/**
 * Writes the standardized feature of one image into `out` (`out_len >= D`).
 *
 * # Safety
 * `model` must be a live model, `pixels` must hold `width * height` values
 * and `out` must point to `out_len` writable values.
 */
enum PpStatus pp_model_featurize(const struct PpModel *model,
                                 const double *pixels,
                                 size_t width,
                                 size_t height,
                                 double *out,
                                 size_t out_len);

/**
 * Classifies one image. `scores` may be NULL; otherwise it receives the
 * first `min(scores_len, K)` class scores.
 *
 * # Safety
 * `model` must be a live model, `pixels` must hold `width * height` values,
 * `label` must be valid and `scores` NULL or `scores_len` writable values.
 */
enum PpStatus pp_model_predict(const struct PpModel *model,
                               const double *pixels,
                               size_t width,
                               size_t height,
                               size_t *label,
                               double *scores,
                               size_t scores_len);

/**
 * Loads an image file, resizes it to the model's side and classifies it.
 *
 * # Safety
 * `model` must be a live model, `path` a NUL-terminated string and `label`
 * a valid pointer.
 */
enum PpStatus pp_model_predict_file(const struct PpModel *model, const char *path, size_t *label);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATCHPOOL_H */
