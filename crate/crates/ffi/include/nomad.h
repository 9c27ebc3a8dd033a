#ifndef NOMAD_H
#define NOMAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NomadStatus {
  NOMAD_STATUS_OK = 0,
  NOMAD_STATUS_NULL_POINTER = 1,
  NOMAD_STATUS_INVALID_ARGUMENT = 2,
  NOMAD_STATUS_IO = 3,
  NOMAD_STATUS_DIMENSION = 4,
  NOMAD_STATUS_VALIDATION = 5,
  NOMAD_STATUS_SCHEMA = 6,
  NOMAD_STATUS_DEGENERATE = 7,
  NOMAD_STATUS_DIVERGENCE = 8,
  NOMAD_STATUS_CONFIGURATION = 9,
  NOMAD_STATUS_INTERNAL = 10,
  NOMAD_STATUS_PANIC = 11,
} NomadStatus;

/**
 * Values of the `format` argument of [`nomad_dataset_load`].
 */
typedef enum NomadFormat {
  NOMAD_FORMAT_RAW_F32 = 0,
  NOMAD_FORMAT_CSV = 1,
} NomadFormat;

/**
 * Opaque input vectors.
 */
typedef struct NomadDataset NomadDataset;

/**
 * Opaque 2-D layout.
 */
typedef struct NomadLayout NomadLayout;

/**
 * Training parameters. Start from [`nomad_config_default`].
 *
 * `n_clusters == 0` and `lr0 <= 0` mean "derive from the data". The mode
 * fields take the integer values listed next to each.
 */
typedef struct NomadConfig {
  size_t epochs;
  size_t k;
  size_t n_negatives;
  size_t local_draws;
  size_t batch_size;
  size_t workers;
  size_t n_clusters;
  uint64_t seed;
  double lr0;
  size_t kmeans_max_iters;
  double kmeans_tol_factor;
  /**
   * 0: remote clusters, 1: all but own cluster.
   */
  uint32_t negative_mode;
  /**
   * 0: heads, neighbors and negatives; 1: head only.
   */
  uint32_t update_mode;
  /**
   * 0: batch mean, 1: per point.
   */
  uint32_t step_scale;
} NomadConfig;

/**
 * One metric value with its standard error.
 */
typedef struct NomadMetric {
  double value;
  double std_error;
} NomadMetric;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nomad_version(void);

/**
 * Message for the most recent failure on this thread, or NULL if the last
 * call succeeded. Valid until the next call into the library on this thread.
 */
const char *nomad_last_error(void);

/**
 * Fills `out` with the default training parameters.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum NomadStatus nomad_config_default(struct NomadConfig *out);

/**
 * Copies `n * dims` row-major values into a new dataset.
 *
 * # Safety
 * `data` must point to `n * dims` readable floats; `out` must be valid for
 * writes.
 */
enum NomadStatus nomad_dataset_from_f32(const float *data,
                                        size_t n,
                                        size_t dims,
                                        struct NomadDataset **out);

/**
 * Loads vectors from a file. `rows` and `dims` of 0 are inferred.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum NomadStatus nomad_dataset_load(const char *path,
                                    uint32_t format,
                                    size_t rows,
                                    size_t dims,
                                    struct NomadDataset **out);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t nomad_dataset_rows(const struct NomadDataset *dataset);

/**
 * Number of columns, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t nomad_dataset_dims(const struct NomadDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a handle not yet freed.
 */
void nomad_dataset_free(struct NomadDataset *dataset);

/**
 * Fits a layout. `config` may be NULL for defaults.
 *
 * # Safety
 * `dataset` must be a live handle, `config` NULL or readable, `out` valid
 * for writes.
 */
enum NomadStatus nomad_fit(const struct NomadDataset *dataset,
                           const struct NomadConfig *config,
                           struct NomadLayout **out);

/**
 * Number of points, or 0 for NULL.
 *
 * # Safety
 * `layout` must be NULL or a live handle.
 */
size_t nomad_layout_rows(const struct NomadLayout *layout);

/**
 * Copies the layout as interleaved `x, y` pairs. `len` is the capacity of
 * `out` in doubles and must be at least twice the number of points.
 *
 * # Safety
 * `layout` must be a live handle and `out` writable for `len` doubles.
 */
enum NomadStatus nomad_layout_copy(const struct NomadLayout *layout, double *out, size_t len);

/**
 * Writes the layout as CSV, using the dataset's ids and labels.
 *
 * # Safety
 * Handles must be live and `path` NUL-terminated.
 */
enum NomadStatus nomad_layout_save(const struct NomadLayout *layout,
                                   const struct NomadDataset *dataset,
                                   const char *path);

/**
 * # Safety
 * `layout` must be NULL or a handle not yet freed.
 */
void nomad_layout_free(struct NomadLayout *layout);

/**
 * Neighborhood preservation at `k`. `sample_points == 0` scores every
 * point; otherwise that many points are sampled with `seed`.
 *
 * # Safety
 * Handles must be live and `out` valid for writes.
 */
enum NomadStatus nomad_neighborhood_preservation(const struct NomadDataset *dataset,
                                                 const struct NomadLayout *layout,
                                                 size_t k,
                                                 size_t sample_points,
                                                 uint64_t seed,
                                                 struct NomadMetric *out);

/**
 * Fraction of random triplets whose distance order the layout keeps.
 *
 * # Safety
 * Handles must be live and `out` valid for writes.
 */
enum NomadStatus nomad_triplet_accuracy(const struct NomadDataset *dataset,
                                        const struct NomadLayout *layout,
                                        size_t n_triplets,
                                        uint64_t seed,
                                        struct NomadMetric *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOMAD_H */
