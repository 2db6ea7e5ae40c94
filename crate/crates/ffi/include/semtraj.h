#ifndef SEMTRAJ_H
#define SEMTRAJ_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SemtrajStatus {
  SEMTRAJ_STATUS_OK = 0,
  SEMTRAJ_STATUS_NULL_POINTER = 1,
  SEMTRAJ_STATUS_INVALID_ARGUMENT = 2,
  SEMTRAJ_STATUS_IO = 3,
  SEMTRAJ_STATUS_MALFORMED_INPUT = 4,
  SEMTRAJ_STATUS_EMPTY_COHORT = 5,
  SEMTRAJ_STATUS_INSUFFICIENT_DATA = 6,
  SEMTRAJ_STATUS_OUT_OF_RANGE = 7,
  SEMTRAJ_STATUS_INTERNAL = 99,
} SemtrajStatus;

/**
 * Kernel normalization for [`semtraj_kde_density`].
 */
typedef enum SemtrajKernelMode {
  /**
   * `(1 / (n h)) sum phi(|x - x_i| / h)`.
   */
  SEMTRAJ_KERNEL_MODE_AS_WRITTEN = 0,
  /**
   * Isotropic d-dimensional Gaussian.
   */
  SEMTRAJ_KERNEL_MODE_MULTIVARIATE_NORMALIZED = 1,
} SemtrajKernelMode;

/**
 * Loaded corpus.
 */
typedef struct SemtrajCorpus SemtrajCorpus;

/**
 * Result of [`semtraj_kld_async`].
 */
typedef struct SemtrajMatrix SemtrajMatrix;

/**
 * Result of [`semtraj_kld_sync`].
 */
typedef struct SemtrajSyncSeries SemtrajSyncSeries;

/**
 * Parameters of the relative-entropy analyses.
 */
typedef struct SemtrajKldParams {
  uint32_t window;
  int start_year;
  double lambda;
  double alpha;
  /**
   * Non-zero: smooth against the whole sliced corpus instead of the pair union.
   */
  int whole_corpus_background;
} SemtrajKldParams;

/**
 * One slice of a synchronous series.
 */
typedef struct SemtrajSyncPoint {
  int slice_start;
  int slice_end;
  /**
   * Zero when the cohort or the field has no text in this slice.
   */
  int has_value;
  double summed_significant_bits;
  double summed_all_bits;
  size_t n_cohort_docs;
  size_t n_field_docs;
} SemtrajSyncPoint;

/**
 * Welch two-sample t-test.
 */
typedef struct SemtrajWelch {
  double t_stat;
  double df;
  double p_two_sided;
} SemtrajWelch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *semtraj_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *semtraj_version(void);

/**
 * Loads a JSON Lines corpus.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SemtrajStatus semtraj_corpus_load(const char *path, struct SemtrajCorpus **out);

/**
 * Number of documents, 0 for null.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t semtraj_corpus_len(const struct SemtrajCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void semtraj_corpus_free(struct SemtrajCorpus *corpus);

/**
 * Default parameters: two-year slices from 1957, lambda and alpha 0.05.
 */
struct SemtrajKldParams semtraj_kld_params_default(void);

/**
 * Cohort vs field divergence per slice. The cohort is every document with
 * at least one author in `authors`.
 *
 * # Safety
 * `corpus` must be a live handle, `authors` must point to `n_authors`
 * NUL-terminated strings, `params` and `out` must be valid pointers.
 */
enum SemtrajStatus semtraj_kld_sync(const struct SemtrajCorpus *corpus,
                                    const char *const *authors,
                                    size_t n_authors,
                                    const struct SemtrajKldParams *params,
                                    struct SemtrajSyncSeries **out);

/**
 * Number of slices in the series, 0 for null.
 *
 * # Safety
 * `series` must be null or a live handle.
 */
size_t semtraj_sync_series_len(const struct SemtrajSyncSeries *series);

/**
 * # Safety
 * `series` must be a live handle and `out` writable.
 */
enum SemtrajStatus semtraj_sync_series_point(const struct SemtrajSyncSeries *series,
                                             size_t index,
                                             struct SemtrajSyncPoint *out);

/**
 * # Safety
 * `series` must be null or a handle not yet freed.
 */
void semtraj_sync_series_free(struct SemtrajSyncSeries *series);

/**
 * Cohort slices (rows) against field slices (columns).
 *
 * # Safety
 * Same contract as [`semtraj_kld_sync`].
 */
enum SemtrajStatus semtraj_kld_async(const struct SemtrajCorpus *corpus,
                                     const char *const *authors,
                                     size_t n_authors,
                                     const struct SemtrajKldParams *params,
                                     struct SemtrajMatrix **out);

/**
 * # Safety
 * `matrix` must be a live handle; `rows` and `cols` writable.
 */
enum SemtrajStatus semtraj_matrix_shape(const struct SemtrajMatrix *matrix,
                                        size_t *rows,
                                        size_t *cols);

/**
 * Summed significant bits of cell (`row`, `col`).
 *
 * # Safety
 * `matrix` must be a live handle and `out` writable.
 */
enum SemtrajStatus semtraj_matrix_value(const struct SemtrajMatrix *matrix,
                                        size_t row,
                                        size_t col,
                                        double *out);

/**
 * Column index of the row minimum.
 *
 * # Safety
 * `matrix` must be a live handle and `out` writable.
 */
enum SemtrajStatus semtraj_matrix_row_argmin(const struct SemtrajMatrix *matrix,
                                             size_t row,
                                             size_t *out);

/**
 * Year range of a row (`is_column == 0`) or column slice.
 *
 * # Safety
 * `matrix` must be a live handle; `start` and `end` writable.
 */
enum SemtrajStatus semtraj_matrix_slice(const struct SemtrajMatrix *matrix,
                                        int is_column,
                                        size_t index,
                                        int *start,
                                        int *end);

/**
 * # Safety
 * `matrix` must be null or a handle not yet freed.
 */
void semtraj_matrix_free(struct SemtrajMatrix *matrix);

/**
 * Gaussian kernel density of `n` row-major `dim`-vectors at `query`.
 *
 * # Safety
 * `sample` must hold `n * dim` values, `query` `dim` values; `out` writable.
 */
enum SemtrajStatus semtraj_kde_density(const double *sample,
                                       size_t n,
                                       size_t dim,
                                       const double *query,
                                       double bandwidth,
                                       enum SemtrajKernelMode mode,
                                       double *out);

/**
 * Welch's unequal-variance t-test of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` values; `out` writable.
 */
enum SemtrajStatus semtraj_welch_t(const double *a,
                                   size_t na,
                                   const double *b,
                                   size_t nb,
                                   struct SemtrajWelch *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMTRAJ_H */
