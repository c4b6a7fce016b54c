#ifndef TWEETCLUSTER_H
#define TWEETCLUSTER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_INVALID_INPUT = 2,
  TC_STATUS_IO = 3,
  TC_STATUS_FORMAT = 4,
  TC_STATUS_SHAPE = 5,
  TC_STATUS_DEGENERATE = 6,
  TC_STATUS_NUMERICAL = 7,
  TC_STATUS_PANIC = 8,
} TcStatus;

typedef enum TcAlgorithm {
  TC_ALGORITHM_KMEANS = 0,
  TC_ALGORITHM_WARD = 1,
  TC_ALGORITHM_SPECTRAL = 2,
} TcAlgorithm;

/**
 * Trained autoencoder loaded from a checkpoint.
 */
typedef struct TcCae TcCae;

/**
 * Dense row-major feature matrix.
 */
typedef struct TcFeatures TcFeatures;

/**
 * `f_stat` and `p_value` are NaN when `df2 <= 0`.
 */
typedef struct TcHotelling {
  double t2;
  double f_stat;
  double p_value;
  size_t df1;
  int64_t df2;
} TcHotelling;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *tc_last_error(void);

/**
 * Library version as a static string.
 */
const char *tc_version(void);

/**
 * Cleans one raw tweet. `*out` receives a string to release with
 * [`tc_string_free`].
 *
 * # Safety
 * `raw` must be a NUL-terminated string and `out` writable.
 */
enum TcStatus tc_clean_text(const char *raw, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void tc_string_free(char *s);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles and `out` be writable.
 */
enum TcStatus tc_features_new(size_t rows,
                              size_t cols,
                              const double *data,
                              struct TcFeatures **out);

/**
 * Reads a feature CSV (header line, one row per line).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TcStatus tc_features_read_csv(const char *path, struct TcFeatures **out);

/**
 * # Safety
 * `f` must be a live handle or null.
 */
size_t tc_features_rows(const struct TcFeatures *f);

/**
 * # Safety
 * `f` must be a live handle or null.
 */
size_t tc_features_cols(const struct TcFeatures *f);

/**
 * Row-major values, owned by the handle.
 *
 * # Safety
 * `f` must be a live handle or null.
 */
const double *tc_features_data(const struct TcFeatures *f);

/**
 * # Safety
 * `f` must come from this library, or be null; it is invalid afterwards.
 */
void tc_features_free(struct TcFeatures *f);

/**
 * Calinski-Harabasz score of `labels` (values in `0..k`, one per row).
 *
 * # Safety
 * `labels` must hold `n_labels` values and `out` be writable.
 */
enum TcStatus tc_ch_score(const struct TcFeatures *f,
                          const size_t *labels,
                          size_t n_labels,
                          size_t k,
                          double *out);

/**
 * Clusters the rows into `k` groups. `labels_out` must have room for one
 * label per row. `gamma <= 0` uses the default spectral kernel width and is
 * ignored by the other algorithms. `objective_out` may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum TcStatus tc_cluster(const struct TcFeatures *f,
                         enum TcAlgorithm algorithm,
                         size_t k,
                         uint64_t seed,
                         double gamma,
                         size_t *labels_out,
                         size_t n_labels,
                         double *objective_out);

/**
 * Two-sample Hotelling T². A nonzero `pseudo_inverse` allows a singular
 * pooled covariance.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` writable.
 */
enum TcStatus tc_hotelling(const struct TcFeatures *a,
                           const struct TcFeatures *b,
                           int pseudo_inverse,
                           struct TcHotelling *out);

/**
 * Loads an autoencoder checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TcStatus tc_cae_load(const char *path, struct TcCae **out);

/**
 * Input matrix shape (rows × embedding width) and representation length.
 *
 * # Safety
 * `m` must be a live handle; output pointers may be null.
 */
enum TcStatus tc_cae_shape(const struct TcCae *m,
                           size_t *input_rows,
                           size_t *input_cols,
                           size_t *representation_len);

/**
 * Encodes one row-major `input_rows × input_cols` matrix.
 *
 * # Safety
 * `input` and `out` must hold `input_len` and `out_len` doubles.
 */
enum TcStatus tc_cae_encode(const struct TcCae *m,
                            const double *input,
                            size_t input_len,
                            double *out,
                            size_t out_len);

/**
 * # Safety
 * `m` must come from this library, or be null; it is invalid afterwards.
 */
void tc_cae_free(struct TcCae *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWEETCLUSTER_H */
