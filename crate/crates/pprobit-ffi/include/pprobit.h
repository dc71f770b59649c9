#ifndef PPROBIT_H
#define PPROBIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum PprobitStatus {
  PPROBIT_STATUS_OK = 0,
  PPROBIT_STATUS_INVALID_ARGUMENT = 1,
  PPROBIT_STATUS_DOMAIN_ERROR = 2,
  PPROBIT_STATUS_DIMENSION_MISMATCH = 3,
  PPROBIT_STATUS_RANK_DEFICIENT = 4,
  PPROBIT_STATUS_NUMERIC_FAILURE = 5,
  PPROBIT_STATUS_IO_ERROR = 6,
  PPROBIT_STATUS_PARSE_ERROR = 7,
  PPROBIT_STATUS_NULL_POINTER = 8,
  PPROBIT_STATUS_PANIC = 9,
} PprobitStatus;

/**
 * Reduction methods exposed over the ABI.
 */
typedef enum PprobitMethod {
  PPROBIT_METHOD_PPROBIT = 0,
  PPROBIT_METHOD_UNIFORM = 1,
  PPROBIT_METHOD_L2 = 2,
  PPROBIT_METHOD_SQRT_L2 = 3,
  PPROBIT_METHOD_ONLINE_L2 = 4,
} PprobitMethod;

/**
 * Weighted coreset handle.
 */
typedef struct PprobitCoreset PprobitCoreset;

/**
 * Folded design matrix handle (labels already folded into rows).
 */
typedef struct PprobitDataset PprobitDataset;

/**
 * Fit result handle.
 */
typedef struct PprobitFit PprobitFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread, or NULL. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *pprobit_last_error_message(void);

/**
 * Build a dataset handle from a dense row-major feature matrix and 0/1
 * labels; rows are folded as x_i = −(2y_i−1)·z_i, with an optional leading
 * intercept column.
 *
 * # Safety
 * `features` must point to n·d doubles; `labels` to n bytes; `out` must be
 * a valid destination pointer.
 */
enum PprobitStatus pprobit_dataset_from_dense(const double *features,
                                              const uint8_t *labels,
                                              uintptr_t n,
                                              uintptr_t d,
                                              bool add_intercept,
                                              struct PprobitDataset **out);

/**
 * Load a dataset from a CSV file (label in the last column unless
 * `label_col` ≥ 0) or a LIBSVM file when `libsvm` is true.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` a valid destination.
 */
enum PprobitStatus pprobit_dataset_load(const char *path,
                                        bool libsvm,
                                        bool csv_header,
                                        int64_t label_col,
                                        bool add_intercept,
                                        struct PprobitDataset **out);

/**
 * Generate the synthetic two-cluster instance with planted outliers.
 *
 * # Safety
 * `out` must be a valid destination pointer.
 */
enum PprobitStatus pprobit_dataset_synthetic(uintptr_t n,
                                             uintptr_t d,
                                             uint64_t seed,
                                             double outlier_fraction,
                                             double outlier_scale,
                                             double separation,
                                             bool add_intercept,
                                             struct PprobitDataset **out);

/**
 * Number of rows.
 *
 * # Safety
 * `dataset` must be a live handle from this library.
 */
uintptr_t pprobit_dataset_rows(const struct PprobitDataset *dataset);

/**
 * Number of (folded) columns.
 *
 * # Safety
 * `dataset` must be a live handle from this library.
 */
uintptr_t pprobit_dataset_dim(const struct PprobitDataset *dataset);

/**
 * # Safety
 * `dataset` must be a handle from this library, not yet freed.
 */
void pprobit_dataset_free(struct PprobitDataset *dataset);

/**
 * Maximum-likelihood fit on the full dataset (damped Newton, or gradient
 * descent when `gradient_descent`).
 *
 * # Safety
 * `dataset` must be a live handle; `out` a valid destination.
 */
enum PprobitStatus pprobit_fit(const struct PprobitDataset *dataset,
                               double p,
                               bool gradient_descent,
                               struct PprobitFit **out);

/**
 * Fit on a coreset (same solver contract, weighted rows).
 *
 * # Safety
 * `coreset` must be a live handle; `out` a valid destination.
 */
enum PprobitStatus pprobit_fit_on_coreset(const struct PprobitCoreset *coreset,
                                          double p,
                                          struct PprobitFit **out);

/**
 * Coefficient count of a fit.
 *
 * # Safety
 * `fit` must be a live handle from this library.
 */
uintptr_t pprobit_fit_dim(const struct PprobitFit *fit);

/**
 * Copy β̂ into `buffer` (length `len` ≥ the fit dimension).
 *
 * # Safety
 * `fit` must be a live handle; `buffer` must point to `len` doubles.
 */
enum PprobitStatus pprobit_fit_beta(const struct PprobitFit *fit, double *buffer, uintptr_t len);

/**
 * # Safety
 * `fit` must be a live handle from this library.
 */
double pprobit_fit_loss(const struct PprobitFit *fit);

/**
 * # Safety
 * `fit` must be a live handle from this library.
 */
uintptr_t pprobit_fit_iterations(const struct PprobitFit *fit);

/**
 * # Safety
 * `fit` must be a live handle from this library.
 */
bool pprobit_fit_converged(const struct PprobitFit *fit);

/**
 * # Safety
 * `fit` must be a live handle from this library.
 */
double pprobit_fit_gradient_norm(const struct PprobitFit *fit);

/**
 * # Safety
 * `fit` must be a handle from this library, not yet freed.
 */
void pprobit_fit_free(struct PprobitFit *fit);

/**
 * Build a weighted coreset of k rows with the given method and seed.
 *
 * # Safety
 * `dataset` must be a live handle; `out` a valid destination.
 */
enum PprobitStatus pprobit_coreset_build(const struct PprobitDataset *dataset,
                                         enum PprobitMethod method,
                                         double p,
                                         uintptr_t k,
                                         uint64_t seed,
                                         bool rounding,
                                         struct PprobitCoreset **out);

/**
 * # Safety
 * `coreset` must be a live handle from this library.
 */
uintptr_t pprobit_coreset_rows(const struct PprobitCoreset *coreset);

/**
 * # Safety
 * `coreset` must be a live handle from this library.
 */
uintptr_t pprobit_coreset_dim(const struct PprobitCoreset *coreset);

/**
 * Copy the coreset into caller buffers: `rows` gets k·d doubles
 * (row-major), `weights` k doubles, `source_indices` k entries.
 * Any of the buffers may be NULL to skip it.
 *
 * # Safety
 * Non-NULL buffers must have the advertised capacities.
 */
enum PprobitStatus pprobit_coreset_copy(const struct PprobitCoreset *coreset,
                                        double *rows,
                                        double *weights,
                                        uintptr_t *source_indices);

/**
 * # Safety
 * `coreset` must be a handle from this library, not yet freed.
 */
void pprobit_coreset_free(struct PprobitCoreset *coreset);

/**
 * Evaluate the weighted loss f_w(Xβ) of an arbitrary coefficient vector on
 * the dataset.
 *
 * # Safety
 * `beta` must point to `len` doubles matching the dataset dimension.
 */
enum PprobitStatus pprobit_loss(const struct PprobitDataset *dataset,
                                double p,
                                const double *beta,
                                uintptr_t len,
                                double *out);

/**
 * Sampled lower bound on the complexity parameter μ_p. `out` receives the
 * bound (+∞ when a direction with empty negative part was found).
 *
 * # Safety
 * `dataset` must be a live handle; `out` a valid destination.
 */
enum PprobitStatus pprobit_mu_lower_bound(const struct PprobitDataset *dataset,
                                          double p,
                                          uintptr_t num_directions,
                                          uint64_t seed,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPROBIT_H */
