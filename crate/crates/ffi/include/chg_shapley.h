#ifndef CHG_SHAPLEY_H
#define CHG_SHAPLEY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChgStatus {
  CHG_STATUS_OK = 0,
  CHG_STATUS_NULL_POINTER = 1,
  CHG_STATUS_INVALID_INPUT = 2,
  CHG_STATUS_DOMAIN = 3,
  CHG_STATUS_TOO_LARGE = 4,
  CHG_STATUS_NUMERIC = 5,
  CHG_STATUS_IO = 6,
  CHG_STATUS_PANIC = 7,
} ChgStatus;

typedef enum ChgScheme {
  CHG_SCHEME_CHG = 0,
  CHG_SCHEME_HARDNESS = 1,
  CHG_SCHEME_GRADIENT = 2,
} ChgScheme;

// Opaque set of per-datum gradients and losses.
typedef struct ChgGradientSet ChgGradientSet;

// Opaque result of a valuation run.
typedef struct ChgValuationRun ChgValuationRun;

// Training and valuation settings for [`chg_valuation_run`].
typedef struct ChgValuationOptions {
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  // Width of a frozen random tanh layer; 0 for none.
  size_t hidden;
  uint64_t seed;
  enum ChgScheme scheme;
  bool per_class;
  size_t skip_first_epochs;
} ChgValuationOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The last error message on this thread, or null. Valid until the next
// call into this library from the same thread.
const char *chg_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *chg_version(void);

// Closed-form Shapley values of the CHG game with row-major `x` (`n × d`)
// and reference vector `alpha` (`d`). Writes `n` values to `out`.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum ChgStatus chg_closed_form_shapley(const double *x,
                                       size_t n,
                                       size_t d,
                                       const double *alpha,
                                       double *out);

// Exact Shapley values of the same game by enumerating all coalitions.
// Fails with `TOO_LARGE` above `limit` players.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum ChgStatus chg_exact_shapley(const double *x,
                                 size_t n,
                                 size_t d,
                                 const double *alpha,
                                 size_t limit,
                                 double *out);

// Shapley values of the hardness utility `U(S) = Σ_{i∈S} l_i / |S|`.
//
// # Safety
// Pointers must be valid for `n` values.
enum ChgStatus chg_hardness_shapley(const double *losses, size_t n, double *out);

// Builds a gradient set from row-major gradients (`n × d`) and `n` losses.
// Set `weighted` when the rows already include the loss factor.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` receives a handle to
// free with [`chg_gradient_set_free`].
enum ChgStatus chg_gradient_set_new(const double *gradients,
                                    const double *losses,
                                    size_t n,
                                    size_t d,
                                    bool weighted,
                                    struct ChgGradientSet **out);

// Loads a gradient set file (binary when the name ends in `.bin`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum ChgStatus chg_gradient_set_load(const char *path_ptr, struct ChgGradientSet **out);

// Writes the set to `path` in the format chosen by its extension.
//
// # Safety
// `set` must be a live handle and `path` a NUL-terminated string.
enum ChgStatus chg_gradient_set_save(const struct ChgGradientSet *set, const char *path_ptr);

// Number of data in the set, or 0 for a null handle.
//
// # Safety
// `set` must be null or a live handle.
size_t chg_gradient_set_len(const struct ChgGradientSet *set);

// Gradient dimension, or 0 for a null handle.
//
// # Safety
// `set` must be null or a live handle.
size_t chg_gradient_set_dim(const struct ChgGradientSet *set);

// Shapley value of every datum under `scheme`. `out` holds
// `chg_gradient_set_len(set)` values.
//
// # Safety
// `set` must be a live handle and `out` valid for the set's length.
enum ChgStatus chg_gradient_set_shapley(const struct ChgGradientSet *set,
                                        enum ChgScheme scheme,
                                        double *out);

// # Safety
// `set` must be null or a handle not yet freed.
void chg_gradient_set_free(struct ChgGradientSet *set);

// Defaults matching the command-line tool.
struct ChgValuationOptions chg_valuation_options_default(void);

// Trains on the CSV at `path` (features then integer label) and values
// every row at every epoch.
//
// # Safety
// `path` must be a NUL-terminated string, `options` null (for defaults) or
// readable, and `out` writable. Free the handle with
// [`chg_valuation_run_free`].
enum ChgStatus chg_valuation_run(const char *path_ptr,
                                 const struct ChgValuationOptions *options,
                                 struct ChgValuationRun **out);

// Number of valued data, or 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t chg_valuation_run_len(const struct ChgValuationRun *run);

// Number of recorded epochs, or 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t chg_valuation_run_epochs(const struct ChgValuationRun *run);

// Epoch-averaged values.
//
// # Safety
// `run` must be a live handle and `out` valid for its length.
enum ChgStatus chg_valuation_run_mean_values(const struct ChgValuationRun *run, double *out);

// Values measured at the start of `epoch`.
//
// # Safety
// `run` must be a live handle and `out` valid for its length.
enum ChgStatus chg_valuation_run_epoch_values(const struct ChgValuationRun *run,
                                              size_t epoch,
                                              double *out);

// # Safety
// `run` must be null or a handle not yet freed.
void chg_valuation_run_free(struct ChgValuationRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHG_SHAPLEY_H */
