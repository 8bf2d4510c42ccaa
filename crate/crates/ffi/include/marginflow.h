#ifndef MARGINFLOW_H
#define MARGINFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_UTF8 = 2,
  /*
   Malformed config, dataset or argument.
   */
  MF_STATUS_CONFIG = 3,
  /*
   Non-finite values, stiffness, or a degenerate computation.
   */
  MF_STATUS_NUMERIC = 4,
  /*
   The training data are not separable.
   */
  MF_STATUS_ASSUMPTION = 5,
  MF_STATUS_IO = 6,
  MF_STATUS_PANIC = 7,
  /*
   The output buffer was too short; the required length was still written.
   */
  MF_STATUS_BUFFER_TOO_SMALL = 8,
} MfStatus;

/*
 A parsed and validated experiment config.
 */
typedef struct MfConfig MfConfig;

/*
 Labelled training points.
 */
typedef struct MfDataset MfDataset;

/*
 The summary and final parameters of one run.
 */
typedef struct MfRunResult MfRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next `mf_*` call on the same thread.
 */
const char *mf_last_error_message(void);

/*
 Parses a TOML config. `base_dir` (nullable) resolves relative CSV paths.

 # Safety
 `toml` and `base_dir` must be null or NUL-terminated strings; `out` must
 be null or writable.
 */
enum MfStatus mf_config_from_toml(const char *toml, const char *base_dir, struct MfConfig **out);

/*
 # Safety
 `cfg` must be null or a handle from [`mf_config_from_toml`] not yet freed.
 */
void mf_config_free(struct MfConfig *cfg);

/*
 Runs an experiment, writing its files to `out_dir`. A negative
 `max_steps` keeps the config's budget.

 On a numeric failure the partial summary is still returned through
 `out` together with [`MfStatus::Numeric`].

 # Safety
 `cfg` must be a live handle, `out_dir` a NUL-terminated string and `out`
 writable.
 */
enum MfStatus mf_run(const struct MfConfig *cfg,
                     const char *out_dir,
                     int64_t max_steps,
                     struct MfRunResult **out);

/*
 # Safety
 `run` must be null or a handle from [`mf_run`] not yet freed.
 */
void mf_run_free(struct MfRunResult *run);

/*
 Copies the run summary as JSON into a new string owned by the caller,
 released with [`mf_string_free`].

 # Safety
 `run` must be a live handle and `out` writable.
 */
enum MfStatus mf_run_summary_json(const struct MfRunResult *run, char **out);

/*
 Writes the final parameters into `buf` (capacity `cap`) and their count
 into `len`. Returns [`MfStatus::BufferTooSmall`] when `cap < *len`.

 # Safety
 `run` must be a live handle, `len` writable and `buf` valid for `cap`
 doubles (it may be null when `cap` is 0).
 */
enum MfStatus mf_run_final_params(const struct MfRunResult *run,
                                  double *buf,
                                  size_t cap,
                                  size_t *len);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be null or a string from [`mf_run_summary_json`] not yet freed.
 */
void mf_string_free(char *s);

/*
 Builds a dataset from `n` row-major points of dimension `d` and their
 labels in {-1, 1}.

 # Safety
 `xs` must hold `n * d` doubles, `ys` `n` doubles, and `out` be writable.
 */
enum MfStatus mf_dataset_new(const double *xs,
                             const double *ys,
                             size_t n,
                             size_t d,
                             struct MfDataset **out);

/*
 # Safety
 `data` must be null or a handle from [`mf_dataset_new`] not yet freed.
 */
void mf_dataset_free(struct MfDataset *data);

/*
 Solves `min 1/2 ||s * w||^2  s.t.  y_i <w, x_i> >= 1` exactly. `scaling`
 (nullable, `d` values) defaults to all ones. Writes `w*` into `w_out`
 (capacity `cap`) and, when `margin_out` is non-null, the margin
 `1 / ||s * w*||`.

 # Safety
 `data` must be a live handle, `scaling` null or valid for `d` doubles,
 `w_out` valid for `cap` doubles.
 */
enum MfStatus mf_svm_oracle(const struct MfDataset *data,
                            const double *scaling,
                            double *w_out,
                            size_t cap,
                            double *margin_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARGINFLOW_H */
