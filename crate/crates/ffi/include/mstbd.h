#ifndef MSTBD_H
#define MSTBD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum {
  MSTBD_STATUS_OK = 0,
  MSTBD_STATUS_NULL_POINTER = 1,
  MSTBD_STATUS_INVALID_ARGUMENT = 2,
  MSTBD_STATUS_CONFIG = 3,
  MSTBD_STATUS_DIVERGENCE = 4,
  MSTBD_STATUS_IO = 5,
  MSTBD_STATUS_RUNTIME = 6,
  MSTBD_STATUS_PANIC = 7,
  MSTBD_STATUS_BUFFER_TOO_SMALL = 8,
} MstbdStatus;

// Experiment configuration.
typedef struct MstbdExperiment MstbdExperiment;

// Finished batch.
typedef struct MstbdResults MstbdResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mstbd_version(void);

// Copy the last error message of this thread into `buf`.
//
// Returns the buffer size needed including the NUL, or 0 when no error was
// recorded. Nothing is written when `len` is too small.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t mstbd_last_error(char *buf, size_t len);

// Build an experiment from a named preset such as `"paper-fig4"`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
MstbdStatus mstbd_experiment_from_preset(const char *name, MstbdExperiment **out);

// Build an experiment from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
MstbdStatus mstbd_experiment_from_toml(const char *toml, MstbdExperiment **out);

// # Safety
// `exp` must be null or a handle from this library not yet freed.
void mstbd_experiment_free(MstbdExperiment *exp);

// Override the batch size, CPI count and seed.
//
// # Safety
// `exp` must be a live handle.
MstbdStatus mstbd_experiment_set_size(MstbdExperiment *exp,
                                      size_t runs,
                                      size_t num_cpis,
                                      uint64_t seed);

// Override the per-channel reflection SNR, dB.
//
// # Safety
// `exp` must be a live handle.
MstbdStatus mstbd_experiment_set_snr_db(MstbdExperiment *exp, double snr_db);

// Replace the detector list with a comma-separated list of names.
//
// # Safety
// `exp` must be a live handle and `names` a NUL-terminated string.
MstbdStatus mstbd_experiment_set_detectors(MstbdExperiment *exp, const char *names);

// Serialize the configuration to TOML. Same size protocol as
// [`mstbd_last_error`]; `needed` receives the size including the NUL.
//
// # Safety
// `exp` must be a live handle, `buf` null or valid for `len` bytes and
// `needed` a valid pointer.
MstbdStatus mstbd_experiment_to_toml(const MstbdExperiment *exp,
                                     char *buf,
                                     size_t len,
                                     size_t *needed);

// Run the Monte Carlo batch.
//
// # Safety
// `exp` must be a live handle and `out` a valid pointer.
MstbdStatus mstbd_experiment_run(const MstbdExperiment *exp, MstbdResults **out);

// # Safety
// `res` must be null or a handle from this library not yet freed.
void mstbd_results_free(MstbdResults *res);

// Number of detectors in the batch.
//
// # Safety
// `res` must be a live handle.
size_t mstbd_results_num_detectors(const MstbdResults *res);

// Number of CPIs per run.
//
// # Safety
// `res` must be a live handle.
size_t mstbd_results_num_cpis(const MstbdResults *res);

// Name of detector `i`; size protocol as [`mstbd_experiment_to_toml`].
//
// # Safety
// `res` must be a live handle, `buf` null or valid for `len` bytes and
// `needed` a valid pointer.
MstbdStatus mstbd_results_detector_name(const MstbdResults *res,
                                        size_t i,
                                        char *buf,
                                        size_t len,
                                        size_t *needed);

// Mean integrated log-likelihood ratio of detector `i` at every CPI. `buf`
// must hold `num_cpis` values.
//
// # Safety
// `res` must be a live handle and `buf` valid for `len` doubles.
MstbdStatus mstbd_results_mean_integration(const MstbdResults *res,
                                           size_t i,
                                           double *buf,
                                           size_t len);

// Mean CFAR threshold (log domain) at every CPI for false-alarm entry
// `pfa_index`.
//
// # Safety
// `res` must be a live handle and `buf` valid for `len` doubles.
MstbdStatus mstbd_results_mean_threshold(const MstbdResults *res,
                                         size_t pfa_index,
                                         double *buf,
                                         size_t len);

// Detection probability of detector `i` at every CPI for false-alarm entry
// `pfa_index`.
//
// # Safety
// `res` must be a live handle and `buf` valid for `len` doubles.
MstbdStatus mstbd_results_pd(const MstbdResults *res,
                             size_t i,
                             size_t pfa_index,
                             double *buf,
                             size_t len);

// Write `metrics.json`, `traces.csv`, `roc.csv`, `rmse.csv` and
// `config_resolved.json` into `dir`.
//
// # Safety
// `res` must be a live handle and `dir` a NUL-terminated string.
MstbdStatus mstbd_results_emit(const MstbdResults *res, const char *dir);

// `Q⁻¹(p)`, the upper-tail standard normal quantile.
//
// # Safety
// `out` must be a valid pointer.
MstbdStatus mstbd_q_inv(double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSTBD_H */
