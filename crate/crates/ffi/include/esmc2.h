#ifndef ESMC2_H
#define ESMC2_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Esmc2Status {
  ESMC2_STATUS_OK = 0,
  ESMC2_STATUS_NULL_POINTER = 1,
  ESMC2_STATUS_INVALID_ARGUMENT = 2,
  ESMC2_STATUS_CONFIG = 3,
  ESMC2_STATUS_PARSE = 4,
  ESMC2_STATUS_IO = 5,
  ESMC2_STATUS_NUMERICAL = 6,
  /**
   * Weights or particles degenerated during a run.
   */
  ESMC2_STATUS_DEGENERATE = 7,
  ESMC2_STATUS_BUFFER_TOO_SMALL = 8,
  ESMC2_STATUS_PANIC = 9,
} Esmc2Status;

/**
 * Experiment configuration.
 */
typedef struct Esmc2Config Esmc2Config;

/**
 * Completed fit: posterior particles, filtered state bands and metrics.
 */
typedef struct Esmc2Fit Esmc2Fit;

typedef struct Esmc2ParamSummary {
  double mean;
  double sd;
  double q025;
  double q500;
  double q975;
} Esmc2ParamSummary;

typedef struct Esmc2Metrics {
  double mae;
  double rmse;
  /**
   * Fraction of observations inside the 95% band of filtered incidence.
   */
  double coverage95;
} Esmc2Metrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *esmc2_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t esmc2_last_error(char *buf, size_t cap);

/**
 * Default configuration for a named example ("example1" or "example2").
 *
 * # Safety
 * `example` must be a NUL-terminated string; `out_cfg` must be writable.
 */
enum Esmc2Status esmc2_config_new(const char *example, struct Esmc2Config **out_cfg);

/**
 * Loads a `key = value` configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_cfg` must be writable.
 */
enum Esmc2Status esmc2_config_load(const char *path, struct Esmc2Config **out_cfg);

/**
 * Sets one configuration key, with the same keys and syntax as the config file.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum Esmc2Status esmc2_config_set(struct Esmc2Config *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or a handle from `esmc2_config_new`/`esmc2_config_load`
 * that has not been freed.
 */
void esmc2_config_free(struct Esmc2Config *cfg);

/**
 * Simulates the configured example and writes its observations.
 * `len` receives the series length even when `buf` is too small.
 *
 * # Safety
 * `cfg` must be a live handle, `buf` null or `cap` writable doubles, `len` writable.
 */
enum Esmc2Status esmc2_simulate(const struct Esmc2Config *cfg,
                                double *buf,
                                size_t cap,
                                size_t *len);

/**
 * Fits the configured model to `n` observations.
 *
 * # Safety
 * `cfg` must be a live handle, `obs` must point to `n` doubles, `out_fit` writable.
 */
enum Esmc2Status esmc2_fit(const struct Esmc2Config *cfg,
                           const double *obs,
                           size_t n,
                           struct Esmc2Fit **out_fit);

/**
 * # Safety
 * `fit` must be null or a handle from `esmc2_fit` that has not been freed.
 */
void esmc2_fit_free(struct Esmc2Fit *fit);

/**
 * Final posterior summary of one parameter ("alpha", "gamma", "nu_beta",
 * "phi" or "beta0"). Fixed parameters are an `INVALID_ARGUMENT`.
 *
 * # Safety
 * `fit` must be a live handle, `name` NUL-terminated, `out_summary` writable.
 */
enum Esmc2Status esmc2_fit_param(const struct Esmc2Fit *fit,
                                 const char *name,
                                 struct Esmc2ParamSummary *out_summary);

/**
 * Fit quality of the pooled filtered incidence against the observations.
 *
 * # Safety
 * `fit` must be a live handle and `out_metrics` writable.
 */
enum Esmc2Status esmc2_fit_metrics(const struct Esmc2Fit *fit, struct Esmc2Metrics *out_metrics);

/**
 * Number of parameter particles in the final population.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t esmc2_fit_num_particles(const struct Esmc2Fit *fit);

/**
 * Writes the final population as rows of (alpha, gamma, nu_beta, phi, beta0,
 * normalized weight). `len` receives the required number of doubles.
 *
 * # Safety
 * `fit` must be a live handle, `buf` null or `cap` writable doubles, `len` writable.
 */
enum Esmc2Status esmc2_fit_samples(const struct Esmc2Fit *fit,
                                   double *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * Forecasts `horizon` intervals past the data with beta frozen and writes
 * the observation median and 95% band per horizon. Each buffer needs
 * `horizon` slots.
 *
 * # Safety
 * `fit` must be a live handle; `median`, `lo95` and `hi95` must each point to
 * `horizon` writable doubles.
 */
enum Esmc2Status esmc2_fit_forecast(const struct Esmc2Fit *fit,
                                    size_t horizon,
                                    uint64_t seed,
                                    double *median,
                                    double *lo95,
                                    double *hi95);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ESMC2_H */
