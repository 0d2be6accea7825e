#ifndef ICCSS_H
#define ICCSS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  ICCSS_STATUS_OK = 0,
  ICCSS_STATUS_NULL_POINTER = 1,
  ICCSS_STATUS_INVALID_ARGUMENT = 2,
  ICCSS_STATUS_INVALID_CONFIG = 3,
  ICCSS_STATUS_NUMERICAL = 4,
  ICCSS_STATUS_IO = 5,
  ICCSS_STATUS_CHECKPOINT = 6,
  ICCSS_STATUS_PANIC = 7,
} IccssStatus;

/**
 * Opaque trained-model handle.
 */
typedef struct IccssModel IccssModel;

/**
 * Opaque scenario handle.
 */
typedef struct IccssScenario IccssScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *iccss_last_error(void);

/**
 * Gaussian tail probability `Q(x)`.
 */
double iccss_q_function(double x);

/**
 * BPSK bit error rate at the given SNR in dB.
 */
double iccss_bpsk_ber(double snr_db);

/**
 * Majority-rule detection probability of `k` sensors with local detection
 * probability `p_local` reporting over BPSK at `snr_report_db`.
 */
double iccss_hdf_bound(double p_local, double snr_report_db, size_t k);

/**
 * Creates a scenario from JSON text; null `json` gives the default scenario.
 *
 * # Safety
 * `json` must be null or a NUL-terminated string; `out` must be writable.
 */
IccssStatus iccss_scenario_new(const char *json, IccssScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from [`iccss_scenario_new`] not yet freed.
 */
void iccss_scenario_free(IccssScenario *s);

/**
 * Sensor count and antenna count of a scenario.
 *
 * # Safety
 * `s` must be a live handle; `k` and `m` must be writable.
 */
IccssStatus iccss_scenario_dims(const IccssScenario *s, size_t *k, size_t *m);

/**
 * Simulates one sensing slot and writes the K sample covariances
 * (`2 * K * M * M` doubles) to `out`.
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `out_len` doubles.
 */
IccssStatus iccss_generate_slot(const IccssScenario *s,
                                bool h1,
                                uint64_t seed,
                                uint64_t stream_id,
                                double *out,
                                size_t out_len);

/**
 * Local statistic of the named detector (`ed`, `med`, `mmed`, `cav`, `ec`)
 * on one `M x M` covariance, with priors taken from the scenario.
 *
 * # Safety
 * `s` must be a live handle, `detector` a NUL-terminated string, `cov` must
 * hold `2 * m * m` doubles and `out` must be writable.
 */
IccssStatus iccss_detector_statistic(const IccssScenario *s,
                                     const char *detector,
                                     const double *cov,
                                     size_t m,
                                     double *out);

/**
 * Loads a trained checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
IccssStatus iccss_model_load(const char *path, IccssModel **out);

/**
 * # Safety
 * `m` must be null or a handle from [`iccss_model_load`] not yet freed.
 */
void iccss_model_free(IccssModel *m);

/**
 * Probability that the PU is present given `k` covariances of size `m`
 * (`2 * k * m * m` doubles). With a null scenario the aggregation is ideal
 * and noiseless; otherwise the scenario's reporting channel is simulated
 * from `(seed, stream_id)`.
 *
 * # Safety
 * `model` must be a live handle, `s` null or live, `covs` must hold
 * `2 * k * m * m` doubles and `out` must be writable.
 */
IccssStatus iccss_model_score(const IccssModel *model,
                              const IccssScenario *s,
                              const double *covs,
                              size_t k,
                              size_t m,
                              uint64_t seed,
                              uint64_t stream_id,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICCSS_H */
