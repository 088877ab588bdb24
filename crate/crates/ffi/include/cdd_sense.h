/* SPDX-License-Identifier: Apache-2.0 */
/* Generated by cbindgen from src/lib.rs; do not edit. */

#ifndef CDD_SENSE_H
#define CDD_SENSE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define CDD_FRAME_LAB 0

#define CDD_FRAME_IP1 1

#define CDD_MODEL_DAMPED_COSINE 0

#define CDD_MODEL_DECAY_ONLY 1

#define CDD_MODEL_FLAT 2

typedef enum CddStatus {
  CDD_STATUS_OK = 0,
  CDD_STATUS_NULL_POINTER = 1,
  CDD_STATUS_INVALID_ARGUMENT = 2,
  CDD_STATUS_STEP_TOO_LARGE = 3,
  CDD_STATUS_FIT_FAILED = 4,
  CDD_STATUS_INTERNAL = 5,
  CDD_STATUS_PANIC = 6,
} CddStatus;

// Opaque drive configuration.
typedef struct CddDriveConfig CddDriveConfig;

// Opaque simulated strobe record.
typedef struct CddTrace CddTrace;

// Noise parameters; `t1 <= 0` means no relaxation. Strengths of zero
// switch a channel off.
typedef struct CddNoiseParams {
  double sigma_b;
  double tau_b;
  double sigma_omega1;
  double tau_omega1;
  double sigma_omega2;
  double tau_omega2;
  double t1;
} CddNoiseParams;

typedef struct CddFitResult {
  // One of the `CDD_MODEL_*` constants.
  int32_t model;
  double amplitude;
  double offset;
  // Cycles per time unit.
  double frequency;
  double phase;
  double t2;
  double p;
  double amplitude_err;
  double offset_err;
  double frequency_err;
  double phase_err;
  double t2_err;
  double p_err;
  double residual_norm;
  uint32_t iterations;
  bool converged;
} CddFitResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a configuration with the signal on the `(+,+)` resonance and the
// second drive shifted by π/2. Angular frequencies in rad per time unit.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CddStatus cdd_drive_config_new(double omega0,
                                    double omega1,
                                    double omega2,
                                    double g,
                                    double phi,
                                    struct CddDriveConfig **out);

// # Safety
// `cfg` must be null or a handle from [`cdd_drive_config_new`] not yet freed.
void cdd_drive_config_free(struct CddDriveConfig *cfg);

// Moves the signal carrier to `omega_s`.
//
// # Safety
// `cfg` must be a live handle.
enum CddStatus cdd_drive_config_set_signal_frequency(struct CddDriveConfig *cfg, double omega_s);

// Sets the modulation offset of the second drive.
//
// # Safety
// `cfg` must be a live handle.
enum CddStatus cdd_drive_config_set_drive2_phase(struct CddDriveConfig *cfg, double phase);

// Writes the four resonances `ω₀ ± Ω₁ ± Ω₂/2`, ascending, to `out[0..4]`.
//
// # Safety
// `cfg` must be a live handle and `out` valid for four writes.
enum CddStatus cdd_resonances(const struct CddDriveConfig *cfg, double *out);

// Sets `*pass` to whether every adjacent scale ratio reaches `min_ratio`.
//
// # Safety
// `cfg` must be a live handle and `pass` writable.
enum CddStatus cdd_validate_hierarchy(const struct CddDriveConfig *cfg,
                                      double min_ratio,
                                      bool *pass);

// Simulates the Rabi protocol on every `stride`-th strobe time up to
// `t_final` and returns the population record in `*out`. `noise` may be
// null for a noiseless run; `frame` is `CDD_FRAME_LAB` or `CDD_FRAME_IP1`.
//
// # Safety
// `cfg` must be a live handle, `noise` null or valid, `out` writable.
enum CddStatus cdd_simulate_strobe(const struct CddDriveConfig *cfg,
                                   const struct CddNoiseParams *noise,
                                   uint32_t frame,
                                   double t_final,
                                   uint32_t stride,
                                   uint32_t trajectories,
                                   uint64_t seed,
                                   struct CddTrace **out);

// Number of samples in a trace; 0 for null.
//
// # Safety
// `trace` must be null or a live handle.
size_t cdd_trace_len(const struct CddTrace *trace);

// Copies the sample times into `buf`, which must hold `cdd_trace_len` values.
//
// # Safety
// `trace` must be a live handle and `buf` valid for `len` writes.
enum CddStatus cdd_trace_times(const struct CddTrace *trace, double *buf, size_t len);

// Copies the ensemble-mean population `P(−a)`.
//
// # Safety
// As [`cdd_trace_times`].
enum CddStatus cdd_trace_signal(const struct CddTrace *trace, double *buf, size_t len);

// Copies the standard error of the mean (zeros for one trajectory).
//
// # Safety
// As [`cdd_trace_times`].
enum CddStatus cdd_trace_stderr(const struct CddTrace *trace, double *buf, size_t len);

// # Safety
// `trace` must be null or a live handle.
void cdd_trace_free(struct CddTrace *trace);

// Fits `A·exp(−(t/T₂)^p)·cos(2πft + φ) + B` to `n` samples. `stderr` may
// be null. On `FitFailed` the best parameters found are still written.
//
// # Safety
// `t` and `y` valid for `n` reads, `stderr` null or valid for `n` reads,
// `out` writable.
enum CddStatus cdd_fit_damped_rabi(const double *t,
                                   const double *y,
                                   const double *stderr,
                                   size_t n,
                                   struct CddFitResult *out);

// `σ/(γ α τ C)`.
//
// # Safety
// `out` must be writable.
enum CddStatus cdd_min_field(double sigma,
                             double tau,
                             double alpha,
                             double contrast,
                             double gamma,
                             double *out);

// `η = δB_min·√t`.
//
// # Safety
// `out` must be writable.
enum CddStatus cdd_sensitivity(double sigma,
                               double tau,
                               double alpha,
                               double contrast,
                               double gamma,
                               double t,
                               double *out);

// `1/T₂`.
//
// # Safety
// `out` must be writable.
enum CddStatus cdd_bandwidth(double t2, double *out);

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`) and returns the full length including
// the terminator; 0 when there is none. `buf` may be null to query the
// length.
//
// # Safety
// `buf` must be null or valid for `len` writes.
size_t cdd_last_error_message(char *buf, size_t len);

// Library version, a static NUL-terminated string.
const char *cdd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDD_SENSE_H */
