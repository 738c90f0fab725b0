/* C interface to the photonpair toolkit. All functions returning PpStatus set a thread-local message retrievable via pp_last_error_message() on failure. */

#ifndef PHOTONPAIR_H
#define PHOTONPAIR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the library's error classes.
typedef enum PpStatus {
  PpStatus_Ok = 0,
  PpStatus_ConfigError = 2,
  PpStatus_FormatError = 3,
  PpStatus_NumericalError = 4,
  PpStatus_IoError = 5,
  PpStatus_NullPointer = 6,
  PpStatus_InternalError = 7,
} PpStatus;

// A normalized correlation curve (opaque).
typedef struct PpG2Curve PpG2Curve;

// One channel of photon detection timestamps (opaque).
typedef struct PpTagStream PpTagStream;

// Exponential-fit result. Optional quantities are NaN when undefined.
typedef struct PpExpFit {
  double amplitude;
  double decay_rate_per_s;
  double baseline;
  double residual_norm;
  double bandwidth_hz;
  // Pair rate from the peak excess; NaN when the excess is not positive.
  double pair_rate_hz;
  double g2_zero;
  // Effective mode count 1/(g2(0)-1); NaN when g2(0) <= 1.
  double effective_modes;
  size_t n_points;
  bool converged;
} PpExpFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. Borrowed;
// valid until the next failing call on the same thread.
const char *pp_last_error_message(void);

// Library version as a static string.
const char *pp_version(void);

// Build a tag stream from a sorted array of tick timestamps.
//
// # Safety
// `tags` must point to `len` readable u64 values (or be null with
// `len == 0`); `out` must be a valid pointer to receive the handle.
enum PpStatus pp_tagstream_new(const uint64_t *tags,
                               size_t len,
                               uint8_t channel,
                               uint64_t tick_ps,
                               uint64_t span_ticks,
                               struct PpTagStream **out);

// # Safety
// `stream` must be a handle from this library, not yet freed.
void pp_tagstream_free(struct PpTagStream *stream);

// # Safety
// `stream` must be a live handle.
size_t pp_tagstream_len(const struct PpTagStream *stream);

// Borrowed pointer to the timestamp array, valid while the handle lives.
//
// # Safety
// `stream` must be a live handle.
const uint64_t *pp_tagstream_data(const struct PpTagStream *stream);

// # Safety
// `stream` must be a live handle.
uint64_t pp_tagstream_tick_ps(const struct PpTagStream *stream);

// # Safety
// `stream` must be a live handle.
uint64_t pp_tagstream_span_ticks(const struct PpTagStream *stream);

// # Safety
// `stream` must be a live handle.
uint8_t pp_tagstream_channel(const struct PpTagStream *stream);

// Read one channel (by position) from a tag file in either supported
// format.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum PpStatus pp_tagstream_read(const char *path, size_t channel_index, struct PpTagStream **out);

// Run a full simulate/split/detect pipeline from a TOML configuration and
// return the three detected channels.
//
// # Safety
// `config_toml` must be NUL-terminated; the out pointers must be valid.
enum PpStatus pp_simulate(const char *config_toml,
                          struct PpTagStream **out_idler,
                          struct PpTagStream **out_s1,
                          struct PpTagStream **out_s2);

// Apply the detector imperfection model and return a new stream.
//
// # Safety
// `stream` must be a live handle; `out` must be valid.
enum PpStatus pp_apply_detector(const struct PpTagStream *stream,
                                double efficiency,
                                double dead_time_s,
                                double dark_rate_hz,
                                uint64_t tick_ps,
                                uint64_t seed,
                                struct PpTagStream **out);

// Normalized cross-correlation of two streams.
//
// # Safety
// `a` and `b` must be live handles; `out` must be valid.
enum PpStatus pp_cross_g2(const struct PpTagStream *a,
                          const struct PpTagStream *b,
                          double bin_width_s,
                          double max_lag_s,
                          uint32_t mode,
                          struct PpG2Curve **out);

// Normalized autocorrelation of one stream (self-pairs excluded).
//
// # Safety
// `a` must be a live handle; `out` must be valid.
enum PpStatus pp_auto_g2(const struct PpTagStream *a,
                         double bin_width_s,
                         double max_lag_s,
                         uint32_t mode,
                         struct PpG2Curve **out);

// Idler-conditioned autocorrelation of the two signal arms. Also reports
// the number of heralded triples behind the curve.
//
// # Safety
// The stream arguments must be live handles; out pointers must be valid.
enum PpStatus pp_conditioned_g2(const struct PpTagStream *s1,
                                const struct PpTagStream *s2,
                                const struct PpTagStream *idler,
                                double herald_halfwidth_s,
                                double bin_width_s,
                                double max_lag_s,
                                struct PpG2Curve **out,
                                uint64_t *out_triples);

// Number of a-tags with at least one b-tag within ±window/2.
//
// # Safety
// `a` and `b` must be live handles; `out` must be valid.
enum PpStatus pp_coincidences(const struct PpTagStream *a,
                              const struct PpTagStream *b,
                              double window_s,
                              uint64_t *out);

// # Safety
// `curve` must be a handle from this library, not yet freed.
void pp_g2_free(struct PpG2Curve *curve);

// # Safety
// `curve` must be a live handle.
size_t pp_g2_len(const struct PpG2Curve *curve);

// Borrowed pointer to the lag axis in seconds.
//
// # Safety
// `curve` must be a live handle.
const double *pp_g2_tau(const struct PpG2Curve *curve);

// Borrowed pointer to the g2 values.
//
// # Safety
// `curve` must be a live handle.
const double *pp_g2_values(const struct PpG2Curve *curve);

// Borrowed pointer to the per-bin standard errors.
//
// # Safety
// `curve` must be a live handle.
const double *pp_g2_stderr(const struct PpG2Curve *curve);

// Weighted fit of baseline + amplitude·exp(−decay·|τ|) to a curve.
//
// # Safety
// `curve` must be a live handle; `out` must be valid.
enum PpStatus pp_fit_exponential(const struct PpG2Curve *curve,
                                 bool fix_baseline,
                                 double baseline,
                                 struct PpExpFit *out);

// Effective mode count n = 1/(g2(0) − 1).
//
// # Safety
// `out` must be valid.
enum PpStatus pp_effective_modes(double g2_zero, double *out);

// Total bandwidth of the default lithium-niobate/diamond disk at one
// coupling gap, in Hz.
//
// # Safety
// `out` must be valid.
enum PpStatus pp_bandwidth_at_gap(double radius_m,
                                  double absorption_per_m,
                                  double lambda_m,
                                  double gap_m,
                                  double *out);

// Electro-optic detuning at a bias voltage, in Hz.
//
// # Safety
// `out` must be valid.
enum PpStatus pp_voltage_detune(double volts, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHOTONPAIR_H */
