//! C ABI for the photonpair toolkit.
//!
//! Conventions:
//! - Objects cross the boundary as opaque handles created and freed by this
//!   library; never free them with anything but the matching `*_free`.
//! - Fallible calls return [`PpStatus`]; on failure a thread-local message
//!   is available through [`pp_last_error_message`].
//! - Pointers returned by accessor functions borrow from their handle and
//!   stay valid until the handle is freed or mutated.
//! - Panics are caught at the boundary and surface as
//!   `PpStatus::InternalError`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use photonpair::correlator::{
    auto_correlogram, coincidences, conditioned_g2, cross_correlogram, normalize_g2, CorrMode,
    CorrelogramConfig, G2Curve,
};
use photonpair::error::Error;
use photonpair::inference::{effective_modes, fit_exponential, pair_rate_from_peak};
use photonpair::source::{apply_detector, DetectorParams};
use photonpair::tags::TagStream;

/// Status codes mirroring the library's error classes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    ConfigError = 2,
    FormatError = 3,
    NumericalError = 4,
    IoError = 5,
    NullPointer = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> PpStatus {
    match err {
        Error::Config(_) => PpStatus::ConfigError,
        Error::Format(_) => PpStatus::FormatError,
        Error::Numerical(_) => PpStatus::NumericalError,
        Error::Io(_) => PpStatus::IoError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PpStatus>) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            PpStatus::InternalError
        }
    }
}

fn fail(err: Error) -> PpStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Message describing the most recent failure on this thread. Borrowed;
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// One channel of photon detection timestamps (opaque).
pub struct PpTagStream {
    inner: TagStream,
}

/// A normalized correlation curve (opaque).
pub struct PpG2Curve {
    inner: G2Curve,
}

/// Build a tag stream from a sorted array of tick timestamps.
///
/// # Safety
/// `tags` must point to `len` readable u64 values (or be null with
/// `len == 0`); `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_new(
    tags: *const u64,
    len: usize,
    channel: u8,
    tick_ps: u64,
    span_ticks: u64,
    out: *mut *mut PpTagStream,
) -> PpStatus {
    guard(|| {
        if out.is_null() || (tags.is_null() && len > 0) {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let slice = if len == 0 { &[] } else { std::slice::from_raw_parts(tags, len) };
        match TagStream::new(channel, tick_ps, span_ticks, slice.to_vec()) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(PpTagStream { inner: s }));
                Ok(())
            }
            Err(e) => Err(fail(e)),
        }
    })
}

/// # Safety
/// `stream` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_free(stream: *mut PpTagStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_len(stream: *const PpTagStream) -> usize {
    if stream.is_null() {
        return 0;
    }
    (*stream).inner.len()
}

/// Borrowed pointer to the timestamp array, valid while the handle lives.
///
/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_data(stream: *const PpTagStream) -> *const u64 {
    if stream.is_null() {
        return std::ptr::null();
    }
    (*stream).inner.tags.as_ptr()
}

/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_tick_ps(stream: *const PpTagStream) -> u64 {
    if stream.is_null() {
        return 0;
    }
    (*stream).inner.tick_ps
}

/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_span_ticks(stream: *const PpTagStream) -> u64 {
    if stream.is_null() {
        return 0;
    }
    (*stream).inner.span_ticks
}

/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_channel(stream: *const PpTagStream) -> u8 {
    if stream.is_null() {
        return 0;
    }
    (*stream).inner.channel
}

unsafe fn cstr_path(path: *const c_char) -> Result<PathBuf, PpStatus> {
    if path.is_null() {
        set_error("null path");
        return Err(PpStatus::NullPointer);
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(PpStatus::ConfigError)
        }
    }
}

/// Read one channel (by position) from a tag file in either supported
/// format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_tagstream_read(
    path: *const c_char,
    channel_index: usize,
    out: *mut *mut PpTagStream,
) -> PpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let path = cstr_path(path)?;
        let streams = photonpair::io::tagfile::read_tags_auto(&path).map_err(fail)?;
        match streams.into_iter().nth(channel_index) {
            Some(s) => {
                *out = Box::into_raw(Box::new(PpTagStream { inner: s }));
                Ok(())
            }
            None => {
                set_error("channel index out of range");
                Err(PpStatus::FormatError)
            }
        }
    })
}

/// Run a full simulate/split/detect pipeline from a TOML configuration and
/// return the three detected channels.
///
/// # Safety
/// `config_toml` must be NUL-terminated; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_simulate(
    config_toml: *const c_char,
    out_idler: *mut *mut PpTagStream,
    out_s1: *mut *mut PpTagStream,
    out_s2: *mut *mut PpTagStream,
) -> PpStatus {
    guard(|| {
        if config_toml.is_null() || out_idler.is_null() || out_s1.is_null() || out_s2.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let text = match CStr::from_ptr(config_toml).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("config is not valid UTF-8");
                return Err(PpStatus::ConfigError);
            }
        };
        let cfg: photonpair::source::SimConfig = match toml_from_str(text) {
            Ok(c) => c,
            Err(msg) => {
                set_error(&msg);
                return Err(PpStatus::ConfigError);
            }
        };
        let [idler, s1, s2] = photonpair::cli::simulate_detected(&cfg).map_err(fail)?;
        *out_idler = Box::into_raw(Box::new(PpTagStream { inner: idler }));
        *out_s1 = Box::into_raw(Box::new(PpTagStream { inner: s1 }));
        *out_s2 = Box::into_raw(Box::new(PpTagStream { inner: s2 }));
        Ok(())
    })
}

fn toml_from_str(text: &str) -> Result<photonpair::source::SimConfig, String> {
    photonpair::source::parse_sim_config(text).map_err(|e| e.to_string())
}

/// Apply the detector imperfection model and return a new stream.
///
/// # Safety
/// `stream` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_apply_detector(
    stream: *const PpTagStream,
    efficiency: f64,
    dead_time_s: f64,
    dark_rate_hz: f64,
    tick_ps: u64,
    seed: u64,
    out: *mut *mut PpTagStream,
) -> PpStatus {
    guard(|| {
        if stream.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let det = DetectorParams { efficiency, dead_time_s, dark_rate_hz, tick_ps };
        match apply_detector(&(*stream).inner, &det, seed) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(PpTagStream { inner: s }));
                Ok(())
            }
            Err(e) => Err(fail(e)),
        }
    })
}

/// Correlogram estimator selector: 0 start-stop, 1 windowed-pairwise.
fn mode_of(mode: u32) -> Result<CorrMode, PpStatus> {
    match mode {
        0 => Ok(CorrMode::StartStop),
        1 => Ok(CorrMode::WindowedPairwise),
        _ => {
            set_error("mode must be 0 (start-stop) or 1 (windowed-pairwise)");
            Err(PpStatus::ConfigError)
        }
    }
}

/// Normalized cross-correlation of two streams.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_cross_g2(
    a: *const PpTagStream,
    b: *const PpTagStream,
    bin_width_s: f64,
    max_lag_s: f64,
    mode: u32,
    out: *mut *mut PpG2Curve,
) -> PpStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let cfg = CorrelogramConfig { bin_width_s, max_lag_s, mode: mode_of(mode)? };
        let hist = cross_correlogram(&(*a).inner, &(*b).inner, &cfg).map_err(fail)?;
        let curve = normalize_g2(&hist).map_err(fail)?;
        *out = Box::into_raw(Box::new(PpG2Curve { inner: curve }));
        Ok(())
    })
}

/// Normalized autocorrelation of one stream (self-pairs excluded).
///
/// # Safety
/// `a` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_auto_g2(
    a: *const PpTagStream,
    bin_width_s: f64,
    max_lag_s: f64,
    mode: u32,
    out: *mut *mut PpG2Curve,
) -> PpStatus {
    guard(|| {
        if a.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let cfg = CorrelogramConfig { bin_width_s, max_lag_s, mode: mode_of(mode)? };
        let hist = auto_correlogram(&(*a).inner, &cfg).map_err(fail)?;
        let curve = normalize_g2(&hist).map_err(fail)?;
        *out = Box::into_raw(Box::new(PpG2Curve { inner: curve }));
        Ok(())
    })
}

/// Idler-conditioned autocorrelation of the two signal arms. Also reports
/// the number of heralded triples behind the curve.
///
/// # Safety
/// The stream arguments must be live handles; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_conditioned_g2(
    s1: *const PpTagStream,
    s2: *const PpTagStream,
    idler: *const PpTagStream,
    herald_halfwidth_s: f64,
    bin_width_s: f64,
    max_lag_s: f64,
    out: *mut *mut PpG2Curve,
    out_triples: *mut u64,
) -> PpStatus {
    guard(|| {
        if s1.is_null() || s2.is_null() || idler.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let cfg = CorrelogramConfig {
            bin_width_s,
            max_lag_s,
            mode: CorrMode::WindowedPairwise,
        };
        let res = conditioned_g2(
            &(*s1).inner,
            &(*s2).inner,
            &(*idler).inner,
            herald_halfwidth_s,
            &cfg,
        )
        .map_err(fail)?;
        if !out_triples.is_null() {
            *out_triples = res.heralded_triples;
        }
        *out = Box::into_raw(Box::new(PpG2Curve { inner: res.curve }));
        Ok(())
    })
}

/// Number of a-tags with at least one b-tag within ±window/2.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_coincidences(
    a: *const PpTagStream,
    b: *const PpTagStream,
    window_s: f64,
    out: *mut u64,
) -> PpStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        *out = coincidences(&(*a).inner, &(*b).inner, window_s).map_err(fail)?;
        Ok(())
    })
}

/// # Safety
/// `curve` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_g2_free(curve: *mut PpG2Curve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// # Safety
/// `curve` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_g2_len(curve: *const PpG2Curve) -> usize {
    if curve.is_null() {
        return 0;
    }
    (*curve).inner.tau_s.len()
}

/// Borrowed pointer to the lag axis in seconds.
///
/// # Safety
/// `curve` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_g2_tau(curve: *const PpG2Curve) -> *const f64 {
    if curve.is_null() {
        return std::ptr::null();
    }
    (*curve).inner.tau_s.as_ptr()
}

/// Borrowed pointer to the g2 values.
///
/// # Safety
/// `curve` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_g2_values(curve: *const PpG2Curve) -> *const f64 {
    if curve.is_null() {
        return std::ptr::null();
    }
    (*curve).inner.g2.as_ptr()
}

/// Borrowed pointer to the per-bin standard errors.
///
/// # Safety
/// `curve` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_g2_stderr(curve: *const PpG2Curve) -> *const f64 {
    if curve.is_null() {
        return std::ptr::null();
    }
    (*curve).inner.stderr.as_ptr()
}

/// Exponential-fit result. Optional quantities are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PpExpFit {
    pub amplitude: f64,
    pub decay_rate_per_s: f64,
    pub baseline: f64,
    pub residual_norm: f64,
    pub bandwidth_hz: f64,
    /// Pair rate from the peak excess; NaN when the excess is not positive.
    pub pair_rate_hz: f64,
    pub g2_zero: f64,
    /// Effective mode count 1/(g2(0)-1); NaN when g2(0) <= 1.
    pub effective_modes: f64,
    pub n_points: usize,
    pub converged: bool,
}

/// Weighted fit of baseline + amplitude·exp(−decay·|τ|) to a curve.
///
/// # Safety
/// `curve` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_fit_exponential(
    curve: *const PpG2Curve,
    fix_baseline: bool,
    baseline: f64,
    out: *mut PpExpFit,
) -> PpStatus {
    guard(|| {
        if curve.is_null() || out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let fixed = if fix_baseline { Some(baseline) } else { None };
        let fit = fit_exponential(&(*curve).inner, fixed).map_err(fail)?;
        *out = PpExpFit {
            amplitude: fit.amplitude,
            decay_rate_per_s: fit.decay_rate_per_s,
            baseline: fit.baseline,
            residual_norm: fit.residual_norm,
            bandwidth_hz: photonpair::inference::bandwidth_from_fit(&fit),
            pair_rate_hz: pair_rate_from_peak(&fit).unwrap_or(f64::NAN),
            g2_zero: fit.peak(),
            effective_modes: effective_modes(fit.peak()).unwrap_or(f64::NAN),
            n_points: fit.n_points,
            converged: fit.converged,
        };
        Ok(())
    })
}

/// Effective mode count n = 1/(g2(0) − 1).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_effective_modes(g2_zero: f64, out: *mut f64) -> PpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        *out = effective_modes(g2_zero).map_err(fail)?;
        Ok(())
    })
}

/// Total bandwidth of the default lithium-niobate/diamond disk at one
/// coupling gap, in Hz.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_bandwidth_at_gap(
    radius_m: f64,
    absorption_per_m: f64,
    lambda_m: f64,
    gap_m: f64,
    out: *mut f64,
) -> PpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        let mut spec = photonpair::resonator::ResonatorSpec::default_disk();
        spec.radius_m = radius_m;
        spec.absorption_per_m = absorption_per_m;
        *out = photonpair::resonator::bandwidth_at_gap(&spec, lambda_m, gap_m).map_err(fail)?;
        Ok(())
    })
}

/// Electro-optic detuning at a bias voltage, in Hz.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_voltage_detune(volts: f64, out: *mut f64) -> PpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer");
            return Err(PpStatus::NullPointer);
        }
        *out = photonpair::resonator::voltage_detune(volts).map_err(fail)?;
        Ok(())
    })
}
