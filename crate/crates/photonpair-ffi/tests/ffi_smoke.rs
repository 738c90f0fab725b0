//! Exercise the C ABI exactly as a foreign caller would: through the
//! extern "C" functions, opaque handles, and status codes.

use photonpair_ffi::*;
use std::ffi::CStr;
use std::ptr;

fn status_ok(s: PpStatus) {
    if s != PpStatus::Ok {
        let msg = unsafe { CStr::from_ptr(pp_last_error_message()) };
        panic!("status {s:?}: {}", msg.to_string_lossy());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(pp_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn tagstream_round_trip_and_accessors() {
    let tags: Vec<u64> = vec![10, 20, 20, 900];
    let mut handle: *mut PpTagStream = ptr::null_mut();
    let st = unsafe { pp_tagstream_new(tags.as_ptr(), tags.len(), 3, 162, 10_000, &mut handle) };
    status_ok(st);
    unsafe {
        assert_eq!(pp_tagstream_len(handle), 4);
        assert_eq!(pp_tagstream_tick_ps(handle), 162);
        assert_eq!(pp_tagstream_span_ticks(handle), 10_000);
        assert_eq!(pp_tagstream_channel(handle), 3);
        let data = std::slice::from_raw_parts(pp_tagstream_data(handle), 4);
        assert_eq!(data, &tags[..]);
        pp_tagstream_free(handle);
    }
}

#[test]
fn unsorted_tags_are_a_format_error() {
    let tags: Vec<u64> = vec![20, 10];
    let mut handle: *mut PpTagStream = ptr::null_mut();
    let st = unsafe { pp_tagstream_new(tags.as_ptr(), tags.len(), 0, 162, 1000, &mut handle) };
    assert_eq!(st, PpStatus::FormatError);
    let msg = unsafe { CStr::from_ptr(pp_last_error_message()) };
    assert!(msg.to_string_lossy().contains("sorted"));
}

#[test]
fn null_pointers_are_rejected_not_crashed() {
    let st = unsafe { pp_tagstream_new(ptr::null(), 5, 0, 162, 1000, ptr::null_mut()) };
    assert_eq!(st, PpStatus::NullPointer);
    let mut out = f64::NAN;
    assert_eq!(unsafe { pp_effective_modes(2.0, &mut out) }, PpStatus::Ok);
    assert_eq!(out, 1.0);
    assert_eq!(unsafe { pp_effective_modes(0.5, &mut out) }, PpStatus::NumericalError);
}

#[test]
fn simulate_correlate_fit_through_the_abi() {
    let config = concat!(
        "duration_s = 20.0\n",
        "seed = 7\n",
        "[source]\n",
        "pair_rate_hz = 2e5\n",
        "gamma_per_s = 8.168e7\n",
        "[detectors.idler]\n",
        "efficiency = 1.0\n",
        "dead_time_s = 0.0\n",
        "tick_ps = 162\n",
        "[detectors.s1]\n",
        "efficiency = 1.0\n",
        "dead_time_s = 0.0\n",
        "tick_ps = 162\n",
        "[detectors.s2]\n",
        "efficiency = 1.0\n",
        "dead_time_s = 0.0\n",
        "tick_ps = 162\n",
        "\0"
    );
    let mut idler: *mut PpTagStream = ptr::null_mut();
    let mut s1: *mut PpTagStream = ptr::null_mut();
    let mut s2: *mut PpTagStream = ptr::null_mut();
    let st = unsafe {
        pp_simulate(config.as_ptr() as *const _, &mut idler, &mut s1, &mut s2)
    };
    status_ok(st);
    let n_i = unsafe { pp_tagstream_len(idler) };
    assert!((n_i as f64 - 4e6).abs() < 5.0 * 2e3, "idler count {n_i}");

    let mut curve: *mut PpG2Curve = ptr::null_mut();
    let st = unsafe { pp_cross_g2(s1, idler, 3e-9, 90e-9, 1, &mut curve) };
    status_ok(st);
    let n = unsafe { pp_g2_len(curve) };
    assert_eq!(n, 61);

    let mut fit = std::mem::MaybeUninit::<PpExpFit>::uninit();
    let st = unsafe { pp_fit_exponential(curve, false, 0.0, fit.as_mut_ptr()) };
    status_ok(st);
    let fit = unsafe { fit.assume_init() };
    assert!(fit.converged);
    let bw = fit.bandwidth_hz;
    assert!((bw - 13e6).abs() / 13e6 < 0.05, "bandwidth {bw}");
    assert!((fit.pair_rate_hz - 2e5).abs() / 2e5 < 0.10, "rate {}", fit.pair_rate_hz);

    // coincidences between the signal arm and the idler
    let mut co = 0u64;
    status_ok(unsafe { pp_coincidences(s1, idler, 30e-9, &mut co) });
    assert!(co > 0);

    unsafe {
        pp_g2_free(curve);
        pp_tagstream_free(idler);
        pp_tagstream_free(s1);
        pp_tagstream_free(s2);
    }
}

#[test]
fn resonator_helpers() {
    let mut bw = 0.0f64;
    status_ok(unsafe { pp_bandwidth_at_gap(1.9e-3, 0.24, 1.064e-6, 20e-9, &mut bw) });
    assert!(bw > 1e6 && bw < 1e9, "bandwidth {bw}");
    let mut detune = 0.0f64;
    status_ok(unsafe { pp_voltage_detune(4.0, &mut detune) });
    assert_eq!(detune, 150e6);
}
