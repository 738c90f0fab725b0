//! Parameter extraction from correlation curves: exponential fits,
//! bandwidth, pair rate, effective mode number, and the linear
//! pump-conversion regression.

use serde::Serialize;

use crate::correlator::{CorrMode, G2Curve};
use crate::error::{Error, Result};
use crate::numeric::linear_fit;

/// Result of fitting B + A·exp(−λ|τ|) to a correlation curve.
#[derive(Debug, Clone, Serialize)]
pub struct ExpFit {
    pub amplitude: f64,
    /// Decay rate λ in 1/s.
    pub decay_rate_per_s: f64,
    pub baseline: f64,
    /// Parameter covariance over (amplitude, decay_rate, baseline).
    pub covariance: [[f64; 3]; 3],
    /// Square root of the weighted residual sum of squares.
    pub residual_norm: f64,
    pub n_points: usize,
    pub converged: bool,
}

impl ExpFit {
    pub fn decay_time_s(&self) -> f64 {
        1.0 / self.decay_rate_per_s
    }

    /// Model value at τ = 0.
    pub fn peak(&self) -> f64 {
        self.baseline + self.amplitude
    }
}

/// Weighted least-squares fit of B + A·exp(−λ|τ|).
///
/// Weights are 1/stderr²; bins with non-finite or non-positive stderr are
/// excluded. The central bin is excluded for start-stop curves (its count
/// is biased by the nearest-neighbour truncation) and included for pairwise
/// curves. With `fix_baseline` the baseline is pinned and only (A, λ) are
/// fitted.
///
/// The decay rate is found by variable projection: for each trial λ the
/// linear parameters solve exactly, and the profiled chi-square is
/// minimized over ln λ by golden-section search from a deterministic
/// initial guess (baseline from the outer-quartile median, rate from a
/// log-linear regression on the upper half of the peak).
pub fn fit_exponential(curve: &G2Curve, fix_baseline: Option<f64>) -> Result<ExpFit> {
    let exclude_central = curve.mode == CorrMode::StartStop;
    let mut tau = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let central = curve
        .tau_s
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i);
    for i in 0..curve.tau_s.len() {
        if exclude_central && Some(i) == central {
            continue;
        }
        let s = curve.stderr[i];
        if !s.is_finite() || s <= 0.0 {
            continue;
        }
        tau.push(curve.tau_s[i].abs());
        y.push(curve.g2[i]);
        w.push(1.0 / (s * s));
    }
    if tau.len() < 8 {
        return Err(Error::numerical(format!(
            "exponential fit needs at least 8 usable bins, got {}",
            tau.len()
        )));
    }

    let lambda0 = initial_decay_guess(&tau, &y).ok_or_else(|| {
        Error::numerical("could not form an initial decay-rate guess: curve has no peak")
    })?;

    // bracket the profiled chi-square minimum in ln(lambda)
    let chi2_of = |lambda: f64| -> f64 { project(&tau, &y, &w, lambda, fix_baseline).2 };
    let mut lo = lambda0 / 64.0;
    let mut hi = lambda0 * 64.0;
    for _ in 0..6 {
        let c_lo = chi2_of(lo);
        let c_hi = chi2_of(hi);
        let c_mid = chi2_of((lo * hi).sqrt());
        if c_mid <= c_lo && c_mid <= c_hi {
            break;
        }
        if c_lo < c_hi {
            lo /= 64.0;
        } else {
            hi *= 64.0;
        }
    }

    // golden-section search on ln(lambda)
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = chi2_of(c.exp());
    let mut fd = chi2_of(d.exp());
    let mut converged = false;
    for _ in 0..160 {
        if (b - a).abs() < 1e-12 {
            converged = true;
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = chi2_of(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = chi2_of(d.exp());
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "exponential fit did not converge (bracket [{:.3e}, {:.3e}] 1/s)",
            a.exp(),
            b.exp()
        )));
    }
    let lambda = ((a + b) / 2.0).exp();
    let (amp, base, chi2) = project(&tau, &y, &w, lambda, fix_baseline);
    if amp <= 0.0 {
        return Err(Error::numerical(format!(
            "fitted amplitude {amp:.3e} is not positive: curve is not exponentially peaked"
        )));
    }

    let covariance = covariance_at(&tau, &w, amp, lambda, fix_baseline.is_some())?;
    Ok(ExpFit {
        amplitude: amp,
        decay_rate_per_s: lambda,
        baseline: base,
        covariance,
        residual_norm: chi2.sqrt(),
        n_points: tau.len(),
        converged,
    })
}

/// Deterministic initial guess per the documented recipe.
fn initial_decay_guess(tau: &[f64], y: &[f64]) -> Option<f64> {
    let tau_max = tau.iter().cloned().fold(0.0f64, f64::max);
    let mut outer: Vec<f64> = tau
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= 0.75 * tau_max)
        .map(|(_, v)| *v)
        .collect();
    outer.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let b0 = if outer.is_empty() { 0.0 } else { outer[outer.len() / 2] };
    let peak = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let a0 = peak - b0;
    if !(a0 > 0.0) {
        return None;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in tau.iter().zip(y) {
        let excess = v - b0;
        if excess >= a0 / 2.0 && excess > 0.0 {
            xs.push(*t);
            ys.push(excess.ln());
        }
    }
    if xs.len() >= 2 {
        if let Some((slope, _, _, _, _)) = linear_fit(&xs, &ys) {
            if slope < 0.0 {
                return Some(-slope);
            }
        }
    }
    // fall back to the scale set by the lag axis
    Some(4.0 / tau_max)
}

/// Solve the linear parameters for a trial decay rate; returns
/// (amplitude, baseline, chi2).
fn project(tau: &[f64], y: &[f64], w: &[f64], lambda: f64, fix_baseline: Option<f64>) -> (f64, f64, f64) {
    let mut see = 0.0;
    let mut se = 0.0;
    let mut sw = 0.0;
    let mut sey = 0.0;
    let mut sy = 0.0;
    for i in 0..tau.len() {
        let e = (-lambda * tau[i]).exp();
        see += w[i] * e * e;
        se += w[i] * e;
        sw += w[i];
        sey += w[i] * e * y[i];
        sy += w[i] * y[i];
    }
    let (amp, base) = match fix_baseline {
        Some(b) => {
            let amp = if see > 0.0 { (sey - b * se) / see } else { 0.0 };
            (amp, b)
        }
        None => {
            let det = see * sw - se * se;
            if det.abs() < 1e-300 {
                (0.0, sy / sw.max(1e-300))
            } else {
                ((sey * sw - se * sy) / det, (see * sy - se * sey) / det)
            }
        }
    };
    let mut chi2 = 0.0;
    for i in 0..tau.len() {
        let r = y[i] - base - amp * (-lambda * tau[i]).exp();
        chi2 += w[i] * r * r;
    }
    (amp, base, chi2)
}

/// Covariance of (A, λ, B) from the weighted normal matrix at the optimum.
fn covariance_at(
    tau: &[f64],
    w: &[f64],
    amp: f64,
    lambda: f64,
    baseline_fixed: bool,
) -> Result<[[f64; 3]; 3]> {
    let mut m = [[0.0f64; 3]; 3];
    for i in 0..tau.len() {
        let e = (-lambda * tau[i]).exp();
        // d/dA, d/dλ, d/dB
        let j = [e, -amp * tau[i] * e, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += w[i] * j[r] * j[c];
            }
        }
    }
    if baseline_fixed {
        // remove the baseline row/column from the system
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::numerical("singular normal matrix in fit covariance"));
        }
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let mut cov = [[0.0; 3]; 3];
        cov[0][0] = inv[0][0];
        cov[0][1] = inv[0][1];
        cov[1][0] = inv[1][0];
        cov[1][1] = inv[1][1];
        return Ok(cov);
    }
    invert3(&m).ok_or_else(|| Error::numerical("singular normal matrix in fit covariance"))
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0f64; 3]; 3];
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Some(out)
}

/// Photon bandwidth Δν = λ/(2π) from a cross-correlation fit.
pub fn bandwidth_from_fit(fit: &ExpFit) -> f64 {
    fit.decay_rate_per_s / (2.0 * std::f64::consts::PI)
}

/// Pair rate from the fitted peak excess: A = γ/(2R) inverted to
/// R = λ/(2A).
pub fn pair_rate_from_peak(fit: &ExpFit) -> Result<f64> {
    if fit.amplitude <= 0.0 {
        return Err(Error::numerical(
            "no positive correlation excess: pair rate undefined",
        ));
    }
    Ok(fit.decay_rate_per_s / (2.0 * fit.amplitude))
}

/// Effective mode number n = 1/(g2(0) − 1).
pub fn effective_modes(g2_zero: f64) -> Result<f64> {
    if !(g2_zero > 1.0) {
        return Err(Error::numerical(format!(
            "g2(0) = {g2_zero} is not above 1: signal is Poissonian or sub-Poissonian, mode count undefined"
        )));
    }
    Ok(1.0 / (g2_zero - 1.0))
}

/// Linear pump-conversion fit.
#[derive(Debug, Clone, Serialize)]
pub struct PumpConversionFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
    /// Coincidence slope corrected by the pair detection efficiency.
    pub pair_rate_per_unit_power: f64,
}

/// Default pair detection efficiency: two detectors at 7.5% each.
pub const DEFAULT_PAIR_EFFICIENCY: f64 = 0.075 * 0.075;

/// Ordinary least squares of coincidence rate versus pump power; the
/// inferred pair production rate per unit power is slope / eta_pair.
pub fn pump_conversion_fit(points: &[(f64, f64)], eta_pair: f64) -> Result<PumpConversionFit> {
    if points.len() < 3 {
        return Err(Error::config("pump conversion fit needs at least 3 points"));
    }
    if !(eta_pair > 0.0) {
        return Err(Error::config("eta_pair must be > 0"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept, se_s, se_i, r2) =
        linear_fit(&xs, &ys).ok_or_else(|| Error::numerical("pump powers are rank-deficient"))?;
    Ok(PumpConversionFit {
        slope,
        intercept,
        slope_stderr: se_s,
        intercept_stderr: se_i,
        r_squared: r2,
        pair_rate_per_unit_power: slope / eta_pair,
    })
}

/// Source parameters inferred from the fitted curves.
#[derive(Debug, Clone, Serialize)]
pub struct SourceEstimate {
    pub bandwidth_hz: f64,
    pub pair_rate_hz: f64,
    /// Real-valued effective mode count; round only for human-readable
    /// reports.
    pub n_modes_effective: f64,
    /// Autocorrelation decay time over cross-correlation decay time.
    pub decay_ratio: f64,
}

impl SourceEstimate {
    pub fn from_fits(cross: &ExpFit, auto: &ExpFit, g2_ss_zero: f64) -> Result<SourceEstimate> {
        Ok(SourceEstimate {
            bandwidth_hz: bandwidth_from_fit(cross),
            pair_rate_hz: pair_rate_from_peak(cross)?,
            n_modes_effective: effective_modes(g2_ss_zero)?,
            decay_ratio: cross.decay_rate_per_s / auto.decay_rate_per_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic_curve(b: f64, a: f64, lambda: f64, mode: CorrMode) -> G2Curve {
        let bin = 3e-9;
        let half = 50i64;
        let tau: Vec<f64> = (-half..=half).map(|k| k as f64 * bin).collect();
        let g2: Vec<f64> = tau.iter().map(|t| b + a * (-lambda * t.abs()).exp()).collect();
        let n = tau.len();
        G2Curve {
            tau_s: tau,
            g2,
            stderr: vec![1.0; n],
            counts: vec![0; n],
            mode,
        }
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        let curve = synthetic_curve(1.0, 3.14, 8.168e7, CorrMode::WindowedPairwise);
        let fit = fit_exponential(&curve, None).unwrap();
        assert_relative_eq!(fit.baseline, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude, 3.14, max_relative = 1e-6);
        assert_relative_eq!(fit.decay_rate_per_s, 8.168e7, max_relative = 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn fixed_baseline_round_trip() {
        let curve = synthetic_curve(1.0, 2.0, 4.524e7, CorrMode::WindowedPairwise);
        let fit = fit_exponential(&curve, Some(1.0)).unwrap();
        assert_eq!(fit.baseline, 1.0);
        assert_relative_eq!(fit.amplitude, 2.0, max_relative = 1e-6);
        assert_relative_eq!(fit.decay_rate_per_s, 4.524e7, max_relative = 1e-6);
    }

    #[test]
    fn start_stop_mode_excludes_central_bin() {
        // corrupt the central bin; a start-stop fit must not care
        let mut curve = synthetic_curve(1.0, 3.0, 5e7, CorrMode::StartStop);
        let central = curve.tau_s.len() / 2;
        curve.g2[central] = 100.0;
        let fit = fit_exponential(&curve, None).unwrap();
        assert_relative_eq!(fit.decay_rate_per_s, 5e7, max_relative = 1e-6);
    }

    #[test]
    fn too_few_bins_rejected() {
        let mut curve = synthetic_curve(1.0, 1.0, 1e7, CorrMode::WindowedPairwise);
        curve.tau_s.truncate(5);
        curve.g2.truncate(5);
        curve.stderr.truncate(5);
        assert!(matches!(fit_exponential(&curve, None), Err(Error::Numerical(_))));
    }

    #[test]
    fn flat_curve_has_no_positive_amplitude() {
        let curve = synthetic_curve(1.0, 0.0, 1e7, CorrMode::WindowedPairwise);
        assert!(fit_exponential(&curve, None).is_err());
    }

    #[test]
    fn scale_consistency() {
        let curve = synthetic_curve(1.0, 2.5, 3e7, CorrMode::WindowedPairwise);
        let mut scaled = curve.clone();
        for v in &mut scaled.g2 {
            *v *= 4.0;
        }
        for s in &mut scaled.stderr {
            *s *= 2.0;
        }
        let f1 = fit_exponential(&curve, None).unwrap();
        let f2 = fit_exponential(&scaled, None).unwrap();
        assert_relative_eq!(f1.decay_rate_per_s, f2.decay_rate_per_s, max_relative = 1e-9);
        assert_relative_eq!(f2.amplitude, 4.0 * f1.amplitude, max_relative = 1e-9);
    }

    #[test]
    fn bandwidth_arithmetic() {
        let mk = |lambda: f64| ExpFit {
            amplitude: 1.0,
            decay_rate_per_s: lambda,
            baseline: 1.0,
            covariance: [[0.0; 3]; 3],
            residual_norm: 0.0,
            n_points: 0,
            converged: true,
        };
        assert_relative_eq!(bandwidth_from_fit(&mk(2.0 * std::f64::consts::PI * 1e6)), 1e6, max_relative = 1e-12);
        assert_relative_eq!(bandwidth_from_fit(&mk(8.168e7)), 13.0e6, max_relative = 1e-4);
        assert_relative_eq!(bandwidth_from_fit(&mk(4.524e7)), 7.2e6, max_relative = 1e-4);
    }

    #[test]
    fn pair_rate_inversion() {
        let gamma = 8.168e7;
        let r_true = 1.3e7;
        let fit = ExpFit {
            amplitude: gamma / (2.0 * r_true),
            decay_rate_per_s: gamma,
            baseline: 1.0,
            covariance: [[0.0; 3]; 3],
            residual_norm: 0.0,
            n_points: 0,
            converged: true,
        };
        assert_relative_eq!(fit.amplitude, 3.141, max_relative = 1e-3);
        assert_relative_eq!(pair_rate_from_peak(&fit).unwrap(), r_true, max_relative = 1e-12);

        let fit2 = ExpFit { amplitude: 0.5, decay_rate_per_s: 1e6, ..fit.clone() };
        assert_relative_eq!(pair_rate_from_peak(&fit2).unwrap(), 1e6, max_relative = 1e-12);

        let bad = ExpFit { amplitude: -0.1, ..fit };
        assert!(pair_rate_from_peak(&bad).is_err());
    }

    #[test]
    fn effective_mode_examples() {
        assert_relative_eq!(effective_modes(2.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(effective_modes(1.35).unwrap(), 2.857, max_relative = 1e-3);
        assert_relative_eq!(effective_modes(1.5).unwrap(), 2.0, max_relative = 1e-12);
        assert!(effective_modes(1.0).is_err());
        assert!(effective_modes(0.7).is_err());
    }

    #[test]
    fn effective_modes_identity_and_monotonicity() {
        for n in [0.5, 1.0, 2.0, 3.0, 7.5, 64.0] {
            assert_relative_eq!(effective_modes(1.0 + 1.0 / n).unwrap(), n, max_relative = 1e-12);
        }
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let g = 1.0 + k as f64 * 0.05;
            let n = effective_modes(g).unwrap();
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn pump_fit_exact_line_through_origin() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&p| (p, 42.0 * p)).collect();
        let fit = pump_conversion_fit(&pts, 0.075 * 0.075).unwrap();
        assert_relative_eq!(fit.slope, 42.0, max_relative = 1e-12);
        assert!(fit.intercept.abs() < 1e-9);
        assert_relative_eq!(fit.pair_rate_per_unit_power, 42.0 / 5.625e-3, max_relative = 1e-12);
    }

    #[test]
    fn pump_fit_headline_rate() {
        // slope chosen so the corrected rate is 1.3e7 pairs/s per mW
        let slope = 1.3e7 * DEFAULT_PAIR_EFFICIENCY;
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0].iter().map(|&p| (p, slope * p)).collect();
        let fit = pump_conversion_fit(&pts, DEFAULT_PAIR_EFFICIENCY).unwrap();
        assert_relative_eq!(fit.pair_rate_per_unit_power, 1.3e7, max_relative = 1e-9);
    }

    #[test]
    fn pump_fit_rejects_degenerate_input() {
        let pts = [(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)];
        assert!(pump_conversion_fit(&pts, 1.0).is_err());
        let pts = [(1.0, 2.0), (2.0, 3.0)];
        assert!(pump_conversion_fit(&pts, 1.0).is_err());
    }
}
