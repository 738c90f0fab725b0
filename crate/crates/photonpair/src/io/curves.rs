//! CSV and JSON documents for correlation curves and fit reports.

use std::path::Path;

use serde::Serialize;

use crate::correlator::{CorrMode, Correlogram, G2Curve};
use crate::error::{Error, Result};
use crate::inference::ExpFit;
use crate::io::write_atomic;

/// CSV with one `tau_s,g2,stderr,counts` row per bin. The estimator mode
/// travels in a header comment so a re-read curve fits the same way.
pub fn write_g2_csv(path: &Path, curve: &G2Curve) -> Result<()> {
    let mut out = String::new();
    out.push_str("# photonpair-g2 v1\n");
    out.push_str(&format!(
        "# mode = {}\n",
        match curve.mode {
            CorrMode::StartStop => "start-stop",
            CorrMode::WindowedPairwise => "windowed-pairwise",
        }
    ));
    out.push_str("tau_s,g2,stderr,counts\n");
    for i in 0..curve.tau_s.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            curve.tau_s[i], curve.g2[i], curve.stderr[i], curve.counts[i]
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Read a g2 curve back from CSV.
pub fn read_g2_csv(path: &Path) -> Result<G2Curve> {
    let text = std::fs::read_to_string(path)?;
    let mut mode = CorrMode::WindowedPairwise;
    let mut curve = G2Curve {
        tau_s: Vec::new(),
        g2: Vec::new(),
        stderr: Vec::new(),
        counts: Vec::new(),
        mode,
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("tau_s") {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                if k.trim() == "mode" {
                    mode = match v.trim() {
                        "start-stop" => CorrMode::StartStop,
                        "windowed-pairwise" => CorrMode::WindowedPairwise,
                        other => {
                            return Err(Error::format(format!(
                                "{}: unknown mode '{other}'",
                                path.display()
                            )))
                        }
                    };
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::format(format!(
                "{}:{}: expected tau_s,g2,stderr[,counts]",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| {
                Error::format(format!("{}:{}: invalid {what}", path.display(), lineno + 1))
            })
        };
        curve.tau_s.push(parse(fields[0], "tau_s")?);
        curve.g2.push(parse(fields[1], "g2")?);
        curve.stderr.push(parse(fields[2], "stderr")?);
        curve.counts.push(if fields.len() > 3 {
            fields[3].trim().parse().unwrap_or(0)
        } else {
            0
        });
    }
    if curve.tau_s.is_empty() {
        return Err(Error::format(format!("{}: no data rows", path.display())));
    }
    curve.mode = mode;
    Ok(curve)
}

/// Full-fidelity JSON document around a correlogram and its curve.
#[derive(Serialize)]
pub struct G2Document<'a> {
    pub tool_version: &'static str,
    pub correlogram: &'a Correlogram,
    pub curve: &'a G2Curve,
}

pub fn write_g2_json(path: &Path, h: &Correlogram, curve: &G2Curve) -> Result<()> {
    let doc = G2Document { tool_version: crate::VERSION, correlogram: h, curve };
    write_json(path, &doc)
}

/// Fit report: fitted parameters plus the derived physical quantities.
#[derive(Serialize)]
pub struct FitReport {
    pub model: &'static str,
    pub amplitude: f64,
    pub decay_rate_per_s: f64,
    pub decay_time_s: f64,
    pub baseline: f64,
    /// Covariance over (amplitude, decay_rate, baseline).
    pub covariance: [[f64; 3]; 3],
    pub residual_norm: f64,
    pub n_points: usize,
    pub converged: bool,
    pub bandwidth_hz: f64,
    pub g2_zero: f64,
    /// Pair rate from the peak excess, when the excess is positive.
    pub pair_rate_hz: Option<f64>,
    /// Effective mode count 1/(g2(0)−1), when g2(0) > 1.
    pub effective_modes: Option<f64>,
}

impl FitReport {
    pub fn from_fit(fit: &ExpFit) -> Self {
        FitReport {
            model: "g2(tau) = baseline + amplitude * exp(-decay_rate * |tau|)",
            amplitude: fit.amplitude,
            decay_rate_per_s: fit.decay_rate_per_s,
            decay_time_s: fit.decay_time_s(),
            baseline: fit.baseline,
            covariance: fit.covariance,
            residual_norm: fit.residual_norm,
            n_points: fit.n_points,
            converged: fit.converged,
            bandwidth_hz: crate::inference::bandwidth_from_fit(fit),
            g2_zero: fit.peak(),
            pair_rate_hz: crate::inference::pair_rate_from_peak(fit).ok(),
            effective_modes: crate::inference::effective_modes(fit.peak()).ok(),
        }
    }
}

/// CSV of the fitted model sampled at the data's lag axis, for plotting.
pub fn write_fit_curve_csv(path: &Path, fit: &ExpFit, tau_s: &[f64]) -> Result<()> {
    let mut out = String::new();
    out.push_str("tau_s,g2_fit\n");
    for &t in tau_s {
        let v = fit.baseline + fit.amplitude * (-fit.decay_rate_per_s * t.abs()).exp();
        out.push_str(&format!("{t},{v}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Serialize any report as pretty JSON, atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(format!("json encoding: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g2_csv_round_trip() {
        let curve = G2Curve {
            tau_s: vec![-3e-9, 0.0, 3e-9],
            g2: vec![1.0, 2.5, 0.9993],
            stderr: vec![0.1, 0.2, 0.0993],
            counts: vec![100, 250, 99],
            mode: CorrMode::StartStop,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g2.csv");
        write_g2_csv(&path, &curve).unwrap();
        let back = read_g2_csv(&path).unwrap();
        assert_eq!(back.tau_s, curve.tau_s);
        assert_eq!(back.g2, curve.g2);
        assert_eq!(back.stderr, curve.stderr);
        assert_eq!(back.counts, curve.counts);
        assert_eq!(back.mode, curve.mode);
    }

    #[test]
    fn unreadable_csv_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g2.csv");
        std::fs::write(&path, "tau_s,g2,stderr\nnot,a,number\n").unwrap();
        assert!(matches!(read_g2_csv(&path), Err(Error::Format(_))));
    }
}
