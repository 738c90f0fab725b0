use photonpair::correlator::{CorrMode, CorrelogramConfig};
use photonpair::pipeline::run_herald_pipeline;
use photonpair::source::*;
use std::time::Instant;

fn main() {
    let det = DetectorParams { efficiency: 0.075, dead_time_s: 1e-5, dark_rate_hz: 0.0, tick_ps: 162 };
    let cfg = SimConfig {
        duration_s: 4096.0,
        seed: 1,
        source: SourceParams {
            pair_rate_hz: 4.9e4,
            gamma_per_s: 2.0 * std::f64::consts::PI * 13e6,
            n_modes: 1,
            gamma_auto_per_s: None,
            model: SourceModel::PairPoisson,
        },
        detectors: Detectors { idler: det, s1: det, s2: det },
        splitter_ratio: 0.5,
    };
    let ccfg = CorrelogramConfig { bin_width_s: 3e-9, max_lag_s: 30e-9, mode: CorrMode::WindowedPairwise };
    let t0 = Instant::now();
    let run = run_herald_pipeline(&cfg, 10e-9, &ccfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("span 4096 s in {dt:.2} s wall; triples {}; idler {}; per-1e6s extrapolation: {:.0} s",
        run.conditioned.heralded_triples, run.n_idler, dt * 1e6 / 4096.0);
}
