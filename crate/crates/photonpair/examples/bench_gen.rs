use photonpair::source::*;
use photonpair::pipeline::FusedDetectedSim;
use std::time::Instant;

fn main() {
    let det = DetectorParams { efficiency: 0.075, dead_time_s: 1e-5, dark_rate_hz: 0.0, tick_ps: 162 };
    let cfg = SimConfig {
        duration_s: 8192.0,
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
    // generation + seal only, no herald scan
    let t0 = Instant::now();
    let mut sim = FusedDetectedSim::new(&cfg).unwrap();
    let mut n = 0u64;
    while let Some(w) = sim.next_window() {
        n += w.channels.iter().map(|c| c.len() as u64).sum::<u64>();
    }
    println!("generation+seal: {:.2} s, {} events", t0.elapsed().as_secs_f64(), n);
}
