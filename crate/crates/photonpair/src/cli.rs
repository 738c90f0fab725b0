//! Command-line front end: simulate → detect → correlate → fit → report,
//! plus the resonator design-curve emitters.
//!
//! Every command writes its data outputs atomically and finishes with a
//! manifest carrying content digests, so reproducibility is checkable.
//! Exit codes: 0 success, 2 configuration error, 3 format error,
//! 4 numerical error, 5 I/O error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::correlator::{
    auto_correlogram, coincidences, conditioned_g2, cross_correlogram, normalize_g2, CorrMode,
    CorrelogramConfig,
};
use crate::error::{Error, Result};
use crate::inference::{fit_exponential, pump_conversion_fit};
use crate::io::curves::{
    read_g2_csv, write_fit_curve_csv, write_g2_csv, write_g2_json, write_json, FitReport,
};
use crate::io::manifest::RunManifest;
use crate::io::tagfile::{read_tags_auto, write_tag_csv, write_tag_file};
use crate::resonator::{
    bandwidth_of, bandwidth_vs_gap, bandwidth_vs_radius, degeneracy_temperature, phase_match_solve,
    pump_mode_near, q_absorption, q_coupling, q_total, voltage_detune, CouplingState, ModeIndex,
    PhaseMatchOptions, ResonatorSpec, C_LIGHT,
};
use crate::source::{apply_detector, derive_seed, simulate, split_beam, SimConfig};
use crate::tags::TagStream;

#[derive(Parser)]
#[command(
    name = "photonpair",
    version,
    about = "Simulate and analyze cavity-assisted photon-pair sources",
    long_about = None
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write one tag file per channel (idler, s1, s2).
    Simulate(SimulateArgs),
    /// Compute a cross- or auto-correlogram and its normalized g2 curve.
    Correlate(CorrelateArgs),
    /// Heralded (idler-conditioned) autocorrelation of the signal arms.
    Herald(HeraldArgs),
    /// Fit an exponential correlation model to a g2 CSV.
    Fit(FitArgs),
    /// Resonator design curves: Q budget, bandwidth and tuning sweeps.
    Design(DesignArgs),
    /// Sweep pump power, count coincidences, and fit the linear conversion.
    PumpScan(PumpScanArgs),
    /// Convert tag files between the binary and CSV formats.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TagFormat {
    Binary,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    StartStop,
    WindowedPairwise,
}

impl From<ModeArg> for CorrMode {
    fn from(m: ModeArg) -> CorrMode {
        match m {
            ModeArg::StartStop => CorrMode::StartStop,
            ModeArg::WindowedPairwise => CorrMode::WindowedPairwise,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: TagFormat,
}

#[derive(Args)]
struct CorrelateArgs {
    /// First (start) tag file.
    #[arg(long)]
    a: PathBuf,
    /// Channel id within the first file; defaults to its first channel.
    #[arg(long)]
    channel_a: Option<u8>,
    /// Second (stop) tag file; omit for an autocorrelation of --a.
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    channel_b: Option<u8>,
    /// Histogram bin width in seconds.
    #[arg(long, default_value_t = 3e-9)]
    bin_s: f64,
    /// Maximum lag in seconds.
    #[arg(long, default_value_t = 90e-9)]
    max_lag_s: f64,
    #[arg(long, value_enum, default_value = "start-stop")]
    mode: ModeArg,
    /// Output prefix; writes <prefix>.csv, <prefix>.json, <prefix>.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeraldArgs {
    #[arg(long)]
    s1: PathBuf,
    #[arg(long)]
    s2: PathBuf,
    #[arg(long)]
    idler: PathBuf,
    /// Heralding half-width tau_h in seconds; the window is [-tau_h, tau_h].
    #[arg(long, default_value_t = 10e-9)]
    herald_halfwidth_s: f64,
    #[arg(long, default_value_t = 3e-9)]
    bin_s: f64,
    #[arg(long, default_value_t = 30e-9)]
    max_lag_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input g2 curve (CSV as written by correlate/herald).
    #[arg(long)]
    input: PathBuf,
    /// Pin the baseline instead of fitting it (e.g. 1.0 for normalized curves).
    #[arg(long)]
    fix_baseline: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// Resonator spec (TOML); defaults to the built-in 1.9 mm disk.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Dispersion coefficient file; defaults to the bundled table.
    #[arg(long)]
    dispersion: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(subcommand)]
    action: DesignAction,
}

#[derive(Subcommand)]
enum DesignAction {
    /// Q-factor budget and bandwidth at one coupling point.
    QPoint {
        #[arg(long, default_value_t = 20e-9)]
        gap_m: f64,
        #[arg(long, default_value_t = 1.064e-6)]
        lambda_m: f64,
    },
    /// Bandwidth versus prism gap.
    GapSweep {
        #[arg(long, default_value_t = 0.0)]
        from_m: f64,
        #[arg(long, default_value_t = 500e-9)]
        to_m: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value_t = 1.064e-6)]
        lambda_m: f64,
    },
    /// Bandwidth versus resonator radius at a fixed gap.
    RadiusSweep {
        #[arg(long, default_value_t = 20e-9)]
        gap_m: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5e-3,1.0e-3,1.9e-3,3.0e-3")]
        radii_m: Vec<f64>,
        #[arg(long, default_value_t = 1.064e-6)]
        lambda_m: f64,
    },
    /// Find the degenerate phase-matching temperature.
    Degeneracy {
        #[arg(long, default_value_t = 532e-9)]
        pump_lambda_m: f64,
        #[arg(long, default_value_t = 20.0)]
        t_lo_c: f64,
        #[arg(long, default_value_t = 120.0)]
        t_hi_c: f64,
    },
    /// Signal/idler wavelengths versus temperature.
    TemperatureSweep {
        #[arg(long)]
        from_c: f64,
        #[arg(long)]
        to_c: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        #[arg(long, default_value_t = 532e-9)]
        pump_lambda_m: f64,
        #[arg(long, default_value_t = 1)]
        q_max: u32,
        #[arg(long, default_value_t = 0)]
        p_max: u32,
        /// Resonance tolerance; defaults to the intrinsic-linewidth rule.
        #[arg(long)]
        tolerance_hz: Option<f64>,
    },
    /// Electro-optic detuning at a bias voltage.
    Voltage {
        #[arg(long)]
        volts: f64,
    },
}

#[derive(Args)]
struct PumpScanArgs {
    /// Run configuration (TOML); its pair_rate_hz is the rate at 1 mW.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,2.0,4.0")]
    powers_mw: Vec<f64>,
    /// Full coincidence window in seconds.
    #[arg(long, default_value_t = 30e-9)]
    window_s: f64,
    /// Idler shift used to estimate accidental coincidences.
    #[arg(long, default_value_t = 2e-6)]
    accidental_shift_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    format: TagFormat,
}

/// Parse arguments from the process environment and run; returns the exit
/// code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PHOTONPAIR_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("photonpair: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Herald(a) => cmd_herald(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Design(a) => cmd_design(a),
        Command::PumpScan(a) => cmd_pump_scan(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

fn load_sim_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    crate::source::parse_sim_config(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Derived seed labels for the independent random stages of one run.
const SEED_SPLIT: u64 = 0x53504c49;
const SEED_DET_IDLER: u64 = 0x44455430;
const SEED_DET_S1: u64 = 0x44455431;
const SEED_DET_S2: u64 = 0x44455432;

/// Simulate, split the signal arm, apply the per-channel detectors, and
/// return the detected (idler, s1, s2) streams with channels 0, 1, 2.
pub fn simulate_detected(cfg: &SimConfig) -> Result<[TagStream; 3]> {
    let (signal, idler) = simulate(cfg)?;
    let (s1, s2) = split_beam(&signal, cfg.splitter_ratio, derive_seed(cfg.seed, SEED_SPLIT))?;
    let mut idler = apply_detector(&idler, &cfg.detectors.idler, derive_seed(cfg.seed, SEED_DET_IDLER))?;
    let mut s1 = apply_detector(&s1, &cfg.detectors.s1, derive_seed(cfg.seed, SEED_DET_S1))?;
    let mut s2 = apply_detector(&s2, &cfg.detectors.s2, derive_seed(cfg.seed, SEED_DET_S2))?;
    idler.channel = 0;
    s1.channel = 1;
    s2.channel = 2;
    Ok([idler, s1, s2])
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = load_sim_config(&args.config)?;
    let [idler, s1, s2] = simulate_detected(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    let ext = match args.format {
        TagFormat::Binary => "ptag",
        TagFormat::Csv => "csv",
    };
    let mut manifest = RunManifest::new("simulate").with_config(&cfg);
    manifest.seed = Some(cfg.seed);
    manifest.add_input(&args.config)?;
    for (name, stream) in [("idler", &idler), ("s1", &s1), ("s2", &s2)] {
        let path = args.out.join(format!("{name}.{ext}"));
        match args.format {
            TagFormat::Binary => write_tag_file(&path, &[stream])?,
            TagFormat::Csv => write_tag_csv(&path, &[stream])?,
        }
        manifest.add_output(&path)?;
        log::info!("{}: {} tags", path.display(), stream.len());
    }
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.join("manifest.json"))?;
    println!(
        "simulate: {} idler, {} s1, {} s2 tags over {} s",
        idler.len(),
        s1.len(),
        s2.len(),
        cfg.duration_s
    );
    Ok(())
}

fn read_channel(path: &Path, channel: Option<u8>) -> Result<TagStream> {
    let streams = read_tags_auto(path)?;
    match channel {
        None => streams.into_iter().next().ok_or_else(|| {
            Error::format(format!("{}: no channels in file", path.display()))
        }),
        Some(ch) => streams
            .into_iter()
            .find(|s| s.channel == ch)
            .ok_or_else(|| Error::format(format!("{}: no channel {ch}", path.display()))),
    }
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = CorrelogramConfig {
        bin_width_s: args.bin_s,
        max_lag_s: args.max_lag_s,
        mode: args.mode.into(),
    };
    cfg.validate()?;
    let a = read_channel(&args.a, args.channel_a)?;
    let hist = match &args.b {
        Some(bpath) => {
            let b = read_channel(bpath, args.channel_b)?;
            cross_correlogram(&a, &b, &cfg)?
        }
        None => auto_correlogram(&a, &cfg)?,
    };
    let curve = normalize_g2(&hist)?;
    let csv = args.out.with_extension("csv");
    let json = args.out.with_extension("json");
    write_g2_csv(&csv, &curve)?;
    write_g2_json(&json, &hist, &curve)?;
    let mut manifest = RunManifest::new("correlate").with_config(&cfg);
    manifest.add_input(&args.a)?;
    if let Some(b) = &args.b {
        manifest.add_input(b)?;
    }
    manifest.add_output(&csv)?;
    manifest.add_output(&json)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "correlate: {} coincidences across {} bins -> {}",
        hist.counts.iter().sum::<u64>(),
        hist.counts.len(),
        csv.display()
    );
    Ok(())
}

fn cmd_herald(args: HeraldArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = CorrelogramConfig {
        bin_width_s: args.bin_s,
        max_lag_s: args.max_lag_s,
        mode: CorrMode::WindowedPairwise,
    };
    let s1 = read_channel(&args.s1, None)?;
    let s2 = read_channel(&args.s2, None)?;
    let idler = read_channel(&args.idler, None)?;
    let out = conditioned_g2(&s1, &s2, &idler, args.herald_halfwidth_s, &cfg)?;
    if out.heralded_triples == 0 {
        log::warn!("no heralded triples found; the conditioned curve is zero");
        eprintln!("photonpair: warning: no heralded triples in these streams");
    }
    let csv = args.out.with_extension("csv");
    write_g2_csv(&csv, &out.curve)?;
    let json = args.out.with_extension("json");
    #[derive(Serialize)]
    struct HeraldDoc<'a> {
        tool_version: &'static str,
        herald_halfwidth_s: f64,
        heralded_triples: u64,
        curve: &'a crate::correlator::G2Curve,
        surface: &'a crate::correlator::ConditionedSurface,
    }
    write_json(
        &json,
        &HeraldDoc {
            tool_version: crate::VERSION,
            herald_halfwidth_s: args.herald_halfwidth_s,
            heralded_triples: out.heralded_triples,
            curve: &out.curve,
            surface: &out.surface,
        },
    )?;
    let mut manifest = RunManifest::new("herald").with_config(&cfg);
    for p in [&args.s1, &args.s2, &args.idler] {
        manifest.add_input(p)?;
    }
    manifest.add_output(&csv)?;
    manifest.add_output(&json)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.with_extension("manifest.json"))?;
    let central = out
        .curve
        .tau_s
        .iter()
        .position(|&t| t.abs() < args.bin_s / 2.0)
        .map(|i| out.curve.g2[i]);
    println!(
        "herald: {} triples, g2c(0) = {}",
        out.heralded_triples,
        central.map_or("n/a".to_string(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let started = Instant::now();
    let curve = read_g2_csv(&args.input)?;
    let fit = fit_exponential(&curve, args.fix_baseline)?;
    let report = FitReport::from_fit(&fit);
    let json = args.out.with_extension("json");
    write_json(&json, &report)?;
    let fitted = args.out.with_extension("fit.csv");
    write_fit_curve_csv(&fitted, &fit, &curve.tau_s)?;
    let mut manifest = RunManifest::new("fit").with_config(&serde_json::json!({
        "fix_baseline": args.fix_baseline,
    }));
    manifest.add_input(&args.input)?;
    manifest.add_output(&json)?;
    manifest.add_output(&fitted)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "fit: bandwidth {:.4} MHz, decay time {:.2} ns, g2(0) {:.4}{}",
        report.bandwidth_hz / 1e6,
        report.decay_time_s * 1e9,
        report.g2_zero,
        report
            .effective_modes
            .map(|n| format!(", {:.2} effective modes (~{})", n, n.round() as i64))
            .unwrap_or_default()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct RawResonatorSpec {
    radius_m: f64,
    absorption_per_m: f64,
    #[serde(default = "default_expansion")]
    thermal_expansion_per_k: f64,
    #[serde(default = "default_ref_temp")]
    reference_temp_c: f64,
    #[serde(default)]
    kappa_convention: crate::resonator::KappaConvention,
    resonator_material: String,
    pump_material: String,
    prism_material: String,
}

fn default_expansion() -> f64 {
    1.54e-5
}

fn default_ref_temp() -> f64 {
    25.0
}

fn load_resonator_spec(args: &DesignArgs) -> Result<ResonatorSpec> {
    let table = match &args.dispersion {
        Some(p) => crate::dispersion::DispersionTable::from_path(p)?,
        None => crate::dispersion::DispersionTable::bundled(),
    };
    match &args.spec {
        None => Ok(ResonatorSpec::default_disk()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let raw: RawResonatorSpec = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let spec = ResonatorSpec {
                radius_m: raw.radius_m,
                absorption_per_m: raw.absorption_per_m,
                thermal_expansion_per_k: raw.thermal_expansion_per_k,
                reference_temp_c: raw.reference_temp_c,
                kappa_convention: raw.kappa_convention,
                resonator_material: table.get(&raw.resonator_material)?.clone(),
                pump_material: table.get(&raw.pump_material)?.clone(),
                prism_material: table.get(&raw.prism_material)?.clone(),
            };
            spec.validate()?;
            Ok(spec)
        }
    }
}

fn cmd_design(args: DesignArgs) -> Result<()> {
    let started = Instant::now();
    let spec = load_resonator_spec(&args)?;
    let mut manifest = RunManifest::new("design");
    if let Some(p) = &args.spec {
        manifest.add_input(p)?;
    }
    let mut outputs: Vec<PathBuf> = Vec::new();
    match &args.action {
        DesignAction::QPoint { gap_m, lambda_m } => {
            let t = spec.reference_temp_c;
            let q_a = q_absorption(&spec, *lambda_m, t)?;
            let q_c = q_coupling(&spec, &CouplingState { gap_m: *gap_m, lambda_m: *lambda_m })?;
            let q = q_total(&[q_a, q_c])?;
            let bw = bandwidth_of(q, C_LIGHT / lambda_m);
            let doc = serde_json::json!({
                "lambda_m": lambda_m,
                "gap_m": gap_m,
                "q_absorption": q_a,
                "q_coupling": q_c,
                "q_total": q,
                "bandwidth_hz": bw,
            });
            let path = args.out.with_extension("json");
            write_json(&path, &doc)?;
            outputs.push(path);
            println!(
                "q-point: Q_a {q_a:.4e}, Q_c {q_c:.4e}, Q {q:.4e}, bandwidth {:.3} MHz",
                bw / 1e6
            );
        }
        DesignAction::GapSweep { from_m, to_m, points, lambda_m } => {
            if *points < 2 || to_m <= from_m {
                return Err(Error::config("gap sweep needs points >= 2 and to > from"));
            }
            let gaps: Vec<f64> = (0..*points)
                .map(|i| from_m + (to_m - from_m) * i as f64 / (*points as f64 - 1.0))
                .collect();
            let curve = bandwidth_vs_gap(&spec, *lambda_m, &gaps)?;
            let mut csv = String::from("gap_m,bandwidth_hz\n");
            for (d, bw) in &curve {
                csv.push_str(&format!("{d},{bw}\n"));
            }
            let path = args.out.with_extension("csv");
            crate::io::write_atomic(&path, csv.as_bytes())?;
            outputs.push(path);
            println!(
                "gap-sweep: bandwidth {:.3} -> {:.3} MHz over {} points",
                curve.first().unwrap().1 / 1e6,
                curve.last().unwrap().1 / 1e6,
                curve.len()
            );
        }
        DesignAction::RadiusSweep { gap_m, radii_m, lambda_m } => {
            let curve = bandwidth_vs_radius(&spec, *lambda_m, *gap_m, radii_m)?;
            let mut csv = String::from("radius_m,bandwidth_hz\n");
            for (a, bw) in &curve {
                csv.push_str(&format!("{a},{bw}\n"));
            }
            let path = args.out.with_extension("csv");
            crate::io::write_atomic(&path, csv.as_bytes())?;
            outputs.push(path);
            println!("radius-sweep: {} points at gap {gap_m} m", curve.len());
        }
        DesignAction::Degeneracy { pump_lambda_m, t_lo_c, t_hi_c } => {
            let t_probe = 0.5 * (t_lo_c + t_hi_c);
            let pump = even_pump_mode(&spec, *pump_lambda_m, t_probe)?;
            let (t_star, half) = degeneracy_temperature(&spec, &pump, 1, *t_lo_c, *t_hi_c)?;
            let doc = serde_json::json!({
                "pump_mode_m": pump.m,
                "parametric_mode_m": half.m,
                "degeneracy_temp_c": t_star,
            });
            let path = args.out.with_extension("json");
            write_json(&path, &doc)?;
            outputs.push(path);
            println!("degeneracy: T = {t_star:.4} C (pump m = {}, half m = {})", pump.m, half.m);
        }
        DesignAction::TemperatureSweep {
            from_c,
            to_c,
            points,
            pump_lambda_m,
            q_max,
            p_max,
            tolerance_hz,
        } => {
            if *points < 2 || to_c <= from_c {
                return Err(Error::config("temperature sweep needs points >= 2 and to > from"));
            }
            let pump = even_pump_mode(&spec, *pump_lambda_m, 0.5 * (from_c + to_c))?;
            let opts = PhaseMatchOptions {
                q_max: *q_max,
                p_max: *p_max,
                tolerance_hz: *tolerance_hz,
                ..PhaseMatchOptions::default()
            };
            let mut csv = String::from("temp_c,lambda_signal_m,lambda_idler_m,residual_hz\n");
            let mut solved = 0usize;
            for i in 0..*points {
                let t = from_c + (to_c - from_c) * i as f64 / (*points as f64 - 1.0);
                match phase_match_solve(&spec, t, &pump, &opts) {
                    Ok(pm) => {
                        solved += 1;
                        csv.push_str(&format!(
                            "{t},{},{},{}\n",
                            pm.lambda_signal_m, pm.lambda_idler_m, pm.residual_hz
                        ));
                    }
                    Err(Error::Numerical(_)) => {
                        log::info!("no phase match at {t} C");
                    }
                    Err(e) => return Err(e),
                }
            }
            let path = args.out.with_extension("csv");
            crate::io::write_atomic(&path, csv.as_bytes())?;
            outputs.push(path);
            println!("temperature-sweep: {solved}/{points} points solved (pump m = {})", pump.m);
        }
        DesignAction::Voltage { volts } => {
            let detune = voltage_detune(*volts)?;
            let doc = serde_json::json!({ "volts": volts, "detuning_hz": detune });
            let path = args.out.with_extension("json");
            write_json(&path, &doc)?;
            outputs.push(path);
            println!("voltage: {volts} V -> {:.3} MHz", detune / 1e6);
        }
    }
    for p in &outputs {
        manifest.add_output(p)?;
    }
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.with_extension("manifest.json"))?;
    Ok(())
}

/// Pump mode nearest the target wavelength with an even azimuthal number,
/// so the degenerate half-frequency pair exists.
fn even_pump_mode(spec: &ResonatorSpec, lambda_m: f64, temp_c: f64) -> Result<ModeIndex> {
    let mut mode = pump_mode_near(spec, lambda_m, 1, temp_c)?;
    if mode.m % 2 != 0 {
        mode.m += 1;
    }
    Ok(mode)
}

fn cmd_pump_scan(args: PumpScanArgs) -> Result<()> {
    let started = Instant::now();
    let base = load_sim_config(&args.config)?;
    if args.powers_mw.iter().any(|&p| p < 0.0) {
        return Err(Error::config("powers must be >= 0"));
    }
    let eta_pair = base.detectors.idler.efficiency
        * (base.splitter_ratio * base.detectors.s1.efficiency
            + (1.0 - base.splitter_ratio) * base.detectors.s2.efficiency);
    let mut rows = Vec::new();
    for (i, &power) in args.powers_mw.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.source.pair_rate_hz = base.source.pair_rate_hz * power;
        cfg.seed = derive_seed(base.seed, 0x5057 + i as u64);
        let [idler, s1, s2] = simulate_detected(&cfg)?;
        let co = coincidences(&idler, &s1, args.window_s)? + coincidences(&idler, &s2, args.window_s)?;
        let shifted = shift_stream(&idler, args.accidental_shift_s)?;
        let acc =
            coincidences(&shifted, &s1, args.window_s)? + coincidences(&shifted, &s2, args.window_s)?;
        let rate = co as f64 / cfg.duration_s;
        let corrected = (co as f64 - acc as f64) / cfg.duration_s;
        rows.push((power, co, acc, rate, corrected));
        log::info!("power {power} mW: {co} coincidences, {acc} accidentals");
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.4)).collect();
    let fit = pump_conversion_fit(&points, eta_pair)?;
    let mut csv =
        String::from("power_mw,coincidences,accidentals,rate_hz,accidental_corrected_rate_hz\n");
    for (p, co, acc, rate, corr) in &rows {
        csv.push_str(&format!("{p},{co},{acc},{rate},{corr}\n"));
    }
    let csv_path = args.out.with_extension("csv");
    crate::io::write_atomic(&csv_path, csv.as_bytes())?;
    let json_path = args.out.with_extension("json");
    write_json(&json_path, &fit)?;
    let mut manifest = RunManifest::new("pump-scan").with_config(&base);
    manifest.seed = Some(base.seed);
    manifest.add_input(&args.config)?;
    manifest.add_output(&csv_path)?;
    manifest.add_output(&json_path)?;
    manifest.elapsed_s = started.elapsed().as_secs_f64();
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "pump-scan: slope {:.4e} coincidences/s/mW, intercept {:.3} ± {:.3}, corrected pair rate {:.4e} pairs/s/mW",
        fit.slope, fit.intercept, fit.intercept_stderr, fit.pair_rate_per_unit_power
    );
    Ok(())
}

/// Shift a stream forward in time, dropping tags pushed past the span.
fn shift_stream(s: &TagStream, shift_s: f64) -> Result<TagStream> {
    let shift_ticks = (shift_s / s.tick_seconds()).round() as u64;
    let tags = s
        .tags
        .iter()
        .filter_map(|&t| {
            let shifted = t + shift_ticks;
            (shifted <= s.span_ticks).then_some(shifted)
        })
        .collect();
    TagStream::new(s.channel, s.tick_ps, s.span_ticks, tags)
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let streams = read_tags_auto(&args.input)?;
    let refs: Vec<&TagStream> = streams.iter().collect();
    match args.format {
        TagFormat::Binary => write_tag_file(&args.output, &refs)?,
        TagFormat::Csv => write_tag_csv(&args.output, &refs)?,
    }
    println!(
        "convert: {} channels, {} records -> {}",
        streams.len(),
        streams.iter().map(|s| s.len()).sum::<usize>(),
        args.output.display()
    );
    Ok(())
}
