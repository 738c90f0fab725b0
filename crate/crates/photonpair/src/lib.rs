//! Simulator and analysis toolkit for cavity-assisted SPDC photon-pair
//! sources.
//!
//! The crate covers the full chain from a parameterized source/detector
//! model to physical parameter estimates:
//!
//! - [`source`] — stochastic generation of signal/idler time-tag streams
//!   (Poisson pair model and clustered multimode model) plus the detector
//!   imperfection stage (efficiency, dead time, dark counts, quantization).
//! - [`correlator`] — streaming coincidence and correlogram engines:
//!   start-stop and windowed-pairwise cross/auto correlograms, g2
//!   normalization, and the heralded triple-coincidence analysis.
//! - [`inference`] — exponential fits and derived quantities: bandwidth,
//!   pair rate, effective mode number, pump-conversion regression.
//! - [`resonator`] — deterministic resonator physics: Q-factor budget,
//!   bandwidth-vs-gap curves, mode frequencies, phase matching, and the
//!   electro-optic/thermal tuning slopes.
//! - [`pipeline`] — deterministic chunked simulate→detect→correlate runs
//!   for spans too long to materialize in memory.
//! - [`io`] — tag-file formats (binary and CSV), curve/report documents,
//!   and run manifests.

pub mod cli;
pub mod correlator;
pub mod dispersion;
pub mod error;
pub mod inference;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod resonator;
pub mod source;
pub mod tags;

pub use error::{Error, Result};

/// Tool version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
