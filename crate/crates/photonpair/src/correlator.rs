//! Coincidence counting, start-stop and windowed-pairwise correlograms, and
//! the triple-coincidence conditioned correlogram.
//!
//! The engines are single-pass over sorted streams with memory bounded by
//! the lag-window occupancy; the all-pairs set is never materialized.
//! Chunked feeding through [`StreamingCross`] produces bit-identical counts
//! to a single pass, which is what permits time-chunked parallel pipelines
//! upstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{require_same_tick, TagStream, PS_PER_S};

/// Correlogram estimator.
///
/// `StartStop` histograms, for each a-tag, the delay to the nearest
/// subsequent b-tag and the nearest preceding b-tag; it matches common
/// TCSPC hardware/software but undercounts at delays beyond the mean
/// inter-arrival time. `WindowedPairwise` histograms every (a, b) pair
/// within the lag window and is unbiased at high rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrMode {
    StartStop,
    WindowedPairwise,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelogramConfig {
    /// Histogram bin width in seconds (3 ns default).
    pub bin_width_s: f64,
    /// Requested maximum lag; the histogram covers 2*ceil(max_lag/bin)+1
    /// bins centered on zero.
    pub max_lag_s: f64,
    pub mode: CorrMode,
}

impl Default for CorrelogramConfig {
    fn default() -> Self {
        CorrelogramConfig {
            bin_width_s: 3e-9,
            max_lag_s: 90e-9,
            mode: CorrMode::StartStop,
        }
    }
}

impl CorrelogramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_s > 0.0) || !self.bin_width_s.is_finite() {
            return Err(Error::config("bin_width_s must be finite and > 0"));
        }
        if !(self.max_lag_s >= self.bin_width_s) {
            return Err(Error::config("max_lag_s must be >= bin_width_s"));
        }
        Ok(())
    }

    /// Number of bins on each side of the central bin.
    pub fn half_bins(&self) -> usize {
        (self.max_lag_s / self.bin_width_s).ceil() as usize
    }

    pub fn n_bins(&self) -> usize {
        2 * self.half_bins() + 1
    }

    /// Half-width of the full histogram support in seconds. Delays within
    /// the support are binned even when slightly beyond max_lag_s, so every
    /// bin, including the outermost, covers its full width.
    pub fn support_s(&self) -> f64 {
        (self.half_bins() as f64 + 0.5) * self.bin_width_s
    }

    /// Bin index (0-based) for a delay, or None when outside the support.
    /// On the positive axis bins are closed on the left and open on the
    /// right; the negative axis mirrors this, so mirrored inputs always
    /// produce mirrored histograms, including delays landing exactly on a
    /// bin edge.
    #[inline]
    pub fn bin_index(&self, delay_s: f64) -> Option<usize> {
        let k = ((delay_s.abs() + 0.5 * self.bin_width_s) / self.bin_width_s).floor();
        let k = if delay_s < 0.0 { -k } else { k };
        let half = self.half_bins() as f64;
        if k < -half || k > half {
            None
        } else {
            Some((k + half) as usize)
        }
    }

    /// Center of bin `idx` in seconds.
    pub fn bin_center(&self, idx: usize) -> f64 {
        (idx as f64 - self.half_bins() as f64) * self.bin_width_s
    }
}

/// Binned delay histogram plus the normalization metadata needed to turn it
/// into a g2 curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Correlogram {
    pub config: CorrelogramConfig,
    pub counts: Vec<u64>,
    /// Total tag counts of the two input streams.
    pub n_a: u64,
    pub n_b: u64,
    /// Observation span in seconds.
    pub span_s: f64,
    pub tick_ps: u64,
}

impl Correlogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.config.bin_center(i)).collect()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let half = self.config.half_bins() as f64;
        let w = self.config.bin_width_s;
        (0..=self.counts.len()).map(|i| (i as f64 - half - 0.5) * w).collect()
    }
}

/// Normalized second-order correlation curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2Curve {
    /// Bin centers in seconds, strictly increasing.
    pub tau_s: Vec<f64>,
    pub g2: Vec<f64>,
    /// Per-bin standard error (Poisson; empty bins carry the one-count
    /// upper bound).
    pub stderr: Vec<f64>,
    /// Raw coincidence counts behind each bin.
    pub counts: Vec<u64>,
    /// Estimator that produced the underlying histogram.
    pub mode: CorrMode,
}

/// Normalize a correlogram so that uncorrelated streams give g2 = 1:
/// g2[k] = counts[k] / (n_a * n_b * bin_width / span).
pub fn normalize_g2(h: &Correlogram) -> Result<G2Curve> {
    if h.n_a == 0 || h.n_b == 0 {
        return Err(Error::numerical(
            "cannot normalize: an input stream has zero counts",
        ));
    }
    if !(h.span_s > 0.0) {
        return Err(Error::numerical("cannot normalize: span is zero"));
    }
    let norm = h.n_a as f64 * h.n_b as f64 * h.config.bin_width_s / h.span_s;
    let mut tau = Vec::with_capacity(h.counts.len());
    let mut g2 = Vec::with_capacity(h.counts.len());
    let mut stderr = Vec::with_capacity(h.counts.len());
    for (i, &c) in h.counts.iter().enumerate() {
        tau.push(h.config.bin_center(i));
        g2.push(c as f64 / norm);
        stderr.push(if c == 0 { 1.0 / norm } else { (c as f64).sqrt() / norm });
    }
    Ok(G2Curve { tau_s: tau, g2, stderr, counts: h.counts.clone(), mode: h.config.mode })
}

/// Streaming cross-correlogram accumulator.
///
/// Feed time-ordered chunks of both streams with [`push`](Self::push); the
/// counts after [`finish`](Self::finish) are identical to a single-pass run
/// over the concatenated streams.
pub struct StreamingCross {
    cfg: CorrelogramConfig,
    tick_s: f64,
    window_ticks: u64,
    counts: Vec<u64>,
    buf_a: Vec<u64>,
    buf_b: Vec<u64>,
    b_lo: usize,
    n_a: u64,
    n_b: u64,
}

impl StreamingCross {
    pub fn new(cfg: CorrelogramConfig, tick_ps: u64) -> Result<Self> {
        cfg.validate()?;
        let tick_s = tick_ps as f64 / PS_PER_S;
        let window_ticks = (cfg.support_s() / tick_s).ceil() as u64;
        Ok(StreamingCross {
            counts: vec![0; cfg.n_bins()],
            cfg,
            tick_s,
            window_ticks,
            buf_a: Vec::new(),
            buf_b: Vec::new(),
            b_lo: 0,
            n_a: 0,
            n_b: 0,
        })
    }

    pub fn push(&mut self, a_chunk: &[u64], b_chunk: &[u64]) {
        self.n_a += a_chunk.len() as u64;
        self.n_b += b_chunk.len() as u64;
        self.buf_a.extend_from_slice(a_chunk);
        self.buf_b.extend_from_slice(b_chunk);
        self.drain_ready(false);
        self.compact();
    }

    /// Process every a-tag whose b-window is already fully buffered (or, at
    /// the end of input, unconditionally).
    fn drain_ready(&mut self, at_end: bool) {
        let b_last = match self.buf_b.last() {
            Some(&t) => t,
            None if !at_end => return,
            None => 0,
        };
        let w = self.window_ticks;
        let mut processed = 0;
        for idx in 0..self.buf_a.len() {
            let a = self.buf_a[idx];
            let complete = at_end
                || match self.cfg.mode {
                    CorrMode::WindowedPairwise => b_last > a.saturating_add(w),
                    CorrMode::StartStop => b_last > a.saturating_add(w),
                };
            if !complete {
                break;
            }
            match self.cfg.mode {
                CorrMode::WindowedPairwise => self.scan_pairwise(a),
                CorrMode::StartStop => self.scan_start_stop(a),
            }
            processed = idx + 1;
        }
        if processed > 0 {
            self.buf_a.drain(..processed);
        }
    }

    fn scan_pairwise(&mut self, a: u64) {
        let w = self.window_ticks;
        while self.b_lo < self.buf_b.len() && self.buf_b[self.b_lo].saturating_add(w) < a {
            self.b_lo += 1;
        }
        for &b in &self.buf_b[self.b_lo..] {
            if b > a.saturating_add(w) {
                break;
            }
            let delay = (b as i128 - a as i128) as f64 * self.tick_s;
            if let Some(k) = self.cfg.bin_index(delay) {
                self.counts[k] += 1;
            }
        }
    }

    fn scan_start_stop(&mut self, a: u64) {
        // advance to the first b >= a
        while self.b_lo < self.buf_b.len() && self.buf_b[self.b_lo] < a {
            self.b_lo += 1;
        }
        if self.b_lo < self.buf_b.len() {
            let delay = (self.buf_b[self.b_lo] - a) as f64 * self.tick_s;
            if let Some(k) = self.cfg.bin_index(delay) {
                self.counts[k] += 1;
            }
        }
        if self.b_lo > 0 {
            let b = self.buf_b[self.b_lo - 1];
            let delay = -((a - b) as f64) * self.tick_s;
            if let Some(k) = self.cfg.bin_index(delay) {
                self.counts[k] += 1;
            }
        }
    }

    /// Drop consumed prefixes once they dominate the buffers.
    fn compact(&mut self) {
        if self.buf_a.is_empty() {
            // b-tags older than any future a-window can never match again;
            // future a-tags are >= the last processed one
            let keep_from = self.b_lo.saturating_sub(1);
            if keep_from > 64 && keep_from * 2 > self.buf_b.len() {
                self.buf_b.drain(..keep_from);
                self.b_lo -= keep_from;
            }
            return;
        }
        let a_head = self.buf_a[0];
        let cutoff = a_head.saturating_sub(self.window_ticks);
        let mut drop = 0;
        while drop + 1 < self.b_lo && self.buf_b[drop] < cutoff {
            drop += 1;
        }
        if drop > 64 && drop * 2 > self.buf_b.len() {
            self.buf_b.drain(..drop);
            self.b_lo -= drop;
        }
    }

    pub fn finish(mut self, span_s: f64, tick_ps: u64) -> Correlogram {
        self.drain_ready(true);
        Correlogram {
            config: self.cfg,
            counts: self.counts,
            n_a: self.n_a,
            n_b: self.n_b,
            span_s,
            tick_ps,
        }
    }
}

fn check_cross_inputs(a: &TagStream, b: &TagStream) -> Result<()> {
    a.validate()?;
    b.validate()?;
    require_same_tick(a, b)?;
    if a.span_ticks != b.span_ticks {
        return Err(Error::format(format!(
            "span mismatch: {} vs {} ticks",
            a.span_ticks, b.span_ticks
        )));
    }
    Ok(())
}

/// Cross-correlogram of two streams sharing a tick and span.
pub fn cross_correlogram(
    a: &TagStream,
    b: &TagStream,
    cfg: &CorrelogramConfig,
) -> Result<Correlogram> {
    check_cross_inputs(a, b)?;
    let mut engine = StreamingCross::new(*cfg, a.tick_ps)?;
    engine.push(&a.tags, &b.tags);
    Ok(engine.finish(a.span_seconds(), a.tick_ps))
}

/// Autocorrelogram of a single stream. Self-pairs (identical index) are
/// excluded; distinct tags with identical timestamps are counted. In
/// pairwise mode each unordered pair contributes symmetrically at +delay
/// and -delay.
pub fn auto_correlogram(a: &TagStream, cfg: &CorrelogramConfig) -> Result<Correlogram> {
    a.validate()?;
    cfg.validate()?;
    let tick_s = a.tick_seconds();
    let window_ticks = (cfg.support_s() / tick_s).ceil() as u64;
    let mut counts = vec![0u64; cfg.n_bins()];
    match cfg.mode {
        CorrMode::WindowedPairwise => {
            for i in 0..a.tags.len() {
                let t0 = a.tags[i];
                for j in (i + 1)..a.tags.len() {
                    let d = a.tags[j] - t0;
                    if d > window_ticks {
                        break;
                    }
                    let delay = d as f64 * tick_s;
                    if let Some(k) = cfg.bin_index(delay) {
                        counts[k] += 1;
                    }
                    if let Some(k) = cfg.bin_index(-delay) {
                        counts[k] += 1;
                    }
                }
            }
        }
        CorrMode::StartStop => {
            for i in 0..a.tags.len() {
                if i + 1 < a.tags.len() {
                    let delay = (a.tags[i + 1] - a.tags[i]) as f64 * tick_s;
                    if let Some(k) = cfg.bin_index(delay) {
                        counts[k] += 1;
                    }
                }
                if i > 0 {
                    let delay = -((a.tags[i] - a.tags[i - 1]) as f64) * tick_s;
                    if let Some(k) = cfg.bin_index(delay) {
                        counts[k] += 1;
                    }
                }
            }
        }
    }
    Ok(Correlogram {
        config: *cfg,
        counts,
        n_a: a.len() as u64,
        n_b: a.len() as u64,
        span_s: a.span_seconds(),
        tick_ps: a.tick_ps,
    })
}

/// Number of a-tags having at least one b-tag within ±window/2; each a-tag
/// is counted at most once.
pub fn coincidences(a: &TagStream, b: &TagStream, window_s: f64) -> Result<u64> {
    check_cross_inputs(a, b)?;
    if !(window_s >= 0.0) {
        return Err(Error::config("coincidence window must be >= 0"));
    }
    let half_ticks = (window_s * 0.5 * PS_PER_S / a.tick_ps as f64).floor() as u64;
    let mut lo = 0usize;
    let mut count = 0u64;
    for &ta in &a.tags {
        while lo < b.tags.len() && b.tags[lo].saturating_add(half_ticks) < ta {
            lo += 1;
        }
        if lo < b.tags.len() && b.tags[lo] <= ta.saturating_add(half_ticks) {
            count += 1;
        }
    }
    Ok(count)
}

/// Merge sorted streams into one time-ordered (channel, tick) sequence with
/// ties broken by the lower channel id.
pub fn merge_streams(streams: &[&TagStream]) -> Result<Vec<(u8, u64)>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    let tick = streams[0].tick_ps;
    for s in streams {
        s.validate()?;
        if s.tick_ps != tick {
            return Err(Error::format("tick mismatch between merged streams"));
        }
    }
    let total: usize = streams.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap = BinaryHeap::new();
    for (idx, s) in streams.iter().enumerate() {
        if let Some(&t) = s.tags.first() {
            heap.push(Reverse((t, s.channel, idx, 0usize)));
        }
    }
    while let Some(Reverse((t, ch, idx, pos))) = heap.pop() {
        out.push((ch, t));
        let s = streams[idx];
        if pos + 1 < s.len() {
            heap.push(Reverse((s.tags[pos + 1], s.channel, idx, pos + 1)));
        }
    }
    Ok(out)
}

/// Streaming accumulator for the heralded (triple-coincidence) analysis.
///
/// The numerator histograms t_s1 - t_s2 over all (s1, s2) pairs lying
/// within ±tau_h of the same idler tag. The denominator realizes the rate
/// cube times the product of the measured signal-idler cross-correlations,
/// integrated over the heralding window, so that statistically independent
/// streams give a flat curve at 1 in expectation.
pub struct HeraldScan {
    cfg: CorrelogramConfig,
    tick_s: f64,
    herald_ticks: u64,
    counts: Vec<u64>,
    cross1: StreamingCross,
    cross2: StreamingCross,
    herald_cfg: CorrelogramConfig,
    surface: Vec<Vec<u64>>,
    buf_s1: Vec<u64>,
    buf_s2: Vec<u64>,
    buf_i: Vec<u64>,
    w1_lo: usize,
    w1_hi: usize,
    w2_lo: usize,
    w2_hi: usize,
    n_i: u64,
    heralded_triples: u64,
}

/// Optional two-dimensional conditioned surface over (t_s1 - t_i, t_s2 - t_i).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionedSurface {
    pub u_centers_s: Vec<f64>,
    /// g2c value per (u1 bin, u2 bin); rows indexed by u1.
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

/// Result of a heralded scan.
#[derive(Debug)]
pub struct ConditionedG2 {
    pub curve: G2Curve,
    pub surface: ConditionedSurface,
    /// Total (s1, s2) pairs heralded by an idler tag: the numerator mass.
    pub heralded_triples: u64,
}

impl HeraldScan {
    pub fn new(cfg: CorrelogramConfig, herald_halfwidth_s: f64, tick_ps: u64) -> Result<Self> {
        cfg.validate()?;
        if !(herald_halfwidth_s > 0.0) {
            return Err(Error::config("herald halfwidth must be > 0"));
        }
        if herald_halfwidth_s > cfg.max_lag_s {
            return Err(Error::config(
                "herald halfwidth must not exceed the correlogram max lag",
            ));
        }
        let tick_s = tick_ps as f64 / PS_PER_S;
        let herald_ticks = (herald_halfwidth_s / tick_s).floor() as u64;
        // cross-correlation curves for the denominator, over the heralding
        // window, always pairwise (unbiased)
        let herald_cfg = CorrelogramConfig {
            bin_width_s: cfg.bin_width_s,
            max_lag_s: herald_halfwidth_s.max(cfg.bin_width_s),
            mode: CorrMode::WindowedPairwise,
        };
        let hb = herald_cfg.n_bins();
        Ok(HeraldScan {
            counts: vec![0; cfg.n_bins()],
            cross1: StreamingCross::new(herald_cfg, tick_ps)?,
            cross2: StreamingCross::new(herald_cfg, tick_ps)?,
            herald_cfg,
            surface: vec![vec![0; hb]; hb],
            cfg,
            tick_s,
            herald_ticks,
            buf_s1: Vec::new(),
            buf_s2: Vec::new(),
            buf_i: Vec::new(),
            w1_lo: 0,
            w1_hi: 0,
            w2_lo: 0,
            w2_hi: 0,
            n_i: 0,
            heralded_triples: 0,
        })
    }

    pub fn push(&mut self, s1: &[u64], s2: &[u64], idler: &[u64]) {
        self.n_i += idler.len() as u64;
        self.cross1.push(s1, idler);
        self.cross2.push(s2, idler);
        self.buf_s1.extend_from_slice(s1);
        self.buf_s2.extend_from_slice(s2);
        self.buf_i.extend_from_slice(idler);
        self.drain_ready(false);
    }

    fn drain_ready(&mut self, at_end: bool) {
        let h = self.herald_ticks;
        let ready = |buf: &[u64], t: u64| match buf.last() {
            Some(&last) => last > t.saturating_add(h),
            None => false,
        };
        let mut consumed = 0;
        for ii in 0..self.buf_i.len() {
            let ti = self.buf_i[ii];
            if !at_end && !(ready(&self.buf_s1, ti) && ready(&self.buf_s2, ti)) {
                break;
            }
            let lo = ti.saturating_sub(h);
            let hi = ti.saturating_add(h);
            // herald windows advance monotonically with the idler time, so
            // the window edges are tracked with amortized O(1) pointers
            advance_window(&self.buf_s1, lo, hi, &mut self.w1_lo, &mut self.w1_hi);
            advance_window(&self.buf_s2, lo, hi, &mut self.w2_lo, &mut self.w2_hi);
            if self.w1_lo < self.w1_hi && self.w2_lo < self.w2_hi {
                for x_idx in self.w1_lo..self.w1_hi {
                    let x = self.buf_s1[x_idx];
                    let u1 = (x as i128 - ti as i128) as f64 * self.tick_s;
                    let j1 = self.herald_cfg.bin_index(u1);
                    for y_idx in self.w2_lo..self.w2_hi {
                        let y = self.buf_s2[y_idx];
                        self.heralded_triples += 1;
                        let delay = (x as i128 - y as i128) as f64 * self.tick_s;
                        if let Some(k) = self.cfg.bin_index(delay) {
                            self.counts[k] += 1;
                        }
                        let u2 = (y as i128 - ti as i128) as f64 * self.tick_s;
                        if let (Some(a), Some(b)) = (j1, self.herald_cfg.bin_index(u2)) {
                            self.surface[a][b] += 1;
                        }
                    }
                }
            }
            consumed = ii + 1;
        }
        if consumed > 0 {
            self.buf_i.drain(..consumed);
            let cutoff = match self.buf_i.first() {
                Some(&next) => next.saturating_sub(h),
                None => u64::MAX,
            };
            // window pointers only ever advance, so under-shooting them
            // after a prune is safe
            let n1 = prune_below(&mut self.buf_s1, cutoff);
            self.w1_lo = self.w1_lo.saturating_sub(n1);
            self.w1_hi = self.w1_hi.saturating_sub(n1);
            let n2 = prune_below(&mut self.buf_s2, cutoff);
            self.w2_lo = self.w2_lo.saturating_sub(n2);
            self.w2_hi = self.w2_hi.saturating_sub(n2);
        }
    }

    pub fn finish(mut self, span_s: f64, tick_ps: u64, n_s1: u64, n_s2: u64) -> Result<ConditionedG2> {
        self.drain_ready(true);
        if self.n_i == 0 || n_s1 == 0 || n_s2 == 0 {
            return Err(Error::numerical(
                "heralded analysis needs events on all three channels",
            ));
        }
        let g1 = normalize_g2(&Correlogram {
            config: self.herald_cfg,
            counts: std::mem::take(&mut self.cross1.counts),
            n_a: n_s1,
            n_b: self.n_i,
            span_s,
            tick_ps,
        })?;
        let g2m = normalize_g2(&Correlogram {
            config: self.herald_cfg,
            counts: std::mem::take(&mut self.cross2.counts),
            n_a: n_s2,
            n_b: self.n_i,
            span_s,
            tick_ps,
        })?;

        let r1 = n_s1 as f64 / span_s;
        let r2 = n_s2 as f64 / span_s;
        let h_eff = (self.herald_ticks as f64 + 0.5) * self.tick_s;

        // denominator integral per output bin by midpoint quadrature of the
        // measured (piecewise-constant) cross curves over the heralding square
        let denom = conditioned_denominator(&self.cfg, &self.herald_cfg, &g1, &g2m, h_eff);
        let mut tau = Vec::new();
        let mut vals = Vec::new();
        let mut stderr = Vec::new();
        let mut counts = Vec::new();
        for (k, &d) in denom.iter().enumerate() {
            let scale = self.n_i as f64 * r1 * r2 * d;
            if scale <= 0.0 {
                continue;
            }
            let c = self.counts[k];
            tau.push(self.cfg.bin_center(k));
            vals.push(c as f64 / scale);
            stderr.push(if c == 0 { 1.0 / scale } else { (c as f64).sqrt() / scale });
            counts.push(c);
        }

        // 2D surface normalization: accidental expectation per cell is
        // n_i * r1 * r2 * bin^2 * g1(u1) * g2(u2), corrected for partial
        // coverage of edge cells by the heralding window
        let bw = self.herald_cfg.bin_width_s;
        let hb = self.herald_cfg.n_bins();
        let mut surf_vals = vec![vec![0.0f64; hb]; hb];
        for a in 0..hb {
            let u1 = self.herald_cfg.bin_center(a);
            let f1 = window_fraction(u1, bw, h_eff);
            for b in 0..hb {
                let u2 = self.herald_cfg.bin_center(b);
                let f2 = window_fraction(u2, bw, h_eff);
                let expect = self.n_i as f64 * r1 * r2 * bw * bw * f1 * f2 * g1.g2[a] * g2m.g2[b];
                surf_vals[a][b] = if expect > 0.0 {
                    self.surface[a][b] as f64 / expect
                } else {
                    0.0
                };
            }
        }

        Ok(ConditionedG2 {
            curve: G2Curve {
                tau_s: tau,
                g2: vals,
                stderr,
                counts,
                mode: CorrMode::WindowedPairwise,
            },
            surface: ConditionedSurface {
                u_centers_s: (0..hb).map(|i| self.herald_cfg.bin_center(i)).collect(),
                values: surf_vals,
                counts: self.surface,
            },
            heralded_triples: self.heralded_triples,
        })
    }
}

/// Fraction of a bin centered at `u` that lies inside [-lim, lim].
fn window_fraction(u: f64, bin: f64, lim: f64) -> f64 {
    let lo = (u - 0.5 * bin).max(-lim);
    let hi = (u + 0.5 * bin).min(lim);
    ((hi - lo) / bin).max(0.0)
}

/// ∫∫ over the heralding square of g1(u1) g2(u2) restricted to
/// u1 - u2 ∈ bin k, for every output bin k.
fn conditioned_denominator(
    out_cfg: &CorrelogramConfig,
    h_cfg: &CorrelogramConfig,
    g1: &G2Curve,
    g2: &G2Curve,
    h_eff: f64,
) -> Vec<f64> {
    let bw = h_cfg.bin_width_s;
    let eval = |curve: &G2Curve, u: f64| -> f64 {
        match h_cfg.bin_index(u) {
            Some(k) => curve.g2[k],
            None => 0.0,
        }
    };
    // prefix integral of g2 over [-h_eff, x]
    let cum_g2 = |x: f64| -> f64 {
        let x = x.clamp(-h_eff, h_eff);
        let mut acc = 0.0;
        for (k, &v) in g2.g2.iter().enumerate() {
            let c = h_cfg.bin_center(k);
            let lo = (c - 0.5 * bw).max(-h_eff);
            let hi = (c + 0.5 * bw).min(h_eff);
            if hi <= lo {
                continue;
            }
            if x >= hi {
                acc += v * (hi - lo);
            } else if x > lo {
                acc += v * (x - lo);
                break;
            } else {
                break;
            }
        }
        acc
    };
    let subs = 16usize;
    let mut out = vec![0.0f64; out_cfg.n_bins()];
    for (k, slot) in out.iter_mut().enumerate() {
        let center = out_cfg.bin_center(k);
        let (d_lo, d_hi) = (center - 0.5 * out_cfg.bin_width_s, center + 0.5 * out_cfg.bin_width_s);
        let mut acc = 0.0;
        // march u1 across the window in substeps aligned with curve bins
        for j in 0..g1.g2.len() {
            let c = h_cfg.bin_center(j);
            let lo = (c - 0.5 * bw).max(-h_eff);
            let hi = (c + 0.5 * bw).min(h_eff);
            if hi <= lo {
                continue;
            }
            let step = (hi - lo) / subs as f64;
            for s in 0..subs {
                let u1 = lo + (s as f64 + 0.5) * step;
                let inner = cum_g2(u1 - d_lo) - cum_g2(u1 - d_hi);
                acc += eval(g1, u1) * inner * step;
            }
        }
        *slot = acc;
    }
    out
}

/// Advance the [lo_idx, hi_idx) pointers so they bracket buf values in
/// [lo, hi]; both bounds are monotone across calls.
#[inline]
fn advance_window(buf: &[u64], lo: u64, hi: u64, lo_idx: &mut usize, hi_idx: &mut usize) {
    while *lo_idx < buf.len() && buf[*lo_idx] < lo {
        *lo_idx += 1;
    }
    if *hi_idx < *lo_idx {
        *hi_idx = *lo_idx;
    }
    while *hi_idx < buf.len() && buf[*hi_idx] <= hi {
        *hi_idx += 1;
    }
}

/// Drop buffered tags below the cutoff; returns how many were removed.
fn prune_below(buf: &mut Vec<u64>, cutoff: u64) -> usize {
    if cutoff == u64::MAX {
        return 0;
    }
    let n = buf.partition_point(|&t| t < cutoff);
    if n > 1024 && n * 2 > buf.len() {
        buf.drain(..n);
        n
    } else {
        0
    }
}

/// Conditioned (heralded) autocorrelation of the two signal arms given the
/// idler stream.
pub fn conditioned_g2(
    s1: &TagStream,
    s2: &TagStream,
    idler: &TagStream,
    herald_halfwidth_s: f64,
    cfg: &CorrelogramConfig,
) -> Result<ConditionedG2> {
    check_cross_inputs(s1, s2)?;
    check_cross_inputs(s1, idler)?;
    let mut scan = HeraldScan::new(*cfg, herald_halfwidth_s, s1.tick_ps)?;
    scan.push(&s1.tags, &s2.tags, &idler.tags);
    scan.finish(s1.span_seconds(), s1.tick_ps, s1.len() as u64, s2.len() as u64)
}
