//! Time-tag streams: the universal currency between simulator and analyzer.
//!
//! A [`TagStream`] holds the detection timestamps of one channel as integer
//! multiples of a tick (stored in picoseconds). Integer ticks keep every
//! downstream computation exactly reproducible; seconds enter only when a
//! quantity is converted for output or binning.

use crate::error::{Error, Result};

/// Picoseconds per second, as f64 for unit conversions.
pub const PS_PER_S: f64 = 1e12;

/// Tick used for ideal (pre-detection) streams emitted by the simulator.
pub const SIM_TICK_PS: u64 = 1;

/// Default detector timestamp quantization (162 ps).
pub const DEFAULT_TICK_PS: u64 = 162;

/// Convert a duration in seconds to an integer picosecond count.
pub fn seconds_to_ps(seconds: f64) -> Result<u64> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(Error::config(format!("invalid duration {seconds} s")));
    }
    let ps = (seconds * PS_PER_S).round();
    if ps > u64::MAX as f64 {
        return Err(Error::config(format!("duration {seconds} s too long")));
    }
    Ok(ps as u64)
}

/// A sorted stream of detection timestamps on one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    pub channel: u8,
    /// Tick length in picoseconds; all tags are multiples of this tick.
    pub tick_ps: u64,
    /// Observation span in ticks; all tags lie in `[0, span_ticks]`.
    pub span_ticks: u64,
    /// Non-decreasing timestamps in ticks.
    pub tags: Vec<u64>,
}

impl TagStream {
    pub fn new(channel: u8, tick_ps: u64, span_ticks: u64, tags: Vec<u64>) -> Result<Self> {
        let stream = TagStream { channel, tick_ps, span_ticks, tags };
        stream.validate()?;
        Ok(stream)
    }

    /// Empty stream covering the given span.
    pub fn empty(channel: u8, tick_ps: u64, span_ticks: u64) -> Self {
        TagStream { channel, tick_ps, span_ticks, tags: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tick_ps == 0 {
            return Err(Error::config("tick must be positive"));
        }
        if !self.tags.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::format(format!(
                "tag stream on channel {} is not sorted",
                self.channel
            )));
        }
        if let Some(&last) = self.tags.last() {
            if last > self.span_ticks {
                return Err(Error::format(format!(
                    "tag {last} beyond span {} on channel {}",
                    self.span_ticks, self.channel
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_ps as f64 / PS_PER_S
    }

    pub fn span_seconds(&self) -> f64 {
        self.span_ticks as f64 * self.tick_ps as f64 / PS_PER_S
    }

    /// Re-quantize to a coarser or finer tick, rounding to the nearest new
    /// tick with ties broken toward negative infinity.
    pub fn requantize(&self, new_tick_ps: u64) -> Result<TagStream> {
        if new_tick_ps == 0 {
            return Err(Error::config("tick must be positive"));
        }
        if new_tick_ps == self.tick_ps {
            return Ok(self.clone());
        }
        let tags = self
            .tags
            .iter()
            .map(|&t| requantize_tick(t, self.tick_ps, new_tick_ps))
            .collect();
        Ok(TagStream {
            channel: self.channel,
            tick_ps: new_tick_ps,
            span_ticks: requantize_span(self.span_ticks, self.tick_ps, new_tick_ps),
            tags,
        })
    }
}

/// Round `tag * old_tick / new_tick` to the nearest integer, ties toward
/// negative infinity. Exact integer arithmetic throughout.
#[inline]
pub fn requantize_tick(tag: u64, old_tick_ps: u64, new_tick_ps: u64) -> u64 {
    // round-half-down(q/p) = ceil((2q - p) / 2p), which is 0 when 2q <= p
    if old_tick_ps == 1 && tag <= (u64::MAX - new_tick_ps) / 2 {
        let p = new_tick_ps;
        if 2 * tag <= p {
            0
        } else {
            (2 * tag + p - 1) / (2 * p)
        }
    } else {
        let q = tag as u128 * old_tick_ps as u128;
        let p = new_tick_ps as u128;
        if 2 * q <= p {
            0
        } else {
            ((2 * q + p - 1) / (2 * p)) as u64
        }
    }
}

/// Span conversion rounds up so existing tags stay within the span.
fn requantize_span(span: u64, old_tick_ps: u64, new_tick_ps: u64) -> u64 {
    let q = span as u128 * old_tick_ps as u128;
    let p = new_tick_ps as u128;
    ((q + p - 1) / p) as u64
}

/// Check that two streams share a tick so their tags are comparable.
pub fn require_same_tick(a: &TagStream, b: &TagStream) -> Result<()> {
    if a.tick_ps != b.tick_ps {
        return Err(Error::format(format!(
            "tick mismatch: {} ps vs {} ps",
            a.tick_ps, b.tick_ps
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_unsorted() {
        let err = TagStream::new(0, 1, 100, vec![5, 3]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn rejects_tag_beyond_span() {
        assert!(TagStream::new(0, 1, 10, vec![11]).is_err());
        assert!(TagStream::new(0, 1, 10, vec![10]).is_ok());
    }

    #[test]
    fn requantize_half_tick_ties_go_down() {
        // 81 ps is exactly half of a 162 ps tick
        assert_eq!(requantize_tick(81, 1, 162), 0);
        assert_eq!(requantize_tick(243, 1, 162), 1); // 1.5 ticks -> 1
        assert_eq!(requantize_tick(82, 1, 162), 1); // just past half
        assert_eq!(requantize_tick(162, 1, 162), 1);
    }

    proptest! {
        #[test]
        fn requantize_matches_float_reference(tag in 0u64..=(1u64 << 52), new_tick in 1u64..=2000) {
            let got = requantize_tick(tag, 1, new_tick);
            let x = tag as f64 / new_tick as f64;
            let expect = (x + 0.5).floor();
            // the integer rule and the float rule agree except exactly at
            // ties, where we round down and floor(x + 0.5) rounds up
            let frac2 = (2 * (tag as u128)) % (2 * new_tick as u128);
            if frac2 == new_tick as u128 {
                prop_assert_eq!(got + 1, expect as u64);
            } else {
                prop_assert_eq!(got, expect as u64);
            }
        }

        #[test]
        fn requantize_is_monotone(mut tags in proptest::collection::vec(0u64..1_000_000, 0..200), tick in 1u64..500) {
            tags.sort_unstable();
            let s = TagStream::new(0, 1, 1_000_000, tags).unwrap();
            let r = s.requantize(tick).unwrap();
            prop_assert!(r.tags.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.validate().is_ok());
        }
    }
}
