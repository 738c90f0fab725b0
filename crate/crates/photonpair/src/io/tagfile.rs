//! Time-tag file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "PAIRTAGS"
//! 8       4     format version (1)
//! 12      8     tick in picoseconds
//! 20      4     channel count
//! 24      8     record count
//! 32      8     span in ticks
//! 40      9*N   records: channel (1 byte) + timestamp ticks (8 bytes)
//! ```
//!
//! Records are sorted by (timestamp, channel). The CSV alternative carries
//! the same information with `# key = value` header comments and one
//! `channel,timestamp_ticks` row per record; the two formats round-trip
//! losslessly through each other.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::correlator::merge_streams;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tags::TagStream;

pub const MAGIC: [u8; 8] = *b"PAIRTAGS";
pub const FORMAT_VERSION: u32 = 1;

/// Serialize streams (one per channel, shared tick and span) to the binary
/// tag format.
pub fn write_tag_file(path: &Path, streams: &[&TagStream]) -> Result<()> {
    let (tick_ps, span_ticks) = common_header(streams)?;
    let merged = merge_streams(streams)?;
    let channels: std::collections::BTreeSet<u8> = merged.iter().map(|&(ch, _)| ch).collect();
    let mut bytes = Vec::with_capacity(40 + 9 * merged.len());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&tick_ps.to_le_bytes());
    bytes.extend_from_slice(&(channels.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(merged.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&span_ticks.to_le_bytes());
    for (ch, t) in merged {
        bytes.push(ch);
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Read a binary tag file back into per-channel streams, sorted by channel
/// id.
pub fn read_tag_file(path: &Path) -> Result<Vec<TagStream>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 {
        return Err(Error::format(format!("{}: truncated header", path.display())));
    }
    if bytes[0..8] != MAGIC {
        return Err(Error::format(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let tick_ps = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let channel_count = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let record_count = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let span_ticks = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if tick_ps == 0 {
        return Err(Error::format(format!("{}: zero tick", path.display())));
    }
    let payload = &bytes[40..];
    if payload.len() as u64 != record_count * 9 {
        return Err(Error::format(format!(
            "{}: payload holds {} bytes, header declares {} records",
            path.display(),
            payload.len(),
            record_count
        )));
    }
    let mut per_channel: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
    let mut prev: Option<(u64, u8)> = None;
    for rec in payload.chunks_exact(9) {
        let ch = rec[0];
        let t = u64::from_le_bytes(rec[1..9].try_into().unwrap());
        if let Some((pt, pc)) = prev {
            if (t, ch) < (pt, pc) {
                return Err(Error::format(format!(
                    "{}: records not sorted by (timestamp, channel)",
                    path.display()
                )));
            }
        }
        prev = Some((t, ch));
        per_channel.entry(ch).or_default().push(t);
    }
    if per_channel.len() as u32 != channel_count {
        return Err(Error::format(format!(
            "{}: payload holds {} channels, header declares {}",
            path.display(),
            per_channel.len(),
            channel_count
        )));
    }
    per_channel
        .into_iter()
        .map(|(ch, tags)| TagStream::new(ch, tick_ps, span_ticks, tags))
        .collect()
}

/// Serialize streams to the CSV tag format.
pub fn write_tag_csv(path: &Path, streams: &[&TagStream]) -> Result<()> {
    let (tick_ps, span_ticks) = common_header(streams)?;
    let merged = merge_streams(streams)?;
    let channels: std::collections::BTreeSet<u8> = merged.iter().map(|&(ch, _)| ch).collect();
    let mut out = String::new();
    out.push_str("# pairtags-csv v1\n");
    out.push_str(&format!("# tick_ps = {tick_ps}\n"));
    out.push_str(&format!("# span_ticks = {span_ticks}\n"));
    out.push_str(&format!("# channel_count = {}\n", channels.len()));
    out.push_str("channel,timestamp_ticks\n");
    for (ch, t) in merged {
        out.push_str(&format!("{ch},{t}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Read a CSV tag file back into per-channel streams.
pub fn read_tag_csv(path: &Path) -> Result<Vec<TagStream>> {
    let text = std::fs::read_to_string(path)?;
    let mut tick_ps: Option<u64> = None;
    let mut span_ticks: Option<u64> = None;
    let mut per_channel: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
    let mut prev: Option<(u64, u8)> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                match k.trim() {
                    "tick_ps" => tick_ps = v.trim().parse().ok(),
                    "span_ticks" => span_ticks = v.trim().parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        if line.starts_with("channel") {
            continue;
        }
        let (ch_s, t_s) = line.split_once(',').ok_or_else(|| {
            Error::format(format!("{}:{}: expected 'channel,ticks'", path.display(), lineno + 1))
        })?;
        let ch: u8 = ch_s.trim().parse().map_err(|_| bad_field(path, lineno, "channel"))?;
        let t: u64 = t_s.trim().parse().map_err(|_| bad_field(path, lineno, "timestamp"))?;
        if let Some(p) = prev {
            if (t, ch) < p {
                return Err(Error::format(format!(
                    "{}: records not sorted by (timestamp, channel)",
                    path.display()
                )));
            }
        }
        prev = Some((t, ch));
        per_channel.entry(ch).or_default().push(t);
    }
    let tick_ps =
        tick_ps.ok_or_else(|| Error::format(format!("{}: missing '# tick_ps ='", path.display())))?;
    let span_ticks = span_ticks
        .ok_or_else(|| Error::format(format!("{}: missing '# span_ticks ='", path.display())))?;
    per_channel
        .into_iter()
        .map(|(ch, tags)| TagStream::new(ch, tick_ps, span_ticks, tags))
        .collect()
}

/// Read either format, deciding by content.
pub fn read_tags_auto(path: &Path) -> Result<Vec<TagStream>> {
    let mut head = [0u8; 8];
    {
        let mut f = std::fs::File::open(path)?;
        let n = f.read(&mut head)?;
        if n < 8 {
            return Err(Error::format(format!("{}: too short", path.display())));
        }
    }
    if head == MAGIC {
        read_tag_file(path)
    } else {
        read_tag_csv(path)
    }
}

fn bad_field(path: &Path, lineno: usize, what: &str) -> Error {
    Error::format(format!("{}:{}: invalid {what}", path.display(), lineno + 1))
}

fn common_header(streams: &[&TagStream]) -> Result<(u64, u64)> {
    let first = streams
        .first()
        .ok_or_else(|| Error::config("cannot write a tag file with no streams"))?;
    for s in streams {
        s.validate()?;
        if s.tick_ps != first.tick_ps || s.span_ticks != first.span_ticks {
            return Err(Error::format(
                "all channels in one tag file must share tick and span",
            ));
        }
    }
    Ok((first.tick_ps, first.span_ticks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_streams() -> Vec<TagStream> {
        vec![
            TagStream::new(0, 162, 10_000, vec![1, 5, 5, 900]).unwrap(),
            TagStream::new(1, 162, 10_000, vec![5, 700]).unwrap(),
            TagStream::new(2, 162, 10_000, vec![]).unwrap(),
        ]
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ptag");
        let streams = sample_streams();
        let refs: Vec<&TagStream> = streams.iter().collect();
        write_tag_file(&path, &refs).unwrap();
        let back = read_tag_file(&path).unwrap();
        // the empty channel carries no records and vanishes on read
        assert_eq!(back, streams[..2]);
    }

    #[test]
    fn csv_round_trip_and_auto_detect() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("t.ptag");
        let csv = dir.path().join("t.csv");
        let streams = sample_streams();
        let refs: Vec<&TagStream> = streams.iter().collect();
        write_tag_file(&bin, &refs).unwrap();
        write_tag_csv(&csv, &refs).unwrap();
        assert_eq!(read_tags_auto(&bin).unwrap(), streams[..2]);
        assert_eq!(read_tags_auto(&csv).unwrap(), streams[..2]);
    }

    #[test]
    fn rejects_corrupt_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ptag");
        let streams = sample_streams();
        let refs: Vec<&TagStream> = streams.iter().collect();
        write_tag_file(&path, &refs).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tag_file(&path), Err(Error::Format(_))));
        // declared record count no longer matches the payload
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..8].copy_from_slice(&MAGIC);
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tag_file(&path), Err(Error::Format(_))));
    }

    #[test]
    fn mixed_tick_streams_rejected() {
        let a = TagStream::new(0, 162, 1000, vec![1]).unwrap();
        let b = TagStream::new(1, 1, 1000, vec![1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ptag");
        assert!(write_tag_file(&path, &[&a, &b]).is_err());
        assert!(!path.exists(), "failed write must not leave an output");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn formats_round_trip_any_streams(
            raw in proptest::collection::vec((0u8..4, proptest::collection::vec(0u64..100_000, 0..60)), 1..4)
        ) {
            let mut streams = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for (ch, mut tags) in raw {
                if !seen.insert(ch) {
                    continue;
                }
                tags.sort_unstable();
                streams.push(TagStream::new(ch, 162, 100_000, tags).unwrap());
            }
            let refs: Vec<&TagStream> = streams.iter().collect();
            let dir = tempfile::tempdir().unwrap();
            let bin = dir.path().join("x.ptag");
            let csv = dir.path().join("x.csv");
            write_tag_file(&bin, &refs).unwrap();
            write_tag_csv(&csv, &refs).unwrap();
            // empty channels vanish on read (they carry no records);
            // non-empty ones come back sorted by channel id
            let mut expect: Vec<TagStream> =
                streams.iter().filter(|s| !s.is_empty()).cloned().collect();
            expect.sort_by_key(|s| s.channel);
            prop_assert_eq!(read_tag_file(&bin).unwrap(), expect.clone());
            prop_assert_eq!(read_tag_csv(&csv).unwrap(), expect);
        }
    }
}
