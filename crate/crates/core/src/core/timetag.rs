use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PS_PER_S: f64 = 1e12;

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Detector index, 0 or 1.
    pub channel: u8,
    /// Picoseconds since stream start.
    #[serde(rename = "t_ps")]
    pub t: u64,
}

impl TimeTag {
    pub fn new(channel: u8, t: u64) -> Self {
        Self { channel, t }
    }

    /// Stream order: by time, ties broken by channel.
    fn order(&self, other: &Self) -> Ordering {
        self.t.cmp(&other.t).then(self.channel.cmp(&other.channel))
    }
}

/// Acquisition descriptor carried in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamMeta {
    pub power_mw: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    duration_ps: u64,
    power_mw: f64,
    seed: u64,
    stream_id: u64,
    label: String,
}

/// Sorted photon time tags over a fixed acquisition span.
///
/// Immutable once built: every constructor validates ordering, channel range and
/// `t <= duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    tags: Vec<TimeTag>,
    duration: u64,
    pub meta: StreamMeta,
}

impl TimeTagStream {
    /// Build from tags that are already in stream order.
    pub fn new(tags: Vec<TimeTag>, duration: u64, meta: StreamMeta) -> Result<Self> {
        if duration == 0 {
            return Err(Error::invalid("stream duration must be positive"));
        }
        for (i, tag) in tags.iter().enumerate() {
            if tag.channel > 1 {
                return Err(Error::invalid(format!(
                    "tag {i}: channel {} is not 0 or 1",
                    tag.channel
                )));
            }
            if tag.t > duration {
                return Err(Error::invalid(format!(
                    "tag {i}: t = {} ps exceeds duration {duration} ps",
                    tag.t
                )));
            }
            if i > 0 && tags[i - 1].t > tag.t {
                return Err(Error::invalid(format!("tag {i}: times not sorted")));
            }
        }
        Ok(Self {
            tags,
            duration,
            meta,
        })
    }

    /// Sort (by time, then channel) and seal.
    pub fn from_unsorted(mut tags: Vec<TimeTag>, duration: u64, meta: StreamMeta) -> Result<Self> {
        tags.sort_unstable_by(TimeTag::order);
        Self::new(tags, duration, meta)
    }

    pub fn empty(duration: u64) -> Result<Self> {
        Self::new(Vec::new(), duration, StreamMeta::default())
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Acquisition span in picoseconds.
    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / PS_PER_S
    }

    pub fn times(&self) -> impl Iterator<Item = u64> + '_ {
        self.tags.iter().map(|t| t.t)
    }

    /// Tags of one channel, as a new stream.
    pub fn channel(&self, channel: u8) -> TimeTagStream {
        TimeTagStream {
            tags: self
                .tags
                .iter()
                .copied()
                .filter(|t| t.channel == channel)
                .collect(),
            duration: self.duration,
            meta: self.meta.clone(),
        }
    }

    /// Same tags with every channel replaced by `channel`.
    pub fn relabel(&self, channel: u8) -> Result<TimeTagStream> {
        let tags = self
            .tags
            .iter()
            .map(|t| TimeTag::new(channel, t.t))
            .collect();
        TimeTagStream::from_unsorted(tags, self.duration, self.meta.clone())
    }

    pub fn with_meta(mut self, meta: StreamMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Write `<stem>.csv` (`channel,t_ps`) and `<stem>.json` sidecar; returns the CSV path.
    pub fn save(&self, stem: &Path) -> Result<PathBuf> {
        let csv_path = stem.with_extension("csv");
        let mut out = Vec::with_capacity(16 * self.tags.len() + 16);
        out.extend_from_slice(b"channel,t_ps\n");
        for tag in &self.tags {
            writeln!(out, "{},{}", tag.channel, tag.t)?;
        }
        fs::write(&csv_path, out)?;

        let sidecar = Sidecar {
            duration_ps: self.duration,
            power_mw: self.meta.power_mw,
            seed: self.meta.seed,
            stream_id: self.meta.stream_id,
            label: self.meta.label.clone(),
        };
        fs::write(
            stem.with_extension("json"),
            crate::format::to_json_string(&sidecar)?,
        )?;
        Ok(csv_path)
    }

    /// Read a tag CSV plus its sidecar (same path with a `.json` extension).
    pub fn load(csv_path: &Path) -> Result<Self> {
        let sidecar_path = csv_path.with_extension("json");
        let text = fs::read_to_string(&sidecar_path)?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: sidecar_path.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;

        let parse_err = |line: u64, msg: String| Error::Parse {
            path: csv_path.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(csv_path)
            .map_err(|e| parse_err(0, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "channel" || &headers[1] != "t_ps" {
            return Err(parse_err(1, "expected header `channel,t_ps`".into()));
        }
        let mut tags = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 2 {
                return Err(parse_err(
                    line,
                    format!("expected 2 fields, got {}", record.len()),
                ));
            }
            let channel: u8 = record[0]
                .parse()
                .map_err(|_| parse_err(line, format!("bad channel `{}`", &record[0])))?;
            let t: u64 = record[1]
                .parse()
                .map_err(|_| parse_err(line, format!("bad t_ps `{}`", &record[1])))?;
            if channel > 1 {
                return Err(parse_err(line, format!("channel {channel} is not 0 or 1")));
            }
            if let Some(prev) = tags.last() {
                let prev: &TimeTag = prev;
                if prev.t > t {
                    return Err(parse_err(line, "tags not sorted by t_ps".into()));
                }
            }
            if t > sidecar.duration_ps {
                return Err(parse_err(line, "t_ps exceeds sidecar duration_ps".into()));
            }
            tags.push(TimeTag::new(channel, t));
        }
        let meta = StreamMeta {
            power_mw: sidecar.power_mw,
            seed: sidecar.seed,
            stream_id: sidecar.stream_id,
            label: sidecar.label,
        };
        Self::new(tags, sidecar.duration_ps, meta)
    }
}

/// Sorted union of two streams of equal duration.
///
/// Metadata comes from `a`, with the labels joined by `+`.
pub fn merge_streams(a: &TimeTagStream, b: &TimeTagStream) -> Result<TimeTagStream> {
    if a.duration != b.duration {
        return Err(Error::DurationMismatch(a.duration, b.duration));
    }
    let mut tags = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.tags.len() && j < b.tags.len() {
        if a.tags[i].order(&b.tags[j]) != Ordering::Greater {
            tags.push(a.tags[i]);
            i += 1;
        } else {
            tags.push(b.tags[j]);
            j += 1;
        }
    }
    tags.extend_from_slice(&a.tags[i..]);
    tags.extend_from_slice(&b.tags[j..]);

    let label = match (a.meta.label.is_empty(), b.meta.label.is_empty()) {
        (true, _) => b.meta.label.clone(),
        (_, true) => a.meta.label.clone(),
        _ => format!("{}+{}", a.meta.label, b.meta.label),
    };
    let meta = StreamMeta {
        label,
        ..a.meta.clone()
    };
    Ok(TimeTagStream {
        tags,
        duration: a.duration,
        meta,
    })
}

/// Detected counts per second over the whole stream.
pub fn count_rate(s: &TimeTagStream) -> f64 {
    s.len() as f64 / s.duration_s()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RngSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn stream(tags: &[(u8, u64)], duration: u64) -> TimeTagStream {
        TimeTagStream::from_unsorted(
            tags.iter().map(|&(c, t)| TimeTag::new(c, t)).collect(),
            duration,
            StreamMeta::default(),
        )
        .unwrap()
    }

    fn poisson_stream(rate_cps: f64, duration: u64, channel: u8, spec: RngSpec) -> TimeTagStream {
        let mut rng = spec.rng();
        let mean = rate_cps * duration as f64 / PS_PER_S;
        let n = Poisson::new(mean).unwrap().sample(&mut rng) as usize;
        let tags = (0..n)
            .map(|_| TimeTag::new(channel, rng.random_range(0..duration)))
            .collect();
        TimeTagStream::from_unsorted(tags, duration, StreamMeta::default()).unwrap()
    }

    #[test]
    fn merge_empty() {
        let e = TimeTagStream::empty(1000).unwrap();
        let m = merge_streams(&e, &e).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.duration(), 1000);
    }

    #[test]
    fn merge_two_element_sort() {
        let a = stream(&[(0, 5)], 10);
        let b = stream(&[(1, 3)], 10);
        let m = merge_streams(&a, &b).unwrap();
        assert_eq!(m.tags(), &[TimeTag::new(1, 3), TimeTag::new(0, 5)]);
    }

    #[test]
    fn merge_rejects_duration_mismatch() {
        let a = TimeTagStream::empty(10).unwrap();
        let b = TimeTagStream::empty(11).unwrap();
        assert!(matches!(
            merge_streams(&a, &b),
            Err(Error::DurationMismatch(10, 11))
        ));
    }

    #[test]
    fn merged_poisson_rate() {
        let one_s = PS_PER_S as u64;
        let a = poisson_stream(1000.0, one_s, 0, RngSpec::new(11, 0));
        let b = poisson_stream(1000.0, one_s, 1, RngSpec::new(11, 1));
        let m = merge_streams(&a, &b).unwrap();
        assert_eq!(m.len(), a.len() + b.len());
        let rate = count_rate(&m);
        // Poisson: sigma = sqrt(2000) counts in 1 s
        assert!((rate - 2000.0).abs() <= 3.0 * 2000f64.sqrt(), "rate {rate}");
        assert!(m.tags().windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn count_rate_arithmetic() {
        let one_s = PS_PER_S as u64;
        assert_eq!(count_rate(&TimeTagStream::empty(one_s).unwrap()), 0.0);
        let tags: Vec<_> = (0..7000u64).map(|i| (0u8, i * 1000)).collect();
        assert_eq!(count_rate(&stream(&tags, one_s)), 7000.0);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(TimeTagStream::empty(0).is_err());
    }

    #[test]
    fn validation() {
        assert!(TimeTagStream::new(vec![TimeTag::new(2, 0)], 10, StreamMeta::default()).is_err());
        assert!(TimeTagStream::new(vec![TimeTag::new(0, 11)], 10, StreamMeta::default()).is_err());
        assert!(TimeTagStream::new(
            vec![TimeTag::new(0, 5), TimeTag::new(0, 4)],
            10,
            StreamMeta::default()
        )
        .is_err());
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("s");
        stream(&[(0, 1), (1, 2)], 100).save(&stem).unwrap();
        let csv_path = stem.with_extension("csv");
        fs::write(&csv_path, "channel,t_ps\n0,1\n1,abc\n").unwrap();
        match TimeTagStream::load(&csv_path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn arb_stream() -> impl Strategy<Value = TimeTagStream> {
        prop::collection::vec((0u8..2, 0u64..1_000_000), 0..200)
            .prop_map(|tags| stream(&tags, 1_000_000))
    }

    fn multiset(s: &TimeTagStream) -> Vec<TimeTag> {
        let mut v = s.tags().to_vec();
        v.sort_unstable_by(TimeTag::order);
        v
    }

    proptest! {
        #[test]
        fn save_load_roundtrip(s in arb_stream(), seed in any::<u64>(), label in "[a-z]{0,8}") {
            let s = s.with_meta(StreamMeta { power_mw: 0.5, seed, stream_id: 3, label });
            let dir = tempfile::tempdir().unwrap();
            let csv = s.save(&dir.path().join("x")).unwrap();
            let back = TimeTagStream::load(&csv).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn merge_commutative_associative(a in arb_stream(), b in arb_stream(), c in arb_stream()) {
            let ab = merge_streams(&a, &b).unwrap();
            let ba = merge_streams(&b, &a).unwrap();
            prop_assert_eq!(ab.tags(), ba.tags());
            let left = merge_streams(&ab, &c).unwrap();
            let right = merge_streams(&a, &merge_streams(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(multiset(&left), multiset(&right));
            prop_assert_eq!(left.len(), a.len() + b.len() + c.len());
        }
    }
}
