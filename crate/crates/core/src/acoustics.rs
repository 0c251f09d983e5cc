//! Silence detection from frame energies, speech-overlap intervals, and
//! their projection onto transcript segments.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Conversation;

pub const DEFAULT_SILENCE_PERCENTILE: u8 = 20;
pub const DEFAULT_PAUSE_CONFIDENCE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcousticError {
    #[error("percentile must be within 1..=99, got {0}")]
    Percentile(u8),
    #[error("malformed energy file at line {line}: {message}")]
    Energy { line: usize, message: String },
    #[error("malformed interval file at row {row}: {message}")]
    Interval { row: usize, message: String },
    #[error("segment {0} has no following segment")]
    LastSegment(usize),
}

/// Per-frame volume on the conversation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub frame_ms: u64,
    pub start_offset_ms: u64,
    pub values: Vec<f64>,
}

impl EnergySeries {
    pub fn new(frame_ms: u64, start_offset_ms: u64, values: Vec<f64>) -> Result<EnergySeries, AcousticError> {
        let bad = |message: &str| AcousticError::Energy {
            line: 0,
            message: message.to_string(),
        };
        if frame_ms == 0 {
            return Err(bad("frame_ms must be positive"));
        }
        if values.is_empty() {
            return Err(bad("series has no frames"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(bad(&format!("energy value {v} is not a non-negative number")));
        }
        Ok(EnergySeries {
            frame_ms,
            start_offset_ms,
            values,
        })
    }

    /// Parses `# frame_ms=<int> start_offset_ms=<int>` followed by one value
    /// per line.
    pub fn parse(bytes: &[u8]) -> Result<EnergySeries, AcousticError> {
        let err = |line: usize, message: String| AcousticError::Energy { line, message };
        let text = std::str::from_utf8(bytes).map_err(|e| err(1, e.to_string()))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let fields = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| err(1, "expected `# frame_ms=<int> start_offset_ms=<int>` header".into()))?;
        let (mut frame_ms, mut offset) = (None, None);
        for kv in fields.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| err(1, format!("header field `{kv}` is not key=value")))?;
            let v: u64 = v
                .parse()
                .map_err(|_| err(1, format!("header value for `{k}` is not a non-negative integer")))?;
            match k {
                "frame_ms" => frame_ms = Some(v),
                "start_offset_ms" => offset = Some(v),
                other => return Err(err(1, format!("unknown header field `{other}`"))),
            }
        }
        let frame_ms = frame_ms.ok_or_else(|| err(1, "header lacks frame_ms".into()))?;
        let offset = offset.ok_or_else(|| err(1, "header lacks start_offset_ms".into()))?;
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| err(i + 2, format!("`{line}` is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(i + 2, format!("energy value {v} is negative or not finite")));
            }
            values.push(v);
        }
        EnergySeries::new(frame_ms, offset, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# frame_ms={} start_offset_ms={}\n", self.frame_ms, self.start_offset_ms);
        for v in &self.values {
            writeln!(out, "{v}").expect("write to String");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Silence,
    Overlap,
}

/// Half-open `[start_ms, end_ms)` interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Interval {
    pub fn len(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn is_empty(&self) -> bool {
        self.end_ms <= self.start_ms
    }

    pub fn intersection(&self, start_ms: u64, end_ms: u64) -> u64 {
        let lo = self.start_ms.max(start_ms);
        let hi = self.end_ms.min(end_ms);
        hi.saturating_sub(lo)
    }
}

/// Sorted, disjoint intervals of one kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    pub kind: IntervalKind,
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty(kind: IntervalKind) -> IntervalSet {
        IntervalSet {
            kind,
            intervals: Vec::new(),
        }
    }

    /// Sorts and merges touching or overlapping intervals. Empty intervals are
    /// dropped.
    pub fn normalized(kind: IntervalKind, mut raw: Vec<Interval>) -> IntervalSet {
        raw.retain(|iv| !iv.is_empty());
        raw.sort();
        let mut merged: Vec<Interval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match merged.last_mut() {
                Some(last) if iv.start_ms <= last.end_ms => last.end_ms = last.end_ms.max(iv.end_ms),
                _ => merged.push(iv),
            }
        }
        IntervalSet { kind, intervals: merged }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn total_ms(&self) -> u64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// Milliseconds of `[start_ms, end_ms)` covered by the set.
    pub fn covered_ms(&self, start_ms: u64, end_ms: u64) -> u64 {
        let first = self.intervals.partition_point(|iv| iv.end_ms <= start_ms);
        self.intervals[first..]
            .iter()
            .take_while(|iv| iv.start_ms < end_ms)
            .map(|iv| iv.intersection(start_ms, end_ms))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("start_ms,end_ms\n");
        for iv in &self.intervals {
            writeln!(out, "{},{}", iv.start_ms, iv.end_ms).expect("write to String");
        }
        out
    }
}

/// Reads the `start_ms,end_ms` interval CSV into a normalized overlap set.
pub fn load_overlaps(bytes: &[u8]) -> Result<IntervalSet, AcousticError> {
    load_intervals(bytes, IntervalKind::Overlap)
}

pub fn load_intervals(bytes: &[u8], kind: IntervalKind) -> Result<IntervalSet, AcousticError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(IntervalSet::empty(kind));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| AcousticError::Interval {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "start_ms" || &headers[1] != "end_ms" {
        return Err(AcousticError::Interval {
            row: 1,
            message: "expected header `start_ms,end_ms`".into(),
        });
    }
    let mut raw = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| AcousticError::Interval {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<i64, AcousticError> {
            rec[k].parse().map_err(|_| AcousticError::Interval {
                row,
                message: format!("`{}` is not an integer", &rec[k]),
            })
        };
        let (s, e) = (field(0)?, field(1)?);
        if s < 0 || e < 0 {
            return Err(AcousticError::Interval {
                row,
                message: "negative timestamp".into(),
            });
        }
        if e <= s {
            return Err(AcousticError::Interval {
                row,
                message: format!("inverted or empty interval {s}..{e}"),
            });
        }
        raw.push(Interval {
            start_ms: s as u64,
            end_ms: e as u64,
        });
    }
    Ok(IntervalSet::normalized(kind, raw))
}

/// Nearest-rank percentile: the value at sorted index `ceil(p/100 * n) - 1`.
pub fn nearest_rank(values: &[f64], percentile: u8) -> Result<f64, AcousticError> {
    if !(1..=99).contains(&percentile) {
        return Err(AcousticError::Percentile(percentile));
    }
    let n = values.len();
    let rank = (percentile as usize * n).div_ceil(100).max(1);
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

/// Maximal runs of frames at or below the percentile threshold.
pub fn detect_silence(series: &EnergySeries, percentile: u8) -> Result<IntervalSet, AcousticError> {
    let threshold = nearest_rank(&series.values, percentile)?;
    let clock = |frame: usize| series.start_offset_ms + frame as u64 * series.frame_ms;
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, &v) in series.values.iter().enumerate() {
        match (v <= threshold, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                intervals.push(Interval {
                    start_ms: clock(s),
                    end_ms: clock(i),
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        intervals.push(Interval {
            start_ms: clock(s),
            end_ms: clock(series.values.len()),
        });
    }
    Ok(IntervalSet {
        kind: IntervalKind::Silence,
        intervals,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentIntervals {
    pub segment: usize,
    pub intervals: Vec<Interval>,
    pub intersection_ms: u64,
}

impl SegmentIntervals {
    /// For overlap sets: any intersecting interval means the speaker was
    /// interrupted during this segment.
    pub fn interrupted(&self) -> bool {
        self.intersection_ms > 0
    }
}

pub fn map_to_segments(intervals: &IntervalSet, conv: &Conversation) -> Vec<SegmentIntervals> {
    conv.segments
        .iter()
        .map(|seg| {
            let hits: Vec<Interval> = intervals
                .intervals
                .iter()
                .filter(|iv| iv.intersection(seg.start_ms, seg.end_ms) > 0)
                .copied()
                .collect();
            let intersection_ms = hits.iter().map(|iv| iv.intersection(seg.start_ms, seg.end_ms)).sum();
            SegmentIntervals {
                segment: seg.index,
                intervals: hits,
                intersection_ms,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauseMeasure {
    pub after_segment: usize,
    pub gap_ms: u64,
    pub silence_coverage: f64,
    pub confident: bool,
}

/// The pause between segment `index` and the next one, corroborated by
/// detected silence when available.
pub fn pause_after(
    conv: &Conversation,
    index: usize,
    silence: Option<&IntervalSet>,
    min_coverage: f64,
) -> Result<PauseMeasure, AcousticError> {
    if index + 1 >= conv.segments.len() {
        return Err(AcousticError::LastSegment(index));
    }
    let (this, next) = (&conv.segments[index], &conv.segments[index + 1]);
    let gap_ms = next.start_ms.saturating_sub(this.end_ms);
    let (silence_coverage, confident) = match silence {
        None => (1.0, true),
        Some(_) if gap_ms == 0 => (1.0, true),
        Some(set) => {
            let c = set.covered_ms(this.end_ms, next.start_ms) as f64 / gap_ms as f64;
            (c, c >= min_coverage)
        }
    };
    Ok(PauseMeasure {
        after_segment: index,
        gap_ms,
        silence_coverage,
        confident,
    })
}
