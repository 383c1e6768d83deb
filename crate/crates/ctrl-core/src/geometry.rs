//! Interval arithmetic: IoU, nIoL, sliding windows, boundary-offset
//! parameterizations and their inverses, and greedy interval NMS.
//!
//! All functions are pure and safe to call concurrently.

use crate::error::{Error, Result};

/// A half-open time span `[start, end)` in frames or seconds (uniform per
/// dataset). Zero-length intervals are rejected at construction, so
/// `length() > 0` always holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    start: f64,
    end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval endpoints must be finite, got [{start}, {end})"
            )));
        }
        if start >= end {
            return Err(Error::InvalidArgument(format!(
                "interval start must precede end, got [{start}, {end})"
            )));
        }
        Ok(Interval { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Length of the overlap with `other`, zero when disjoint.
    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Whether `self` lies entirely inside `other`.
    pub fn is_within(&self, other: &Interval) -> bool {
        self.start >= other.start && self.end <= other.end
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Which boundary-offset parameterization a pair of numbers encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetKind {
    /// Center offset scaled by candidate length, plus log length ratio.
    Parameterized,
    /// Raw start and end differences.
    NonParameterized,
}

impl OffsetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OffsetKind::Parameterized => "parameterized",
            OffsetKind::NonParameterized => "non_parameterized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "parameterized" => Ok(OffsetKind::Parameterized),
            "non_parameterized" => Ok(OffsetKind::NonParameterized),
            other => Err(Error::InvalidArgument(format!("unknown offset kind `{other}`"))),
        }
    }
}

/// A regression target or prediction: (center, log-length) for the
/// parameterized kind, (start, end) deltas for the non-parameterized kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetPair {
    pub kind: OffsetKind,
    pub first: f64,
    pub second: f64,
}

/// Intersection over union of two intervals, in [0, 1]. The union is the
/// measure of the two point sets' union, so disjoint intervals score 0.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection(b);
    let union = a.length() + b.length() - inter;
    inter / union
}

/// Non-intersection over length: the fraction of `clip` not covered by
/// `annotation`, in [0, 1]. Zero exactly when the clip lies inside the
/// annotation; one when they are disjoint.
pub fn niol(clip: &Interval, annotation: &Interval) -> f64 {
    (clip.length() - clip.intersection(annotation)) / clip.length()
}

/// One generated sliding window together with the scale that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub span: Interval,
    pub scale: f64,
}

/// Multi-scale sliding windows over `[0, video_length]`.
///
/// For each window length `L` the stride is `round(L * (1 - overlap))`,
/// minimum 1. Starts advance from 0; the first window that reaches the end
/// of the video is clamped to it and closes that scale, so a full-length
/// window yields exactly one candidate and short videos still produce a
/// clamped one. Duplicated spans across scales are dropped (first scale
/// wins) and the result is ordered by (scale, start).
pub fn sliding_windows(
    video_length: f64,
    window_lengths: &[f64],
    overlap: f64,
) -> Result<Vec<Window>> {
    if video_length <= 0.0 || !video_length.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sliding_windows: non-positive video length {video_length}"
        )));
    }
    if window_lengths.is_empty() {
        return Err(Error::InvalidArgument("sliding_windows: empty window length list".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!(
            "sliding_windows: overlap {overlap} outside [0, 1)"
        )));
    }
    let mut scales: Vec<f64> = window_lengths.to_vec();
    for &l in &scales {
        if l <= 0.0 || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sliding_windows: non-positive window length {l}"
            )));
        }
    }
    scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scales.dedup();

    let mut out: Vec<Window> = Vec::new();
    for &scale in &scales {
        let step = (scale * (1.0 - overlap)).round().max(1.0);
        let mut start = 0.0;
        loop {
            let end = (start + scale).min(video_length);
            let span = Interval::new(start, end).expect("start < video_length");
            if !out.iter().any(|w| w.span == span) {
                out.push(Window { span, scale });
            }
            if start + scale >= video_length {
                break;
            }
            start += step;
        }
    }
    out.sort_by(|a, b| {
        (a.scale, a.span.start())
            .partial_cmp(&(b.scale, b.span.start()))
            .unwrap()
    });
    Ok(out)
}

/// Regression targets that move `candidate` onto `ground_truth`.
pub fn encode_offsets(kind: OffsetKind, candidate: &Interval, ground_truth: &Interval) -> OffsetPair {
    match kind {
        OffsetKind::Parameterized => {
            let center = (ground_truth.center() - candidate.center()) / candidate.length();
            let log_len = (ground_truth.length() / candidate.length()).ln();
            OffsetPair { kind, first: center, second: log_len }
        }
        OffsetKind::NonParameterized => OffsetPair {
            kind,
            first: ground_truth.start() - candidate.start(),
            second: ground_truth.end() - candidate.end(),
        },
    }
}

/// Inverse of [`encode_offsets`], clamped into `[0, video_length]`.
///
/// Predictions that collapse under clamping degrade to a one-unit interval
/// at the video boundary nearest the raw prediction; inference never aborts
/// on a bad offset.
pub fn apply_offsets(candidate: &Interval, offsets: &OffsetPair, video_length: f64) -> Interval {
    let (raw_start, raw_end) = match offsets.kind {
        OffsetKind::Parameterized => {
            let center = candidate.center() + offsets.first * candidate.length();
            let length = candidate.length() * offsets.second.exp();
            (center - 0.5 * length, center + 0.5 * length)
        }
        OffsetKind::NonParameterized => {
            (candidate.start() + offsets.first, candidate.end() + offsets.second)
        }
    };
    let start = raw_start.clamp(0.0, video_length);
    let end = raw_end.clamp(0.0, video_length);
    if start < end {
        return Interval::new(start, end).expect("clamped and ordered");
    }
    let unit = 1.0_f64.min(video_length);
    let mid = 0.5 * (raw_start + raw_end);
    if mid <= 0.5 * video_length {
        Interval::new(0.0, unit).expect("video_length > 0")
    } else {
        Interval::new(video_length - unit, video_length).expect("video_length > 0")
    }
}

/// Greedy non-maximum suppression over scored intervals.
///
/// Candidates are visited in descending score order (ties: earlier start,
/// then shorter length) and suppressed when their IoU with any kept interval
/// exceeds `threshold`. The kept list preserves that order.
pub fn nms(scored: &[(Interval, f64)], threshold: f64) -> Result<Vec<(Interval, f64)>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "nms: threshold {threshold} outside [0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, sa) = &scored[i];
        let (b, sb) = &scored[j];
        sb.partial_cmp(sa)
            .unwrap()
            .then(a.start().partial_cmp(&b.start()).unwrap())
            .then(a.length().partial_cmp(&b.length()).unwrap())
    });
    let mut kept: Vec<(Interval, f64)> = Vec::new();
    for i in order {
        let (cand, score) = scored[i];
        if kept.iter().all(|(k, _)| iou(k, &cand) <= threshold) {
            kept.push((cand, score));
        }
    }
    Ok(kept)
}
