//! Window generation and the training-sample assignment rules.

use crate::data::{clip_feature_key, ClipCandidate, FeatureProvider, SentenceAnnotation, TrainingSample, Video};
use crate::error::{Error, Result};
use crate::geometry::{iou, niol, sliding_windows, Interval};

/// Multi-scale window lengths used to collect training samples.
pub const TRAIN_SCALES: [f64; 4] = [64.0, 128.0, 256.0, 512.0];
/// Fractional overlap between consecutive training windows.
pub const TRAIN_OVERLAP: f64 = 0.8;
/// Minimum IoU between a clip and a sentence span for assignment.
pub const IOU_MIN: f64 = 0.5;
/// Maximum nIoL between a clip and a sentence span for assignment.
pub const NIOL_MAX: f64 = 0.2;

fn windows_to_clips(video: &Video, windows: Vec<crate::geometry::Window>) -> Vec<ClipCandidate> {
    windows
        .into_iter()
        .map(|w| ClipCandidate {
            video_id: video.id.clone(),
            feature_ref: clip_feature_key(&video.id, &w.span),
            span: w.span,
            scale: w.scale,
        })
        .collect()
}

/// The multi-scale training windows of a video.
pub fn training_windows(video: &Video) -> Vec<ClipCandidate> {
    let windows = sliding_windows(video.length, &TRAIN_SCALES, TRAIN_OVERLAP)
        .expect("video invariants guarantee valid window arguments");
    windows_to_clips(video, windows)
}

/// Coarse test-time windows at the given scales.
pub fn test_windows(video: &Video, scales: &[f64], overlap: f64) -> Result<Vec<ClipCandidate>> {
    let windows = sliding_windows(video.length, scales, overlap)?;
    Ok(windows_to_clips(video, windows))
}

/// Pair clips with sentences under the three assignment rules:
/// IoU strictly above `iou_min`, nIoL strictly below `niol_max`, and each
/// clip aligned to at most one sentence. When several sentences qualify the
/// clip keeps the highest-IoU one (ties: earlier sentence start).
///
/// All clips and annotations must belong to the same video.
pub fn assign_training_samples(
    clips: &[ClipCandidate],
    annotations: &[SentenceAnnotation],
    iou_min: f64,
    niol_max: f64,
) -> Result<Vec<TrainingSample>> {
    let video_id = clips
        .first()
        .map(|c| c.video_id.as_str())
        .or_else(|| annotations.first().map(|a| a.video_id.as_str()));
    let Some(video_id) = video_id else { return Ok(Vec::new()) };
    if let Some(bad) = clips.iter().find(|c| c.video_id != video_id) {
        return Err(Error::InvalidArgument(format!(
            "assign_training_samples: clips span videos `{video_id}` and `{}`",
            bad.video_id
        )));
    }
    if let Some(bad) = annotations.iter().find(|a| a.video_id != video_id) {
        return Err(Error::InvalidArgument(format!(
            "assign_training_samples: annotations span videos `{video_id}` and `{}`",
            bad.video_id
        )));
    }

    let mut samples = Vec::new();
    for clip in clips {
        let mut best: Option<(&SentenceAnnotation, f64)> = None;
        for ann in annotations {
            let overlap = iou(&clip.span, &ann.span);
            if overlap <= iou_min || niol(&clip.span, &ann.span) >= niol_max {
                continue;
            }
            let better = match best {
                None => true,
                Some((prev, prev_iou)) => {
                    overlap > prev_iou
                        || (overlap == prev_iou && ann.span.start() < prev.span.start())
                }
            };
            if better {
                best = Some((ann, overlap));
            }
        }
        if let Some((ann, _)) = best {
            samples.push(TrainingSample::new(ann.clone(), clip.clone()));
        }
    }
    Ok(samples)
}

/// Raw feature vectors feeding the visual encoder for one clip: the central
/// clip plus `context_n` context clips per side. Context clips share the
/// central clip's length; any context clip not fully inside the video is
/// substituted by the zero vector.
#[derive(Debug, Clone)]
pub struct ClipVectors {
    pub central: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// The context spans flanking a clip, nearest first; `None` marks a span
/// that leaves the video.
pub fn context_spans(
    span: &Interval,
    context_n: usize,
    video_length: f64,
) -> (Vec<Option<Interval>>, Vec<Option<Interval>>) {
    let len = span.length();
    let mut pre = Vec::with_capacity(context_n);
    let mut post = Vec::with_capacity(context_n);
    for k in 1..=context_n as i64 {
        let k = k as f64;
        let p_start = span.start() - k * len;
        let p_end = span.start() - (k - 1.0) * len;
        pre.push(if p_start >= 0.0 { Some(Interval::new(p_start, p_end).unwrap()) } else { None });
        let q_start = span.end() + (k - 1.0) * len;
        let q_end = span.end() + k * len;
        post.push(if q_end <= video_length {
            Some(Interval::new(q_start, q_end).unwrap())
        } else {
            None
        });
    }
    (pre, post)
}

/// Fetch the central and context vectors of a clip from a provider.
pub fn gather_clip_vectors(
    provider: &FeatureProvider,
    clip: &ClipCandidate,
    context_n: usize,
    video_length: f64,
) -> Result<ClipVectors> {
    let d = provider.dimension();
    let central = provider.lookup(&clip.feature_ref)?;
    let (pre_spans, post_spans) = context_spans(&clip.span, context_n, video_length);
    let fetch = |spans: Vec<Option<Interval>>| -> Result<Vec<Vec<f64>>> {
        spans
            .into_iter()
            .map(|s| match s {
                Some(span) => provider.lookup(&clip_feature_key(&clip.video_id, &span)),
                None => Ok(vec![0.0; d]),
            })
            .collect()
    };
    Ok(ClipVectors { central, pre: fetch(pre_spans)?, post: fetch(post_spans)? })
}
