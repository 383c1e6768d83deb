//! Datasets: videos, sentence annotations, clip candidates, training-sample
//! assignment, feature providers, batch sampling, and a synthetic generator
//! with known ground truth.
//!
//! Times are stored in frames internally; annotation files carry seconds and
//! are converted at the I/O boundary using each video's frame rate.

mod assign;
mod batch;
mod features;
mod sta;
pub mod synthetic;

pub use assign::{
    assign_training_samples, context_spans, gather_clip_vectors, test_windows, training_windows,
    ClipVectors, IOU_MIN, NIOL_MAX, TRAIN_OVERLAP, TRAIN_SCALES,
};
pub use batch::{count_false_negative_pairs, sample_batch, BATCH_FILTER_MAX_RETRIES};
pub use features::{
    read_features, write_features, FeatureProvider, FeatureRole, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use sta::{
    load_dataset, read_annotations, read_complex, read_videos, write_annotations, write_complex,
    write_videos,
};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{encode_offsets, Interval, OffsetKind, OffsetPair};

/// One untrimmed video, identified by a dataset-unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    /// Total length in frames.
    pub length: f64,
    /// Frames per second, for second<->frame conversion at I/O boundaries.
    pub fps: f64,
}

impl Video {
    pub fn new(id: impl Into<String>, length: f64, fps: f64) -> Result<Self> {
        let id = id.into();
        if length <= 0.0 || !length.is_finite() {
            return Err(Error::InvalidArgument(format!("video {id}: non-positive length")));
        }
        if fps <= 0.0 || !fps.is_finite() {
            return Err(Error::InvalidArgument(format!("video {id}: non-positive fps")));
        }
        Ok(Video { id, length, fps })
    }

    pub fn seconds_to_frames(&self, s: f64) -> f64 {
        s * self.fps
    }

    pub fn frames_to_seconds(&self, f: f64) -> f64 {
        f / self.fps
    }
}

/// A sentence with its temporal annotation, in frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAnnotation {
    pub video_id: String,
    pub text: String,
    pub span: Interval,
    /// Key resolving the sentence embedding in a feature provider.
    pub embedding_ref: String,
}

/// A sliding-window clip with feature provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipCandidate {
    pub video_id: String,
    pub span: Interval,
    /// The window length that generated this clip.
    pub scale: f64,
    /// Key resolving the central clip feature in a feature provider.
    pub feature_ref: String,
}

/// An aligned (sentence, clip) pair with precomputed regression targets for
/// both offset parameterizations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub sentence: SentenceAnnotation,
    pub clip: ClipCandidate,
    pub gt_offsets_param: OffsetPair,
    pub gt_offsets_nonparam: OffsetPair,
}

impl TrainingSample {
    pub fn new(sentence: SentenceAnnotation, clip: ClipCandidate) -> Self {
        let gt_offsets_param =
            encode_offsets(OffsetKind::Parameterized, &clip.span, &sentence.span);
        let gt_offsets_nonparam =
            encode_offsets(OffsetKind::NonParameterized, &clip.span, &sentence.span);
        TrainingSample { sentence, clip, gt_offsets_param, gt_offsets_nonparam }
    }

    pub fn offsets(&self, kind: OffsetKind) -> OffsetPair {
        match kind {
            OffsetKind::Parameterized => self.gt_offsets_param,
            OffsetKind::NonParameterized => self.gt_offsets_nonparam,
        }
    }

    /// IoU between the clip and its assigned sentence span.
    pub fn pair_iou(&self) -> f64 {
        crate::geometry::iou(&self.clip.span, &self.sentence.span)
    }
}

/// A complex query: consecutive sub-sentences whose union span stays under
/// half the video length, plus the provider key of its whole-text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAnnotation {
    pub video_id: String,
    pub text: String,
    pub span: Interval,
    pub embedding_ref: String,
    /// The component sub-queries, consecutive and in source order.
    pub components: Vec<SentenceAnnotation>,
}

/// Videos plus their sentence annotations.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub videos: Vec<Video>,
    pub annotations: Vec<SentenceAnnotation>,
}

impl Dataset {
    pub fn video(&self, id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn annotations_for<'a>(
        &'a self,
        video_id: &'a str,
    ) -> impl Iterator<Item = &'a SentenceAnnotation> {
        self.annotations.iter().filter(move |a| a.video_id == video_id)
    }

    /// The sub-dataset containing exactly the given video ids.
    pub fn restricted_to(&self, ids: &BTreeSet<String>) -> Dataset {
        Dataset {
            videos: self.videos.iter().filter(|v| ids.contains(&v.id)).cloned().collect(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| ids.contains(&a.video_id))
                .cloned()
                .collect(),
        }
    }
}

/// Deterministically partition video ids into (train, held-out) sets.
/// At least one video lands on each side when `0 < holdout_fraction < 1`
/// and there are two or more videos.
pub fn split_video_ids(
    ids: &[String],
    holdout_fraction: f64,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let mut holdout = ((ids.len() as f64) * holdout_fraction).round() as usize;
    holdout = holdout.min(ids.len().saturating_sub(1));
    if holdout_fraction > 0.0 && holdout == 0 && ids.len() > 1 {
        holdout = 1;
    }
    let test: Vec<String> = sorted[..holdout].to_vec();
    let train: Vec<String> = sorted[holdout..].to_vec();
    (train, test)
}

/// Render a frame count for use in feature keys: integral values print
/// without a decimal point.
pub fn fmt_time(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 9e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Canonical feature key for a clip interval of a video.
pub fn clip_feature_key(video_id: &str, span: &Interval) -> String {
    format!("{video_id}:{}:{}", fmt_time(span.start()), fmt_time(span.end()))
}

/// Canonical embedding key for the `idx`-th sentence annotation of a video.
pub fn sentence_ref(video_id: &str, idx: usize) -> String {
    format!("{video_id}#s{idx}")
}

/// Canonical embedding key for the `idx`-th complex query of a video.
pub fn complex_ref(video_id: &str, idx: usize) -> String {
    format!("{video_id}#c{idx}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_without_overlap() {
        let ids: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
        let (train, test) = split_video_ids(&ids, 0.25, 11);
        assert_eq!(train.len() + test.len(), 8);
        assert_eq!(test.len(), 2);
        for id in &test {
            assert!(!train.contains(id));
        }
        let (train2, test2) = split_video_ids(&ids, 0.25, 11);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn feature_keys_use_integer_frames() {
        let span = Interval::new(26.0, 154.0).unwrap();
        assert_eq!(clip_feature_key("v7", &span), "v7:26:154");
        let frac = Interval::new(0.5, 2.0).unwrap();
        assert_eq!(clip_feature_key("v7", &frac), "v7:0.5:2");
    }

    #[test]
    fn training_sample_precomputes_both_kinds() {
        let sentence = SentenceAnnotation {
            video_id: "v".into(),
            text: "t".into(),
            span: Interval::new(8.0, 25.0).unwrap(),
            embedding_ref: "v#s0".into(),
        };
        let clip = ClipCandidate {
            video_id: "v".into(),
            span: Interval::new(10.0, 20.0).unwrap(),
            scale: 10.0,
            feature_ref: "v:10:20".into(),
        };
        let s = TrainingSample::new(sentence, clip);
        assert_eq!((s.gt_offsets_nonparam.first, s.gt_offsets_nonparam.second), (-2.0, 5.0));
        assert_eq!(s.gt_offsets_param.kind, OffsetKind::Parameterized);
    }
}
