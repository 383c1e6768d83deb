//! Mini-batch sampling with in-batch negatives.

use rand::Rng;

use crate::data::TrainingSample;
use crate::error::{Error, Result};
use crate::geometry::iou;

/// How many resampling attempts the false-negative filter gets before the
/// least-violating batch seen so far is accepted as is.
pub const BATCH_FILTER_MAX_RETRIES: usize = 100;

/// Count off-diagonal (sentence, clip) pairs in a batch that actually
/// overlap (IoU > 0.5 within the same video) and would therefore be wrongly
/// treated as negatives by the alignment loss.
pub fn count_false_negative_pairs(samples: &[TrainingSample], batch: &[usize]) -> usize {
    let mut violations = 0;
    for (i, &si) in batch.iter().enumerate() {
        for (j, &sj) in batch.iter().enumerate() {
            if i == j {
                continue;
            }
            let sentence = &samples[si].sentence;
            let clip = &samples[sj].clip;
            if sentence.video_id == clip.video_id && iou(&sentence.span, &clip.span) > 0.5 {
                violations += 1;
            }
        }
    }
    violations
}

/// Draw `batch_size` distinct sample indices. Within the batch, pair (i, i)
/// is the positive and every (i, j) with `j != i` is a negative.
///
/// With `filter_false_negatives` set, batches containing an off-diagonal
/// pair whose sentence and clip overlap with IoU > 0.5 are resampled up to
/// [`BATCH_FILTER_MAX_RETRIES`] times; if no clean batch is found, the
/// attempt with the fewest violations wins.
pub fn sample_batch<R: Rng>(
    samples: &[TrainingSample],
    batch_size: usize,
    rng: &mut R,
    filter_false_negatives: bool,
) -> Result<Vec<usize>> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(format!("batch size {batch_size} is below 2")));
    }
    if samples.len() < batch_size {
        return Err(Error::InvalidArgument(format!(
            "dataset yields {} training samples, need at least {batch_size}",
            samples.len()
        )));
    }
    let draw = |rng: &mut R| rand::seq::index::sample(rng, samples.len(), batch_size).into_vec();
    if !filter_false_negatives {
        return Ok(draw(rng));
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    for _ in 0..BATCH_FILTER_MAX_RETRIES {
        let batch = draw(rng);
        let violations = count_false_negative_pairs(samples, &batch);
        if violations == 0 {
            return Ok(batch);
        }
        if best.as_ref().is_none_or(|(v, _)| violations < *v) {
            best = Some((violations, batch));
        }
    }
    Ok(best.expect("at least one attempt ran").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClipCandidate, SentenceAnnotation, TrainingSample};
    use crate::geometry::Interval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(video: &str, start: f64, end: f64, idx: usize) -> TrainingSample {
        let span = Interval::new(start, end).unwrap();
        TrainingSample::new(
            SentenceAnnotation {
                video_id: video.into(),
                text: format!("s{idx}"),
                span,
                embedding_ref: format!("{video}#s{idx}"),
            },
            ClipCandidate {
                video_id: video.into(),
                span,
                scale: end - start,
                feature_ref: format!("{video}:{start}:{end}"),
            },
        )
    }

    fn disjoint_pool() -> Vec<TrainingSample> {
        (0..8).map(|i| sample("v0", 100.0 * i as f64, 100.0 * i as f64 + 50.0, i)).collect()
    }

    #[test]
    fn batch_is_distinct_and_deterministic() {
        let pool = disjoint_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sample_batch(&pool, 4, &mut rng, true).unwrap();
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);

        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let b = sample_batch(&pool, 4, &mut rng2, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smallest_batch_has_two_positives_and_two_negatives() {
        let pool = disjoint_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&pool, 2, &mut rng, true).unwrap();
        assert_eq!(batch.len(), 2);
        // the 2x2 score matrix has 2 diagonal positives and 2 off-diagonal negatives
        assert_eq!(count_false_negative_pairs(&pool, &batch), 0);
    }

    #[test]
    fn size_bounds_are_enforced() {
        let pool = disjoint_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_batch(&pool, 1, &mut rng, true).is_err());
        assert!(sample_batch(&pool, 9, &mut rng, true).is_err());
    }

    #[test]
    fn filter_rejects_duplicated_annotations() {
        // Four distinct activities plus duplicates of the first: any batch
        // containing two copies of activity 0 has a false-negative pair.
        let mut pool = disjoint_pool();
        pool.push(sample("v0", 0.0, 50.0, 100));
        pool.push(sample("v0", 0.0, 50.0, 101));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let batch = sample_batch(&pool, 4, &mut rng, true).unwrap();
            assert_eq!(count_false_negative_pairs(&pool, &batch), 0);
        }
    }

    #[test]
    fn unfiltered_sampling_skips_the_check() {
        let mut pool = disjoint_pool();
        pool.push(sample("v0", 0.0, 50.0, 100));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // just exercises the path; no violation guarantee
        let batch = sample_batch(&pool, 4, &mut rng, false).unwrap();
        assert_eq!(batch.len(), 4);
    }
}
