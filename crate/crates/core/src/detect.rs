//! Final snippet selection and segment extraction.

use serde::{Deserialize, Serialize};

use crate::crf::Marginals;
use crate::domain::{snippet_to_seconds, DetectionSegment, MaskMatrix, Matrix, VideoRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Snippets with confidence strictly above this are selected.
    pub threshold: f64,
    /// Runs separated by at most this many unselected snippets are joined.
    pub merge_gap: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            merge_gap: 0,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// selected_{i,j} = ᾱ_{i,j}·p̃_{i,j} > threshold.
pub fn select_clips<T: Scalar>(
    alpha_bar: &MaskMatrix<T>,
    p_tilde: &Marginals<T>,
    cfg: &DetectConfig,
) -> Result<Matrix<bool>> {
    let thr = T::lit(cfg.threshold);
    alpha_bar
        .values()
        .zip_with(p_tilde.values(), |a, p| a * p > thr)
}

/// Maximal runs of `true`, bridging gaps of at most `merge_gap` false entries.
pub fn merge_segments(mask: &[bool], merge_gap: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        let end = i - 1;
        match runs.last_mut() {
            Some(last) if start - last.1 - 1 <= merge_gap => last.1 = end,
            _ => runs.push((start, end)),
        }
    }
    runs
}

/// Segments from an arbitrary confidence matrix (s̄ without refinement, or s̃).
///
/// Each segment's confidence is the mean confidence over its snippets.
pub fn detections_from_confidence<T: Scalar>(
    video: &VideoRecord,
    confidence: &Matrix<T>,
    cfg: &DetectConfig,
) -> Result<Vec<DetectionSegment>> {
    cfg.validate()?;
    if confidence.rows() != video.n_snippets {
        return Err(Error::ShapeMismatch(format!(
            "{} confidence rows for video {} with {} snippets",
            confidence.rows(),
            video.id,
            video.n_snippets
        )));
    }
    let thr = T::lit(cfg.threshold);
    let mut out = Vec::new();
    for class in 0..confidence.cols() {
        let col = confidence.column(class);
        let mask: Vec<bool> = col.iter().map(|&s| s > thr).collect();
        for (start, end) in merge_segments(&mask, cfg.merge_gap) {
            let sum: T = col[start..=end].iter().copied().sum();
            let mean = sum / T::from_usize(end - start + 1).unwrap();
            out.push(DetectionSegment {
                video_id: video.id.clone(),
                class,
                start_snippet: start,
                end_snippet: end,
                confidence: mean.as_f64().clamp(0.0, 1.0),
                start_s: snippet_to_seconds(start, video)?.start,
                end_s: snippet_to_seconds(end, video)?.end,
            });
        }
    }
    Ok(out)
}

/// Applies s̃ = ᾱ ⊙ p̃, selects, merges and scores segments.
pub fn make_detections<T: Scalar>(
    video: &VideoRecord,
    alpha_bar: &MaskMatrix<T>,
    p_tilde: &Marginals<T>,
    cfg: &DetectConfig,
) -> Result<Vec<DetectionSegment>> {
    let s = alpha_bar.values().zip_with(p_tilde.values(), |a, p| a * p)?;
    detections_from_confidence(video, &s, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ProbabilityMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn video(n: usize, frames: u32, fps: f64) -> VideoRecord {
        VideoRecord::new("vid", n, frames, fps, BTreeSet::from([1])).unwrap()
    }

    #[test]
    fn select_examples() {
        let cfg = DetectConfig::default();
        let a = MaskMatrix::from_rows(&[[1.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        let p = ProbabilityMatrix::from_rows(&[[0.6, 0.4], [0.9, 0.1], [0.5, 0.5]]).unwrap();
        let sel = select_clips(&a, &p, &cfg).unwrap();
        assert!(sel.get(0, 0));
        assert!(!sel.get(1, 0));
        assert!(!sel.get(2, 0), "0.5 is not strictly above the threshold");
    }

    #[test]
    fn merge_examples() {
        assert_eq!(merge_segments(&[false, true, true, false, true], 0), vec![(1, 2), (4, 4)]);
        assert!(merge_segments(&[false; 4], 0).is_empty());
        assert_eq!(merge_segments(&[true, false, true], 1), vec![(0, 2)]);
        assert_eq!(merge_segments(&[true, false, false, true], 1), vec![(0, 0), (3, 3)]);
    }

    #[test]
    fn detection_examples() {
        let v = video(8, 15, 30.0);
        let none = Matrix::filled(8, 2, 0.3f64);
        assert!(detections_from_confidence(&v, &none, &DetectConfig::default()).unwrap().is_empty());

        let s = Matrix::from_fn(8, 2, |i, j| if j == 1 && (2..=5).contains(&i) { 0.8 } else { 0.1 });
        let d = detections_from_confidence(&v, &s, &DetectConfig::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].class, d[0].start_snippet, d[0].end_snippet), (1, 2, 5));
        assert_eq!((d[0].start_s, d[0].end_s), (1.0, 3.0));
        assert!((d[0].confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn make_detections_multiplies_mask() {
        let v = video(2, 5, 25.0);
        let a = MaskMatrix::from_rows(&[[1.0, 1.0], [0.5, 1.0]]).unwrap();
        let p = ProbabilityMatrix::from_rows(&[[0.9, 0.1], [0.9, 0.1]]).unwrap();
        let d = make_detections(&v, &a, &p, &DetectConfig::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].start_snippet, d[0].end_snippet), (0, 0));
    }

    #[test]
    fn threshold_validated() {
        let v = video(2, 5, 25.0);
        let s = Matrix::filled(2, 2, 0.2f64);
        let cfg = DetectConfig { threshold: 1.0, merge_gap: 0 };
        assert!(detections_from_confidence(&v, &s, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn segment_confidence_is_mean(seed in any::<u64>(), n in 1usize..60, gap in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = video(n, 5, 25.0);
            let s = Matrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0f64));
            let cfg = DetectConfig { threshold: 0.5, merge_gap: gap };
            let dets = detections_from_confidence(&v, &s, &cfg).unwrap();
            for d in &dets {
                let vals: Vec<f64> = (d.start_snippet..=d.end_snippet).map(|i| s.get(i, d.class)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((d.confidence - mean).abs() < 1e-12);
            }
            for class in 0..3 {
                let segs: Vec<_> = dets.iter().filter(|d| d.class == class).collect();
                for w in segs.windows(2) {
                    prop_assert!(w[0].end_snippet < w[1].start_snippet);
                }
                for i in 0..n {
                    let covered = segs.iter().filter(|d| (d.start_snippet..=d.end_snippet).contains(&i)).count();
                    if s.get(i, class) > 0.5 {
                        prop_assert_eq!(covered, 1);
                    } else if gap == 0 {
                        prop_assert_eq!(covered, 0);
                    }
                }
            }
        }

        #[test]
        fn raising_threshold_shrinks_selection(seed in any::<u64>(), lo in 0.05f64..0.9, bump in 0.0f64..0.09) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = MaskMatrix::new(Matrix::from_fn(20, 2, |_, _| rng.random_range(0.0..=1.0f64))).unwrap();
            let p = ProbabilityMatrix::new(Matrix::from_fn(20, 2, |_, _| 0.5)).unwrap();
            let low = select_clips(&a, &p, &DetectConfig { threshold: lo, merge_gap: 0 }).unwrap();
            let high = select_clips(&a, &p, &DetectConfig { threshold: lo + bump, merge_gap: 0 }).unwrap();
            for (h, l) in high.as_slice().iter().zip(low.as_slice()) {
                prop_assert!(!h || *l);
            }
        }
    }
}
