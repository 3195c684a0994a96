//! The retrain/score contract standing in for a trained snippet classifier.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Matrix, SnippetScoreMatrix, VideoRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-video visibility of the training data a classifier saw.
pub type Snapshot = BTreeMap<String, Vec<bool>>;

#[derive(Debug, PartialEq)]
struct HandleInner {
    id: String,
    step: usize,
    snapshot: Snapshot,
    parent: Option<ClassifierHandle>,
}

/// Immutable reference to the classifier trained at one erasion step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHandle(Arc<HandleInner>);

impl ClassifierHandle {
    pub fn new(
        id: impl Into<String>,
        step: usize,
        snapshot: Snapshot,
        parent: Option<ClassifierHandle>,
    ) -> Self {
        Self(Arc::new(HandleInner {
            id: id.into(),
            step,
            snapshot,
            parent,
        }))
    }

    /// Snapshots `dataset` into a handle one step after `prev`.
    pub fn from_dataset(prefix: &str, prev: Option<&ClassifierHandle>, dataset: &[VideoRecord]) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let step = prev.map_or(1, |p| p.step() + 1);
        let snapshot = dataset
            .iter()
            .map(|v| (v.id.clone(), v.visibility.clone()))
            .collect();
        Ok(Self::new(format!("{prefix}-step{step}"), step, snapshot, prev.cloned()))
    }

    pub fn id(&self) -> &str {
        &self.0.id
    }

    /// 1-based erasion step.
    pub fn step(&self) -> usize {
        self.0.step
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.0.snapshot
    }

    pub fn parent(&self) -> Option<&ClassifierHandle> {
        self.0.parent.as_ref()
    }

    /// Training-time visibility of one video, if it was part of the training set.
    pub fn visibility(&self, video_id: &str) -> Option<&[bool]> {
        self.0.snapshot.get(video_id).map(Vec::as_slice)
    }

    pub fn to_record(&self) -> HandleRecord {
        HandleRecord {
            id: self.id().to_owned(),
            step: self.step(),
            hidden: self
                .snapshot()
                .iter()
                .map(|(v, vis)| {
                    let idx = vis.iter().enumerate().filter_map(|(i, &s)| (!s).then_some(i)).collect();
                    (v.clone(), idx)
                })
                .collect(),
        }
    }
}

/// Serialized handle: the erased (hidden) snippet indices of each training video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandleRecord {
    pub id: String,
    pub step: usize,
    pub hidden: BTreeMap<String, Vec<usize>>,
}

impl HandleRecord {
    /// Rebuilds the handle chain from records ordered by step.
    pub fn restore_chain(records: &[HandleRecord], videos: &[VideoRecord]) -> Result<Vec<ClassifierHandle>> {
        let lengths: BTreeMap<&str, usize> = videos.iter().map(|v| (v.id.as_str(), v.n_snippets)).collect();
        let mut out: Vec<ClassifierHandle> = Vec::with_capacity(records.len());
        for (k, rec) in records.iter().enumerate() {
            if rec.step != k + 1 {
                return Err(Error::InvalidFile(format!(
                    "handle {} has step {}, expected {}",
                    rec.id,
                    rec.step,
                    k + 1
                )));
            }
            let mut snapshot = Snapshot::new();
            for (&vid, &n) in &lengths {
                let mut vis = vec![true; n];
                for &i in rec.hidden.get(vid).map(Vec::as_slice).unwrap_or(&[]) {
                    *vis.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len: n })? = false;
                }
                snapshot.insert(vid.to_owned(), vis);
            }
            if let Some(unknown) = rec.hidden.keys().find(|v| !lengths.contains_key(v.as_str())) {
                return Err(Error::InvalidFile(format!("handle {} names unknown video {unknown}", rec.id)));
            }
            out.push(ClassifierHandle::new(rec.id.clone(), rec.step, snapshot, out.last().cloned()));
        }
        Ok(out)
    }
}

/// Source of snippet scores: the deep classifier's role, behind a narrow interface.
pub trait ScoreProvider<T: Scalar>: Sync {
    fn n_classes(&self) -> usize;

    /// Trains θ^t from θ^{t−1} on the visibility-masked dataset.
    fn retrain(&self, prev: Option<&ClassifierHandle>, dataset: &[VideoRecord]) -> Result<ClassifierHandle>;

    /// Scores all N snippets of `video`, ignoring its visibility.
    fn score(&self, handle: &ClassifierHandle, video: &VideoRecord) -> Result<SnippetScoreMatrix<T>>;
}

/// Per-step score matrices produced offline by a real network.
#[derive(Debug, Clone, PartialEq)]
pub struct FileProvider {
    n_classes: usize,
    /// video id → step matrices (index 0 is step 1).
    scores: BTreeMap<String, Vec<Matrix<f64>>>,
    n_steps: usize,
}

impl FileProvider {
    pub fn new(n_classes: usize, scores: BTreeMap<String, Vec<Matrix<f64>>>) -> Result<Self> {
        let n_steps = scores.values().map(Vec::len).min().unwrap_or(0);
        if scores.values().any(|s| s.len() != n_steps) {
            return Err(Error::InvalidFile("videos disagree on the number of steps".into()));
        }
        if n_steps == 0 {
            return Err(Error::InvalidFile("score file has no steps".into()));
        }
        for (vid, steps) in &scores {
            for m in steps {
                crate::domain::validate(m)?;
                if m.cols() != n_classes {
                    return Err(Error::ShapeMismatch(format!(
                        "video {vid}: {} columns, label table has {n_classes}",
                        m.cols()
                    )));
                }
            }
        }
        Ok(Self {
            n_classes,
            scores,
            n_steps,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// One handle per stored step.
    pub fn handles(&self, dataset: &[VideoRecord]) -> Result<Vec<ClassifierHandle>> {
        let mut out: Vec<ClassifierHandle> = Vec::new();
        for _ in 0..self.n_steps {
            let h = ScoreProvider::<f64>::retrain(self, out.last(), dataset)?;
            out.push(h);
        }
        Ok(out)
    }
}

impl<T: Scalar> ScoreProvider<T> for FileProvider {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn retrain(&self, prev: Option<&ClassifierHandle>, dataset: &[VideoRecord]) -> Result<ClassifierHandle> {
        let h = ClassifierHandle::from_dataset("file", prev, dataset)?;
        if h.step() > self.n_steps {
            return Err(Error::Provider(format!(
                "score file holds {} steps, step {} requested",
                self.n_steps,
                h.step()
            )));
        }
        Ok(h)
    }

    fn score(&self, handle: &ClassifierHandle, video: &VideoRecord) -> Result<SnippetScoreMatrix<T>> {
        let steps = self
            .scores
            .get(&video.id)
            .ok_or_else(|| Error::Provider(format!("no scores for video {}", video.id)))?;
        let m = steps
            .get(handle.step().wrapping_sub(1))
            .ok_or_else(|| Error::Provider(format!("no step {} for video {}", handle.step(), video.id)))?;
        if m.rows() != video.n_snippets {
            return Err(Error::ShapeMismatch(format!(
                "video {}: {} score rows for {} snippets",
                video.id,
                m.rows(),
                video.n_snippets
            )));
        }
        SnippetScoreMatrix::new(m.map(T::lit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn videos() -> Vec<VideoRecord> {
        let mut a = VideoRecord::new("a", 3, 5, 25.0, BTreeSet::from([0])).unwrap();
        a.visibility[1] = false;
        let b = VideoRecord::new("b", 2, 5, 25.0, BTreeSet::from([1])).unwrap();
        vec![a, b]
    }

    #[test]
    fn handle_record_round_trip() {
        let vs = videos();
        let h1 = ClassifierHandle::from_dataset("x", None, &vs).unwrap();
        let h2 = ClassifierHandle::from_dataset("x", Some(&h1), &vs).unwrap();
        assert_eq!(h2.step(), 2);
        assert_eq!(h2.parent(), Some(&h1));
        let recs = vec![h1.to_record(), h2.to_record()];
        assert_eq!(recs[0].hidden["a"], vec![1]);
        let restored = HandleRecord::restore_chain(&recs, &vs).unwrap();
        assert_eq!(restored[1].snapshot(), h2.snapshot());
        assert_eq!(restored[1].parent().unwrap().id(), "x-step1");
    }

    #[test]
    fn restore_rejects_gaps() {
        let vs = videos();
        let h1 = ClassifierHandle::from_dataset("x", None, &vs).unwrap();
        let mut rec = h1.to_record();
        rec.step = 2;
        assert!(HandleRecord::restore_chain(&[rec], &vs).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(ClassifierHandle::from_dataset("x", None, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn file_provider_serves_steps() {
        let vs = videos();
        let mut scores = BTreeMap::new();
        scores.insert("a".to_string(), vec![Matrix::filled(3, 2, 1.0), Matrix::filled(3, 2, 2.0)]);
        scores.insert("b".to_string(), vec![Matrix::filled(2, 2, 3.0), Matrix::filled(2, 2, 4.0)]);
        let p = FileProvider::new(2, scores).unwrap();
        let hs = p.handles(&vs).unwrap();
        assert_eq!(hs.len(), 2);
        let m: SnippetScoreMatrix<f64> = p.score(&hs[1], &vs[0]).unwrap();
        assert_eq!(m.values().get(0, 0), 2.0);
        assert!(ScoreProvider::<f64>::retrain(&p, Some(&hs[1]), &vs).is_err());
    }
}
