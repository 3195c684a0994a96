//! Seeded synthetic worlds and a re-ranking classifier simulator.
//!
//! Every ground-truth snippet carries a hidden discriminability `d`. A simulated
//! classifier trained on a visibility snapshot scores a visible snippet of class
//! `j` by the percentile of its `d` among the visible `d`-bearing snippets of that
//! (video, class) pair, scaled by the contrast gain. Erasing the top-ranked
//! snippets therefore lifts every remaining one, which is the re-ranking a
//! retrained classifier is expected to perform. Snippets erased from the snapshot
//! keep a fraction (`retention`) of the response they had under the parent
//! classifier, since θ^t is fine-tuned from θ^{t−1}.
//!
//! Distractors are background snippets with weak evidence for a class. They rank
//! below the true action snippets, so they only surface once erasion has
//! exhausted those, which is how excessive erasion turns into false positives.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{snippet_to_seconds, GroundTruthSegment, Matrix, SnippetScoreMatrix, VideoRecord};
use crate::error::{Error, Result};
use crate::provider::{ClassifierHandle, ScoreProvider};
use crate::rng::keyed_stream;
use crate::scalar::Scalar;

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

/// Half-open real range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

/// Explicit video layout, overriding random placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoLayout {
    pub n_snippets: usize,
    /// (class, first snippet, last snippet), inclusive.
    pub segments: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticWorldConfig {
    pub n_videos: usize,
    pub n_classes: usize,
    pub snippets_per_video: Span,
    pub labels_per_video: Span,
    pub segments_per_label: Span,
    pub segment_len: Span,
    /// Minimum background snippets between two GT segments.
    pub segment_gap: usize,
    /// Probability that a GT snippet belongs to the top discriminability tier.
    pub tier_one_fraction: f64,
    /// Draw the tier once per GT segment instead of once per snippet.
    pub tier_per_segment: bool,
    pub tier_one_d: Range,
    pub tier_two_d: Range,
    pub distractors_per_label: Span,
    pub distractor_d: Range,
    pub base_score: f64,
    /// Contrast gain a: score of the top-percentile snippet above the base.
    pub contrast_gain: f64,
    pub noise_scale: f64,
    /// Fraction of the parent classifier's response kept for erased snippets.
    pub retention: f64,
    pub frames_per_snippet: u32,
    pub fps: f64,
    pub seed: u64,
    pub layouts: Option<Vec<VideoLayout>>,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            n_videos: 60,
            n_classes: 5,
            snippets_per_video: Span::new(60, 100),
            labels_per_video: Span::new(1, 1),
            segments_per_label: Span::new(1, 3),
            segment_len: Span::new(8, 20),
            segment_gap: 3,
            tier_one_fraction: 0.5,
            tier_per_segment: false,
            tier_one_d: Range::new(0.6, 1.0),
            tier_two_d: Range::new(0.2, 0.6),
            distractors_per_label: Span::new(4, 8),
            distractor_d: Range::new(0.01, 0.2),
            base_score: 0.0,
            contrast_gain: 5.0,
            noise_scale: 0.5,
            retention: 0.8,
            frames_per_snippet: 15,
            fps: 30.0,
            seed: 0,
            layouts: None,
        }
    }
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        let spans = [
            ("snippets_per_video", self.snippets_per_video),
            ("labels_per_video", self.labels_per_video),
            ("segments_per_label", self.segments_per_label),
            ("segment_len", self.segment_len),
            ("distractors_per_label", self.distractors_per_label),
        ];
        for (name, s) in spans {
            if s.min > s.max {
                return Err(Error::InvalidConfig(format!("{name}: empty range {}..={}", s.min, s.max)));
            }
        }
        let ranges = [
            ("tier_one_d", self.tier_one_d),
            ("tier_two_d", self.tier_two_d),
            ("distractor_d", self.distractor_d),
        ];
        for (name, r) in ranges {
            if !(r.lo > 0.0 && r.lo <= r.hi && r.hi <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie within (0, 1]")));
            }
        }
        if self.n_videos == 0 && self.layouts.is_none() {
            return bad("n_videos must be positive");
        }
        if self.n_classes < 2 {
            return bad("n_classes must be at least 2");
        }
        if self.labels_per_video.min == 0 || self.labels_per_video.max > self.n_classes {
            return bad("labels_per_video must lie within 1..=n_classes");
        }
        if self.segments_per_label.min == 0 || self.segment_len.min == 0 || self.snippets_per_video.min == 0 {
            return bad("segment counts, lengths and video lengths must be positive");
        }
        if !(0.0..=1.0).contains(&self.tier_one_fraction) || !(0.0..=1.0).contains(&self.retention) {
            return bad("tier_one_fraction and retention must lie in [0, 1]");
        }
        if !(self.contrast_gain > 0.0) || !(self.noise_scale >= 0.0) || !self.base_score.is_finite() {
            return bad("contrast_gain must be positive, noise_scale nonnegative, base_score finite");
        }
        if self.frames_per_snippet == 0 || !(self.fps > 0.0) {
            return bad("frames_per_snippet and fps must be positive");
        }
        if let Some(layouts) = &self.layouts {
            if layouts.is_empty() {
                return bad("layouts must not be empty");
            }
            for (k, l) in layouts.iter().enumerate() {
                for &(c, s, e) in &l.segments {
                    if c >= self.n_classes || s > e || e >= l.n_snippets {
                        return Err(Error::InvalidConfig(format!("layout {k}: bad segment ({c}, {s}, {e})")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    GroundTruth,
    Distractor,
}

/// One snippet carrying hidden evidence for a class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub snippet: usize,
    pub d: f64,
    pub kind: EvidenceKind,
    /// 1 or 2 for ground truth, 0 for distractors.
    pub tier: u8,
}

/// Inclusive snippet span of one action instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtSpan {
    pub class: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub record: VideoRecord,
    pub gt: Vec<GtSpan>,
    /// Class → evidence-bearing snippets, sorted by snippet index.
    pub profile: BTreeMap<usize, Vec<Evidence>>,
}

impl SyntheticVideo {
    pub fn ground_truth(&self) -> Result<Vec<GroundTruthSegment>> {
        self.gt
            .iter()
            .map(|g| {
                GroundTruthSegment::new(
                    self.record.id.clone(),
                    g.class,
                    snippet_to_seconds(g.start, &self.record)?.start,
                    snippet_to_seconds(g.end, &self.record)?.end,
                )
            })
            .collect()
    }

    /// GT snippet indices of `class`.
    pub fn gt_snippets(&self, class: usize) -> BTreeSet<usize> {
        self.gt
            .iter()
            .filter(|g| g.class == class)
            .flat_map(|g| g.start..=g.end)
            .collect()
    }

    /// GT snippets of `class` in discriminability tier `tier`.
    pub fn tier_snippets(&self, class: usize, tier: u8) -> BTreeSet<usize> {
        self.profile
            .get(&class)
            .into_iter()
            .flatten()
            .filter(|e| e.kind == EvidenceKind::GroundTruth && e.tier == tier)
            .map(|e| e.snippet)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: SyntheticWorldConfig,
    pub label_table: Vec<String>,
    pub videos: Vec<SyntheticVideo>,
}

impl SyntheticWorld {
    pub fn records(&self) -> Vec<VideoRecord> {
        self.videos.iter().map(|v| v.record.clone()).collect()
    }

    pub fn ground_truth(&self) -> Result<Vec<GroundTruthSegment>> {
        let mut out = Vec::new();
        for v in &self.videos {
            out.extend(v.ground_truth()?);
        }
        Ok(out)
    }

    pub fn video(&self, id: &str) -> Option<&SyntheticVideo> {
        self.videos.iter().find(|v| v.record.id == id)
    }
}

pub fn default_label_table(n_classes: usize) -> Vec<String> {
    (0..n_classes).map(|j| format!("action_{j:02}")).collect()
}

fn place_segments(
    rng: &mut impl Rng,
    n: usize,
    labels: &BTreeSet<usize>,
    cfg: &SyntheticWorldConfig,
) -> Vec<GtSpan> {
    let mut spans: Vec<GtSpan> = Vec::new();
    let free = |spans: &[GtSpan], s: usize, e: usize| {
        spans
            .iter()
            .all(|g| e + cfg.segment_gap < g.start || g.end + cfg.segment_gap < s)
    };
    for &class in labels {
        let want = cfg.segments_per_label.sample(rng);
        let mut placed = 0;
        for attempt in 0..200 {
            if placed == want {
                break;
            }
            // Every label needs one instance; shrink the segment if placement keeps failing.
            let mut len = cfg.segment_len.sample(rng).min(n);
            if attempt > 100 {
                len = cfg.segment_len.min.min(n);
            }
            let start = rng.random_range(0..=n - len);
            let end = start + len - 1;
            if free(&spans, start, end) {
                spans.push(GtSpan { class, start, end });
                placed += 1;
            }
        }
        if placed == 0 {
            if let Some(i) = (0..n).find(|&i| free(&spans, i, i)) {
                spans.push(GtSpan { class, start: i, end: i });
            }
        }
    }
    spans.sort_by_key(|g| g.start);
    spans
}

fn build_profile(
    rng: &mut impl Rng,
    n: usize,
    gt: &[GtSpan],
    cfg: &SyntheticWorldConfig,
) -> BTreeMap<usize, Vec<Evidence>> {
    let mut profile: BTreeMap<usize, Vec<Evidence>> = BTreeMap::new();
    let mut taken = vec![false; n];
    for g in gt {
        let entry = profile.entry(g.class).or_default();
        let segment_tier_one = rng.random_bool(cfg.tier_one_fraction);
        for snippet in g.start..=g.end {
            taken[snippet] = true;
            let tier_one = if cfg.tier_per_segment { segment_tier_one } else { rng.random_bool(cfg.tier_one_fraction) };
            let (d, tier) = if tier_one {
                (cfg.tier_one_d.sample(rng), 1)
            } else {
                (cfg.tier_two_d.sample(rng), 2)
            };
            entry.push(Evidence {
                snippet,
                d,
                kind: EvidenceKind::GroundTruth,
                tier,
            });
        }
    }
    let classes: Vec<usize> = profile.keys().copied().collect();
    for class in classes {
        let want = cfg.distractors_per_label.sample(rng);
        let pool: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let picks = rand::seq::index::sample(rng, pool.len(), want.min(pool.len()));
        let entry = profile.get_mut(&class).unwrap();
        for k in picks.iter() {
            let snippet = pool[k];
            taken[snippet] = true;
            entry.push(Evidence {
                snippet,
                d: cfg.distractor_d.sample(rng),
                kind: EvidenceKind::Distractor,
                tier: 0,
            });
        }
        entry.sort_by_key(|e| e.snippet);
    }
    profile
}

/// Generates a seeded synthetic world.
pub fn generate_world(cfg: &SyntheticWorldConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let layouts: Vec<Option<&VideoLayout>> = match &cfg.layouts {
        Some(ls) => ls.iter().map(Some).collect(),
        None => vec![None; cfg.n_videos],
    };
    let mut videos = Vec::with_capacity(layouts.len());
    for (k, layout) in layouts.into_iter().enumerate() {
        let id = format!("video_{k:04}");
        let mut rng = keyed_stream(cfg.seed, "world", &id, 0, 0);
        let (n, gt) = match layout {
            Some(l) => {
                let mut gt: Vec<GtSpan> = l
                    .segments
                    .iter()
                    .map(|&(class, start, end)| GtSpan { class, start, end })
                    .collect();
                gt.sort_by_key(|g| g.start);
                (l.n_snippets, gt)
            }
            None => {
                let n = cfg.snippets_per_video.sample(&mut rng);
                let k_labels = cfg.labels_per_video.sample(&mut rng);
                let labels: BTreeSet<usize> = rand::seq::index::sample(&mut rng, cfg.n_classes, k_labels)
                    .iter()
                    .collect();
                let gt = place_segments(&mut rng, n, &labels, cfg);
                (n, gt)
            }
        };
        let labels: BTreeSet<usize> = gt.iter().map(|g| g.class).collect();
        let profile = build_profile(&mut rng, n, &gt, cfg);
        let record = VideoRecord::new(id, n, cfg.frames_per_snippet, cfg.fps, labels)?;
        videos.push(SyntheticVideo { record, gt, profile });
    }
    Ok(SyntheticWorld {
        config: cfg.clone(),
        label_table: default_label_table(cfg.n_classes),
        videos,
    })
}

/// Deterministic classifier simulator over a synthetic world.
#[derive(Debug, Clone)]
pub struct Simulator<'w> {
    world: &'w SyntheticWorld,
    index: HashMap<&'w str, usize>,
}

impl<'w> Simulator<'w> {
    pub fn new(world: &'w SyntheticWorld) -> Self {
        let index = world
            .videos
            .iter()
            .enumerate()
            .map(|(k, v)| (v.record.id.as_str(), k))
            .collect();
        Self { world, index }
    }

    pub fn world(&self) -> &SyntheticWorld {
        self.world
    }

    fn lookup(&self, id: &str) -> Result<&'w SyntheticVideo> {
        self.index
            .get(id)
            .map(|&k| &self.world.videos[k])
            .ok_or_else(|| Error::Provider(format!("video {id} is not part of the world")))
    }

    /// Noise-free class responses above the base score, N×C.
    pub fn signal(&self, handle: &ClassifierHandle, video: &SyntheticVideo) -> Matrix<f64> {
        let n = video.record.n_snippets;
        let c = self.world.config.n_classes;
        let parent = handle.parent().map(|p| self.signal(p, video));
        let all_visible;
        let vis = match handle.visibility(&video.record.id) {
            Some(v) if v.len() == n => v,
            _ => {
                all_visible = vec![true; n];
                &all_visible
            }
        };
        let gain = self.world.config.contrast_gain;
        let retention = self.world.config.retention;
        let mut out = Matrix::filled(n, c, 0.0);
        for (&class, evidence) in &video.profile {
            let mut visible: Vec<(f64, usize)> = evidence
                .iter()
                .filter(|e| vis[e.snippet])
                .map(|e| (e.d, e.snippet))
                .collect();
            visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let count = visible.len() as f64;
            for (rank, &(_, snippet)) in visible.iter().enumerate() {
                out.set(snippet, class, gain * (rank + 1) as f64 / count);
            }
            for e in evidence.iter().filter(|e| !vis[e.snippet]) {
                let kept = parent.as_ref().map_or(0.0, |p| p.get(e.snippet, class));
                out.set(e.snippet, class, retention * kept);
            }
        }
        out
    }
}

impl<T: Scalar> ScoreProvider<T> for Simulator<'_> {
    fn n_classes(&self) -> usize {
        self.world.config.n_classes
    }

    fn retrain(&self, prev: Option<&ClassifierHandle>, dataset: &[VideoRecord]) -> Result<ClassifierHandle> {
        ClassifierHandle::from_dataset("sim", prev, dataset)
    }

    fn score(&self, handle: &ClassifierHandle, video: &VideoRecord) -> Result<SnippetScoreMatrix<T>> {
        let sv = self.lookup(&video.id)?;
        let cfg = &self.world.config;
        let signal = self.signal(handle, sv);
        let scores = if cfg.noise_scale > 0.0 {
            let mut rng = keyed_stream(cfg.seed, "score", &format!("{}/{}", handle.id(), video.id), 0, 0);
            let normal = Normal::new(0.0, cfg.noise_scale).expect("noise scale validated");
            Matrix::from_fn(signal.rows(), signal.cols(), |i, j| {
                T::lit(cfg.base_score + signal.get(i, j) + normal.sample(&mut rng))
            })
        } else {
            signal.map(|s| T::lit(cfg.base_score + s))
        };
        SnippetScoreMatrix::new(scores)
    }
}
