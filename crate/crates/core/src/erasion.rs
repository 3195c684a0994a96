//! Training with step-by-step erasion: stochastic removal of high-odds snippets,
//! retraining, and the integral-segment termination rule.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::VideoRecord;
use crate::error::{Error, Result};
use crate::provider::{ClassifierHandle, ScoreProvider};
use crate::rng::keyed_stream;
use crate::scalar::Scalar;
use crate::scoring::{odds_over_rows, MaskMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasionConfig {
    pub mask: MaskMode,
    pub t_max: usize,
    pub eta: f64,
    pub l_min: usize,
    pub seed: u64,
    /// When false, classes only stop at `t_max`.
    pub termination: bool,
}

impl Default for ErasionConfig {
    fn default() -> Self {
        Self {
            mask: MaskMode::default(),
            t_max: 4,
            eta: 0.05,
            l_min: 2,
            seed: 0,
            termination: true,
        }
    }
}

impl ErasionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be finite and nonnegative, got {}", self.eta)));
        }
        if self.l_min == 0 {
            return Err(Error::InvalidConfig("l_min must be at least 1".into()));
        }
        if let MaskMode::Soft(p) = self.mask {
            crate::scoring::MaskParams::new(p.tau)?;
        }
        Ok(())
    }
}

/// Uniform draws ε ∈ [0, 1)^N for one (video, class, step).
pub fn epsilon_stream(seed: u64, video_id: &str, class: usize, step: usize, n: usize) -> Vec<f64> {
    let mut rng = keyed_stream(seed, "eps", video_id, class as u64, step as u64);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Positions `k` with `odds[k] > eps[k]`.
pub fn stochastic_erase<T: Scalar>(odds: &[T], eps: &[f64]) -> Result<Vec<usize>> {
    if odds.len() != eps.len() {
        return Err(Error::ShapeMismatch(format!("{} odds vs {} draws", odds.len(), eps.len())));
    }
    let mut out = Vec::new();
    for (k, (&s, &e)) in odds.iter().zip(eps).enumerate() {
        let s = s.as_f64();
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(s));
        }
        if s > e {
            out.push(k);
        }
    }
    Ok(out)
}

/// Number of maximal runs of `true` with length at least `l_min`.
pub fn count_integral_segments(erased: &[bool], l_min: usize) -> usize {
    let mut count = 0;
    let mut run = 0;
    for &e in erased.iter().chain(std::iter::once(&false)) {
        if e {
            run += 1;
        } else {
            if run >= l_min && run > 0 {
                count += 1;
            }
            run = 0;
        }
    }
    count
}

/// m^T = |M^T| / |M^1| for the counts of steps 1..=T.
pub fn termination_metric(counts: &[usize]) -> Result<f64> {
    let (&first, &last) = match (counts.first(), counts.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::ShapeMismatch("no step counts".into())),
    };
    if first == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(last as f64 / first as f64)
}

/// Whether erasion stops after step T = `m_seq.len()`.
pub fn should_stop(m_seq: &[f64], cfg: &ErasionConfig) -> bool {
    let t = m_seq.len();
    if t >= cfg.t_max {
        return true;
    }
    cfg.termination && t >= 2 && (m_seq[t - 1] - m_seq[t - 2]).abs() < cfg.eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    /// m barely changed at `step`; steps up to `step − 1` are kept.
    Converged { step: usize },
    /// Reached `t_max` at `step`; every step is kept.
    Capped { step: usize },
    /// No integral segment at step 1.
    ZeroBaseline,
}

impl StopReason {
    pub fn kept_steps(&self) -> usize {
        match *self {
            StopReason::Converged { step } => step - 1,
            StopReason::Capped { step } => step,
            StopReason::ZeroBaseline => 1,
        }
    }
}

/// Per-class curves |M^t| and m^t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrace {
    pub counts: Vec<usize>,
    pub metrics: Vec<f64>,
    pub stop: Option<StopReason>,
}

impl ClassTrace {
    pub fn kept_steps(&self) -> Option<usize> {
        self.stop.map(|s| s.kept_steps())
    }
}

/// Erased sets of one step: video → class → snippet indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub handle_id: String,
    pub active: BTreeSet<usize>,
    pub erased: BTreeMap<String, BTreeMap<usize, Vec<usize>>>,
}

impl StepTrace {
    pub fn erased_count(&self) -> usize {
        self.erased.values().flat_map(|m| m.values()).map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasionTrace {
    pub config: ErasionConfig,
    pub steps: Vec<StepTrace>,
    pub classes: BTreeMap<usize, ClassTrace>,
}

impl ErasionTrace {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Classifiers retained for `class`; classes never labeled keep every step.
    pub fn kept_steps(&self, class: usize) -> usize {
        self.classes
            .get(&class)
            .and_then(ClassTrace::kept_steps)
            .unwrap_or(self.n_steps())
            .clamp(1, self.n_steps().max(1))
    }

    /// Union of every class's erased set of `video_id` up to and including `step`.
    pub fn cumulative_erased(&self, video_id: &str, step: usize) -> BTreeSet<usize> {
        self.steps
            .iter()
            .take(step)
            .filter_map(|s| s.erased.get(video_id))
            .flat_map(|m| m.values().flatten().copied())
            .collect()
    }
}

/// Outcome of one erasion step for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoErasure {
    pub visibility: Vec<bool>,
    pub erased: BTreeMap<usize, Vec<usize>>,
}

fn erase_video<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    handle: &ClassifierHandle,
    video: &VideoRecord,
    active: &BTreeSet<usize>,
    cfg: &ErasionConfig,
    step: usize,
) -> Result<VideoErasure> {
    let classes: Vec<usize> = video.labels.intersection(active).copied().collect();
    let visible = video.visible_indices();
    if visible.is_empty() {
        return Err(Error::InvalidConfig(format!("video {} has no visible snippet", video.id)));
    }
    if classes.is_empty() {
        return Ok(VideoErasure {
            visibility: video.visibility.clone(),
            erased: BTreeMap::new(),
        });
    }
    let phi = provider.score(handle, video)?;
    if phi.n_snippets() != video.n_snippets {
        return Err(Error::ShapeMismatch(format!(
            "provider returned {} rows for video {} with {} snippets",
            phi.n_snippets(),
            video.id,
            video.n_snippets
        )));
    }
    if let Some(&j) = classes.iter().find(|&&j| j >= phi.n_classes()) {
        return Err(Error::IndexOutOfRange { index: j, len: phi.n_classes() });
    }
    let odds = odds_over_rows(&phi, &visible, &cfg.mask)?;
    let mut erased: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &j in &classes {
        let eps_full = epsilon_stream(cfg.seed, &video.id, j, step, video.n_snippets);
        let col = odds.column(j);
        let eps: Vec<f64> = visible.iter().map(|&i| eps_full[i]).collect();
        let hits = stochastic_erase(&col, &eps)?;
        erased.insert(j, hits.into_iter().map(|k| visible[k]).collect());
    }
    let union: BTreeSet<usize> = erased.values().flatten().copied().collect();
    if union.len() == visible.len() {
        let keep_pos = (0..visible.len())
            .min_by(|&a, &b| {
                let oa = classes.iter().map(|&j| odds.get(a, j)).fold(T::neg_infinity(), T::max);
                let ob = classes.iter().map(|&j| odds.get(b, j)).fold(T::neg_infinity(), T::max);
                oa.partial_cmp(&ob).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            })
            .expect("at least one visible snippet");
        let keep = visible[keep_pos];
        for set in erased.values_mut() {
            set.retain(|&i| i != keep);
        }
    }
    let mut visibility = video.visibility.clone();
    for set in erased.values() {
        for &i in set {
            visibility[i] = false;
        }
    }
    erased.retain(|_, v| !v.is_empty());
    Ok(VideoErasure { visibility, erased })
}

/// One round of erasion over every video, using `handle` (θ^t) and the classes in `active`.
///
/// Videos are processed in parallel; results come back in dataset order.
pub fn erase_step<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    handle: &ClassifierHandle,
    dataset: &[VideoRecord],
    active: &BTreeSet<usize>,
    cfg: &ErasionConfig,
    step: usize,
) -> Result<Vec<VideoErasure>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset
        .par_iter()
        .map(|v| erase_video(provider, handle, v, active, cfg, step))
        .collect()
}

/// Classifier sequence θ^1..θ^T and the trace of the erasion that produced it.
#[derive(Debug, Clone)]
pub struct Mined {
    pub handles: Vec<ClassifierHandle>,
    pub trace: ErasionTrace,
    /// Training data after the final step.
    pub dataset: Vec<VideoRecord>,
}

/// Runs step-by-step erasion until every labeled class has stopped.
pub fn mine<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    dataset: &[VideoRecord],
    provider: &P,
    cfg: &ErasionConfig,
) -> Result<Mined> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for v in dataset {
        v.check()?;
    }
    let mut records = dataset.to_vec();
    let labeled: BTreeSet<usize> = records.iter().flat_map(|v| v.labels.iter().copied()).collect();
    let mut active = labeled.clone();
    let mut classes: BTreeMap<usize, ClassTrace> = labeled
        .iter()
        .map(|&j| {
            (
                j,
                ClassTrace {
                    counts: Vec::new(),
                    metrics: Vec::new(),
                    stop: None,
                },
            )
        })
        .collect();
    // Cumulative per-(video, class) erased masks for the integral-segment counts.
    let mut cumulative: Vec<BTreeMap<usize, Vec<bool>>> = records
        .iter()
        .map(|v| v.labels.iter().map(|&j| (j, vec![false; v.n_snippets])).collect())
        .collect();
    let mut handles: Vec<ClassifierHandle> = Vec::new();
    let mut steps = Vec::new();

    for step in 1..=cfg.t_max {
        if active.is_empty() {
            break;
        }
        let handle = provider.retrain(handles.last(), &records)?;
        let outcome = erase_step(provider, &handle, &records, &active, cfg, step)?;
        let mut erased = BTreeMap::new();
        for ((rec, cum), out) in records.iter_mut().zip(cumulative.iter_mut()).zip(outcome) {
            for (&j, set) in &out.erased {
                let mask = cum.get_mut(&j).expect("erased class is labeled");
                for &i in set {
                    mask[i] = true;
                }
            }
            rec.visibility = out.visibility;
            if !out.erased.is_empty() {
                erased.insert(rec.id.clone(), out.erased);
            }
        }
        steps.push(StepTrace {
            step,
            handle_id: handle.id().to_owned(),
            active: active.clone(),
            erased,
        });
        handles.push(handle);

        let mut stopped = Vec::new();
        for &j in &active {
            let count: usize = cumulative
                .iter()
                .filter_map(|c| c.get(&j))
                .map(|m| count_integral_segments(m, cfg.l_min))
                .sum();
            let ct = classes.get_mut(&j).expect("active class is labeled");
            ct.counts.push(count);
            let stop = match termination_metric(&ct.counts) {
                Ok(m) => {
                    ct.metrics.push(m);
                    let t = ct.metrics.len();
                    if !should_stop(&ct.metrics, cfg) {
                        None
                    } else if t >= 2 && cfg.termination && (ct.metrics[t - 1] - ct.metrics[t - 2]).abs() < cfg.eta {
                        Some(StopReason::Converged { step })
                    } else {
                        Some(StopReason::Capped { step })
                    }
                }
                Err(Error::ZeroBaseline) if cfg.termination => Some(StopReason::ZeroBaseline),
                Err(Error::ZeroBaseline) => (step >= cfg.t_max).then_some(StopReason::Capped { step }),
                Err(e) => return Err(e),
            };
            if let Some(s) = stop {
                ct.stop = Some(s);
                stopped.push(j);
            }
        }
        for j in stopped {
            active.remove(&j);
        }
    }

    Ok(Mined {
        handles,
        trace: ErasionTrace {
            config: *cfg,
            steps,
            classes,
        },
        dataset: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Matrix, SnippetScoreMatrix};
    use crate::sim::{generate_world, Simulator, SyntheticWorldConfig};

    /// Provider returning the same scores for every handle.
    struct Fixed {
        c: usize,
        scores: BTreeMap<String, Matrix<f64>>,
    }

    impl ScoreProvider<f64> for Fixed {
        fn n_classes(&self) -> usize {
            self.c
        }
        fn retrain(&self, prev: Option<&ClassifierHandle>, dataset: &[VideoRecord]) -> Result<ClassifierHandle> {
            ClassifierHandle::from_dataset("fixed", prev, dataset)
        }
        fn score(&self, _: &ClassifierHandle, video: &VideoRecord) -> Result<SnippetScoreMatrix<f64>> {
            SnippetScoreMatrix::new(self.scores[&video.id].clone())
        }
    }

    fn video(id: &str, n: usize, labels: &[usize]) -> VideoRecord {
        VideoRecord::new(id, n, 5, 25.0, labels.iter().copied().collect()).unwrap()
    }

    #[test]
    fn stochastic_erase_forcing_cases() {
        let eps = epsilon_stream(1, "v", 0, 1, 100);
        assert!(eps.iter().all(|&e| (0.0..1.0).contains(&e)));
        assert_eq!(stochastic_erase(&[1.0f64; 100], &eps).unwrap().len(), 100);
        assert!(stochastic_erase(&[0.0f64; 100], &eps).unwrap().is_empty());
        assert!(stochastic_erase(&[1.5f64], &[0.2]).is_err());
        assert!(stochastic_erase(&[0.5f64], &[]).is_err());
    }

    #[test]
    fn stochastic_erase_monte_carlo() {
        let trials = 10_000;
        let hits: usize = (0..trials)
            .map(|k| stochastic_erase(&[0.3f64], &epsilon_stream(7, &format!("v{k}"), 0, 1, 1)).unwrap().len())
            .sum();
        let freq = hits as f64 / trials as f64;
        let tol = 3.0 * (0.3f64 * 0.7 / trials as f64).sqrt();
        assert!((freq - 0.3).abs() <= tol, "{freq}");
    }

    #[test]
    fn integral_segment_examples() {
        let b = |v: &[u8]| v.iter().map(|&x| x == 1).collect::<Vec<_>>();
        assert_eq!(count_integral_segments(&b(&[1, 1, 0, 1, 1, 1]), 2), 2);
        assert_eq!(count_integral_segments(&[false; 6], 2), 0);
        assert_eq!(count_integral_segments(&b(&[1, 0, 1, 0, 1]), 2), 0);
        assert_eq!(count_integral_segments(&b(&[1, 0, 1, 0, 1]), 1), 3);
        assert_eq!(count_integral_segments(&[], 1), 0);
    }

    #[test]
    fn termination_metric_examples() {
        assert_eq!(termination_metric(&[4]).unwrap(), 1.0);
        assert_eq!(termination_metric(&[4, 4, 5]).unwrap(), 1.25);
        assert!(matches!(termination_metric(&[0, 3]), Err(Error::ZeroBaseline)));
    }

    #[test]
    fn should_stop_examples() {
        let cfg = ErasionConfig::default();
        assert!(should_stop(&[1.0, 1.6, 1.62], &cfg));
        assert!(!should_stop(&[1.0, 1.5, 2.1], &cfg));
        assert!(should_stop(&[1.0, 2.0, 3.0, 4.0], &cfg));
        let off = ErasionConfig { termination: false, t_max: 6, ..cfg };
        assert!(!should_stop(&[1.0, 1.6, 1.62], &off));
        assert_eq!(StopReason::Converged { step: 3 }.kept_steps(), 2);
        assert_eq!(StopReason::Capped { step: 4 }.kept_steps(), 4);
    }

    #[test]
    fn config_validation() {
        assert!(ErasionConfig { t_max: 0, ..Default::default() }.validate().is_err());
        assert!(ErasionConfig { eta: -1.0, ..Default::default() }.validate().is_err());
        assert!(ErasionConfig { l_min: 0, ..Default::default() }.validate().is_err());
        assert!(ErasionConfig::default().validate().is_ok());
    }

    #[test]
    fn unlabeled_classes_never_erased() {
        let v = video("a", 6, &[0]);
        let scores = Matrix::from_fn(6, 3, |i, j| if j == 1 { 10.0 } else { i as f64 });
        let p = Fixed { c: 3, scores: BTreeMap::from([("a".to_owned(), scores)]) };
        let h = p.retrain(None, std::slice::from_ref(&v)).unwrap();
        let all: BTreeSet<usize> = (0..3).collect();
        for step in 1..20 {
            let out = erase_step(&p, &h, std::slice::from_ref(&v), &all, &ErasionConfig::default(), step).unwrap();
            assert!(out[0].erased.keys().all(|&j| j == 0));
        }
    }

    #[test]
    fn zero_odds_leave_visibility_unchanged() {
        // Constant columns give a degenerate mask, hence zero odds.
        let v = video("a", 5, &[0, 1]);
        let p = Fixed { c: 2, scores: BTreeMap::from([("a".to_owned(), Matrix::filled(5, 2, 1.0))]) };
        let m = mine::<f64, _>(std::slice::from_ref(&v), &p, &ErasionConfig { termination: false, ..Default::default() }).unwrap();
        assert_eq!(m.dataset[0].visibility, v.visibility);
        assert!(m.trace.steps.iter().all(|s| s.erased.is_empty()));
        assert_eq!(m.handles.len(), 4);
    }

    #[test]
    fn video_never_erased_to_emptiness() {
        let v = video("a", 3, &[0]);
        let scores = Matrix::from_rows(&[[9.0, 0.0], [8.0, 0.0], [0.0, 0.0]]).unwrap();
        let p = Fixed { c: 2, scores: BTreeMap::from([("a".to_owned(), scores)]) };
        let cfg = ErasionConfig { mask: MaskMode::Off, ..Default::default() };
        let h = p.retrain(None, std::slice::from_ref(&v)).unwrap();
        for step in 1..50 {
            let out = erase_step(&p, &h, std::slice::from_ref(&v), &BTreeSet::from([0]), &cfg, step).unwrap();
            assert!(out[0].visibility.iter().any(|&x| x));
        }
        let mut v1 = v.clone();
        v1.visibility = vec![false, false, true];
        let out = erase_step(&p, &h, &[v1], &BTreeSet::from([0]), &cfg, 1).unwrap();
        assert_eq!(out[0].visibility, vec![false, false, true]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let p = Fixed { c: 2, scores: BTreeMap::new() };
        assert!(matches!(mine::<f64, _>(&[], &p, &ErasionConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn dominant_snippet_erased_at_its_odds() {
        let cfg = SyntheticWorldConfig {
            n_classes: 2,
            noise_scale: 0.0,
            distractors_per_label: crate::sim::Span::new(0, 0),
            layouts: Some(vec![crate::sim::VideoLayout { n_snippets: 20, segments: vec![(0, 6, 11)] }]),
            ..Default::default()
        };
        let world = generate_world(&cfg).unwrap();
        let sim = Simulator::new(&world);
        let rec = world.videos[0].record.clone();
        let h = ScoreProvider::<f64>::retrain(&sim, None, std::slice::from_ref(&rec)).unwrap();
        let phi: SnippetScoreMatrix<f64> = sim.score(&h, &rec).unwrap();
        let odds = odds_over_rows(&phi, &rec.visible_indices(), &MaskMode::default()).unwrap();
        let top = world.videos[0].profile[&0]
            .iter()
            .max_by(|a, b| a.d.total_cmp(&b.d))
            .unwrap()
            .snippet;
        let expect = odds.get(top, 0);
        let trials = 5000;
        let hits = (0..trials)
            .filter(|&seed| {
                let e = ErasionConfig { seed, ..Default::default() };
                let out = erase_step::<f64, _>(&sim, &h, std::slice::from_ref(&rec), &BTreeSet::from([0]), &e, 1).unwrap();
                out[0].erased.get(&0).is_some_and(|s| s.contains(&top))
            })
            .count();
        let freq = hits as f64 / trials as f64;
        let tol = 3.0 * (expect * (1.0 - expect) / trials as f64).sqrt() + 1e-9;
        assert!((freq - expect).abs() <= tol, "{freq} vs {expect}");
    }

    fn tiered_world(seed: u64) -> crate::sim::SyntheticWorld {
        generate_world(&SyntheticWorldConfig {
            n_videos: 50,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn mine_invariants_on_synthetic_world() {
        let world = tiered_world(11);
        let sim = Simulator::new(&world);
        let cfg = ErasionConfig { seed: 3, ..Default::default() };
        let m = mine::<f64, _>(&world.records(), &sim, &cfg).unwrap();
        assert!(!m.handles.is_empty() && m.handles.len() <= cfg.t_max);
        for (k, h) in m.handles.iter().enumerate() {
            assert_eq!(h.step(), k + 1);
        }
        for v in &world.videos {
            let mut seen = BTreeSet::new();
            for s in &m.trace.steps {
                let here: BTreeSet<usize> = s
                    .erased
                    .get(&v.record.id)
                    .into_iter()
                    .flat_map(|m| m.values().flatten().copied())
                    .collect();
                assert!(seen.is_disjoint(&here));
                seen.extend(here);
            }
        }
        for ct in m.trace.classes.values() {
            if ct.counts[0] > 0 {
                assert_eq!(ct.metrics[0], 1.0);
            }
            assert!(ct.stop.is_some());
        }
        // Ground-truth recall of cumulative erasion is non-decreasing.
        let mut last = 0.0;
        for t in 1..=m.trace.n_steps() {
            let (mut hit, mut total) = (0usize, 0usize);
            for v in &world.videos {
                let cum = m.trace.cumulative_erased(&v.record.id, t);
                for &j in &v.record.labels {
                    let gt = v.gt_snippets(j);
                    total += gt.len();
                    hit += gt.intersection(&cum).count();
                }
            }
            let recall = hit as f64 / total as f64;
            assert!(recall >= last);
            last = recall;
        }
    }

    #[test]
    fn tiers_erased_in_order() {
        let world = tiered_world(12);
        let sim = Simulator::new(&world);
        let cfg = ErasionConfig { seed: 5, t_max: 2, termination: false, ..Default::default() };
        let m = mine::<f64, _>(&world.records(), &sim, &cfg).unwrap();
        // erased[t][tier]: GT snippets of each tier erased at step t + 1.
        let mut erased = [[0usize; 2]; 2];
        let mut sizes = [0usize; 2];
        for v in &world.videos {
            for &j in &v.record.labels {
                let tiers = [v.tier_snippets(j, 1), v.tier_snippets(j, 2)];
                for k in 0..2 {
                    sizes[k] += tiers[k].len();
                }
                for (t, s) in m.trace.steps.iter().enumerate() {
                    let Some(set) = s.erased.get(&v.record.id).and_then(|e| e.get(&j)) else {
                        continue;
                    };
                    for k in 0..2 {
                        erased[t][k] += set.iter().filter(|i| tiers[k].contains(i)).count();
                    }
                }
            }
        }
        // Each step's GT erasures are dominated by its own tier.
        assert!(erased[0][0] > erased[0][1], "{erased:?}");
        assert!(erased[1][1] > erased[1][0], "{erased:?}");
        // Over 80% of tier 1 goes at step 1 and of tier 2 by step 2.
        assert!(erased[0][0] as f64 > 0.8 * sizes[0] as f64, "{erased:?} of {sizes:?}");
        assert!((erased[0][1] + erased[1][1]) as f64 > 0.8 * sizes[1] as f64, "{erased:?} of {sizes:?}");
    }

    #[test]
    fn mine_is_deterministic_and_t_max_one() {
        let world = tiered_world(13);
        let sim = Simulator::new(&world);
        let cfg = ErasionConfig { seed: 8, ..Default::default() };
        let a = mine::<f64, _>(&world.records(), &sim, &cfg).unwrap();
        let b = mine::<f64, _>(&world.records(), &sim, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.dataset, b.dataset);
        let one = mine::<f64, _>(&world.records(), &sim, &ErasionConfig { t_max: 1, ..cfg }).unwrap();
        assert_eq!(one.handles.len(), 1);
        assert_eq!(one.trace.n_steps(), 1);
        for j in one.trace.classes.keys() {
            assert_eq!(one.trace.kept_steps(*j), 1);
        }
    }
}
