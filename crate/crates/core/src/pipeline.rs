//! End-to-end composition: simulate, mine, detect, evaluate and ablate.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::{mean_field_refine, CrfConfig};
use crate::detect::{detections_from_confidence, DetectConfig};
use crate::domain::{DetectionSegment, GroundTruthSegment, Matrix, ProbabilityMatrix, VideoRecord};
use crate::erasion::{mine, ErasionConfig, ErasionTrace, Mined};
use crate::error::{Error, Result};
use crate::eval::{map_at, EvalConfig, EvalReport};
use crate::fusion::{fuse, step_outputs};
use crate::provider::{ClassifierHandle, ScoreProvider};
use crate::rng::keyed_stream;
use crate::scalar::Scalar;
use crate::scoring::{softmax_in_place, MaskMode};
use crate::sim::{generate_world, Simulator, SyntheticWorld, SyntheticWorldConfig};

/// Every tunable of a run. Serialized into each output for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub world: SyntheticWorldConfig,
    pub erasion: ErasionConfig,
    pub crf: CrfConfig,
    pub use_crf: bool,
    pub detect: DetectConfig,
    pub eval: EvalConfig,
    /// Std of Gaussian noise added to log p̄ before refinement; 0 disables.
    pub fused_noise: f64,
    /// Use the first `steps` classifiers for every class instead of the mined stopping steps.
    pub steps: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            world: SyntheticWorldConfig::default(),
            erasion: ErasionConfig::default(),
            crf: CrfConfig::default(),
            use_crf: true,
            detect: DetectConfig::default(),
            eval: EvalConfig::default(),
            fused_noise: 0.0,
            steps: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.erasion.validate()?;
        self.crf.validate()?;
        self.detect.validate()?;
        self.eval.validate()?;
        if !(self.fused_noise >= 0.0 && self.fused_noise.is_finite()) {
            return Err(Error::InvalidConfig("fused_noise must be finite and nonnegative".into()));
        }
        if self.steps == Some(0) {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            mask: self.erasion.mask,
            crf: self.use_crf.then_some(self.crf),
            detect: self.detect,
            fused_noise: self.fused_noise,
            seed: self.erasion.seed,
        }
    }
}

/// Test-time settings of [`detect_video`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub mask: MaskMode,
    /// `None` skips refinement (p̃ = p̄).
    pub crf: Option<CrfConfig>,
    pub detect: DetectConfig,
    pub fused_noise: f64,
    pub seed: u64,
}

/// Runs `f` on a pool with `jobs` workers (0 = rayon's default).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Number of classifiers used for each class: the override, or the mined stopping step.
pub fn step_plan(trace: &ErasionTrace, n_classes: usize, n_handles: usize, steps: Option<usize>) -> Result<Vec<usize>> {
    if n_handles == 0 {
        return Err(Error::InvalidConfig("no classifiers".into()));
    }
    match steps {
        Some(t) if t > n_handles => Err(Error::InvalidConfig(format!(
            "requested {t} steps but only {n_handles} classifiers exist"
        ))),
        Some(t) => Ok(vec![t; n_classes]),
        None => Ok((0..n_classes).map(|j| trace.kept_steps(j).min(n_handles)).collect()),
    }
}

fn perturb<T: Scalar>(p: &ProbabilityMatrix<T>, scale: f64, seed: u64, video_id: &str) -> ProbabilityMatrix<T> {
    let mut rng = keyed_stream(seed, "fused-noise", video_id, 0, 0);
    let normal = Normal::new(0.0, scale).expect("noise scale validated");
    let (n, c) = p.values().shape();
    let mut out = Matrix::filled(n, c, T::zero());
    for i in 0..n {
        let row = out.row_mut(i);
        for (x, &q) in row.iter_mut().zip(p.values().row(i)) {
            *x = q.max(T::prob_floor()).ln() + T::lit(normal.sample(&mut rng));
        }
        softmax_in_place(row);
    }
    ProbabilityMatrix::new_unchecked(out)
}

/// Collect → (noise) → refine → extract on one full video.
///
/// `plan[j]` is the number of leading classifiers fused for class `j`.
pub fn detect_video<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    video: &VideoRecord,
    handles: &[ClassifierHandle],
    plan: &[usize],
    opts: &DetectOptions,
) -> Result<Vec<DetectionSegment>> {
    let c = provider.n_classes();
    if plan.len() != c {
        return Err(Error::ShapeMismatch(format!("plan has {} classes, provider {c}", plan.len())));
    }
    let t_max = plan.iter().copied().max().unwrap_or(0);
    if t_max == 0 || t_max > handles.len() || plan.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "step plan {plan:?} incompatible with {} classifiers",
            handles.len()
        )));
    }
    let full = video.unerased();
    let (masks, probs): (Vec<_>, Vec<_>) = step_outputs(provider, &full, &handles[..t_max], &opts.mask)?
        .into_iter()
        .unzip();
    let distinct: BTreeSet<usize> = plan.iter().copied().collect();
    let mut out = Vec::new();
    for t in distinct {
        let fused = fuse(&masks[..t], &probs[..t])?;
        let mut p = fused.fused_prob;
        if opts.fused_noise > 0.0 {
            p = perturb(&p, opts.fused_noise, opts.seed, &video.id);
        }
        let p_tilde = match &opts.crf {
            Some(cfg) => mean_field_refine(&p, cfg)?,
            None => p,
        };
        let conf = fused.avg_mask.values().zip_with(p_tilde.values(), |a, q| a * q)?;
        out.extend(
            detections_from_confidence(&full, &conf, &opts.detect)?
                .into_iter()
                .filter(|d| plan[d.class] == t),
        );
    }
    out.sort_by(|a, b| a.class.cmp(&b.class).then(a.start_snippet.cmp(&b.start_snippet)));
    Ok(out)
}

/// [`detect_video`] over every video, in parallel, results in input order.
pub fn detect_all<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    videos: &[VideoRecord],
    handles: &[ClassifierHandle],
    plan: &[usize],
    opts: &DetectOptions,
) -> Result<Vec<DetectionSegment>> {
    opts.detect.validate()?;
    if let Some(cfg) = &opts.crf {
        cfg.validate()?;
    }
    let per_video: Vec<Vec<DetectionSegment>> = videos
        .par_iter()
        .map(|v| detect_video(provider, v, handles, plan, opts))
        .collect::<Result<_>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

pub fn simulate(cfg: &SyntheticWorldConfig) -> Result<SyntheticWorld> {
    generate_world(cfg)
}

/// Mines classifiers on the world's videos with the simulator.
pub fn mine_world(world: &SyntheticWorld, cfg: &ErasionConfig) -> Result<Mined> {
    let sim = Simulator::new(world);
    mine::<f64, _>(&world.records(), &sim, cfg)
}

/// Detects on every world video with mined classifiers.
pub fn detect_world(
    world: &SyntheticWorld,
    handles: &[ClassifierHandle],
    trace: &ErasionTrace,
    cfg: &PipelineConfig,
) -> Result<Vec<DetectionSegment>> {
    let sim = Simulator::new(world);
    let plan = step_plan(trace, world.config.n_classes, handles.len(), cfg.steps)?;
    detect_all::<f64, _>(&sim, &world.records(), handles, &plan, &cfg.detect_options())
}

pub fn evaluate(preds: &[DetectionSegment], gts: &[GroundTruthSegment], cfg: &EvalConfig) -> Result<EvalReport> {
    map_at(preds, gts, cfg)
}

/// Outputs of a complete simulate → mine → detect → eval run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub world: SyntheticWorld,
    pub mined: Mined,
    pub detections: Vec<DetectionSegment>,
    pub report: EvalReport,
}

/// Full pipeline on a freshly generated world.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let world = simulate(&cfg.world)?;
    let mined = mine_world(&world, &cfg.erasion)?;
    let detections = detect_world(&world, &mined.handles, &mined.trace, cfg)?;
    let report = evaluate(&detections, &world.ground_truth()?, &cfg.eval)?;
    Ok(RunOutput {
        world,
        mined,
        detections,
        report,
    })
}

/// Parameter sweeps of the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Numbers of fused classifiers; erasion runs to the largest without termination.
    pub steps: Vec<usize>,
    /// Also sweep steps with the mask disabled during training and fusion.
    pub mask_off: bool,
    pub omega: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            steps: vec![1, 2, 3, 4],
            mask_off: true,
            omega: vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0],
            sigma: vec![0.5, 1.0, 2.0, 3.0, 5.0, 8.0],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps.contains(&0) {
            return Err(Error::InvalidConfig("sweep steps must be positive".into()));
        }
        if self.steps.is_empty() && self.omega.is_empty() && self.sigma.is_empty() {
            return Err(Error::InvalidConfig("sweep spec selects nothing".into()));
        }
        if self.omega.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("omega grid values must be finite and >= 0".into()));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("sigma grid values must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// One point of an ablation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sweep: String,
    pub value: f64,
    pub metric: String,
    pub map: f64,
}

pub fn metric_name(threshold: f64) -> String {
    format!("map@{threshold:.2}")
}

fn report_rows(sweep: &str, value: f64, report: &EvalReport) -> Vec<AblationRow> {
    let mut rows: Vec<AblationRow> = report
        .thresholds
        .iter()
        .zip(&report.map)
        .map(|(&t, &m)| AblationRow {
            sweep: sweep.to_owned(),
            value,
            metric: metric_name(t),
            map: m,
        })
        .collect();
    if let Some(avg) = report.average_map {
        rows.push(AblationRow {
            sweep: sweep.to_owned(),
            value,
            metric: "average_map".into(),
            map: avg,
        });
    }
    rows
}

/// mAP for each number of fused classifiers, erasing to the largest without termination.
pub fn step_curve(world: &SyntheticWorld, cfg: &PipelineConfig, steps: &[usize]) -> Result<Vec<(usize, EvalReport)>> {
    let t_max = steps.iter().copied().max().unwrap_or(1);
    let erasion = ErasionConfig {
        t_max,
        termination: false,
        ..cfg.erasion
    };
    let mined = mine_world(world, &erasion)?;
    let gts = world.ground_truth()?;
    steps
        .iter()
        .map(|&t| {
            let arm = PipelineConfig { steps: Some(t), ..cfg.clone() };
            let dets = detect_world(world, &mined.handles, &mined.trace, &arm)?;
            Ok((t, evaluate(&dets, &gts, &cfg.eval)?))
        })
        .collect()
}

/// Runs every sweep in `spec` on `world` and returns long-format curve rows.
pub fn ablate(world: &SyntheticWorld, cfg: &PipelineConfig, spec: &SweepSpec) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    spec.validate()?;
    let mut rows = Vec::new();
    let mut step_sweeps = vec![("steps", cfg.clone())];
    if spec.mask_off {
        let mut off = cfg.clone();
        off.erasion.mask = MaskMode::Off;
        step_sweeps.push(("steps_no_mask", off));
    }
    if !spec.steps.is_empty() {
        for (name, arm) in &step_sweeps {
            for (t, report) in step_curve(world, arm, &spec.steps)? {
                rows.extend(report_rows(name, t as f64, &report));
            }
        }
    }
    if !spec.omega.is_empty() || !spec.sigma.is_empty() {
        let mined = mine_world(world, &cfg.erasion)?;
        let gts = world.ground_truth()?;
        let grids: [(&str, &[f64]); 2] = [("omega", &spec.omega), ("sigma", &spec.sigma)];
        for (name, grid) in grids {
            for &v in grid {
                let mut arm = cfg.clone();
                arm.use_crf = true;
                if name == "omega" {
                    arm.crf.omega = v;
                } else {
                    arm.crf.sigma = v;
                }
                let dets = detect_world(world, &mined.handles, &mined.trace, &arm)?;
                rows.extend(report_rows(name, v, &evaluate(&dets, &gts, &cfg.eval)?));
            }
        }
    }
    Ok(rows)
}

/// Per-class AP at `threshold` for each number of fused classifiers.
pub fn per_class_step_ap(
    curve: &[(usize, EvalReport)],
    threshold: f64,
) -> BTreeMap<usize, Vec<(usize, f64)>> {
    let mut out: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (t, report) in curve {
        let Some(k) = report.thresholds.iter().position(|&x| (x - threshold).abs() < 1e-12) else {
            continue;
        };
        for (&class, aps) in &report.per_class {
            out.entry(class).or_default().push((*t, aps[k]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        PipelineConfig {
            world: SyntheticWorldConfig {
                n_videos: 12,
                seed: 1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn run_is_deterministic_across_pool_sizes() {
        let cfg = small();
        let a = with_jobs(1, || run(&cfg)).unwrap().unwrap();
        let b = with_jobs(4, || run(&cfg)).unwrap().unwrap();
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.report, b.report);
        assert_eq!(a.mined.trace, b.mined.trace);
    }

    #[test]
    fn omega_zero_matches_no_crf() {
        let mut cfg = small();
        cfg.crf.omega = 0.0;
        let with = run(&cfg).unwrap();
        cfg.use_crf = false;
        let without = run(&cfg).unwrap();
        assert_eq!(with.detections, without.detections);
    }

    #[test]
    fn plan_override_and_errors() {
        let cfg = small();
        let out = run(&cfg).unwrap();
        let n = out.mined.handles.len();
        assert!(step_plan(&out.mined.trace, 5, n, Some(n + 1)).is_err());
        assert_eq!(step_plan(&out.mined.trace, 5, n, Some(1)).unwrap(), vec![1; 5]);
        let plan = step_plan(&out.mined.trace, 5, n, None).unwrap();
        assert!(plan.iter().all(|&t| (1..=n).contains(&t)));
    }

    #[test]
    fn ablate_emits_rows_per_metric() {
        let cfg = small();
        let world = simulate(&cfg.world).unwrap();
        let spec = SweepSpec {
            steps: vec![1, 2, 3, 4],
            mask_off: false,
            omega: vec![],
            sigma: vec![],
        };
        let rows = ablate(&world, &cfg, &spec).unwrap();
        let thresholds = cfg.eval.tiou_thresholds.len();
        assert_eq!(rows.len(), 4 * thresholds);
        for t in &cfg.eval.tiou_thresholds {
            assert_eq!(rows.iter().filter(|r| r.metric == metric_name(*t)).count(), 4);
        }
    }
}
