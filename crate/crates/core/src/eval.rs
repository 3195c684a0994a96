//! Temporal IoU, average precision and mAP over tIoU grids.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{DetectionSegment, GroundTruthSegment, Interval};
use crate::error::{Error, Result};

/// The `[0.5:0.05:0.95]` grid used for average mAP.
pub fn average_grid() -> Vec<f64> {
    (0..10).map(|k| 0.5 + 0.05 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub tiou_thresholds: Vec<f64>,
    /// Also report the mean mAP over [`average_grid`].
    pub average: bool,
}

impl EvalConfig {
    pub fn new(tiou_thresholds: Vec<f64>, average: bool) -> Result<Self> {
        let cfg = Self {
            tiou_thresholds,
            average,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// {0.1, 0.2, 0.3, 0.4, 0.5}.
    pub fn thumos() -> Self {
        Self {
            tiou_thresholds: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            average: false,
        }
    }

    /// {0.5, 0.75, 0.95} plus average mAP.
    pub fn activitynet() -> Self {
        Self {
            tiou_thresholds: vec![0.5, 0.75, 0.95],
            average: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("empty tIoU threshold list".into()));
        }
        if let Some(t) = self.tiou_thresholds.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidConfig(format!("tIoU threshold {t} outside (0, 1]")));
        }
        if self.tiou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("tIoU thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::thumos()
    }
}

/// |a ∩ b| / |a ∪ b|.
pub fn tiou(a: Interval, b: Interval) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Indices of `preds` sorted by descending confidence, ties kept in input order.
fn rank_order(preds: &[&DetectionSegment]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

/// True-positive flags in rank order under greedy one-to-one matching.
pub fn match_predictions(
    preds: &[&DetectionSegment],
    gts: &[&GroundTruthSegment],
    threshold: f64,
) -> Vec<bool> {
    let mut matched = vec![false; gts.len()];
    rank_order(preds)
        .into_iter()
        .map(|p| {
            let pred = preds[p];
            let best = gts
                .iter()
                .enumerate()
                .filter(|(g, gt)| !matched[*g] && gt.video_id == pred.video_id)
                .map(|(g, gt)| (g, tiou(pred.interval(), gt.interval())))
                .fold(None, |best: Option<(usize, f64)>, (g, iou)| match best {
                    Some((_, b)) if b >= iou => best,
                    _ => Some((g, iou)),
                });
            match best {
                Some((g, iou)) if iou >= threshold => {
                    matched[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Non-interpolated AP of one class: Σ_k precision@k over true positives, divided by #GT.
pub fn average_precision(
    preds: &[&DetectionSegment],
    gts: &[&GroundTruthSegment],
    threshold: f64,
) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, hit) in match_predictions(preds, gts, threshold).into_iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    sum / gts.len() as f64
}

/// mAP at every configured threshold, per-class APs, and optional average mAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub map: Vec<f64>,
    /// Class → AP at each threshold, for classes with at least one GT.
    pub per_class: BTreeMap<usize, Vec<f64>>,
    pub average_map: Option<f64>,
}

impl EvalReport {
    /// mAP at `threshold`, if it is on the grid.
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-12)
            .map(|i| self.map[i])
    }
}

fn class_map(
    by_class_pred: &BTreeMap<usize, Vec<&DetectionSegment>>,
    by_class_gt: &BTreeMap<usize, Vec<&GroundTruthSegment>>,
    threshold: f64,
) -> (f64, BTreeMap<usize, f64>) {
    let empty = Vec::new();
    let per_class: BTreeMap<usize, f64> = by_class_gt
        .iter()
        .map(|(&c, gts)| {
            let preds = by_class_pred.get(&c).unwrap_or(&empty);
            (c, average_precision(preds, gts, threshold))
        })
        .collect();
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    (map, per_class)
}

/// mAP over classes that have ground truth; classes without GT are excluded.
pub fn map_at(
    preds: &[DetectionSegment],
    gts: &[GroundTruthSegment],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut by_class_pred: BTreeMap<usize, Vec<&DetectionSegment>> = BTreeMap::new();
    for p in preds {
        by_class_pred.entry(p.class).or_default().push(p);
    }
    let mut by_class_gt: BTreeMap<usize, Vec<&GroundTruthSegment>> = BTreeMap::new();
    for g in gts {
        by_class_gt.entry(g.class).or_default().push(g);
    }
    let classes: BTreeSet<usize> = by_class_gt.keys().copied().collect();
    let mut per_class: BTreeMap<usize, Vec<f64>> = classes.iter().map(|&c| (c, Vec::new())).collect();
    let mut map = Vec::with_capacity(cfg.tiou_thresholds.len());
    for &thr in &cfg.tiou_thresholds {
        let (m, aps) = class_map(&by_class_pred, &by_class_gt, thr);
        map.push(m);
        for (c, ap) in aps {
            per_class.get_mut(&c).unwrap().push(ap);
        }
    }
    let average_map = cfg.average.then(|| {
        let grid = average_grid();
        grid.iter()
            .map(|&t| class_map(&by_class_pred, &by_class_gt, t).0)
            .sum::<f64>()
            / grid.len() as f64
    });
    Ok(EvalReport {
        thresholds: cfg.tiou_thresholds.clone(),
        map,
        per_class,
        average_map,
    })
}
