//! Versioned JSON/CSV artifacts with strict loading and atomic writes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{DetectionSegment, GroundTruthSegment, Matrix, VideoRecord};
use crate::erasion::ErasionTrace;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::pipeline::{AblationRow, PipelineConfig};
use crate::provider::{ClassifierHandle, FileProvider, HandleRecord};
use crate::sim::SyntheticWorld;

pub const VERSION: u32 = 1;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

/// Parses `text` as a `{"format": kind, "version": VERSION, ...}` document.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidFile("top level must be a JSON object".into()))?;
    match obj.get("format").and_then(|f| f.as_str()) {
        Some(f) if f == kind => {}
        Some(f) => return Err(Error::InvalidFile(format!("expected a {kind} file, found {f}"))),
        None => return Err(Error::InvalidFile("missing format field".into())),
    }
    match obj.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(VERSION) => {}
        Some(v) => return Err(Error::InvalidFile(format!("unsupported {kind} version {v}"))),
        None => return Err(Error::InvalidFile("missing version field".into())),
    }
    serde_json::from_value(value).map_err(|e| Error::InvalidFile(format!("{kind}: {e}")))
}

pub fn read_versioned<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_versioned(&text, kind)
}

fn check_label_table(labels: &[String]) -> Result<()> {
    if labels.len() < 2 {
        return Err(Error::InvalidFile("label table needs at least two classes".into()));
    }
    let unique: BTreeSet<&String> = labels.iter().collect();
    if unique.len() != labels.len() {
        return Err(Error::InvalidFile("duplicate label in label table".into()));
    }
    Ok(())
}

fn label_index(labels: &[String]) -> BTreeMap<&str, usize> {
    labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect()
}

fn check_segment(seg: [f64; 2], duration: f64, what: &str) -> Result<()> {
    let [a, b] = seg;
    if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= duration + 1e-9) {
        return Err(Error::InvalidFile(format!("{what}: segment [{a}, {b}] outside [0, {duration}]")));
    }
    Ok(())
}

/// A synthetic world with its hidden discriminability profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub format: String,
    pub version: u32,
    pub world: SyntheticWorld,
}

impl WorldFile {
    pub const FORMAT: &'static str = "world";

    pub fn new(world: SyntheticWorld) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            world,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        w.config.validate().map_err(|e| Error::InvalidFile(e.to_string()))?;
        if w.label_table.len() != w.config.n_classes {
            return Err(Error::InvalidFile("label table size differs from n_classes".into()));
        }
        check_label_table(&w.label_table)?;
        let mut ids = BTreeSet::new();
        for v in &w.videos {
            let r = &v.record;
            r.check().map_err(|e| Error::InvalidFile(e.to_string()))?;
            if !ids.insert(r.id.as_str()) {
                return Err(Error::InvalidFile(format!("duplicate video id {}", r.id)));
            }
            let gt_classes: BTreeSet<usize> = v.gt.iter().map(|g| g.class).collect();
            if gt_classes != r.labels || r.labels.iter().any(|&j| j >= w.config.n_classes) {
                return Err(Error::InvalidFile(format!("video {}: labels disagree with ground truth", r.id)));
            }
            if v.gt.iter().any(|g| g.start > g.end || g.end >= r.n_snippets) {
                return Err(Error::InvalidFile(format!("video {}: ground truth out of range", r.id)));
            }
            for (&j, ev) in &v.profile {
                if j >= w.config.n_classes || ev.iter().any(|e| e.snippet >= r.n_snippets || !(e.d > 0.0 && e.d <= 1.0)) {
                    return Err(Error::InvalidFile(format!("video {}: bad profile for class {j}", r.id)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(path, Self::FORMAT)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub label: String,
    pub segment: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEntry {
    pub duration_s: f64,
    pub annotations: Vec<Annotation>,
}

/// Ground truth in the ActivityNet-style `database` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub format: String,
    pub version: u32,
    pub labels: Vec<String>,
    pub database: BTreeMap<String, GroundTruthEntry>,
}

impl GroundTruthFile {
    pub const FORMAT: &'static str = "ground_truth";

    pub fn from_world(world: &SyntheticWorld) -> Result<Self> {
        let mut database = BTreeMap::new();
        for v in &world.videos {
            let annotations = v
                .ground_truth()?
                .into_iter()
                .map(|g| Annotation {
                    label: world.label_table[g.class].clone(),
                    segment: [g.start_s, g.end_s],
                })
                .collect();
            database.insert(
                v.record.id.clone(),
                GroundTruthEntry {
                    duration_s: v.record.duration_s(),
                    annotations,
                },
            );
        }
        Ok(Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            labels: world.label_table.clone(),
            database,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_label_table(&self.labels)?;
        let index = label_index(&self.labels);
        for (vid, e) in &self.database {
            if !(e.duration_s > 0.0 && e.duration_s.is_finite()) {
                return Err(Error::InvalidFile(format!("video {vid}: bad duration")));
            }
            for a in &e.annotations {
                if !index.contains_key(a.label.as_str()) {
                    return Err(Error::InvalidFile(format!("video {vid}: unknown label {}", a.label)));
                }
                check_segment(a.segment, e.duration_s, vid)?;
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> Result<Vec<GroundTruthSegment>> {
        let index = label_index(&self.labels);
        let mut out = Vec::new();
        for (vid, e) in &self.database {
            for a in &e.annotations {
                let class = *index
                    .get(a.label.as_str())
                    .ok_or_else(|| Error::InvalidFile(format!("unknown label {}", a.label)))?;
                out.push(GroundTruthSegment::new(vid.clone(), class, a.segment[0], a.segment[1])?);
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(path, Self::FORMAT)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Mined erasion trace plus the handle snapshots needed to rebuild the classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub format: String,
    pub version: u32,
    pub params: PipelineConfig,
    pub trace: ErasionTrace,
    pub handles: Vec<HandleRecord>,
}

impl TraceFile {
    pub const FORMAT: &'static str = "trace";

    pub fn new(params: PipelineConfig, trace: ErasionTrace, handles: &[ClassifierHandle]) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            params,
            trace,
            handles: handles.iter().map(ClassifierHandle::to_record).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.handles.is_empty() || self.handles.len() != self.trace.n_steps() {
            return Err(Error::InvalidFile(format!(
                "{} handles for {} trace steps",
                self.handles.len(),
                self.trace.n_steps()
            )));
        }
        for (k, (h, s)) in self.handles.iter().zip(&self.trace.steps).enumerate() {
            if h.step != k + 1 || s.step != k + 1 || h.id != s.handle_id {
                return Err(Error::InvalidFile(format!("step {} is inconsistent", k + 1)));
            }
        }
        Ok(())
    }

    /// Rebuilds classifier handles against `videos`.
    pub fn restore(&self, videos: &[VideoRecord]) -> Result<Vec<ClassifierHandle>> {
        HandleRecord::restore_chain(&self.handles, videos)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(path, Self::FORMAT)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEntry {
    pub label: String,
    pub score: f64,
    pub segment: [f64; 2],
    /// Inclusive snippet range.
    pub snippets: [usize; 2],
}

/// Detections in the ActivityNet-style `results` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub format: String,
    pub version: u32,
    pub params: PipelineConfig,
    pub labels: Vec<String>,
    pub results: BTreeMap<String, Vec<ResultEntry>>,
}

impl ResultsFile {
    pub const FORMAT: &'static str = "results";

    /// Every video in `videos` gets an entry, possibly empty.
    pub fn new(
        params: PipelineConfig,
        labels: Vec<String>,
        videos: &[VideoRecord],
        detections: &[DetectionSegment],
    ) -> Result<Self> {
        let mut results: BTreeMap<String, Vec<ResultEntry>> =
            videos.iter().map(|v| (v.id.clone(), Vec::new())).collect();
        for d in detections {
            let label = labels
                .get(d.class)
                .ok_or(Error::IndexOutOfRange { index: d.class, len: labels.len() })?
                .clone();
            results
                .get_mut(&d.video_id)
                .ok_or_else(|| Error::InvalidFile(format!("detection for unknown video {}", d.video_id)))?
                .push(ResultEntry {
                    label,
                    score: d.confidence,
                    segment: [d.start_s, d.end_s],
                    snippets: [d.start_snippet, d.end_snippet],
                });
        }
        Ok(Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            params,
            labels,
            results,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_label_table(&self.labels)?;
        let index = label_index(&self.labels);
        for (vid, entries) in &self.results {
            for e in entries {
                if !index.contains_key(e.label.as_str()) {
                    return Err(Error::InvalidFile(format!("video {vid}: unknown label {}", e.label)));
                }
                if !(0.0..=1.0).contains(&e.score) {
                    return Err(Error::InvalidFile(format!("video {vid}: score {} outside [0, 1]", e.score)));
                }
                check_segment(e.segment, f64::INFINITY, vid)?;
                if e.snippets[0] > e.snippets[1] {
                    return Err(Error::InvalidFile(format!("video {vid}: reversed snippet range")));
                }
            }
        }
        Ok(())
    }

    /// Checks segments against the ground-truth durations of the same videos.
    pub fn validate_against(&self, gt: &GroundTruthFile) -> Result<()> {
        if self.labels != gt.labels {
            return Err(Error::InvalidFile("results and ground truth use different label tables".into()));
        }
        for (vid, entries) in &self.results {
            if let Some(g) = gt.database.get(vid) {
                for e in entries {
                    check_segment(e.segment, g.duration_s, vid)?;
                }
            }
        }
        Ok(())
    }

    pub fn detections(&self) -> Vec<DetectionSegment> {
        let index = label_index(&self.labels);
        self.results
            .iter()
            .flat_map(|(vid, entries)| {
                let index = &index;
                entries.iter().map(move |e| DetectionSegment {
                    video_id: vid.clone(),
                    class: index[e.label.as_str()],
                    start_snippet: e.snippets[0],
                    end_snippet: e.snippets[1],
                    confidence: e.score,
                    start_s: e.segment[0],
                    end_s: e.segment[1],
                })
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(path, Self::FORMAT)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub format: String,
    pub version: u32,
    pub params: PipelineConfig,
    pub labels: Vec<String>,
    pub report: EvalReport,
}

impl MetricsFile {
    pub const FORMAT: &'static str = "metrics";

    pub fn new(params: PipelineConfig, labels: Vec<String>, report: EvalReport) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            params,
            labels,
            report,
        }
    }

    /// `tiou,map` with one row per threshold.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tiou,map\n");
        for (t, m) in self.report.thresholds.iter().zip(&self.report.map) {
            let _ = writeln!(s, "{t},{m}");
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned(path, Self::FORMAT)
    }

    pub fn save(&self, json: &Path, csv: &Path) -> Result<()> {
        write_json(json, self)?;
        write_atomic(csv, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreVideo {
    pub id: String,
    pub fps: f64,
    pub frames_per_snippet: u32,
    pub labels: Vec<String>,
    /// Step-major N×C score rows; index 0 is step 1.
    pub steps: Vec<Vec<Vec<f64>>>,
}

/// Per-step snippet scores produced offline by a real classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFile {
    pub format: String,
    pub version: u32,
    pub label_table: Vec<String>,
    pub videos: Vec<ScoreVideo>,
}

impl ScoreFile {
    pub const FORMAT: &'static str = "scores";

    pub fn new(label_table: Vec<String>, videos: Vec<ScoreVideo>) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: VERSION,
            label_table,
            videos,
        }
    }

    /// Video records and a provider serving the stored matrices.
    pub fn provider(&self) -> Result<(Vec<VideoRecord>, FileProvider)> {
        check_label_table(&self.label_table)?;
        let index = label_index(&self.label_table);
        let c = self.label_table.len();
        let mut records = Vec::with_capacity(self.videos.len());
        let mut scores = BTreeMap::new();
        for v in &self.videos {
            let n = v.steps.first().map_or(0, Vec::len);
            if n == 0 {
                return Err(Error::InvalidFile(format!("video {}: no score rows", v.id)));
            }
            let mut labels = BTreeSet::new();
            for l in &v.labels {
                labels.insert(
                    *index
                        .get(l.as_str())
                        .ok_or_else(|| Error::InvalidFile(format!("video {}: unknown label {l}", v.id)))?,
                );
            }
            let rec = VideoRecord::new(v.id.clone(), n, v.frames_per_snippet, v.fps, labels)
                .map_err(|e| Error::InvalidFile(e.to_string()))?;
            let mut mats = Vec::with_capacity(v.steps.len());
            for (t, rows) in v.steps.iter().enumerate() {
                if rows.len() != n || rows.iter().any(|r| r.len() != c) {
                    return Err(Error::InvalidFile(format!(
                        "video {} step {}: expected {n}×{c} scores",
                        v.id,
                        t + 1
                    )));
                }
                mats.push(Matrix::from_rows(rows)?);
            }
            if scores.insert(v.id.clone(), mats).is_some() {
                return Err(Error::InvalidFile(format!("duplicate video id {}", v.id)));
            }
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::InvalidFile("score file has no videos".into()));
        }
        let provider = FileProvider::new(c, scores).map_err(|e| match e {
            Error::NonFinite { .. } | Error::ShapeMismatch(_) => Error::InvalidFile(e.to_string()),
            other => other,
        })?;
        Ok((records, provider))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_versioned(path, Self::FORMAT)?;
        f.provider()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// `sweep,value,metric,map` rows.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("sweep,value,metric,map\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.sweep, r.value, r.metric, r.map);
    }
    s
}
