//! Domain types shared by every stage of the detector.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Rows are snippets, columns are classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        // `chunks` yields nothing for zero-width matrices, which have no rows worth visiting.
        self.data.chunks(self.cols.max(1))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with<U: Copy, V: Copy>(
        &self,
        other: &Matrix<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Matrix<V>> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter_rows().map(<[T]>::to_vec).collect()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl<T: Scalar> Matrix<T> {
    /// Largest absolute elementwise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

fn row_sum_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

/// Raw N×C classifier activations for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetScoreMatrix<T>(Matrix<T>);

impl<T: Scalar> SnippetScoreMatrix<T> {
    pub fn new(values: Matrix<T>) -> Result<Self> {
        validate(&values)?;
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn n_snippets(&self) -> usize {
        self.0.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.cols()
    }

    /// Restricts the matrix to a nonempty subset of rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_snippets()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n_snippets(),
            });
        }
        Self::new(self.0.select_rows(rows))
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.0
    }
}

/// Checks the score-matrix invariants: N ≥ 1, C ≥ 2, all entries finite.
pub fn validate<T: Scalar>(values: &Matrix<T>) -> Result<()> {
    if values.rows() == 0 || values.cols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "score matrix must be at least 1x2, got {}x{}",
            values.rows(),
            values.cols()
        )));
    }
    for (i, row) in values.iter_rows().enumerate() {
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

/// Row-stochastic N×C matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix<T>(Matrix<T>);

impl<T: Scalar> ProbabilityMatrix<T> {
    pub fn new(values: Matrix<T>) -> Result<Self> {
        let tol = row_sum_tolerance::<T>();
        for (i, row) in values.iter_rows().enumerate() {
            if let Some(j) = row
                .iter()
                .position(|&x| !x.is_finite() || x < T::zero() || x > T::one() + tol)
            {
                return Err(Error::Domain(row[j].as_f64()));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub(crate) fn new_unchecked(values: Matrix<T>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.0
    }
}

/// N×C matrix with entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix<T>(Matrix<T>);

impl<T: Scalar> MaskMatrix<T> {
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if let Some(&x) = values
            .as_slice()
            .iter()
            .find(|&&x| !(x >= T::zero() && x <= T::one()))
        {
            return Err(Error::Domain(x.as_f64()));
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// The all-ones mask, used when the soft mask is disabled.
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self(Matrix::filled(rows, cols, T::one()))
    }

    pub(crate) fn new_unchecked(values: Matrix<T>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.0
    }
}

/// Snippet sequence metadata for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub n_snippets: usize,
    pub frames_per_snippet: u32,
    pub fps: f64,
    /// Video-level label set, 0-based class indices.
    pub labels: BTreeSet<usize>,
    /// `true` while the snippet has not been erased.
    pub visibility: Vec<bool>,
}

impl VideoRecord {
    pub fn new(
        id: impl Into<String>,
        n_snippets: usize,
        frames_per_snippet: u32,
        fps: f64,
        labels: BTreeSet<usize>,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            n_snippets,
            frames_per_snippet,
            fps,
            labels,
            visibility: vec![true; n_snippets],
        };
        rec.check()?;
        Ok(rec)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_snippets == 0 {
            return Err(Error::InvalidConfig(format!("video {} has no snippets", self.id)));
        }
        if self.frames_per_snippet == 0 || !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "video {} needs positive frames_per_snippet and fps",
                self.id
            )));
        }
        if self.visibility.len() != self.n_snippets {
            return Err(Error::ShapeMismatch(format!(
                "video {}: visibility length {} != {} snippets",
                self.id,
                self.visibility.len(),
                self.n_snippets
            )));
        }
        Ok(())
    }

    /// Seconds covered by one snippet.
    pub fn snippet_duration(&self) -> f64 {
        f64::from(self.frames_per_snippet) / self.fps
    }

    pub fn duration_s(&self) -> f64 {
        self.n_snippets as f64 * self.snippet_duration()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        self.visibility
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }

    pub fn n_visible(&self) -> usize {
        self.visibility.iter().filter(|&&v| v).count()
    }

    /// Copy of the record with every snippet visible again.
    pub fn unerased(&self) -> Self {
        Self {
            visibility: vec![true; self.n_snippets],
            ..self.clone()
        }
    }
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Time span of snippet `k`: `[k·f/fps, (k+1)·f/fps)`.
pub fn snippet_to_seconds(k: usize, rec: &VideoRecord) -> Result<Interval> {
    if k >= rec.n_snippets {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: rec.n_snippets,
        });
    }
    let f = f64::from(rec.frames_per_snippet);
    Ok(Interval::new(k as f64 * f / rec.fps, (k + 1) as f64 * f / rec.fps))
}

/// Inverse of [`snippet_to_seconds`]: index of the snippet whose interval contains `t`.
pub fn seconds_to_snippet(t: f64, rec: &VideoRecord) -> Result<usize> {
    if !(t >= 0.0) {
        return Err(Error::Domain(t));
    }
    let f = f64::from(rec.frames_per_snippet);
    // Integer frame arithmetic first, then correct by one for rounding at boundaries.
    let mut k = (t * rec.fps / f).floor() as usize;
    while k > 0 && (k as f64 * f / rec.fps) > t {
        k -= 1;
    }
    while ((k + 1) as f64 * f / rec.fps) <= t {
        k += 1;
    }
    if k >= rec.n_snippets {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: rec.n_snippets,
        });
    }
    Ok(k)
}

/// Annotated action instance used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSegment {
    pub video_id: String,
    pub class: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl GroundTruthSegment {
    pub fn new(video_id: impl Into<String>, class: usize, start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s >= 0.0 && end_s > start_s && end_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ground truth segment [{start_s}, {end_s}) must be nonnegative with end after start"
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            class,
            start_s,
            end_s,
        })
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

/// Candidate detection: a class-wise run of selected snippets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSegment {
    pub video_id: String,
    pub class: usize,
    /// Inclusive snippet indices.
    pub start_snippet: usize,
    pub end_snippet: usize,
    pub confidence: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl DetectionSegment {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}
