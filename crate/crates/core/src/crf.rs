//! Fully connected temporal CRF with a Potts compatibility and Gaussian kernel,
//! refined by parallel mean-field sweeps.

use serde::{Deserialize, Serialize};

use crate::domain::{Matrix, ProbabilityMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::softmax_in_place;

/// Mean-field marginals Q (the refined p̃).
pub type Marginals<T> = ProbabilityMatrix<T>;

/// How the pairwise kernel sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KernelMode {
    /// Every pair `j ≠ i`.
    Naive,
    /// Only `|i − j| ≤ ceil(radius_multiplier · σ)`.
    Truncated { radius_multiplier: f64 },
}

impl KernelMode {
    pub const DEFAULT_RADIUS_MULTIPLIER: f64 = 6.0;

    pub fn truncated() -> Self {
        KernelMode::Truncated {
            radius_multiplier: Self::DEFAULT_RADIUS_MULTIPLIER,
        }
    }
}

impl Default for KernelMode {
    fn default() -> Self {
        Self::truncated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfConfig {
    /// Pairwise weight ω.
    pub omega: f64,
    /// Kernel scale σ in snippet units.
    pub sigma: f64,
    pub max_iters: usize,
    /// Early stop once the largest marginal change drops below this.
    pub tol: f64,
    pub kernel: KernelMode,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            omega: 3.0,
            sigma: 3.0,
            max_iters: 10,
            tol: 1e-5,
            kernel: KernelMode::default(),
        }
    }
}

impl CrfConfig {
    pub fn new(omega: f64, sigma: f64) -> Self {
        Self {
            omega,
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig(format!("omega must be >= 0, got {}", self.omega)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if let KernelMode::Truncated { radius_multiplier } = self.kernel {
            if !(radius_multiplier > 0.0) {
                return Err(Error::InvalidConfig("radius multiplier must be positive".into()));
            }
        }
        Ok(())
    }

    /// Largest index offset included in kernel sums for a sequence of length `n`.
    pub fn radius(&self, n: usize) -> usize {
        let full = n.saturating_sub(1);
        match self.kernel {
            KernelMode::Naive => full,
            KernelMode::Truncated { radius_multiplier } => {
                ((radius_multiplier * self.sigma).ceil() as usize).min(full)
            }
        }
    }
}

/// `w[d] = exp(−d² / 2σ²)` for `d = 0..=radius`.
fn kernel_weights<T: Scalar>(sigma: f64, radius: usize) -> Vec<T> {
    let two_s2 = T::lit(2.0 * sigma * sigma);
    (0..=radius)
        .map(|d| {
            let d = T::from_usize(d).unwrap();
            (-(d * d) / two_s2).exp()
        })
        .collect()
}

/// E(l) = Σ_i −log p̄_i(l_i) + Σ_{i≠j} ω·[l_i ≠ l_j]·k(i, j), over ordered pairs.
pub fn gibbs_energy<T: Scalar>(labels: &[usize], unary: &ProbabilityMatrix<T>, cfg: &CrfConfig) -> Result<T> {
    let u = unary.values();
    if labels.len() != u.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} snippets",
            labels.len(),
            u.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= u.cols()) {
        return Err(Error::InvalidConfig(format!("label {bad} >= {} classes", u.cols())));
    }
    let floor = T::prob_floor();
    let unary_term: T = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -u.get(i, l).max(floor).ln())
        .sum();
    let w = kernel_weights::<T>(cfg.sigma, labels.len().saturating_sub(1));
    let omega = T::lit(cfg.omega);
    let mut pairwise = T::zero();
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if i != j && li != lj {
                pairwise += omega * w[i.abs_diff(j)];
            }
        }
    }
    Ok(unary_term + pairwise)
}

/// Expected pairwise energy M_{i,l} = ω Σ_{j≠i} k(i, j)·(1 − Q_j(l)).
pub fn pairwise_message<T: Scalar>(q: &Marginals<T>, cfg: &CrfConfig) -> Matrix<T> {
    let q = q.values();
    let (n, c) = q.shape();
    let radius = cfg.radius(n);
    let w = kernel_weights::<T>(cfg.sigma, radius);
    let omega = T::lit(cfg.omega);
    let mut out = Matrix::filled(n, c, T::zero());
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let row = out.row_mut(i);
        for j in (lo..=hi).filter(|&j| j != i) {
            let k = w[i.abs_diff(j)];
            for (m, &qj) in row.iter_mut().zip(q.row(j)) {
                *m += k * (T::one() - qj);
            }
        }
        row.iter_mut().for_each(|m| *m *= omega);
    }
    out
}

/// Kernel-weighted neighbour marginals G_{i,l} = Σ_{0<|i−j|≤r} k(i, j)·Q_j(l).
fn neighbour_sum<T: Scalar>(q: &Matrix<T>, w: &[T], out: &mut Matrix<T>) {
    let n = q.rows();
    for i in 0..n {
        let acc = out.row_mut(i);
        acc.iter_mut().for_each(|x| *x = T::zero());
        for (d, &k) in w.iter().enumerate().skip(1) {
            if d > i && i + d >= n {
                break;
            }
            if d <= i {
                for (a, &x) in acc.iter_mut().zip(q.row(i - d)) {
                    *a += k * x;
                }
            }
            if i + d < n {
                for (a, &x) in acc.iter_mut().zip(q.row(i + d)) {
                    *a += k * x;
                }
            }
        }
    }
}

/// Reusable state for repeated sweeps over one unary.
struct MeanField<'a, T> {
    log_unary: Matrix<T>,
    weights: Vec<T>,
    omega: T,
    scratch: Matrix<T>,
    naive: bool,
    cfg: &'a CrfConfig,
}

impl<'a, T: Scalar> MeanField<'a, T> {
    fn new(unary: &ProbabilityMatrix<T>, cfg: &'a CrfConfig) -> Self {
        let u = unary.values();
        let floor = T::prob_floor();
        Self {
            log_unary: u.map(|p| p.max(floor).ln()),
            weights: kernel_weights(cfg.sigma, cfg.radius(u.rows())),
            omega: T::lit(cfg.omega),
            scratch: Matrix::filled(u.rows(), u.cols(), T::zero()),
            naive: matches!(cfg.kernel, KernelMode::Naive),
            cfg,
        }
    }

    /// One synchronous update; returns the new marginals.
    fn sweep(&mut self, q: &Matrix<T>) -> Matrix<T> {
        let mut next = self.log_unary.clone();
        if self.naive {
            let m = pairwise_message(&ProbabilityMatrix::new_unchecked(q.clone()), self.cfg);
            for (x, &mi) in next.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *x -= mi;
            }
        } else {
            // The label-independent part Σ k cancels in the normalization, leaving +ω·G.
            neighbour_sum(q, &self.weights, &mut self.scratch);
            for (x, &g) in next.as_mut_slice().iter_mut().zip(self.scratch.as_slice()) {
                *x += self.omega * g;
            }
        }
        for i in 0..next.rows() {
            softmax_in_place(next.row_mut(i));
        }
        next
    }
}

/// A single parallel mean-field update of `q` against `unary`.
pub fn mean_field_sweep<T: Scalar>(
    unary: &ProbabilityMatrix<T>,
    q: &Marginals<T>,
    cfg: &CrfConfig,
) -> Result<Marginals<T>> {
    if unary.values().shape() != q.values().shape() {
        return Err(Error::ShapeMismatch(format!(
            "unary {:?} vs marginals {:?}",
            unary.values().shape(),
            q.values().shape()
        )));
    }
    let mut mf = MeanField::new(unary, cfg);
    Ok(ProbabilityMatrix::new_unchecked(mf.sweep(q.values())))
}

/// Refines `unary` by up to `max_iters` sweeps starting from Q = unary.
///
/// With ω = 0 the unary is returned unchanged.
pub fn mean_field_refine<T: Scalar>(unary: &ProbabilityMatrix<T>, cfg: &CrfConfig) -> Result<Marginals<T>> {
    Ok(mean_field_iterates(unary, cfg)?
        .pop()
        .expect("iterates always contain the initial marginals"))
}

/// Marginals after each sweep, starting with the initialization. Stops early on convergence.
pub fn mean_field_iterates<T: Scalar>(
    unary: &ProbabilityMatrix<T>,
    cfg: &CrfConfig,
) -> Result<Vec<Marginals<T>>> {
    cfg.validate()?;
    let mut out = vec![unary.clone()];
    if cfg.omega == 0.0 || unary.values().rows() < 2 {
        return Ok(out);
    }
    let tol = T::lit(cfg.tol);
    let mut mf = MeanField::new(unary, cfg);
    let mut q = unary.values().clone();
    for _ in 0..cfg.max_iters {
        let next = mf.sweep(&q);
        let delta = next.max_abs_diff(&q);
        q = next;
        out.push(ProbabilityMatrix::new_unchecked(q.clone()));
        if delta < tol {
            break;
        }
    }
    Ok(out)
}

/// Per-snippet argmax of the marginals, ties to the lowest class index.
pub fn map_labels<T: Scalar>(q: &Marginals<T>) -> Vec<usize> {
    q.values()
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}
