//! Snippet-level probabilities, the inter-snippet soft mask, and erasing odds.

use serde::{Deserialize, Serialize};

use crate::domain::{MaskMatrix, Matrix, ProbabilityMatrix, SnippetScoreMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Discounting threshold of the soft mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub tau: f64,
}

impl MaskParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("tau must lie in (0, 1], got {tau}")));
        }
        Ok(Self { tau })
    }
}

impl Default for MaskParams {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

/// Whether erasing odds and fused confidences are weighted by the soft mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MaskMode {
    Soft(MaskParams),
    /// α ≡ 1 everywhere.
    Off,
}

impl MaskMode {
    pub fn soft(tau: f64) -> Result<Self> {
        MaskParams::new(tau).map(MaskMode::Soft)
    }

    /// Mask over the rows of `phi` (min-max statistics taken over exactly those rows).
    pub fn mask<T: Scalar>(&self, phi: &SnippetScoreMatrix<T>) -> MaskMatrix<T> {
        match self {
            MaskMode::Soft(params) => soft_mask(phi, params),
            MaskMode::Off => MaskMatrix::ones(phi.n_snippets(), phi.n_classes()),
        }
    }
}

impl Default for MaskMode {
    fn default() -> Self {
        MaskMode::Soft(MaskParams::default())
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(phi: &SnippetScoreMatrix<T>) -> ProbabilityMatrix<T> {
    let m = phi.values();
    let mut out = m.clone();
    for i in 0..m.rows() {
        softmax_in_place(out.row_mut(i));
    }
    ProbabilityMatrix::new_unchecked(out)
}

/// Numerically stable softmax of one row, overwriting it.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Rescaling δ_τ: 1 above the threshold, linear ramp `x/τ` at or below it.
pub fn delta_tau<T: Scalar>(x: T, params: &MaskParams) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Domain(x.as_f64()));
    }
    Ok(delta_tau_unchecked(x, T::lit(params.tau)))
}

#[inline]
fn delta_tau_unchecked<T: Scalar>(x: T, tau: T) -> T {
    if x > tau {
        T::one()
    } else {
        (x / tau).min(T::one())
    }
}

/// Inter-snippet soft mask: column-wise min-max normalization followed by δ_τ.
///
/// Columns whose range is below 1e-12 carry no evidence and map to α = 0.
pub fn soft_mask<T: Scalar>(phi: &SnippetScoreMatrix<T>, params: &MaskParams) -> MaskMatrix<T> {
    let m = phi.values();
    let (n, c) = m.shape();
    let tau = T::lit(params.tau);
    let degenerate = T::lit(1e-12);
    let mut out = Matrix::filled(n, c, T::zero());
    for j in 0..c {
        let (lo, hi) = (0..n).fold((T::infinity(), T::neg_infinity()), |(lo, hi), i| {
            let x = m.get(i, j);
            (lo.min(x), hi.max(x))
        });
        let range = hi - lo;
        if range < degenerate {
            continue;
        }
        for i in 0..n {
            let x = ((m.get(i, j) - lo) / range).max(T::zero()).min(T::one());
            out.set(i, j, delta_tau_unchecked(x, tau));
        }
    }
    MaskMatrix::new_unchecked(out)
}

/// Elementwise product s = α ⊙ p.
pub fn erasing_odds<T: Scalar>(alpha: &MaskMatrix<T>, p: &ProbabilityMatrix<T>) -> Result<Matrix<T>> {
    alpha.values().zip_with(p.values(), |a, b| a * b)
}

/// Odds for the given subset of rows, with mask statistics taken over that subset only.
///
/// Returns a `rows.len() × C` matrix aligned with `rows`.
pub fn odds_over_rows<T: Scalar>(
    phi: &SnippetScoreMatrix<T>,
    rows: &[usize],
    mode: &MaskMode,
) -> Result<Matrix<T>> {
    let sub = phi.select_rows(rows)?;
    let alpha = mode.mask(&sub);
    erasing_odds(&alpha, &softmax_rows(&sub))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi(rows: &[&[f64]]) -> SnippetScoreMatrix<f64> {
        SnippetScoreMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_rows(&phi(&[&[0.0, 0.0], &[2f64.ln(), 0.0], &[1000.0, 0.0]]));
        let v = p.values();
        assert_eq!(v.row(0), &[0.5, 0.5]);
        assert!((v.get(1, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((v.get(1, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((v.get(2, 0) - 1.0).abs() < 1e-12);
        assert!(v.get(2, 1).abs() < 1e-12);
        assert!(v.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_f32_is_stable() {
        let m = SnippetScoreMatrix::from_rows(&[[88.0f32, -88.0, 0.0]]).unwrap();
        let p = softmax_rows(&m);
        let s: f32 = p.values().row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn delta_tau_branches() {
        let half = MaskParams::new(0.5).unwrap();
        assert_eq!(delta_tau(0.7, &half).unwrap(), 1.0);
        assert_eq!(delta_tau(0.25, &half).unwrap(), 0.5);
        assert_eq!(delta_tau(0.5, &half).unwrap(), 1.0);
        assert!(matches!(delta_tau(1.5, &half), Err(Error::Domain(_))));
        assert!(matches!(delta_tau(-0.1, &half), Err(Error::Domain(_))));
    }

    #[test]
    fn mask_params_validation() {
        assert!(MaskParams::new(0.0).is_err());
        assert!(MaskParams::new(1.0).is_ok());
        assert!(MaskParams::new(1.01).is_err());
    }

    #[test]
    fn soft_mask_examples() {
        let half = MaskParams::new(0.5).unwrap();
        let a = soft_mask(&phi(&[&[2.0, 3.0], &[4.0, 3.0], &[6.0, 3.0]]), &half);
        assert_eq!(a.values().column(0), vec![0.0, 1.0, 1.0]);
        assert_eq!(a.values().column(1), vec![0.0, 0.0, 0.0]);
        let one = MaskParams::new(1.0).unwrap();
        let a = soft_mask(&phi(&[&[0.0, 5.0], &[1.0, 5.0]]), &one);
        assert_eq!(a.values().column(0), vec![0.0, 1.0]);
    }

    #[test]
    fn odds_examples() {
        let alpha = MaskMatrix::<f64>::from_rows(&[[0.5, 0.0]]).unwrap();
        let p = ProbabilityMatrix::from_rows(&[[0.4, 0.6]]).unwrap();
        let s = erasing_odds(&alpha, &p).unwrap();
        assert!((s.get(0, 0) - 0.2).abs() < 1e-15);
        assert_eq!(s.get(0, 1), 0.0);
        let wrong = ProbabilityMatrix::from_rows(&[[0.4, 0.6], [0.5, 0.5]]).unwrap();
        assert!(erasing_odds(&alpha, &wrong).is_err());
    }

    #[test]
    fn mask_off_is_all_ones() {
        let m = phi(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let a = MaskMode::Off.mask(&m);
        assert!(a.values().as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn odds_over_rows_uses_subset_statistics() {
        let m = phi(&[&[0.0, 0.0], &[10.0, 0.0], &[5.0, 0.0]]);
        let mode = MaskMode::soft(1.0).unwrap();
        let s = odds_over_rows(&m, &[0, 2], &mode).unwrap();
        assert_eq!(s.rows(), 2);
        // Row 2 is the column max within the subset, so its mask is 1.
        let p = 5f64.exp() / (5f64.exp() + 1.0);
        assert!((s.get(1, 0) - p).abs() < 1e-12);
        assert_eq!(s.get(0, 0), 0.0);
    }

    fn random_phi(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(n, c, |_, _| rng.random_range(-5.0..5.0))
    }

    proptest! {
        #[test]
        fn odds_in_unit_interval(seed in any::<u64>(), n in 1usize..12, c in 2usize..6, tau in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SnippetScoreMatrix::new(random_phi(&mut rng, n, c)).unwrap();
            let mode = MaskMode::soft(tau).unwrap();
            let s = erasing_odds(&mode.mask(&m), &softmax_rows(&m)).unwrap();
            prop_assert!(s.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn column_argmax_has_full_mask(seed in any::<u64>(), n in 2usize..12, c in 2usize..6, tau in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_phi(&mut rng, n, c);
            let m = SnippetScoreMatrix::new(raw.clone()).unwrap();
            let a = soft_mask(&m, &MaskParams::new(tau).unwrap());
            for j in 0..c {
                let col = raw.column(j);
                let arg = (0..n).max_by(|&x, &y| col[x].total_cmp(&col[y])).unwrap();
                prop_assert_eq!(a.values().get(arg, j), 1.0);
            }
        }

        #[test]
        fn delta_tau_monotone(x in 0.0f64..=1.0, y in 0.0f64..=1.0, tau in 0.001f64..=1.0) {
            let p = MaskParams::new(tau).unwrap();
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(delta_tau(lo, &p).unwrap() <= delta_tau(hi, &p).unwrap());
        }

        #[test]
        fn soft_mask_column_shift_invariant(seed in any::<u64>(), n in 1usize..10, shift in -50.0f64..50.0, col in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_phi(&mut rng, n, 3);
            let mut shifted = raw.clone();
            for i in 0..n {
                shifted.set(i, col, raw.get(i, col) + shift);
            }
            let p = MaskParams::new(0.4).unwrap();
            let a = soft_mask(&SnippetScoreMatrix::new(raw).unwrap(), &p);
            let b = soft_mask(&SnippetScoreMatrix::new(shifted).unwrap(), &p);
            prop_assert!(a.values().max_abs_diff(b.values()) < 1e-9);
        }

        #[test]
        fn softmax_row_shift_invariant(seed in any::<u64>(), n in 1usize..10, shift in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_phi(&mut rng, n, 4);
            let shifted = raw.map(|x| x + shift);
            let a = softmax_rows(&SnippetScoreMatrix::new(raw).unwrap());
            let b = softmax_rows(&SnippetScoreMatrix::new(shifted).unwrap());
            prop_assert!(a.values().max_abs_diff(b.values()) < 1e-12);
        }
    }
}
