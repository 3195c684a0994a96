//! Test-time collection of the per-step classifiers' outputs.

use crate::domain::{MaskMatrix, Matrix, ProbabilityMatrix, VideoRecord};
use crate::error::{Error, Result};
use crate::provider::{ClassifierHandle, ScoreProvider};
use crate::scalar::Scalar;
use crate::scoring::{softmax_in_place, softmax_rows, MaskMode};

/// Averaged mask ᾱ, fused probabilities p̄ and confidence s̄ = ᾱ ⊙ p̄.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutputs<T> {
    pub avg_mask: MaskMatrix<T>,
    pub fused_prob: ProbabilityMatrix<T>,
    pub confidence: Matrix<T>,
}

fn check_shapes<'a, T: Scalar + 'a>(
    mut shapes: impl Iterator<Item = &'a Matrix<T>>,
) -> Result<(usize, usize)> {
    let first = shapes
        .next()
        .ok_or_else(|| Error::ShapeMismatch("nothing to fuse (T = 0)".into()))?
        .shape();
    for m in shapes {
        if m.shape() != first {
            return Err(Error::ShapeMismatch(format!("{:?} vs {first:?}", m.shape())));
        }
    }
    Ok(first)
}

/// ᾱ = (1/T) Σ_t α^t.
pub fn average_mask<T: Scalar>(masks: &[MaskMatrix<T>]) -> Result<MaskMatrix<T>> {
    let (n, c) = check_shapes(masks.iter().map(MaskMatrix::values))?;
    let t = T::from_usize(masks.len()).unwrap();
    let avg = Matrix::from_fn(n, c, |i, j| {
        let sum: T = masks.iter().map(|m| m.values().get(i, j)).sum();
        (sum / t).min(T::one())
    });
    Ok(MaskMatrix::new_unchecked(avg))
}

/// p̄_i = softmax(Σ_t log p^t_i), the renormalized product of the step distributions.
///
/// A single input is returned unchanged.
pub fn fuse_probabilities<T: Scalar>(ps: &[ProbabilityMatrix<T>]) -> Result<ProbabilityMatrix<T>> {
    let (n, c) = check_shapes(ps.iter().map(ProbabilityMatrix::values))?;
    if ps.len() == 1 {
        return Ok(ps[0].clone());
    }
    let floor = T::prob_floor();
    let mut out = Matrix::filled(n, c, T::zero());
    for i in 0..n {
        let row = out.row_mut(i);
        for p in ps {
            for (acc, &x) in row.iter_mut().zip(p.values().row(i)) {
                *acc += x.max(floor).ln();
            }
        }
        softmax_in_place(row);
    }
    Ok(ProbabilityMatrix::new_unchecked(out))
}

/// Fuses per-step masks and probabilities into [`FusedOutputs`].
pub fn fuse<T: Scalar>(
    masks: &[MaskMatrix<T>],
    probs: &[ProbabilityMatrix<T>],
) -> Result<FusedOutputs<T>> {
    if masks.len() != probs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks vs {} probability matrices",
            masks.len(),
            probs.len()
        )));
    }
    let avg_mask = average_mask(masks)?;
    let fused_prob = fuse_probabilities(probs)?;
    let confidence = avg_mask
        .values()
        .zip_with(fused_prob.values(), |a, p| a * p)?;
    Ok(FusedOutputs {
        avg_mask,
        fused_prob,
        confidence,
    })
}

/// Per-step (mask, probability) pairs of every handle on the full, unerased video.
pub fn step_outputs<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    video: &VideoRecord,
    handles: &[ClassifierHandle],
    mode: &MaskMode,
) -> Result<Vec<(MaskMatrix<T>, ProbabilityMatrix<T>)>> {
    handles
        .iter()
        .map(|h| {
            let phi = provider.score(h, video)?;
            Ok((mode.mask(&phi), softmax_rows(&phi)))
        })
        .collect()
}

/// Scores `video` with each handle and fuses the results.
///
/// Visibility stored in `video` is ignored; masks use statistics over all N snippets.
pub fn collect<T: Scalar, P: ScoreProvider<T> + ?Sized>(
    provider: &P,
    video: &VideoRecord,
    handles: &[ClassifierHandle],
    mode: &MaskMode,
) -> Result<FusedOutputs<T>> {
    let (masks, probs): (Vec<_>, Vec<_>) = step_outputs(provider, video, handles, mode)?
        .into_iter()
        .unzip();
    fuse(&masks, &probs)
}
