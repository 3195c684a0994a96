//! Weakly supervised temporal action detection by step-by-step erasion.
//!
//! A sequence of classifiers is mined by repeatedly erasing the snippets the
//! current classifier is most confident about; at test time their outputs are
//! fused, refined with a fully connected temporal CRF and cut into segments.
//! The classifier itself sits behind [`provider::ScoreProvider`]; [`sim`]
//! supplies a seeded simulator of it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crf;
pub mod detect;
pub mod domain;
pub mod erasion;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod pipeline;
pub mod provider;
pub mod rng;
pub mod scalar;
pub mod scoring;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScoreMatrix = domain::SnippetScoreMatrix<f64>;
pub type ScoreMatrix32 = domain::SnippetScoreMatrix<f32>;
pub type ProbMatrix = domain::ProbabilityMatrix<f64>;
pub type ProbMatrix32 = domain::ProbabilityMatrix<f32>;
pub type Mask = domain::MaskMatrix<f64>;
pub type Mask32 = domain::MaskMatrix<f32>;
pub type Marginals = crf::Marginals<f64>;
pub type Marginals32 = crf::Marginals<f32>;
