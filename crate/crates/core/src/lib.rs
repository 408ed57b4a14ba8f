//! Latent regression Bayesian networks (LRBN).
//!
//! An LRBN is a directed generative model with binary latent layers stacked
//! above a binary or real-valued visible layer. Every unit is conditionally
//! independent given the layer directly above it: binary units follow a
//! sigmoid of an affine function of their parents, real-valued visibles a
//! unit-variance Gaussian whose mean is affine in the parents.
//!
//! The crate is organised around the life cycle of a model:
//!
//! - [`model`]: parameter containers, exact log-probabilities, the `.lrbn`
//!   container format.
//! - [`inference`]: MAP inference of latent states by coordinate ascent on the
//!   conditional pseudo-likelihood (iterated conditional modes), plus
//!   brute-force oracles.
//! - [`learning`]: hard-EM training of one layer pair, greedy stacking,
//!   unsupervised and supervised fine-tuning.
//! - [`evaluation`]: reconstruction, ancestral sampling and the conservative
//!   sampling-based log-likelihood (CSL) estimator.
//! - [`data_io`]: IDX/LMAT ingestion, preprocessing and PGM export.

pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod learning;
pub mod math;
pub mod model;
pub mod rng;

pub use error::{LrbnError, Result};
pub use model::{DeepLrbn, LatentState, LayerParams, VisibleKind};
