//! Bayesian nonnegative matrix factorisation (`R ≈ U Vᵀ`) and tri-factorisation
//! (`R ≈ F S Gᵀ`) on partially observed data.
//!
//! Four inference engines share one model: multiplicative updates ([`np`]),
//! Gibbs sampling ([`gibbs`]), iterated conditional modes ([`icm`]) and
//! mean-field variational Bayes ([`vb`]). [`fit`] wraps them behind a single
//! configuration type and [`experiments`] provides the benchmark protocols.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod gibbs;
pub mod icm;
pub mod io;
mod kernels;
pub mod kmeans;
pub mod masked;
pub mod model;
pub mod np;
pub mod run;
pub mod special;
pub mod vb;

pub use distributions::{GammaParams, SeededRng, TruncatedNormal};
pub use error::{Error, Result};
pub use fit::{fit, Engine, FitConfig, FitOutput, Fitted, Model};
pub use masked::MaskedMatrix;
pub use model::{
    HyperParams, InitStrategy, NmfState, NmtfState, Predict, VbFactor, VbNmfState, VbNmtfState,
};
