//! Score-driven structural VAR whose parameters are moved by the realized
//! structural shocks.
//!
//! The observation equation is
//!
//! ```text
//! y_t = Φ¹_t y_{t−1} + … + Φᵖ_t y_{t−p} + e^{S_t} O(A_t) ε_t
//! ```
//!
//! with `S_t` lower triangular, `O(A_t)` the Cayley image of a
//! skew-symmetric `A_t`, and independent skew Student's t shocks. Every
//! entry of `(S_t, A_t, Φ_t)` is updated by the score of the conditional
//! pseudo-likelihood, so an observed shock moves both the data and the
//! parameters.
//!
//! Layout:
//! - [`matcalc`]: matrix exponential and Fréchet derivative, Cayley map,
//!   Gelfand spectral radius and its sensitivities.
//! - [`skewt`]: standardized skew-t density, score factor, sampler and
//!   moment targeting.
//! - [`model`]: θ layout, likelihood, analytic scores, stability penalty
//!   and the parameter update.
//! - [`filter`]: OLS initialization, forward filter, backward smoother and
//!   uncertainty bands.
//! - [`estimate`]: penalized pseudo-ML with sandwich standard errors.
//! - [`simulate`]: data-generating processes and Monte-Carlo summaries.
//! - [`irf`]: conditional impulse responses.

pub mod error;
pub mod estimate;
pub mod filter;
pub mod irf;
pub mod matcalc;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod rng;
pub mod simulate;
pub mod skewt;
pub mod special;
pub mod stats;

pub use error::{Result, SvarError};
pub use model::{LagMode, ModelSpec, StaticParams, ThetaVector};
