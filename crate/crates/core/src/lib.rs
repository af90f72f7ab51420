//! Penalized likelihood as two-stage codelength.
//!
//! * [`gauss`]: Gaussian models, divergences, samplers.
//! * [`lattice`]: δ-lattice subprobability and the ℓ1 lattice penalty.
//! * [`ggm`]: ℓ1-penalized precision estimation and its risk-validity checks.
//! * [`subset`]: conditional two-stage code for best-subset regression.
//! * [`regression`]: best-subset estimator and its risk experiment.
//! * [`experiment`]: configuration, orchestration and output files.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the aliases below fix
//! the double-precision types used by the experiment runner.

// `!(x > 0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gauss;
pub mod ggm;
pub mod lattice;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod scalar;
pub mod subset;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SymMatrix64 = gauss::SymMatrix<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type GaussGraphModel64 = gauss::GaussGraphModel<f64>;
pub type GaussSampleSet64 = gauss::GaussSampleSet<f64>;
