//! Convex-function measures of directed dependence Λ_φ(Y|X), estimated
//! through empirical checkerboard copulas.
//!
//! ```
//! use condep::{estimate, BivariateSample, Phi};
//!
//! let xs: Vec<f64> = (0..100).map(f64::from).collect();
//! let sample = BivariateSample::new(xs.clone(), xs).unwrap();
//! let r = estimate(&sample, &Phi::abs_pow(1.0).unwrap(), 0.5, 0).unwrap();
//! assert!((r.value - 0.99).abs() < 1e-12);
//! ```
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

// `!(x > 0)` rejects NaN along with the nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkerboard;
pub mod error;
pub mod ingest;
pub mod measures;
pub mod models;
pub mod phi;
pub mod quadrature;
pub mod scalar;
pub mod simharness;

pub use checkerboard::{aggregate, aggregate_cdf, ecbc, resolution, CheckerboardCopula, StripeCdf};
pub use error::{Error, Result};
pub use ingest::{read_csv, read_table, to_pseudo, BivariateSample, ColumnTable, PseudoSample, ReadOptions, TiePolicy};
pub use measures::{
    alpha_phi, chatterjee_xi, estimate, estimate_with, lambda_phi, lambda_phi_oracle, lambda_phi_oracle_exact,
    lambda_phi_with, lambda_psi, zeta1, zeta1_scaled, EstimateOptions, EvalPath, MeasureResult,
};
pub use models::{true_lambda, CopulaModel, TrueValue, STUDY_MODELS};
pub use phi::{ConvexFunction, Domain, PhiKind};
pub use scalar::Scalar;

pub type Checkerboard = CheckerboardCopula<f64>;
pub type Phi = ConvexFunction<f64>;
pub type Sample = BivariateSample<f64>;
pub type Measure = MeasureResult<f64>;
