//! Parameter estimation from *broken samples*: i.i.d. batches of paired
//! observations whose within-batch pairing has been lost, so that only the
//! unordered lists of first and second coordinates remain.
//!
//! The crate provides
//!
//! * batched pair data types and a plain-text serialization ([`domain`]),
//! * three parametric density-ratio families — a wrapped-Gaussian family on
//!   the flat 2-torus, a bivariate-normal correlation family on the real
//!   line, and a finite tabular family with exactly computable expectations
//!   ([`models`]),
//! * deterministic, seedable data generation and batch breaking ([`sampling`]),
//! * the pairwise pseudo-log-likelihood loss together with its gradient, a
//!   mixture variant, the exact permanent-based likelihood, the closed-form
//!   large-batch limit loss, and exact finite-alphabet expectations
//!   ([`loss`]),
//! * derivative-free and projected-gradient minimizers plus a central
//!   finite-difference gradient check ([`optimize`]),
//! * a config-driven Monte-Carlo experiment harness with CSV and SVG output
//!   ([`experiments`]).
//!
//! # Quick example
//!
//! ```
//! use broken_samples::DensityModel;
//! use broken_samples::models::TorusWrappedGaussian;
//! use broken_samples::sampling::{generate_dataset, break_batches, SeedSpec};
//! use broken_samples::loss::pseudo_loss;
//!
//! let model = TorusWrappedGaussian::new(0.1).unwrap();
//! let mut rng = SeedSpec::new(42).stream(0);
//! let data = generate_dataset(&model, 10, 50, &mut rng).unwrap();
//! let data = break_batches(data, &mut rng);
//! let theta = model.domain().point(vec![0.1]).unwrap();
//! let report = pseudo_loss(&model, &theta, &data).unwrap();
//! assert!(report.value.is_finite());
//! ```
//!
//! All evaluation is deterministic: identical seeds and thread counts are
//! not required for identical results — parallel reductions combine partial
//! sums in a fixed order, so every public operation is bit-reproducible.

#![forbid(unsafe_code)]

pub mod domain;
pub mod experiments;
pub mod loss;
pub mod models;
pub mod optimize;
pub mod sampling;

pub use domain::{
    BrokenBatch, CoreError, Dataset, DensityModel, GenerativeModel, PairSample, ParamDomain,
    ParamPoint, Point,
};
