//! Config-driven experiment harness: dataset simulation, estimation
//! sweeps, loss-curve tracing, dispersion studies, convergence studies,
//! and self-checks, each writing deterministic CSV (and optionally SVG)
//! artifacts into an output directory.
//!
//! The pipeline is split into:
//!
//! * [`config`] — JSON experiment descriptions with strict field checking;
//! * [`runner`] — the experiment drivers, deterministic for a fixed
//!   configuration regardless of thread count;
//! * [`report`] — CSV serialization with full-precision floats;
//! * [`svg`] — small self-contained SVG renderings of the result tables.
//!
//! Errors carry process exit codes for the CLI: configuration and input
//! problems map to 1, a failed numerical self-check maps to 2, and
//! runtime numerical failures map to 3.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;

use std::path::PathBuf;

use thiserror::Error;

use crate::domain::CoreError;
use crate::loss::LossError;
use crate::models::ModelError;
use crate::optimize::OptimizeError;

pub use config::{ExperimentConfig, LossKind, ModelConfig, ModelInstance};
pub use runner::{
    run_cv_sweep, run_limit_convergence, run_loss_curves, run_oracle_checks, run_simulate,
};

/// Failure modes of the experiment harness.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no experiment outputs found under {0}")]
    MissingInput(PathBuf),
    #[error(
        "self-check {check} failed: deviation {deviation:.3e} exceeds tolerance {tolerance:.3e}"
    )]
    OracleCheckFailed {
        check: String,
        deviation: f64,
        tolerance: f64,
    },
    #[error("estimates for m={m}, n={n} have zero mean, coefficient of variation is undefined")]
    DegenerateCv { m: usize, n: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code the CLI reports for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingInput(_) | Self::Io(_) => 1,
            Self::OracleCheckFailed { .. } => 2,
            Self::DegenerateCv { .. }
            | Self::Loss(_)
            | Self::Optimize(_)
            | Self::Model(_)
            | Self::Core(_) => 3,
        }
    }
}
