//! The three shipped density-ratio families.
//!
//! Each family implements [`crate::DensityModel`] (evaluation in a known
//! parameter box) and [`crate::GenerativeModel`] (paired sampling at the
//! family's true parameter):
//!
//! * [`TorusWrappedGaussian`] — wrapped isotropic Gaussians on the flat
//!   2-torus with a uniform first marginal; closed-form L2 geometry through
//!   the convolution identity for wrapped Gaussians.
//! * [`BivariateNormalRatio`] — the correlation family obtained by dividing
//!   a standard bivariate normal by its two standard normal marginals;
//!   fully closed-form L2 geometry.
//! * [`DiscreteTabular`] — an exponential-tilt family on a finite alphabet,
//!   renormalized by iterative proportional fitting so both marginal
//!   constraints hold; everything about it can be computed exactly, which
//!   makes it the reference family for the exact-expectation oracles.
//!
//! [`quadrature`] holds the numerical-integration helpers used to validate
//! the closed forms against an independent route.

pub mod bivariate;
pub mod discrete;
pub mod quadrature;
pub mod torus;

pub use bivariate::BivariateNormalRatio;
pub use discrete::{DensityTable, DiscreteTabular};
pub use torus::TorusWrappedGaussian;

use thiserror::Error;

/// Errors raised while building or evaluating a model.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A parameter vector lies outside the model's box.
    #[error("parameter outside the model domain")]
    ParamOutOfDomain,
    /// The model definition itself is inconsistent.
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    /// Iterative proportional fitting hit its sweep cap before reaching the
    /// marginal tolerance.
    #[error(
        "iterative proportional fitting stalled after {sweeps} sweeps (residual {residual:e})"
    )]
    IpfNotConverged { sweeps: usize, residual: f64 },
    /// The implicit-gradient linear system was numerically singular.
    #[error("singular linear system while differentiating the fitted table")]
    SingularGradientSystem,
}
