//! JSON experiment configuration.
//!
//! A configuration names a model family (with its true parameter), the
//! batch-size/batch-count sweep, replicate count, master seed, optimizer
//! settings, and output options. Unknown fields anywhere are rejected so
//! that typos fail loudly instead of silently running a different
//! experiment.
//!
//! The `model` block is tagged by `"kind"`:
//!
//! ```json
//! { "kind": "torus_wrapped_gaussian", "sigma_star": 0.1 }
//! { "kind": "bivariate_normal_ratio", "rho_star": 0.5 }
//! { "kind": "discrete_tabular", "theta_star": 0.8, "categories": 3 }
//! ```
//!
//! Every non-model field has a sensible default, so the smallest valid
//! configuration is just a model block.

use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::Deserialize;

use crate::domain::{DensityModel, GenerativeModel};
use crate::experiments::ExperimentError;
use crate::models::{BivariateNormalRatio, DiscreteTabular, ModelError, TorusWrappedGaussian};
use crate::optimize::MinimizeOptions;

/// Top-level experiment description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Batch sizes to sweep.
    #[serde(default = "default_m_list")]
    pub m_list: Vec<usize>,
    /// Batch counts to sweep.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    /// Independent replications per sweep cell.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Master seed; every replicate derives its own decorrelated stream.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Which loss the estimator minimizes.
    #[serde(default)]
    pub loss: LossKind,
    /// Parameter grid for loss-curve and convergence studies; defaults
    /// depend on the study when omitted.
    #[serde(default)]
    pub theta_grid: Option<GridSpec>,
    /// True parameters for the dispersion sweep.
    #[serde(default)]
    pub theta_star_list: Option<Vec<f64>>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_m_list() -> Vec<usize> {
    vec![5, 20]
}

fn default_n_list() -> Vec<usize> {
    vec![50]
}

fn default_replicates() -> usize {
    8
}

fn default_seed() -> u64 {
    42
}

/// Loss minimized by the estimation subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Pseudo,
    Mixture,
    Full,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pseudo => "pseudo",
            Self::Mixture => "mixture",
            Self::Full => "full",
        }
    }
}

/// Uniform parameter grid `lo..=hi` with `count` points.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == self.count - 1 {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

/// Minimizer settings, mirrored into [`MinimizeOptions`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default = "default_max_refine_iters")]
    pub max_refine_iters: usize,
}

fn default_grid_points() -> usize {
    61
}

fn default_refine_tol() -> f64 {
    1e-6
}

fn default_max_refine_iters() -> usize {
    200
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            refine_tol: default_refine_tol(),
            max_refine_iters: default_max_refine_iters(),
        }
    }
}

impl OptimizerConfig {
    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            grid_points: self.grid_points,
            refine_tol: self.refine_tol,
            max_refine_iters: self.max_refine_iters,
        }
    }
}

/// Output location and formats.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// `"csv"` is always produced; adding `"svg"` renders plots as well.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants_svg(&self) -> bool {
        self.formats.iter().any(|f| f == "svg")
    }
}

/// Model block of a configuration, tagged by `"kind"`.
#[derive(Debug, Clone)]
pub enum ModelConfig {
    TorusWrappedGaussian {
        sigma_star: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        truncation_radius: u32,
    },
    BivariateNormalRatio {
        rho_star: f64,
        edge_margin: f64,
    },
    DiscreteTabular {
        theta_star: f64,
        categories: usize,
        bound: f64,
    },
}

// `deny_unknown_fields` does not compose with serde's internally-tagged
// enums, so the tag is dispatched by hand: pop `"kind"` from the raw JSON
// object and parse the remainder with a strict per-variant struct.
impl<'de> Deserialize<'de> for ModelConfig {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TorusRaw {
            sigma_star: f64,
            #[serde(default = "default_sigma_lo")]
            sigma_lo: f64,
            #[serde(default = "default_sigma_hi")]
            sigma_hi: f64,
            #[serde(default = "default_truncation_radius")]
            truncation_radius: u32,
        }
        fn default_sigma_lo() -> f64 {
            crate::models::torus::DEFAULT_SIGMA_DOMAIN.0
        }
        fn default_sigma_hi() -> f64 {
            crate::models::torus::DEFAULT_SIGMA_DOMAIN.1
        }
        fn default_truncation_radius() -> u32 {
            crate::models::torus::DEFAULT_TRUNCATION_RADIUS
        }

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct BivariateRaw {
            rho_star: f64,
            #[serde(default = "default_edge_margin")]
            edge_margin: f64,
        }
        fn default_edge_margin() -> f64 {
            crate::models::bivariate::DEFAULT_EDGE_MARGIN
        }

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct DiscreteRaw {
            theta_star: f64,
            #[serde(default = "default_categories")]
            categories: usize,
            #[serde(default = "default_bound")]
            bound: f64,
        }
        fn default_categories() -> usize {
            3
        }
        fn default_bound() -> f64 {
            3.0
        }

        let mut value = serde_json::Value::deserialize(deserializer)?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| D::Error::custom("model must be a JSON object"))?;
        let kind = object
            .remove("kind")
            .ok_or_else(|| D::Error::custom("model needs a \"kind\" field"))?;
        let kind = kind
            .as_str()
            .ok_or_else(|| D::Error::custom("model \"kind\" must be a string"))?
            .to_owned();
        match kind.as_str() {
            "torus_wrapped_gaussian" => {
                let raw: TorusRaw = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(Self::TorusWrappedGaussian {
                    sigma_star: raw.sigma_star,
                    sigma_lo: raw.sigma_lo,
                    sigma_hi: raw.sigma_hi,
                    truncation_radius: raw.truncation_radius,
                })
            }
            "bivariate_normal_ratio" => {
                let raw: BivariateRaw = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(Self::BivariateNormalRatio {
                    rho_star: raw.rho_star,
                    edge_margin: raw.edge_margin,
                })
            }
            "discrete_tabular" => {
                let raw: DiscreteRaw = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(Self::DiscreteTabular {
                    theta_star: raw.theta_star,
                    categories: raw.categories,
                    bound: raw.bound,
                })
            }
            other => Err(D::Error::custom(format!(
                "unknown model kind {other:?}; expected one of \
                 torus_wrapped_gaussian, bivariate_normal_ratio, discrete_tabular"
            ))),
        }
    }
}

impl ModelConfig {
    /// Instantiates the configured model.
    pub fn build(&self) -> Result<ModelInstance, ModelError> {
        match *self {
            Self::TorusWrappedGaussian {
                sigma_star,
                sigma_lo,
                sigma_hi,
                truncation_radius,
            } => Ok(ModelInstance::Torus(TorusWrappedGaussian::with_domain(
                sigma_star,
                sigma_lo,
                sigma_hi,
                truncation_radius,
            )?)),
            Self::BivariateNormalRatio {
                rho_star,
                edge_margin,
            } => Ok(ModelInstance::Bivariate(BivariateNormalRatio::with_margin(
                rho_star,
                edge_margin,
            )?)),
            Self::DiscreteTabular {
                theta_star,
                categories,
                bound,
            } => Ok(ModelInstance::Discrete(DiscreteTabular::diagonal_affinity(
                categories, theta_star, bound,
            )?)),
        }
    }
}

/// An instantiated model, usable through both the density and the
/// generative interfaces.
#[derive(Debug, Clone)]
pub enum ModelInstance {
    Torus(TorusWrappedGaussian),
    Bivariate(BivariateNormalRatio),
    Discrete(DiscreteTabular),
}

impl ModelInstance {
    pub fn density(&self) -> &dyn DensityModel {
        match self {
            Self::Torus(m) => m,
            Self::Bivariate(m) => m,
            Self::Discrete(m) => m,
        }
    }

    pub fn generative(&self) -> &dyn GenerativeModel {
        match self {
            Self::Torus(m) => m,
            Self::Bivariate(m) => m,
            Self::Discrete(m) => m,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteTabular> {
        match self {
            Self::Discrete(m) => Some(m),
            _ => None,
        }
    }

    /// The same family with a different (scalar) true parameter.
    pub fn with_true_param(&self, theta_star: f64) -> Result<Self, ModelError> {
        match self {
            Self::Torus(m) => Ok(Self::Torus(m.with_true_sigma(theta_star)?)),
            Self::Bivariate(m) => Ok(Self::Bivariate(m.with_true_rho(theta_star)?)),
            Self::Discrete(m) => Ok(Self::Discrete(m.with_true_param(vec![theta_star])?)),
        }
    }
}

impl ExperimentConfig {
    /// Parses a configuration from a JSON file.
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses a configuration from JSON text.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks cross-field invariants; rerun after mutating a parsed
    /// configuration (for example from command-line overrides).
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return Err(ExperimentError::Config(
                "m_list must be non-empty with positive batch sizes".into(),
            ));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(ExperimentError::Config(
                "n_list must be non-empty with positive batch counts".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(ExperimentError::Config(
                "replicates must be positive".into(),
            ));
        }
        if let Some(grid) = &self.theta_grid {
            if grid.count < 2 {
                return Err(ExperimentError::Config(
                    "theta_grid.count must be at least 2".into(),
                ));
            }
            if !grid.lo.is_finite() || !grid.hi.is_finite() || grid.lo >= grid.hi {
                return Err(ExperimentError::Config(
                    "theta_grid must satisfy lo < hi with finite bounds".into(),
                ));
            }
        }
        if let Some(stars) = &self.theta_star_list {
            if stars.is_empty() || stars.iter().any(|v| !v.is_finite()) {
                return Err(ExperimentError::Config(
                    "theta_star_list must be non-empty and finite".into(),
                ));
            }
        }
        for format in &self.output.formats {
            if format != "csv" && format != "svg" {
                return Err(ExperimentError::Config(format!(
                    "unknown output format {format:?}; expected \"csv\" or \"svg\""
                )));
            }
        }
        Ok(())
    }
}
