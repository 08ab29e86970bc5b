//! Deterministic minimizers over box-shaped parameter domains.
//!
//! The losses these minimize are cheap per evaluation, low-dimensional,
//! and often non-convex but unimodal near the truth, so the strategy is
//! simple and reproducible rather than clever:
//!
//! * [`minimize_scalar`] — a uniform bracketing grid over the interval
//!   followed by golden-section refinement of the best bracket. The
//!   refinement uses comparisons only, so minimizers are invariant under
//!   adding a constant to the objective, and ties resolve toward the
//!   smaller argument, so a constant objective returns the interval's
//!   lower endpoint exactly.
//! * [`minimize_box`] — projected gradient descent with Armijo
//!   backtracking and finite-difference gradients, for multi-parameter
//!   domains.
//!
//! Objectives are plain `f64` functions; any non-finite value aborts the
//! search with the offending argument. Every routine is deterministic:
//! the same inputs produce bit-identical results on every run.

use thiserror::Error;

use crate::domain::{ParamDomain, ParamPoint};

/// `1/phi`, the golden-section interior ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;

/// Step shrink factor for backtracking.
const BACKTRACK: f64 = 0.5;

/// Smallest backtracking step before the line search gives up.
const MIN_STEP: f64 = 1e-18;

/// Failure modes of minimization.
#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("objective is non-finite at {at:?}")]
    NonFiniteObjective { at: Vec<f64> },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("evaluation point lies outside the domain")]
    ParamOutOfDomain,
}

/// Tuning knobs shared by the minimizers.
#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Bracketing grid resolution for the scalar minimizer.
    pub grid_points: usize,
    /// Convergence threshold: final bracket width for the scalar
    /// minimizer, projected-gradient residual for the box minimizer.
    pub refine_tol: f64,
    /// Iteration budget for the refinement stage.
    pub max_refine_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grid_points: 61,
            refine_tol: 1e-6,
            max_refine_iters: 200,
        }
    }
}

/// Where the search stopped.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub arg: ParamPoint,
    pub value: f64,
    pub evals: u64,
    pub converged: bool,
}

fn validate(options: &MinimizeOptions) -> Result<(), OptimizeError> {
    if options.grid_points < 2 {
        return Err(OptimizeError::InvalidOptions(format!(
            "grid needs at least 2 points, got {}",
            options.grid_points
        )));
    }
    if options.refine_tol <= 0.0 || !options.refine_tol.is_finite() {
        return Err(OptimizeError::InvalidOptions(format!(
            "refine tolerance must be positive and finite, got {}",
            options.refine_tol
        )));
    }
    Ok(())
}

/// Grid-plus-golden-section minimizer over a one-dimensional domain.
pub fn minimize_scalar(
    domain: &ParamDomain,
    f: impl Fn(f64) -> f64,
    options: &MinimizeOptions,
) -> Result<MinimizeResult, OptimizeError> {
    validate(options)?;
    if domain.dim() != 1 {
        return Err(OptimizeError::InvalidOptions(format!(
            "scalar minimizer needs a one-dimensional domain, got {}",
            domain.dim()
        )));
    }
    let lo = domain.lower()[0];
    let hi = domain.upper()[0];
    let g = options.grid_points;

    let mut best_t = f64::NAN;
    let mut best = f64::INFINITY;
    let mut evals: u64 = 0;
    let mut eval = |t: f64| -> Result<f64, OptimizeError> {
        let v = f(t);
        evals += 1;
        if !v.is_finite() {
            return Err(OptimizeError::NonFiniteObjective { at: vec![t] });
        }
        // ties resolve toward the smaller argument so results do not
        // depend on evaluation order
        if v < best || (v == best && t < best_t) {
            best = v;
            best_t = t;
        }
        Ok(v)
    };

    let step = (hi - lo) / (g - 1) as f64;
    let mut grid = Vec::with_capacity(g);
    let mut best_idx = 0;
    let mut grid_best = f64::INFINITY;
    let mut grid_best_t = f64::NAN;
    for i in 0..g {
        // pin the endpoints exactly; accumulated rounding must not push
        // the last sample outside the domain
        let t = if i == g - 1 { hi } else { lo + step * i as f64 };
        let v = eval(t)?;
        if v < grid_best || (v == grid_best && t < grid_best_t) {
            grid_best = v;
            grid_best_t = t;
            best_idx = i;
        }
        grid.push(t);
    }

    // golden-section refinement of the winning bracket
    let mut a = grid[best_idx.saturating_sub(1)];
    let mut b = grid[(best_idx + 1).min(g - 1)];
    let mut converged = (b - a).abs() < options.refine_tol;
    if !converged {
        let mut c = b - (b - a) * INV_PHI;
        let mut d = a + (b - a) * INV_PHI;
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        for _ in 0..options.max_refine_iters {
            if (b - a).abs() < options.refine_tol {
                converged = true;
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * INV_PHI;
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * INV_PHI;
                fd = eval(d)?;
            }
        }
        converged = converged || (b - a).abs() < options.refine_tol;
    }

    Ok(MinimizeResult {
        arg: domain
            .point(vec![best_t])
            .expect("grid and golden iterates stay inside the domain"),
        value: best,
        evals,
        converged,
    })
}

/// Central-difference gradient with the stencil shifted to stay inside the
/// domain; near a face the difference becomes one-sided automatically.
pub fn finite_diff_grad(
    domain: &ParamDomain,
    f: impl Fn(&[f64]) -> f64,
    at: &[f64],
    h: f64,
) -> Result<Vec<f64>, OptimizeError> {
    if !domain.contains(at) {
        return Err(OptimizeError::ParamOutOfDomain);
    }
    if h <= 0.0 || !h.is_finite() {
        return Err(OptimizeError::InvalidOptions(format!(
            "step must be positive and finite, got {h}"
        )));
    }
    let mut grad = vec![0.0; at.len()];
    let mut point = at.to_vec();
    for i in 0..at.len() {
        let up = (at[i] + h).min(domain.upper()[i]);
        let dn = (at[i] - h).max(domain.lower()[i]);
        if up == dn {
            grad[i] = 0.0;
            continue;
        }
        point[i] = up;
        let fu = f(&point);
        point[i] = dn;
        let fd = f(&point);
        point[i] = at[i];
        if !fu.is_finite() || !fd.is_finite() {
            return Err(OptimizeError::NonFiniteObjective { at: point });
        }
        grad[i] = (fu - fd) / (up - dn);
    }
    Ok(grad)
}

/// Projected gradient descent with Armijo backtracking over a box domain,
/// started from the box center.
pub fn minimize_box(
    domain: &ParamDomain,
    f: impl Fn(&[f64]) -> f64,
    options: &MinimizeOptions,
) -> Result<MinimizeResult, OptimizeError> {
    validate(options)?;
    let mut evals: u64 = 0;
    let mut eval = |x: &[f64]| -> Result<f64, OptimizeError> {
        let v = f(x);
        evals += 1;
        if !v.is_finite() {
            return Err(OptimizeError::NonFiniteObjective { at: x.to_vec() });
        }
        Ok(v)
    };

    let fd_step = options.refine_tol.sqrt().min(1e-5);
    let mut x: Vec<f64> = domain.center().coords().to_vec();
    let mut fx = eval(&x)?;
    let mut converged = false;

    for _ in 0..options.max_refine_iters {
        let grad = {
            let mut g = vec![0.0; x.len()];
            let mut point = x.clone();
            for i in 0..x.len() {
                let up = (x[i] + fd_step).min(domain.upper()[i]);
                let dn = (x[i] - fd_step).max(domain.lower()[i]);
                if up == dn {
                    continue;
                }
                point[i] = up;
                let fu = eval(&point)?;
                point[i] = dn;
                let fd = eval(&point)?;
                point[i] = x[i];
                g[i] = (fu - fd) / (up - dn);
            }
            g
        };

        // residual of the fixed-point condition x = P(x - grad)
        let projected: Vec<f64> = x.iter().zip(&grad).map(|(&xi, &gi)| xi - gi).collect();
        let projected = domain.project(&projected);
        let residual = x
            .iter()
            .zip(&projected)
            .map(|(&xi, &pi)| (xi - pi).abs())
            .fold(0.0_f64, f64::max);
        if residual < options.refine_tol {
            converged = true;
            break;
        }

        // backtracking line search along the projected step
        let mut t = 1.0;
        let mut advanced = false;
        while t >= MIN_STEP {
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(&xi, &gi)| xi - t * gi).collect();
            let candidate = domain.project(&candidate);
            let decrease: f64 = grad
                .iter()
                .zip(x.iter().zip(&candidate))
                .map(|(&gi, (&xi, &ci))| gi * (xi - ci))
                .sum();
            let fc = eval(&candidate)?;
            if fc <= fx - ARMIJO_C * decrease && decrease > 0.0 {
                x = candidate;
                fx = fc;
                advanced = true;
                break;
            }
            t *= BACKTRACK;
        }
        if !advanced {
            // no descent direction at this resolution; treat as stationary
            converged = true;
            break;
        }
    }

    Ok(MinimizeResult {
        arg: domain
            .point(x)
            .expect("projection keeps iterates inside the domain"),
        value: fx,
        evals,
        converged,
    })
}
