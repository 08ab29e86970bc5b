//! Experiment drivers.
//!
//! Every driver is deterministic for a fixed configuration: replicate
//! `r` of sweep cell `c` always draws from pseudorandom stream
//! `c * replicates + r` regardless of scheduling, parallel results are
//! collected in index order, and reductions run sequentially, so output
//! files are byte-identical across runs and across `--threads` settings.
//!
//! Drivers:
//!
//! * [`run_simulate`] — generate broken batches, minimize the configured
//!   loss per replicate, tabulate estimates and per-cell aggregates;
//! * [`run_loss_curves`] — trace empirical loss curves over a parameter
//!   grid next to the analytic large-batch limit curve;
//! * [`run_cv_sweep`] — dispersion (coefficient of variation) of the
//!   estimator across batch sizes and true parameters;
//! * [`run_limit_convergence`] — exact expected-loss-to-limit gap as the
//!   batch size grows, with per-parameter log-log slope fits;
//! * [`run_oracle_checks`] — the built-in numerical self-check suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{DensityModel, ParamDomain, Point};
use crate::experiments::config::{ExperimentConfig, GridSpec, LossKind, ModelInstance};
use crate::experiments::{report, svg, ExperimentError};
use crate::loss::{
    expected_loss_bruteforce, expected_loss_exact, full_nll_bruteforce, full_nll_permanent,
    limit_loss, mixture_kl, mixture_pseudo_loss, pseudo_loss, MAX_PERMANENT_BATCH,
};
use crate::models::quadrature::{gh_expect2, torus_grid_integral2};
use crate::models::{BivariateNormalRatio, DiscreteTabular, TorusWrappedGaussian};
use crate::optimize::{minimize_scalar, MinimizeOptions};
use crate::sampling::{break_batches, generate_dataset, SeedSpec};

/// One estimate from one replicate of a sweep cell.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub replicate: usize,
    pub m: usize,
    pub n: usize,
    pub theta_star: f64,
    pub theta_hat: f64,
    pub loss_at_hat: f64,
    /// Wall-clock seconds spent minimizing; kept in memory for profiling
    /// but deliberately excluded from CSV output, which must be
    /// byte-reproducible.
    pub wall_secs: f64,
}

/// Per-cell aggregate over replicates.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub m: usize,
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    pub median_abs_err: f64,
}

/// Results of [`run_simulate`].
#[derive(Debug)]
pub struct SimulateOutput {
    pub estimates: Vec<EstimateRow>,
    pub summary: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

/// Results of [`run_loss_curves`].
#[derive(Debug)]
pub struct LossCurvesOutput {
    /// `(m, n, replicate, theta, loss)` in write order.
    pub curves: Vec<(usize, usize, usize, f64, f64)>,
    /// Grid argmin per curve: `(m, n, replicate, theta_hat, loss_at_hat)`.
    pub minima: Vec<(usize, usize, usize, f64, f64)>,
    /// `(theta, limit_loss)` along the same grid.
    pub limit: Vec<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

/// One row of the dispersion sweep.
#[derive(Debug, Clone)]
pub struct CvRow {
    pub theta_star: f64,
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
}

/// Results of [`run_cv_sweep`].
#[derive(Debug)]
pub struct CvSweepOutput {
    pub rows: Vec<CvRow>,
    pub files: Vec<PathBuf>,
}

/// Results of [`run_limit_convergence`].
#[derive(Debug)]
pub struct LimitConvergenceOutput {
    /// `(theta, m, expected_loss, limit_loss, abs_err)`.
    pub rows: Vec<(f64, usize, f64, f64, f64)>,
    /// `(theta, log-log slope of abs_err against m)`.
    pub fits: Vec<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

/// One self-check result.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Results of [`run_oracle_checks`].
#[derive(Debug)]
pub struct OracleOutput {
    pub checks: Vec<OracleCheck>,
    pub files: Vec<PathBuf>,
}

/// Batch sizes used by the convergence study.
pub const LIMIT_STUDY_BATCH_SIZES: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

fn with_pool<T: Send>(
    threads: usize,
    job: impl FnOnce() -> Result<T, ExperimentError> + Send,
) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(job)
}

fn ensure_scalar_family(model: &ModelInstance) -> Result<(), ExperimentError> {
    if model.density().param_dim() == 1 {
        Ok(())
    } else {
        Err(ExperimentError::Config(
            "estimation sweeps support one-parameter families".into(),
        ))
    }
}

fn ensure_loss_feasible(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    if config.loss == LossKind::Full {
        if let Some(&m) = config.m_list.iter().find(|&&m| m > MAX_PERMANENT_BATCH) {
            return Err(ExperimentError::Config(format!(
                "loss \"full\" evaluates a matrix permanent and supports batch sizes up to \
                 {MAX_PERMANENT_BATCH}; m_list contains {m}"
            )));
        }
    }
    Ok(())
}

/// Minimizes the configured loss on one freshly generated broken dataset.
fn estimate_once(
    model: &ModelInstance,
    loss: LossKind,
    m: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
    options: &MinimizeOptions,
) -> Result<(f64, f64, f64), ExperimentError> {
    let clean = generate_dataset(model.generative(), m, n, rng)?;
    let data = break_batches(clean, rng);
    let density = model.density();
    let domain = density.domain().clone();
    let start = Instant::now();
    let objective = |t: f64| -> f64 {
        let Ok(theta) = domain.point(vec![t]) else {
            return f64::NAN;
        };
        let result = match loss {
            LossKind::Pseudo => pseudo_loss(density, &theta, &data),
            LossKind::Mixture => mixture_pseudo_loss(density, &theta, &data),
            LossKind::Full => full_nll_permanent(density, &theta, &data),
        };
        result.map(|r| r.value).unwrap_or(f64::NAN)
    };
    let found = minimize_scalar(&domain, objective, options)?;
    Ok((
        found.arg.scalar(),
        found.value,
        start.elapsed().as_secs_f64(),
    ))
}

fn aggregate(
    hats: &[f64],
    theta_star: f64,
    m: usize,
    n: usize,
) -> Result<AggregateRow, ExperimentError> {
    let k = hats.len();
    let kf = k as f64;
    let mean = hats.iter().sum::<f64>() / kf;
    let sd = if k < 2 {
        0.0
    } else {
        (hats.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / (kf - 1.0)).sqrt()
    };
    if mean == 0.0 {
        return Err(ExperimentError::DegenerateCv { m, n });
    }
    let cv = sd / mean;
    let mut errs: Vec<f64> = hats.iter().map(|h| (h - theta_star).abs()).collect();
    errs.sort_by(f64::total_cmp);
    let median_abs_err = if k % 2 == 1 {
        errs[k / 2]
    } else {
        0.5 * (errs[k / 2 - 1] + errs[k / 2])
    };
    Ok(AggregateRow {
        m,
        n,
        replicates: k,
        mean,
        sd,
        cv,
        median_abs_err,
    })
}

fn sweep_cells(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(config.m_list.len() * config.n_list.len());
    for &m in &config.m_list {
        for &n in &config.n_list {
            cells.push((m, n));
        }
    }
    cells
}

/// Estimation sweep over every `(m, n)` cell with per-cell aggregates.
pub fn run_simulate(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<SimulateOutput, ExperimentError> {
    let model = config.model.build()?;
    ensure_scalar_family(&model)?;
    ensure_loss_feasible(config)?;
    let options = config.optimizer.minimize_options();
    let spec = SeedSpec::new(config.seed);
    let theta_star = model.generative().true_param().scalar();
    let param_name = model.density().param_names().swap_remove(0);
    let cells = sweep_cells(config);
    let replicates = config.replicates;

    let estimates: Vec<EstimateRow> = with_pool(threads, || {
        let mut all = Vec::with_capacity(cells.len() * replicates);
        for (ci, &(m, n)) in cells.iter().enumerate() {
            let cell: Vec<Result<EstimateRow, ExperimentError>> = (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = spec.stream((ci * replicates + rep) as u64);
                    let (theta_hat, loss_at_hat, wall_secs) =
                        estimate_once(&model, config.loss, m, n, &mut rng, &options)?;
                    Ok(EstimateRow {
                        replicate: rep,
                        m,
                        n,
                        theta_star,
                        theta_hat,
                        loss_at_hat,
                        wall_secs,
                    })
                })
                .collect();
            for row in cell {
                all.push(row?);
            }
        }
        Ok(all)
    })?;

    let mut summary = Vec::with_capacity(cells.len());
    for &(m, n) in &cells {
        let hats: Vec<f64> = estimates
            .iter()
            .filter(|r| r.m == m && r.n == n)
            .map(|r| r.theta_hat)
            .collect();
        summary.push(aggregate(&hats, theta_star, m, n)?);
    }

    std::fs::create_dir_all(out_dir)?;
    let estimates_path = out_dir.join("estimates.csv");
    report::write_csv(
        &estimates_path,
        &[
            "replicate",
            "m",
            "n",
            "param_name",
            "theta_star",
            "theta_hat",
            "loss_at_hat",
        ],
        &estimates
            .iter()
            .map(|r| {
                vec![
                    r.replicate.to_string(),
                    r.m.to_string(),
                    r.n.to_string(),
                    param_name.clone(),
                    report::fmt(r.theta_star),
                    report::fmt(r.theta_hat),
                    report::fmt(r.loss_at_hat),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let summary_path = out_dir.join("estimates_summary.csv");
    report::write_csv(
        &summary_path,
        &["m", "n", "replicates", "mean", "sd", "cv", "median_abs_err"],
        &summary
            .iter()
            .map(|r| {
                vec![
                    r.m.to_string(),
                    r.n.to_string(),
                    r.replicates.to_string(),
                    report::fmt(r.mean),
                    report::fmt(r.sd),
                    report::fmt(r.cv),
                    report::fmt(r.median_abs_err),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let mut files = vec![estimates_path, summary_path];
    if config.output.wants_svg() {
        if let Some(path) = svg::render_estimates(out_dir)? {
            files.push(path);
        }
    }
    Ok(SimulateOutput {
        estimates,
        summary,
        files,
    })
}

fn resolve_grid(
    spec: Option<GridSpec>,
    domain: &ParamDomain,
    fallback: GridSpec,
) -> Result<Vec<f64>, ExperimentError> {
    let grid = spec.unwrap_or(fallback);
    if grid.lo < domain.lower()[0] || grid.hi > domain.upper()[0] {
        return Err(ExperimentError::Config(format!(
            "theta_grid [{}, {}] exceeds the parameter domain [{}, {}]",
            grid.lo,
            grid.hi,
            domain.lower()[0],
            domain.upper()[0]
        )));
    }
    Ok(grid.points())
}

/// Empirical loss curves over a parameter grid plus the analytic limit
/// curve along the same grid.
pub fn run_loss_curves(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<LossCurvesOutput, ExperimentError> {
    let model = config.model.build()?;
    ensure_scalar_family(&model)?;
    ensure_loss_feasible(config)?;
    let density = model.density();
    let domain = density.domain().clone();
    let grid = resolve_grid(
        config.theta_grid,
        &domain,
        GridSpec {
            lo: domain.lower()[0],
            hi: domain.upper()[0],
            count: 61,
        },
    )?;
    let param_name = density.param_names().swap_remove(0);
    let spec = SeedSpec::new(config.seed);
    let cells = sweep_cells(config);
    let replicates = config.replicates;

    type Curve = (usize, usize, usize, Vec<f64>);
    let raw_curves: Vec<Curve> = with_pool(threads, || {
        let mut all = Vec::with_capacity(cells.len() * replicates);
        for (ci, &(m, n)) in cells.iter().enumerate() {
            let cell: Vec<Result<Curve, ExperimentError>> = (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = spec.stream((ci * replicates + rep) as u64);
                    let clean = generate_dataset(model.generative(), m, n, &mut rng)?;
                    let data = break_batches(clean, &mut rng);
                    let mut values = Vec::with_capacity(grid.len());
                    for &t in &grid {
                        let theta = domain.point(vec![t])?;
                        let value = match config.loss {
                            LossKind::Pseudo => pseudo_loss(density, &theta, &data)?,
                            LossKind::Mixture => mixture_pseudo_loss(density, &theta, &data)?,
                            LossKind::Full => full_nll_permanent(density, &theta, &data)?,
                        };
                        values.push(value.value);
                    }
                    Ok((m, n, rep, values))
                })
                .collect();
            for curve in cell {
                all.push(curve?);
            }
        }
        Ok(all)
    })?;

    let mut curves = Vec::with_capacity(raw_curves.len() * grid.len());
    let mut minima = Vec::with_capacity(raw_curves.len());
    for (m, n, rep, values) in &raw_curves {
        let mut best = f64::INFINITY;
        let mut best_t = grid[0];
        for (&t, &v) in grid.iter().zip(values) {
            curves.push((*m, *n, *rep, t, v));
            if v < best || (v == best && t < best_t) {
                best = v;
                best_t = t;
            }
        }
        minima.push((*m, *n, *rep, best_t, best));
    }

    let mut limit = Vec::with_capacity(grid.len());
    for &t in &grid {
        limit.push((t, limit_loss(density, &domain.point(vec![t])?)?));
    }

    std::fs::create_dir_all(out_dir)?;
    let curves_path = out_dir.join("loss_curves.csv");
    report::write_csv(
        &curves_path,
        &["m", "n", "replicate", "param_name", "theta", "loss"],
        &curves
            .iter()
            .map(|&(m, n, rep, t, v)| {
                vec![
                    m.to_string(),
                    n.to_string(),
                    rep.to_string(),
                    param_name.clone(),
                    report::fmt(t),
                    report::fmt(v),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let minima_path = out_dir.join("loss_curve_minima.csv");
    report::write_csv(
        &minima_path,
        &[
            "m",
            "n",
            "replicate",
            "param_name",
            "theta_hat",
            "loss_at_hat",
        ],
        &minima
            .iter()
            .map(|&(m, n, rep, t, v)| {
                vec![
                    m.to_string(),
                    n.to_string(),
                    rep.to_string(),
                    param_name.clone(),
                    report::fmt(t),
                    report::fmt(v),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let limit_path = out_dir.join("limit_curve.csv");
    report::write_csv(
        &limit_path,
        &["param_name", "theta", "limit_loss"],
        &limit
            .iter()
            .map(|&(t, v)| vec![param_name.clone(), report::fmt(t), report::fmt(v)])
            .collect::<Vec<_>>(),
    )?;
    let mut files = vec![curves_path, minima_path, limit_path];
    if config.output.wants_svg() {
        if let Some(path) = svg::render_loss_curves(out_dir)? {
            files.push(path);
        }
    }
    Ok(LossCurvesOutput {
        curves,
        minima,
        limit,
        files,
    })
}

/// Estimator dispersion across true parameters and batch sizes.
pub fn run_cv_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<CvSweepOutput, ExperimentError> {
    let stars = config
        .theta_star_list
        .clone()
        .ok_or_else(|| ExperimentError::Config("dispersion sweep needs theta_star_list".into()))?;
    let base = config.model.build()?;
    ensure_scalar_family(&base)?;
    ensure_loss_feasible(config)?;
    let options = config.optimizer.minimize_options();
    let spec = SeedSpec::new(config.seed);
    let cells = sweep_cells(config);
    let replicates = config.replicates;

    let mut rows = Vec::with_capacity(stars.len() * cells.len());
    for (si, &star) in stars.iter().enumerate() {
        let model = base
            .with_true_param(star)
            .map_err(|e| ExperimentError::Config(format!("theta_star_list[{si}] = {star}: {e}")))?;
        let cell_rows: Vec<AggregateRow> = with_pool(threads, || {
            let mut out = Vec::with_capacity(cells.len());
            for (ci, &(m, n)) in cells.iter().enumerate() {
                let hats: Vec<Result<f64, ExperimentError>> = (0..replicates)
                    .into_par_iter()
                    .map(|rep| {
                        let stream = ((si * cells.len() + ci) * replicates + rep) as u64;
                        let mut rng = spec.stream(stream);
                        let (theta_hat, _, _) =
                            estimate_once(&model, config.loss, m, n, &mut rng, &options)?;
                        Ok(theta_hat)
                    })
                    .collect();
                let hats: Vec<f64> = hats.into_iter().collect::<Result<_, _>>()?;
                out.push(aggregate(&hats, star, m, n)?);
            }
            Ok(out)
        })?;
        for agg in cell_rows {
            rows.push(CvRow {
                theta_star: star,
                n: agg.n,
                m: agg.m,
                replicates: agg.replicates,
                mean: agg.mean,
                sd: agg.sd,
                cv: agg.cv,
            });
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("cv_sweep.csv");
    report::write_csv(
        &path,
        &["theta_star", "n", "m", "replicates", "mean", "sd", "cv"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    report::fmt(r.theta_star),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.replicates.to_string(),
                    report::fmt(r.mean),
                    report::fmt(r.sd),
                    report::fmt(r.cv),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let mut files = vec![path];
    if config.output.wants_svg() {
        if let Some(path) = svg::render_cv_sweep(out_dir)? {
            files.push(path);
        }
    }
    Ok(CvSweepOutput { rows, files })
}

/// Least-squares slope of `y` against `x`.
fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / k;
    let y_bar = ys.iter().sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        num += (x - x_bar) * (y - y_bar);
        den += (x - x_bar) * (x - x_bar);
    }
    num / den
}

/// Gap between the exact finite-batch expected loss and its analytic
/// limit as the batch size grows, with log-log slope fits.
pub fn run_limit_convergence(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<LimitConvergenceOutput, ExperimentError> {
    let model = config.model.build()?;
    let discrete = model.as_discrete().ok_or_else(|| {
        ExperimentError::Config(
            "the convergence study needs the discrete_tabular model, whose expectations \
             are exact"
                .into(),
        )
    })?;
    let grid = resolve_grid(
        config.theta_grid,
        discrete.domain(),
        GridSpec {
            lo: 0.2,
            hi: 0.8,
            count: 5,
        },
    )?;

    let mut rows = Vec::with_capacity(grid.len() * LIMIT_STUDY_BATCH_SIZES.len());
    let mut fits = Vec::with_capacity(grid.len());
    for &t in &grid {
        let theta = discrete.domain().point(vec![t])?;
        let limit = limit_loss(discrete, &theta)?;
        let mut log_m = Vec::new();
        let mut log_err = Vec::new();
        for &m in &LIMIT_STUDY_BATCH_SIZES {
            let expected = expected_loss_exact(discrete, &theta, m)?;
            let abs_err = (expected - limit).abs();
            rows.push((t, m, expected, limit, abs_err));
            if abs_err > 0.0 {
                log_m.push((m as f64).ln());
                log_err.push(abs_err.ln());
            }
        }
        let slope = if log_m.len() >= 2 {
            fit_slope(&log_m, &log_err)
        } else {
            f64::NAN
        };
        fits.push((t, slope));
    }

    std::fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join("limit_convergence.csv");
    report::write_csv(
        &rows_path,
        &["theta", "m", "expected_loss", "limit_loss", "abs_err"],
        &rows
            .iter()
            .map(|&(t, m, e, l, d)| {
                vec![
                    report::fmt(t),
                    m.to_string(),
                    report::fmt(e),
                    report::fmt(l),
                    report::fmt(d),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let fits_path = out_dir.join("limit_convergence_fit.csv");
    report::write_csv(
        &fits_path,
        &["theta", "slope"],
        &fits
            .iter()
            .map(|&(t, s)| vec![report::fmt(t), report::fmt(s)])
            .collect::<Vec<_>>(),
    )?;
    let mut files = vec![rows_path, fits_path];
    if config.output.wants_svg() {
        if let Some(path) = svg::render_limit_convergence(out_dir)? {
            files.push(path);
        }
    }
    Ok(LimitConvergenceOutput { rows, fits, files })
}

// --- self-check suite ----------------------------------------------------

fn check_permanent_vs_enumeration() -> Result<OracleCheck, ExperimentError> {
    let spec = SeedSpec::new(90_210);
    let mut dev = 0.0_f64;

    let torus = TorusWrappedGaussian::new(0.1)?;
    let mut rng = spec.stream(0);
    let data = break_batches(generate_dataset(&torus, 4, 3, &mut rng)?, &mut rng);
    for t in [0.07, 0.1, 0.2] {
        let theta = torus.domain().point(vec![t])?;
        let a = full_nll_permanent(&torus, &theta, &data)?.value;
        let b = full_nll_bruteforce(&torus, &theta, &data)?.value;
        dev = dev.max((a - b).abs());
    }

    let bivariate = BivariateNormalRatio::new(0.5)?;
    let mut rng = spec.stream(1);
    let data = break_batches(generate_dataset(&bivariate, 3, 4, &mut rng)?, &mut rng);
    for t in [-0.2, 0.3, 0.5] {
        let theta = bivariate.domain().point(vec![t])?;
        let a = full_nll_permanent(&bivariate, &theta, &data)?.value;
        let b = full_nll_bruteforce(&bivariate, &theta, &data)?.value;
        dev = dev.max((a - b).abs());
    }

    let tolerance = 1e-12;
    Ok(OracleCheck {
        name: "permanent_vs_enumeration".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_singleton_collapse() -> Result<OracleCheck, ExperimentError> {
    let spec = SeedSpec::new(90_211);
    let mut dev = 0.0_f64;

    let torus = TorusWrappedGaussian::new(0.1)?;
    let mut rng = spec.stream(0);
    let data = break_batches(generate_dataset(&torus, 1, 6, &mut rng)?, &mut rng);
    let theta = torus.domain().point(vec![0.15])?;
    let values = [
        pseudo_loss(&torus, &theta, &data)?.value,
        mixture_pseudo_loss(&torus, &theta, &data)?.value,
        full_nll_permanent(&torus, &theta, &data)?.value,
        full_nll_bruteforce(&torus, &theta, &data)?.value,
    ];
    for v in &values[1..] {
        dev = dev.max((v - values[0]).abs());
    }

    let discrete = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0)?;
    let mut rng = spec.stream(1);
    let data = break_batches(generate_dataset(&discrete, 1, 10, &mut rng)?, &mut rng);
    let theta = discrete.domain().point(vec![0.5])?;
    let values = [
        pseudo_loss(&discrete, &theta, &data)?.value,
        mixture_pseudo_loss(&discrete, &theta, &data)?.value,
        full_nll_permanent(&discrete, &theta, &data)?.value,
        full_nll_bruteforce(&discrete, &theta, &data)?.value,
    ];
    for v in &values[1..] {
        dev = dev.max((v - values[0]).abs());
    }

    // the collapse is exact by construction, so the tolerance is zero
    let tolerance = 0.0;
    Ok(OracleCheck {
        name: "singleton_batch_collapse".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_expected_two_routes() -> Result<OracleCheck, ExperimentError> {
    let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0)?;
    let mut dev = 0.0_f64;
    for m in [1usize, 2, 3] {
        for t in [0.2, 0.5, 0.8] {
            let theta = model.domain().point(vec![t])?;
            let exact = expected_loss_exact(&model, &theta, m)?;
            let brute = expected_loss_bruteforce(&model, &theta, m)?;
            dev = dev.max((exact - brute).abs());
        }
    }
    let tolerance = 1e-12;
    Ok(OracleCheck {
        name: "expected_loss_two_routes".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_divergence_scaling() -> Result<OracleCheck, ExperimentError> {
    let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0)?;
    let t1 = model.domain().point(vec![0.3])?;
    let t2 = model.domain().point(vec![0.6])?;
    let mut dev = 0.0_f64;
    for m in [2usize, 5] {
        let loss_gap = expected_loss_exact(&model, &t1, m)? - expected_loss_exact(&model, &t2, m)?;
        let kl_gap = mixture_kl(&model, &t1, m)? - mixture_kl(&model, &t2, m)?;
        dev = dev.max((loss_gap - (m * m) as f64 * kl_gap).abs());
    }
    let tolerance = 1e-10;
    Ok(OracleCheck {
        name: "divergence_scaling_identity".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_l2_bivariate() -> Result<OracleCheck, ExperimentError> {
    let model = BivariateNormalRatio::new(0.0)?;
    let mut dev = 0.0_f64;
    for (ra, rb) in [(0.5, 0.5), (0.3, -0.4), (0.8, 0.8), (0.0, 0.7)] {
        let ta = model.domain().point(vec![ra])?;
        let tb = model.domain().point(vec![rb])?;
        let quad = gh_expect2(60, |x, y| {
            let xp = Point::scalar(x);
            let yp = Point::scalar(y);
            model.density(&ta, &xp, &yp) * model.density(&tb, &xp, &yp)
        });
        let closed = model.inner_product(ra, rb);
        dev = dev.max(((quad - closed) / closed).abs());
    }
    let tolerance = 1e-6;
    Ok(OracleCheck {
        name: "l2_closed_form_bivariate".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_l2_torus() -> Result<OracleCheck, ExperimentError> {
    let model = TorusWrappedGaussian::new(0.1)?;
    let origin = Point::planar(0.0, 0.0);
    let mut dev = 0.0_f64;
    for (sa, sb) in [(0.1, 0.1), (0.1, 0.3), (0.5, 0.5), (0.05, 0.2)] {
        let ta = model.domain().point(vec![sa])?;
        let tb = model.domain().point(vec![sb])?;
        // densities depend only on the displacement, so the 4-dimensional
        // inner product reduces to a 2-dimensional integral over it
        let quad = torus_grid_integral2(512, |u1, u2| {
            let u = Point::planar(u1, u2);
            model.density(&ta, &u, &origin) * model.density(&tb, &u, &origin)
        });
        let closed = model.inner_product(sa, sb);
        dev = dev.max(((quad - closed) / closed).abs());
    }
    let tolerance = 1e-8;
    Ok(OracleCheck {
        name: "l2_closed_form_torus".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

fn check_gradients() -> Result<OracleCheck, ExperimentError> {
    let mut dev = 0.0_f64;
    let mut record = |analytic: f64, fd: f64| {
        dev = dev.max((analytic - fd).abs() / analytic.abs().max(1e-8));
    };

    let torus = TorusWrappedGaussian::new(0.1)?;
    // the wrapped density is steep in sigma at large displacements, so a
    // smaller step keeps central-difference truncation well under the
    // tolerance while staying far above roundoff
    let h = 1e-6;
    for (x, y) in [(0.1, 0.7), (0.45, 0.5), (0.9, 0.05)] {
        let xp = Point::planar(x, 1.0 - x);
        let yp = Point::planar(y, y * 0.5);
        for sigma in [0.08, 0.13, 0.3] {
            let an = torus.grad_density(&torus.domain().point(vec![sigma])?, &xp, &yp)[0];
            let up = torus.density(&torus.domain().point(vec![sigma + h])?, &xp, &yp);
            let dn = torus.density(&torus.domain().point(vec![sigma - h])?, &xp, &yp);
            record(an, (up - dn) / (2.0 * h));
        }
    }

    let bivariate = BivariateNormalRatio::new(0.4)?;
    let h = 1e-6;
    for (x, y) in [(0.3, -1.2), (1.1, 0.8), (-0.4, -0.9)] {
        let xp = Point::scalar(x);
        let yp = Point::scalar(y);
        for rho in [-0.5, 0.0, 0.4] {
            let an = bivariate.grad_density(&bivariate.domain().point(vec![rho])?, &xp, &yp)[0];
            let up = bivariate.density(&bivariate.domain().point(vec![rho + h])?, &xp, &yp);
            let dn = bivariate.density(&bivariate.domain().point(vec![rho - h])?, &xp, &yp);
            record(an, (up - dn) / (2.0 * h));
        }
    }

    let discrete = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0)?;
    let h = 1e-6;
    let at = 0.5;
    let grads = discrete.grad_tables(&discrete.domain().point(vec![at])?)?;
    let up = discrete.table(&discrete.domain().point(vec![at + h])?)?;
    let dn = discrete.table(&discrete.domain().point(vec![at - h])?)?;
    for a in 0..3 {
        for b in 0..3 {
            record(
                grads[0].get(a, b),
                (up.get(a, b) - dn.get(a, b)) / (2.0 * h),
            );
        }
    }

    let tolerance = 1e-6;
    Ok(OracleCheck {
        name: "analytic_gradients".into(),
        max_deviation: dev,
        tolerance,
        pass: dev <= tolerance,
    })
}

/// Runs the built-in numerical self-check suite, writing one CSV row per
/// check. Returns an error (after writing the table) if any check fails.
pub fn run_oracle_checks(out_dir: &Path, threads: usize) -> Result<OracleOutput, ExperimentError> {
    let checks: Vec<OracleCheck> = with_pool(threads, || {
        Ok(vec![
            check_permanent_vs_enumeration()?,
            check_singleton_collapse()?,
            check_expected_two_routes()?,
            check_divergence_scaling()?,
            check_l2_bivariate()?,
            check_l2_torus()?,
            check_gradients()?,
        ])
    })?;

    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("oracle_checks.csv");
    report::write_csv(
        &path,
        &["check", "max_deviation", "tolerance", "pass"],
        &checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    report::fmt(c.max_deviation),
                    report::fmt(c.tolerance),
                    c.pass.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;

    if let Some(failed) = checks.iter().find(|c| !c.pass) {
        return Err(ExperimentError::OracleCheckFailed {
            check: failed.name.clone(),
            deviation: failed.max_deviation,
            tolerance: failed.tolerance,
        });
    }
    Ok(OracleOutput {
        checks,
        files: vec![path],
    })
}
