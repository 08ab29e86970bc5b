//! Loss functions for batches whose within-batch pairing has been lost.
//!
//! A dataset holds `N` batches of `M` pairs each, where the `y` side of
//! every batch has been independently shuffled. Because the shuffle is
//! unobserved, a likelihood must either marginalize over permutations
//! (exact but factorially expensive) or use a surrogate. This module
//! implements both, plus the analytic references the estimators converge
//! to:
//!
//! * [`pseudo_loss`] — the all-pairs surrogate
//!   `-(1/N) sum_k sum_{i,j} ln( p(x_i, y_j)/M + (M-1)/M )`,
//!   with [`pseudo_loss_grad`] supplying its analytic gradient
//!   `-(1/N) sum d p / (p + M - 1)`.
//! * [`mixture_pseudo_loss`] — the per-`y` mixture variant
//!   `-(1/N) sum_k sum_j ln( (1/M) sum_i p(x_i, y_j) )`.
//! * [`full_nll_permanent`] — the exact negative log-likelihood
//!   `-(1/N) sum_k ln( perm(A_k) / M! )` with `A_k[i][j] = p(x_i, y_j)`,
//!   via Ryser's formula with Gray-code updates and per-row scaling; gated
//!   to `M <= 12`. [`full_nll_bruteforce`] recomputes it by direct
//!   permutation enumeration as an independent cross-check.
//! * [`limit_loss`] — the large-`M` limit
//!   `(|p - p*|^2 - |p*|^2 + 1) / 2` for models with closed-form L2
//!   geometry.
//! * [`expected_loss_exact`] / [`expected_loss_bruteforce`] /
//!   [`mixture_kl`] — exact finite-`M` expectations over finite-category
//!   models, used to validate the Monte-Carlo estimators without sampling
//!   error.
//!
//! At `M = 1` all batch losses collapse to the plain negative
//! log-likelihood `-(1/N) sum ln p` and the implementations are arranged
//! so the collapse is bit-exact, not merely approximate.
//!
//! Every summation uses Neumaier-compensated accumulation, nested per
//! batch and across batches in index order, so results are bit-identical
//! regardless of how many worker threads are in play.

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{Dataset, DensityModel, ParamPoint};
use crate::models::discrete::DiscreteTabular;
use crate::models::ModelError;

/// Batch sizes above this make the exact permanent infeasible.
pub const MAX_PERMANENT_BATCH: usize = 12;

/// Batch sizes above this make direct permutation enumeration infeasible.
pub const MAX_BRUTEFORCE_BATCH: usize = 8;

/// Tuple-space ceiling for brute-force expectations over finite categories.
pub const MAX_STATE_SPACE: f64 = 1e6;

/// Densities below this are treated as an evaluation failure in the plain
/// log-likelihood (`M = 1`) paths, where a vanished density makes the loss
/// unbounded. For `M >= 2` the `(M-1)/M` mixture floor keeps terms finite,
/// so underflowed densities are harmless there and are not rejected.
const MIN_DENSITY: f64 = 1e-300;

/// Failure modes of loss evaluation.
#[derive(Debug, Error)]
pub enum LossError {
    #[error("parameter lies outside the model domain")]
    ParamOutOfDomain,
    #[error("loss is non-finite on batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("batch size {m} exceeds the supported maximum {max} for this loss")]
    BatchTooLarge { m: usize, max: usize },
    #[error("expectation needs a positive batch size")]
    BatchSizeZero,
    #[error("state space of {size:.3e} tuples exceeds the ceiling {max:.3e}")]
    StateSpaceTooLarge { size: f64, max: f64 },
    #[error("model provides no closed-form L2 geometry")]
    NoClosedForm,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Value of a loss evaluation, with the gradient when one was requested
/// and the number of model evaluations spent.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub eval_count: u64,
}

/// Neumaier-compensated accumulator: one running sum plus a correction
/// term, immune to the classic Kahan failure when a new addend exceeds the
/// running sum in magnitude.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Log-term of the plain negative log-likelihood, shared by every loss at
/// `M = 1` so that they collapse to bit-identical values.
fn m1_log_term(density: f64) -> f64 {
    if density < MIN_DENSITY {
        f64::NEG_INFINITY
    } else {
        density.ln()
    }
}

fn check_domain<D: DensityModel + ?Sized>(model: &D, theta: &ParamPoint) -> Result<(), LossError> {
    if theta.dim() == model.param_dim() && model.domain().contains(theta.coords()) {
        Ok(())
    } else {
        Err(LossError::ParamOutOfDomain)
    }
}

/// Reduces per-batch totals in batch order; the first failing batch (by
/// index) is reported, independent of scheduling.
fn reduce_batches(batch_totals: Vec<Result<f64, ()>>, n: usize) -> Result<f64, LossError> {
    let mut outer = NeumaierSum::new();
    for (k, total) in batch_totals.into_iter().enumerate() {
        match total {
            Ok(t) => outer.add(t),
            Err(()) => return Err(LossError::NonFiniteLoss { batch: k }),
        }
    }
    Ok(-outer.total() / n as f64)
}

/// All-pairs surrogate loss.
pub fn pseudo_loss<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
    data: &Dataset,
) -> Result<LossReport, LossError> {
    check_domain(model, theta)?;
    let m = data.batch_size();
    let n = data.num_batches();
    let inv_m = 1.0 / m as f64;
    let batch_totals: Vec<Result<f64, ()>> = data
        .batches()
        .par_iter()
        .map(|batch| {
            let mut inner = NeumaierSum::new();
            for x in batch.xs() {
                for y in batch.ys() {
                    let p = model.density(theta, x, y);
                    let term = if m == 1 {
                        m1_log_term(p)
                    } else {
                        ((p - 1.0) * inv_m).ln_1p()
                    };
                    if !term.is_finite() {
                        return Err(());
                    }
                    inner.add(term);
                }
            }
            Ok(inner.total())
        })
        .collect();
    Ok(LossReport {
        value: reduce_batches(batch_totals, n)?,
        gradient: None,
        eval_count: (n * m * m) as u64,
    })
}

/// All-pairs surrogate loss together with its analytic gradient.
pub fn pseudo_loss_grad<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
    data: &Dataset,
) -> Result<LossReport, LossError> {
    check_domain(model, theta)?;
    let m = data.batch_size();
    let n = data.num_batches();
    let d = model.param_dim();
    let inv_m = 1.0 / m as f64;
    let m_minus_1 = (m - 1) as f64;
    let batch_totals: Vec<Result<(f64, Vec<f64>), ()>> = data
        .batches()
        .par_iter()
        .map(|batch| {
            let mut inner = NeumaierSum::new();
            let mut inner_grad = vec![NeumaierSum::new(); d];
            for x in batch.xs() {
                for y in batch.ys() {
                    let p = model.density(theta, x, y);
                    let term = if m == 1 {
                        m1_log_term(p)
                    } else {
                        ((p - 1.0) * inv_m).ln_1p()
                    };
                    if !term.is_finite() {
                        return Err(());
                    }
                    inner.add(term);
                    let dp = model.grad_density(theta, x, y);
                    let denom = p + m_minus_1;
                    for (l, sum) in inner_grad.iter_mut().enumerate() {
                        let g = dp[l] / denom;
                        if !g.is_finite() {
                            return Err(());
                        }
                        sum.add(g);
                    }
                }
            }
            Ok((
                inner.total(),
                inner_grad.iter().map(|s| s.total()).collect(),
            ))
        })
        .collect();

    let mut outer = NeumaierSum::new();
    let mut outer_grad = vec![NeumaierSum::new(); d];
    for (k, total) in batch_totals.into_iter().enumerate() {
        match total {
            Ok((t, g)) => {
                outer.add(t);
                for (sum, gl) in outer_grad.iter_mut().zip(g) {
                    sum.add(gl);
                }
            }
            Err(()) => return Err(LossError::NonFiniteLoss { batch: k }),
        }
    }
    Ok(LossReport {
        value: -outer.total() / n as f64,
        gradient: Some(outer_grad.iter().map(|s| -s.total() / n as f64).collect()),
        eval_count: 2 * (n * m * m) as u64,
    })
}

/// Per-`y` mixture surrogate loss.
pub fn mixture_pseudo_loss<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
    data: &Dataset,
) -> Result<LossReport, LossError> {
    check_domain(model, theta)?;
    let m = data.batch_size();
    let n = data.num_batches();
    let inv_m = 1.0 / m as f64;
    let batch_totals: Vec<Result<f64, ()>> = data
        .batches()
        .par_iter()
        .map(|batch| {
            let mut inner = NeumaierSum::new();
            for y in batch.ys() {
                let term = if m == 1 {
                    m1_log_term(model.density(theta, &batch.xs()[0], y))
                } else {
                    let mut s = NeumaierSum::new();
                    for x in batch.xs() {
                        s.add(model.density(theta, x, y));
                    }
                    (s.total() * inv_m).ln()
                };
                if !term.is_finite() {
                    return Err(());
                }
                inner.add(term);
            }
            Ok(inner.total())
        })
        .collect();
    Ok(LossReport {
        value: reduce_batches(batch_totals, n)?,
        gradient: None,
        eval_count: (n * m * m) as u64,
    })
}

/// `ln M!`, exact for the batch sizes the permanent supports.
fn ln_factorial(m: usize) -> f64 {
    (2..=m).fold(1.0, |acc, i| acc * i as f64).ln()
}

/// `ln perm(A)` via Ryser's formula with Gray-code subset updates.
///
/// Rows are scaled by their maxima first, so the subset products stay in
/// `[0, M!]` and the result is recovered as `sum ln max_i + ln perm(A')`.
/// Returns `-inf` when the permanent vanishes (some row identically zero,
/// or exact cancellation) and `NaN` when the matrix has non-finite entries.
fn log_permanent(rows: &[Vec<f64>]) -> f64 {
    let m = rows.len();
    let mut log_scale = 0.0;
    let mut scaled: Vec<Vec<f64>> = Vec::with_capacity(m);
    for row in rows {
        if row.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        let peak = row.iter().fold(0.0_f64, |a, &b| a.max(b));
        if peak <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_scale += peak.ln();
        scaled.push(row.iter().map(|v| v / peak).collect());
    }
    let mut row_sums = vec![0.0_f64; m];
    let mut total = NeumaierSum::new();
    let mut gray: u64 = 0;
    for k in 1..(1u64 << m) {
        let next = k ^ (k >> 1);
        let flipped = gray ^ next;
        let j = flipped.trailing_zeros() as usize;
        if next & flipped != 0 {
            for (sum, row) in row_sums.iter_mut().zip(&scaled) {
                *sum += row[j];
            }
        } else {
            for (sum, row) in row_sums.iter_mut().zip(&scaled) {
                *sum -= row[j];
            }
        }
        gray = next;
        let mut prod = 1.0;
        for &s in &row_sums {
            prod *= s;
        }
        if (m as u32 - next.count_ones()).is_multiple_of(2) {
            total.add(prod);
        } else {
            total.add(-prod);
        }
    }
    log_scale + total.total().ln()
}

/// Exact negative log-likelihood, marginalizing the unknown shuffle through
/// the matrix permanent. Gated to `M <= 12`.
pub fn full_nll_permanent<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
    data: &Dataset,
) -> Result<LossReport, LossError> {
    check_domain(model, theta)?;
    let m = data.batch_size();
    if m > MAX_PERMANENT_BATCH {
        return Err(LossError::BatchTooLarge {
            m,
            max: MAX_PERMANENT_BATCH,
        });
    }
    let n = data.num_batches();
    let ln_fact = ln_factorial(m);
    let batch_totals: Vec<Result<f64, ()>> = data
        .batches()
        .par_iter()
        .map(|batch| {
            let term = if m == 1 {
                m1_log_term(model.density(theta, &batch.xs()[0], &batch.ys()[0]))
            } else {
                let rows: Vec<Vec<f64>> = batch
                    .xs()
                    .iter()
                    .map(|x| {
                        batch
                            .ys()
                            .iter()
                            .map(|y| model.density(theta, x, y))
                            .collect()
                    })
                    .collect();
                log_permanent(&rows) - ln_fact
            };
            if term.is_finite() {
                Ok(term)
            } else {
                Err(())
            }
        })
        .collect();
    Ok(LossReport {
        value: reduce_batches(batch_totals, n)?,
        gradient: None,
        eval_count: (n * m * m) as u64,
    })
}

/// Exact negative log-likelihood by direct enumeration of all `M!`
/// pairings — an independent cross-check of [`full_nll_permanent`], gated
/// to `M <= 8`.
pub fn full_nll_bruteforce<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
    data: &Dataset,
) -> Result<LossReport, LossError> {
    check_domain(model, theta)?;
    let m = data.batch_size();
    if m > MAX_BRUTEFORCE_BATCH {
        return Err(LossError::BatchTooLarge {
            m,
            max: MAX_BRUTEFORCE_BATCH,
        });
    }
    let n = data.num_batches();
    let factorial = (2..=m).fold(1.0, |acc, i| acc * i as f64);

    fn enumerate(rows: &[Vec<f64>], used: &mut [bool], i: usize, prefix: f64, acc: &mut f64) {
        if i == rows.len() {
            *acc += prefix;
            return;
        }
        for j in 0..rows.len() {
            if !used[j] {
                used[j] = true;
                enumerate(rows, used, i + 1, prefix * rows[i][j], acc);
                used[j] = false;
            }
        }
    }

    let batch_totals: Vec<Result<f64, ()>> = data
        .batches()
        .par_iter()
        .map(|batch| {
            let term = if m == 1 {
                m1_log_term(model.density(theta, &batch.xs()[0], &batch.ys()[0]))
            } else {
                let rows: Vec<Vec<f64>> = batch
                    .xs()
                    .iter()
                    .map(|x| {
                        batch
                            .ys()
                            .iter()
                            .map(|y| model.density(theta, x, y))
                            .collect()
                    })
                    .collect();
                let mut acc = 0.0;
                enumerate(&rows, &mut vec![false; m], 0, 1.0, &mut acc);
                (acc / factorial).ln()
            };
            if term.is_finite() {
                Ok(term)
            } else {
                Err(())
            }
        })
        .collect();
    Ok(LossReport {
        value: reduce_batches(batch_totals, n)?,
        gradient: None,
        eval_count: (n * m * m) as u64,
    })
}

/// Large-batch limit of the surrogate loss, available whenever the model
/// carries closed-form L2 geometry:
/// `(|p^theta - p*|^2 - |p*|^2 + 1) / 2`.
pub fn limit_loss<D: DensityModel + ?Sized>(
    model: &D,
    theta: &ParamPoint,
) -> Result<f64, LossError> {
    check_domain(model, theta)?;
    let dist = model.l2_dist_sq(theta).ok_or(LossError::NoClosedForm)?;
    let norm = model.l2_norm_sq_true().ok_or(LossError::NoClosedForm)?;
    Ok(0.5 * (dist - norm + 1.0))
}

/// Exact expectation of the all-pairs surrogate at batch size `m` over a
/// finite-category model:
/// `-M^2 sum_{a,b} mu_a nu_b (p*_ab/M + (M-1)/M) ln(1 + (p_ab - 1)/M)`.
///
/// The weight is the law of one cross pair from a shuffled batch — the
/// matched pair with probability `1/M`, an independent pair otherwise.
pub fn expected_loss_exact(
    model: &DiscreteTabular,
    theta: &ParamPoint,
    m: usize,
) -> Result<f64, LossError> {
    check_domain(model, theta)?;
    if m == 0 {
        return Err(LossError::BatchSizeZero);
    }
    let p = model.table(theta)?;
    let p_star = model.true_table();
    let mf = m as f64;
    let inv_m = 1.0 / mf;
    let rest = (m - 1) as f64 * inv_m;
    let mut acc = NeumaierSum::new();
    for (a, &mu_a) in model.marginal_x().iter().enumerate() {
        for (b, &nu_b) in model.marginal_y().iter().enumerate() {
            let mix_true = p_star.get(a, b) * inv_m + rest;
            acc.add(mu_a * nu_b * mix_true * ((p.get(a, b) - 1.0) * inv_m).ln_1p());
        }
    }
    Ok(-(mf * mf) * acc.total())
}

/// The same expectation by brute force: enumerate every batch realization
/// `((a_1, b_1), ..., (a_M, b_M))` over the category grid with its exact
/// probability and average the loss. Independent of the per-pair mixture
/// argument used by [`expected_loss_exact`]; gated by tuple-space size.
pub fn expected_loss_bruteforce(
    model: &DiscreteTabular,
    theta: &ParamPoint,
    m: usize,
) -> Result<f64, LossError> {
    check_domain(model, theta)?;
    if m == 0 {
        return Err(LossError::BatchSizeZero);
    }
    let (nx, ny) = model.num_categories();
    let cells = nx * ny;
    let size = (cells as f64).powi(m as i32);
    if size > MAX_STATE_SPACE {
        return Err(LossError::StateSpaceTooLarge {
            size,
            max: MAX_STATE_SPACE,
        });
    }
    let p = model.table(theta)?;
    let p_star = model.true_table();
    let mut joint = vec![0.0; cells];
    for a in 0..nx {
        for b in 0..ny {
            joint[a * ny + b] = model.marginal_x()[a] * model.marginal_y()[b] * p_star.get(a, b);
        }
    }
    let inv_m = 1.0 / m as f64;
    let tuples = cells.pow(m as u32);
    let mut acc = 0.0;
    let mut cats_a = vec![0usize; m];
    let mut cats_b = vec![0usize; m];
    for tuple in 0..tuples {
        let mut weight = 1.0;
        let mut rest = tuple;
        for i in 0..m {
            let cell = rest % cells;
            rest /= cells;
            weight *= joint[cell];
            cats_a[i] = cell / ny;
            cats_b[i] = cell % ny;
        }
        // the loss sums over all cross pairs, so the unobserved shuffle
        // drops out and the original pairing can be used directly
        let mut value = 0.0;
        for &a in &cats_a {
            for &b in &cats_b {
                value += ((p.get(a, b) - 1.0) * inv_m).ln_1p();
            }
        }
        acc += weight * value;
    }
    Ok(-acc)
}

/// KL divergence between the per-pair mixture laws at the truth and at
/// `theta`, `KL( p*/M + (M-1)/M || p/M + (M-1)/M )` under the product of
/// the marginals. Differences of [`expected_loss_exact`] across parameters
/// equal `M^2` times differences of this divergence.
pub fn mixture_kl(model: &DiscreteTabular, theta: &ParamPoint, m: usize) -> Result<f64, LossError> {
    check_domain(model, theta)?;
    if m == 0 {
        return Err(LossError::BatchSizeZero);
    }
    let p = model.table(theta)?;
    let p_star = model.true_table();
    let inv_m = 1.0 / m as f64;
    let rest = (m - 1) as f64 * inv_m;
    let mut acc = NeumaierSum::new();
    for (a, &mu_a) in model.marginal_x().iter().enumerate() {
        for (b, &nu_b) in model.marginal_y().iter().enumerate() {
            let mix_true = p_star.get(a, b) * inv_m + rest;
            let log_ratio =
                ((p_star.get(a, b) - 1.0) * inv_m).ln_1p() - ((p.get(a, b) - 1.0) * inv_m).ln_1p();
            acc.add(mu_a * nu_b * mix_true * log_ratio);
        }
    }
    Ok(acc.total())
}

#[cfg(test)]
// fixture constants keep every digit of the frozen reference values
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::domain::{BrokenBatch, ParamDomain, Point};
    use crate::models::TorusWrappedGaussian;
    use crate::sampling::{generate_dataset, SeedSpec};

    /// Fixed 2x2 density-ratio table; the parameter is ignored, so losses
    /// on it are pure arithmetic with hand-checkable values.
    struct TableModel {
        table: [[f64; 2]; 2],
        domain: ParamDomain,
    }

    impl TableModel {
        fn new(table: [[f64; 2]; 2]) -> Self {
            Self {
                table,
                domain: ParamDomain::scalar(-1.0, 1.0).unwrap(),
            }
        }
    }

    impl DensityModel for TableModel {
        fn param_dim(&self) -> usize {
            1
        }
        fn domain(&self) -> &ParamDomain {
            &self.domain
        }
        fn param_names(&self) -> Vec<String> {
            vec!["t".into()]
        }
        fn density(&self, _theta: &ParamPoint, x: &Point, y: &Point) -> f64 {
            self.table[x.coord(0) as usize][y.coord(0) as usize]
        }
        fn grad_density(&self, _theta: &ParamPoint, _x: &Point, _y: &Point) -> Vec<f64> {
            vec![0.0]
        }
    }

    fn fixture_model() -> TableModel {
        TableModel::new([[1.8, 0.2], [0.6, 1.4]])
    }

    fn cat(v: usize) -> Point {
        Point::scalar(v as f64)
    }

    fn batch(xs: &[usize], ys: &[usize]) -> BrokenBatch {
        BrokenBatch::new(
            xs.iter().map(|&v| cat(v)).collect(),
            ys.iter().map(|&v| cat(v)).collect(),
        )
        .unwrap()
    }

    /// M = 3, N = 2 fixture (category indices into the 2x2 table).
    fn fixture_data() -> Dataset {
        Dataset::new(vec![
            batch(&[0, 1, 0], &[1, 0, 0]),
            batch(&[1, 1, 0], &[0, 1, 1]),
        ])
        .unwrap()
    }

    fn theta0(model: &TableModel) -> ParamPoint {
        model.domain().point(vec![0.0]).unwrap()
    }

    #[test]
    fn neumaier_survives_cancellation() {
        let mut s = NeumaierSum::new();
        for v in [1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.total(), 1.0);
    }

    #[test]
    fn pseudo_loss_fixture_value() {
        let m = fixture_model();
        let r = pseudo_loss(&m, &theta0(&m), &fixture_data()).unwrap();
        assert!(
            (r.value - 0.002_631_741_343_434_690_4).abs() < 1e-14,
            "{}",
            r.value
        );
        assert_eq!(r.eval_count, 18);
        assert!(r.gradient.is_none());
    }

    #[test]
    fn mixture_loss_fixture_value() {
        let m = fixture_model();
        let r = mixture_pseudo_loss(&m, &theta0(&m), &fixture_data()).unwrap();
        assert!(
            (r.value - (-0.081_059_424_738_217_645)).abs() < 1e-14,
            "{}",
            r.value
        );
    }

    #[test]
    fn permanent_loss_fixture_value_and_bruteforce_agreement() {
        let m = fixture_model();
        let exact = full_nll_permanent(&m, &theta0(&m), &fixture_data()).unwrap();
        let brute = full_nll_bruteforce(&m, &theta0(&m), &fixture_data()).unwrap();
        assert!(
            (exact.value - (-0.378_747_841_822_615_12)).abs() < 1e-13,
            "{}",
            exact.value
        );
        assert!((exact.value - brute.value).abs() < 1e-13);
    }

    #[test]
    fn singleton_batches_collapse_every_loss_to_plain_nll() {
        let m = fixture_model();
        let data = Dataset::new(vec![batch(&[0], &[1]), batch(&[1], &[1])]).unwrap();
        let theta = theta0(&m);
        let a = pseudo_loss(&m, &theta, &data).unwrap().value;
        let b = mixture_pseudo_loss(&m, &theta, &data).unwrap().value;
        let c = full_nll_permanent(&m, &theta, &data).unwrap().value;
        let d = full_nll_bruteforce(&m, &theta, &data).unwrap().value;
        let e = pseudo_loss_grad(&m, &theta, &data).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
        assert_eq!(a.to_bits(), d.to_bits());
        assert_eq!(a.to_bits(), e.to_bits());
        assert!((a - 0.636_482_837_906_443_67).abs() < 1e-15);
    }

    #[test]
    fn losses_are_invariant_to_shuffles_within_a_batch() {
        // every implemented loss is symmetric in the y side of a batch
        let m = fixture_model();
        let theta = theta0(&m);
        let base = Dataset::new(vec![batch(&[0, 1, 0], &[1, 0, 0])]).unwrap();
        let shuffled = Dataset::new(vec![batch(&[0, 1, 0], &[0, 0, 1])]).unwrap();
        for f in [
            pseudo_loss::<TableModel>,
            mixture_pseudo_loss,
            full_nll_permanent,
        ] {
            let a = f(&m, &theta, &base).unwrap().value;
            let b = f(&m, &theta, &shuffled).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vanished_density_fails_only_singleton_batches() {
        let m = TableModel::new([[1.8, 0.0], [0.6, 1.4]]);
        let theta = theta0(&m);
        let singleton = Dataset::new(vec![batch(&[0], &[0]), batch(&[0], &[1])]).unwrap();
        match pseudo_loss(&m, &theta, &singleton) {
            Err(LossError::NonFiniteLoss { batch }) => assert_eq!(batch, 1),
            other => panic!("expected non-finite loss, got {other:?}"),
        }
        // with M >= 2 the mixture floor keeps the same cell harmless
        let paired = Dataset::new(vec![batch(&[0, 0], &[1, 1])]).unwrap();
        assert!(pseudo_loss(&m, &theta, &paired).unwrap().value.is_finite());
    }

    #[test]
    fn domain_violations_are_rejected() {
        let m = fixture_model();
        let outside = ParamDomain::scalar(-9.0, 9.0)
            .unwrap()
            .point(vec![5.0])
            .unwrap();
        assert!(matches!(
            pseudo_loss(&m, &outside, &fixture_data()),
            Err(LossError::ParamOutOfDomain)
        ));
    }

    #[test]
    fn permanent_gate_rejects_large_batches() {
        let m = fixture_model();
        let xs: Vec<usize> = (0..13).map(|i| i % 2).collect();
        let data = Dataset::new(vec![batch(&xs, &xs)]).unwrap();
        assert!(matches!(
            full_nll_permanent(&m, &theta0(&m), &data),
            Err(LossError::BatchTooLarge { m: 13, max: 12 })
        ));
        assert!(matches!(
            full_nll_bruteforce(&m, &theta0(&m), &data),
            Err(LossError::BatchTooLarge { m: 13, max: 8 })
        ));
    }

    #[test]
    fn log_permanent_matches_known_matrices() {
        // identity: perm = 1; all-ones 3x3: perm = 3! = 6
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((log_permanent(&eye) - 0.0).abs() < 1e-15);
        let ones = vec![vec![1.0; 3]; 3];
        assert!((log_permanent(&ones) - 6.0_f64.ln()).abs() < 1e-14);
        // scaling stability: huge and tiny rows
        let wild = vec![vec![1e200, 2e200], vec![3e-200, 4e-200]];
        // perm = 4e0 + 6e0 = 10
        assert!((log_permanent(&wild) - 10.0_f64.ln()).abs() < 1e-12);
        let zero_row = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(log_permanent(&zero_row), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_factorial_is_exact_for_supported_sizes() {
        assert_eq!(ln_factorial(1), 0.0);
        assert_eq!(ln_factorial(12), 479_001_600.0_f64.ln());
    }

    #[test]
    fn gradient_matches_finite_differences_on_a_real_model() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        let mut rng = SeedSpec::new(21).stream(0);
        let data = generate_dataset(&model, 4, 30, &mut rng).unwrap();
        let at = 0.5;
        let h = 1e-6;
        let grad =
            pseudo_loss_grad(&model, &model.domain().point(vec![at]).unwrap(), &data).unwrap();
        let up = pseudo_loss(&model, &model.domain().point(vec![at + h]).unwrap(), &data)
            .unwrap()
            .value;
        let dn = pseudo_loss(&model, &model.domain().point(vec![at - h]).unwrap(), &data)
            .unwrap()
            .value;
        let fd = (up - dn) / (2.0 * h);
        let an = grad.gradient.unwrap()[0];
        assert!(
            ((an - fd) / fd.abs().max(1e-8)).abs() < 1e-5,
            "analytic {an} vs fd {fd}"
        );
        // the value comes from the same accumulation as the plain loss
        let value = pseudo_loss(&model, &model.domain().point(vec![at]).unwrap(), &data)
            .unwrap()
            .value;
        assert_eq!(grad.value.to_bits(), value.to_bits());
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let model = TorusWrappedGaussian::new(0.1).unwrap();
        let mut rng = SeedSpec::new(33).stream(0);
        let data = generate_dataset(&model, 16, 8, &mut rng).unwrap();
        let theta = model.domain().point(vec![0.23]).unwrap();
        let a = pseudo_loss(&model, &theta, &data).unwrap().value;
        let b = pseudo_loss(&model, &theta, &data).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn limit_loss_closed_forms() {
        let torus = TorusWrappedGaussian::new(0.1).unwrap();
        let at_truth = limit_loss(&torus, &torus.domain().point(vec![0.1]).unwrap()).unwrap();
        assert!(
            (at_truth - (-3.478_873_577_518_418_5)).abs() < 1e-12,
            "{at_truth}"
        );
        // truth minimizes the limit loss
        for sigma in [0.05, 0.2, 0.4] {
            let v = limit_loss(&torus, &torus.domain().point(vec![sigma]).unwrap()).unwrap();
            assert!(v > at_truth, "sigma {sigma}: {v} vs {at_truth}");
        }

        let bi = crate::models::BivariateNormalRatio::new(0.5).unwrap();
        let at_truth = limit_loss(&bi, &bi.domain().point(vec![0.5]).unwrap()).unwrap();
        // (0 - 4/3 + 1) / 2 = -1/6
        assert!((at_truth - (-1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn expected_loss_routes_agree() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        for m in [1usize, 2, 3] {
            for t in [0.2, 0.4, 0.8] {
                let theta = model.domain().point(vec![t]).unwrap();
                let exact = expected_loss_exact(&model, &theta, m).unwrap();
                let brute = expected_loss_bruteforce(&model, &theta, m).unwrap();
                assert!(
                    (exact - brute).abs() < 1e-12,
                    "m {m}, theta {t}: {exact} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn expected_loss_differences_are_scaled_divergences() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        let t1 = model.domain().point(vec![0.3]).unwrap();
        let t2 = model.domain().point(vec![0.6]).unwrap();
        for m in [2usize, 5, 17] {
            let lhs = expected_loss_exact(&model, &t1, m).unwrap()
                - expected_loss_exact(&model, &t2, m).unwrap();
            let rhs = (m * m) as f64
                * (mixture_kl(&model, &t1, m).unwrap() - mixture_kl(&model, &t2, m).unwrap());
            assert!((lhs - rhs).abs() < 1e-10, "m {m}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn expected_loss_gap_to_limit_decays_inversely_with_batch_size() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        for t in [0.4, 0.8] {
            let theta = model.domain().point(vec![t]).unwrap();
            let limit = limit_loss(&model, &theta).unwrap();
            let gap = |m: usize| (expected_loss_exact(&model, &theta, m).unwrap() - limit).abs();
            let ratio = gap(64) / gap(8);
            assert!(
                (0.115..0.145).contains(&ratio),
                "theta {t}: gap should decay roughly like 1/M, got ratio {ratio}"
            );
        }
        // the excess over the truth stays bounded away from zero: broken
        // batches still identify the parameter at any batch size
        let off = model.domain().point(vec![0.4]).unwrap();
        let truth = model.domain().point(vec![0.8]).unwrap();
        let limit_excess = limit_loss(&model, &off).unwrap() - limit_loss(&model, &truth).unwrap();
        assert!(limit_excess > 0.0);
        for m in [2usize, 8, 64] {
            let excess = expected_loss_exact(&model, &off, m).unwrap()
                - expected_loss_exact(&model, &truth, m).unwrap();
            assert!(excess > 0.0, "truth must minimize the expectation at m {m}");
            assert!(
                (excess - limit_excess).abs() < 0.5 * limit_excess,
                "m {m}: excess {excess} should be near its limit {limit_excess}"
            );
        }
    }

    #[test]
    fn monte_carlo_matches_exact_expectation() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        let mut rng = SeedSpec::new(100).stream(0);
        let data = generate_dataset(&model, 2, 3000, &mut rng).unwrap();
        let theta = model.domain().point(vec![0.5]).unwrap();
        let mc = pseudo_loss(&model, &theta, &data).unwrap().value;
        let exact = expected_loss_exact(&model, &theta, 2).unwrap();
        assert!((mc - exact).abs() < 0.05, "mc {mc} vs exact {exact}");
    }

    #[test]
    fn state_space_gate_trips() {
        let model = DiscreteTabular::diagonal_affinity(3, 0.8, 3.0).unwrap();
        let theta = model.domain().point(vec![0.5]).unwrap();
        assert!(matches!(
            expected_loss_bruteforce(&model, &theta, 8),
            Err(LossError::StateSpaceTooLarge { .. })
        ));
    }
}
