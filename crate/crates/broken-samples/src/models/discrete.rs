//! Finite-category exponential family with prescribed marginals.
//!
//! Categories `a in {0..nx}` and `b in {0..ny}` carry fixed marginal pmfs
//! `mu` and `nu`. A parameter vector `theta` weights feature matrices
//! `g_l(a, b)` into an affinity `W_ab = exp(sum_l theta_l g_l(a, b))`,
//! and the density ratio `p^theta` is the unique matrix-scaling of `W`
//! whose mixture marginals are uniform:
//!
//! ```text
//! p_ab = r_a W_ab c_b,   sum_b nu_b p_ab = 1 for all a,   sum_a mu_a p_ab = 1 for all b.
//! ```
//!
//! The scaling vectors come from iterative proportional fitting, run to a
//! residual of 1e-13. Parameter gradients follow by implicit
//! differentiation of the fixed point: writing `u_a = d ln r_a` and
//! `v_b = d ln c_b`, the constraint derivatives give a linear system of
//! size `nx + ny` (rank one short, closed by the gauge `u_0 = 0`), and then
//! `d p_ab = p_ab (u_a + g_ab + v_b)`.
//!
//! Because categories are finite, this family admits *exact* expectations
//! of any pairwise statistic, which the loss layer uses to cross-check the
//! Monte-Carlo estimators without sampling error.

use std::sync::{Arc, Mutex};

use rand_core::RngCore;

use crate::domain::{DensityModel, GenerativeModel, PairSample, ParamDomain, ParamPoint, Point};
use crate::models::ModelError;
use crate::sampling::unit_f64;

/// Maximum IPF residual accepted as converged.
const IPF_TOLERANCE: f64 = 1e-13;

/// Sweep budget before IPF reports failure.
const IPF_MAX_SWEEPS: usize = 10_000;

/// Density-ratio values over the category grid, row-major in `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl DensityTable {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.ny + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Tables solved for one parameter point: the density ratio and its
/// per-coordinate derivative tables.
#[derive(Debug)]
struct Solved {
    density: DensityTable,
    grads: Vec<DensityTable>,
}

/// Finite-category density-ratio family with IPF-calibrated tables.
#[derive(Debug)]
pub struct DiscreteTabular {
    mu: Vec<f64>,
    nu: Vec<f64>,
    /// `features[l][a * ny + b]` is `g_l(a, b)`.
    features: Vec<Vec<f64>>,
    theta_star: Vec<f64>,
    domain: ParamDomain,
    true_table: DensityTable,
    /// Single-slot solve cache keyed by the parameter's bit patterns;
    /// minimizers and loss sweeps evaluate many pairs at one `theta` before
    /// moving on, so one slot captures essentially all reuse.
    cache: Mutex<Option<(Vec<u64>, Arc<Solved>)>>,
}

impl Clone for DiscreteTabular {
    fn clone(&self) -> Self {
        Self {
            mu: self.mu.clone(),
            nu: self.nu.clone(),
            features: self.features.clone(),
            theta_star: self.theta_star.clone(),
            domain: self.domain.clone(),
            true_table: self.true_table.clone(),
            cache: Mutex::new(None),
        }
    }
}

impl DiscreteTabular {
    /// General constructor.
    ///
    /// `mu` and `nu` must be strictly positive and sum to 1 (within 1e-9;
    /// they are renormalized exactly). Each feature matrix is row-major of
    /// shape `(mu.len(), nu.len())`, and `domain` must have one coordinate
    /// per feature and contain `theta_star`.
    pub fn new(
        mu: Vec<f64>,
        nu: Vec<f64>,
        features: Vec<Vec<f64>>,
        theta_star: Vec<f64>,
        domain: ParamDomain,
    ) -> Result<Self, ModelError> {
        let (nx, ny) = (mu.len(), nu.len());
        if nx < 2 || ny < 2 {
            return Err(ModelError::InvalidSpec(
                "need at least two categories per side".into(),
            ));
        }
        for (name, pmf) in [("mu", &mu), ("nu", &nu)] {
            if pmf.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
                return Err(ModelError::InvalidSpec(format!(
                    "{name} must be strictly positive and finite"
                )));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ModelError::InvalidSpec(format!(
                    "{name} sums to {total}, expected 1"
                )));
            }
        }
        let mut mu = mu;
        let mut nu = nu;
        let mu_total: f64 = mu.iter().sum();
        let nu_total: f64 = nu.iter().sum();
        mu.iter_mut().for_each(|w| *w /= mu_total);
        nu.iter_mut().for_each(|w| *w /= nu_total);

        if features.is_empty() {
            return Err(ModelError::InvalidSpec("need at least one feature".into()));
        }
        for (l, g) in features.iter().enumerate() {
            if g.len() != nx * ny {
                return Err(ModelError::InvalidSpec(format!(
                    "feature {l} has {} entries, expected {}",
                    g.len(),
                    nx * ny
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidSpec(format!(
                    "feature {l} contains non-finite entries"
                )));
            }
        }
        if domain.dim() != features.len() {
            return Err(ModelError::InvalidSpec(format!(
                "domain has {} coordinates for {} features",
                domain.dim(),
                features.len()
            )));
        }
        if !domain.contains(&theta_star) {
            return Err(ModelError::ParamOutOfDomain);
        }

        let mut model = Self {
            mu,
            nu,
            features,
            theta_star: theta_star.clone(),
            domain,
            true_table: DensityTable {
                nx,
                ny,
                values: vec![1.0; nx * ny],
            },
            cache: Mutex::new(None),
        };
        model.true_table = model.solve_density(&theta_star)?;
        Ok(model)
    }

    /// Canonical single-feature instance: `n` categories per side, uniform
    /// marginals, and the identity feature `g(a, b) = [a == b]`, so positive
    /// `theta` concentrates mass on the diagonal. The parameter box is
    /// `[-bound, bound]`.
    pub fn diagonal_affinity(n: usize, theta_star: f64, bound: f64) -> Result<Self, ModelError> {
        if bound.is_nan() || bound <= 0.0 {
            return Err(ModelError::InvalidSpec(format!(
                "domain bound must be positive, got {bound}"
            )));
        }
        let marginal = vec![1.0 / n as f64; n];
        let mut identity = vec![0.0; n * n];
        for a in 0..n {
            identity[a * n + a] = 1.0;
        }
        let domain = ParamDomain::new(vec![-bound], vec![bound])
            .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        Self::new(
            marginal.clone(),
            marginal,
            vec![identity],
            vec![theta_star],
            domain,
        )
    }

    pub fn num_categories(&self) -> (usize, usize) {
        (self.mu.len(), self.nu.len())
    }

    pub fn marginal_x(&self) -> &[f64] {
        &self.mu
    }

    pub fn marginal_y(&self) -> &[f64] {
        &self.nu
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// Density-ratio table at the true parameter.
    pub fn true_table(&self) -> &DensityTable {
        &self.true_table
    }

    /// Returns the same family with a different true parameter.
    pub fn with_true_param(&self, theta_star: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(
            self.mu.clone(),
            self.nu.clone(),
            self.features.clone(),
            theta_star,
            self.domain.clone(),
        )
    }

    /// Density-ratio table at `theta`.
    pub fn table(&self, theta: &ParamPoint) -> Result<DensityTable, ModelError> {
        Ok(self.solved(theta)?.density.clone())
    }

    /// Per-coordinate derivative tables at `theta`.
    pub fn grad_tables(&self, theta: &ParamPoint) -> Result<Vec<DensityTable>, ModelError> {
        Ok(self.solved(theta)?.grads.clone())
    }

    fn solved(&self, theta: &ParamPoint) -> Result<Arc<Solved>, ModelError> {
        let key: Vec<u64> = theta.coords().iter().map(|v| v.to_bits()).collect();
        let mut slot = self.cache.lock().expect("solve cache poisoned");
        if let Some((cached_key, solved)) = slot.as_ref() {
            if *cached_key == key {
                return Ok(Arc::clone(solved));
            }
        }
        let density = self.solve_density(theta.coords())?;
        let grads = self.solve_grads(&density)?;
        let solved = Arc::new(Solved { density, grads });
        *slot = Some((key, Arc::clone(&solved)));
        Ok(solved)
    }

    /// Scales `W(theta)` to the prescribed marginals by iterative
    /// proportional fitting.
    fn solve_density(&self, theta: &[f64]) -> Result<DensityTable, ModelError> {
        let (nx, ny) = self.num_categories();
        let mut w = vec![0.0; nx * ny];
        for a in 0..nx {
            for b in 0..ny {
                let mut logit = 0.0;
                for (l, g) in self.features.iter().enumerate() {
                    logit += theta[l] * g[a * ny + b];
                }
                w[a * ny + b] = logit.exp();
            }
        }
        let mut r = vec![1.0; nx];
        let mut c = vec![1.0; ny];
        let mut residual = f64::INFINITY;
        for _sweep in 0..IPF_MAX_SWEEPS {
            for a in 0..nx {
                let mut row_mass = 0.0;
                for b in 0..ny {
                    row_mass += self.nu[b] * w[a * ny + b] * c[b];
                }
                r[a] = 1.0 / row_mass;
            }
            for b in 0..ny {
                let mut col_mass = 0.0;
                for a in 0..nx {
                    col_mass += self.mu[a] * r[a] * w[a * ny + b];
                }
                c[b] = 1.0 / col_mass;
            }
            // column constraints hold exactly after the column pass; the
            // residual is the worst remaining row violation
            residual = 0.0_f64;
            for a in 0..nx {
                let mut row = 0.0;
                for b in 0..ny {
                    row += self.nu[b] * r[a] * w[a * ny + b] * c[b];
                }
                residual = residual.max((row - 1.0).abs());
            }
            if residual <= IPF_TOLERANCE {
                let mut values = vec![0.0; nx * ny];
                for a in 0..nx {
                    for b in 0..ny {
                        values[a * ny + b] = r[a] * w[a * ny + b] * c[b];
                    }
                }
                return Ok(DensityTable { nx, ny, values });
            }
        }
        Err(ModelError::IpfNotConverged {
            sweeps: IPF_MAX_SWEEPS,
            residual,
        })
    }

    /// Implicit differentiation of the scaling fixed point, one linear solve
    /// per parameter coordinate.
    fn solve_grads(&self, p: &DensityTable) -> Result<Vec<DensityTable>, ModelError> {
        let (nx, ny) = self.num_categories();
        let n = nx + ny;
        let mut grads = Vec::with_capacity(self.features.len());
        for g in &self.features {
            let mut a_mat = vec![vec![0.0; n]; n];
            let mut rhs = vec![0.0; n];
            for a in 0..nx {
                a_mat[a][a] = 1.0;
                for b in 0..ny {
                    let m = self.nu[b] * p.get(a, b);
                    a_mat[a][nx + b] = m;
                    rhs[a] -= m * g[a * ny + b];
                }
            }
            for b in 0..ny {
                a_mat[nx + b][nx + b] = 1.0;
                for a in 0..nx {
                    let m = self.mu[a] * p.get(a, b);
                    a_mat[nx + b][a] = m;
                    rhs[nx + b] -= m * g[a * ny + b];
                }
            }
            // the constraint rows carry one linear dependency, with null
            // direction (u, v) = (1, -1); drop the last equation for the
            // gauge u_0 = 0 to pin the solution
            a_mat[n - 1] = vec![0.0; n];
            a_mat[n - 1][0] = 1.0;
            rhs[n - 1] = 0.0;
            let uv = solve_linear(a_mat, rhs)?;
            let mut values = vec![0.0; nx * ny];
            for a in 0..nx {
                for b in 0..ny {
                    values[a * ny + b] = p.get(a, b) * (uv[a] + g[a * ny + b] + uv[nx + b]);
                }
            }
            grads.push(DensityTable { nx, ny, values });
        }
        Ok(grads)
    }

    fn category(&self, point: &Point, side: usize, count: usize) -> usize {
        let raw = point.coord(0);
        let idx = raw.round();
        assert!(
            (idx - raw).abs() < 1e-9 && idx >= 0.0 && (idx as usize) < count,
            "point coordinate {raw} is not a category index on side {side} (0..{count})"
        );
        idx as usize
    }
}

/// Gaussian elimination with partial pivoting; the systems here are tiny
/// (tens of unknowns), dense, and well-conditioned away from degenerate
/// tables.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, ModelError> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-12 {
            return Err(ModelError::SingularGradientSystem);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let (pivot_rows, rest) = a.split_at_mut(row);
                let pivot_row = &pivot_rows[col];
                for (w, p) in rest[0][col..].iter_mut().zip(&pivot_row[col..]) {
                    *w -= factor * p;
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

impl DensityModel for DiscreteTabular {
    fn param_dim(&self) -> usize {
        self.features.len()
    }

    fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    fn param_names(&self) -> Vec<String> {
        if self.features.len() == 1 {
            vec!["theta".into()]
        } else {
            (0..self.features.len())
                .map(|l| format!("theta{l}"))
                .collect()
        }
    }

    fn density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> f64 {
        let (nx, ny) = self.num_categories();
        let a = self.category(x, 0, nx);
        let b = self.category(y, 1, ny);
        match self.solved(theta) {
            Ok(solved) => solved.density.get(a, b),
            Err(_) => f64::NAN,
        }
    }

    fn grad_density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> Vec<f64> {
        let (nx, ny) = self.num_categories();
        let a = self.category(x, 0, nx);
        let b = self.category(y, 1, ny);
        match self.solved(theta) {
            Ok(solved) => solved.grads.iter().map(|g| g.get(a, b)).collect(),
            Err(_) => vec![f64::NAN; self.features.len()],
        }
    }

    fn l2_norm_sq_true(&self) -> Option<f64> {
        let mut acc = 0.0;
        for (a, &mu_a) in self.mu.iter().enumerate() {
            for (b, &nu_b) in self.nu.iter().enumerate() {
                let p = self.true_table.get(a, b);
                acc += mu_a * nu_b * p * p;
            }
        }
        Some(acc)
    }

    fn l2_dist_sq(&self, theta: &ParamPoint) -> Option<f64> {
        let table = self.solved(theta).ok()?;
        let mut acc = 0.0;
        for (a, &mu_a) in self.mu.iter().enumerate() {
            for (b, &nu_b) in self.nu.iter().enumerate() {
                let d = table.density.get(a, b) - self.true_table.get(a, b);
                acc += mu_a * nu_b * d * d;
            }
        }
        Some(acc)
    }

    fn uniform_bound(&self) -> Option<f64> {
        None
    }
}

impl GenerativeModel for DiscreteTabular {
    fn true_param(&self) -> ParamPoint {
        self.domain
            .point(self.theta_star.clone())
            .expect("true parameter validated at construction")
    }

    fn sample_pair(&self, rng: &mut dyn RngCore) -> PairSample {
        // inverse-CDF walk over the joint pmf mu_a nu_b p*_ab
        let (nx, ny) = self.num_categories();
        let u = unit_f64(rng);
        let mut cum = 0.0;
        for a in 0..nx {
            for b in 0..ny {
                cum += self.mu[a] * self.nu[b] * self.true_table.get(a, b);
                if u < cum {
                    return PairSample {
                        x: Point::scalar(a as f64),
                        y: Point::scalar(b as f64),
                    };
                }
            }
        }
        // the cumulative sum can land a hair below 1; clamp to the last cell
        PairSample {
            x: Point::scalar((nx - 1) as f64),
            y: Point::scalar((ny - 1) as f64),
        }
    }
}
