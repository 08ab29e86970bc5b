//! Correlated bivariate Gaussian family over standard normal marginals.
//!
//! Both marginals are standard normal on the line; the joint law couples
//! them with correlation `rho`. The density ratio relative to the product
//! of the marginals is
//!
//! ```text
//! p^rho(x, y) = (1 - rho^2)^{-1/2} exp( rho (2 x y - rho (x^2 + y^2)) / (2 (1 - rho^2)) )
//! ```
//!
//! which is closed-form differentiable in `rho` and admits closed-form L2
//! geometry: under the product of the marginals,
//! `<p^a, p^b> = 1 / (1 - a b)`, so the squared distance to the truth is
//! available exactly without quadrature. The parameter box is
//! `[-1 + tau, 1 - tau]` for a margin `tau` (default 0.05) keeping the
//! ratio bounded away from the singular `|rho| = 1` edge.

use rand_core::RngCore;

use crate::domain::{DensityModel, GenerativeModel, PairSample, ParamDomain, ParamPoint, Point};
use crate::models::ModelError;
use crate::sampling::normal_pair;

/// Default margin keeping `rho` away from the singular edges.
pub const DEFAULT_EDGE_MARGIN: f64 = 0.05;

/// Correlated bivariate Gaussian density-ratio family, parameterized by the
/// correlation `rho`.
#[derive(Debug, Clone)]
pub struct BivariateNormalRatio {
    domain: ParamDomain,
    true_rho: f64,
}

impl BivariateNormalRatio {
    /// Family over `[-1 + tau, 1 - tau]` with the default margin.
    pub fn new(true_rho: f64) -> Result<Self, ModelError> {
        Self::with_margin(true_rho, DEFAULT_EDGE_MARGIN)
    }

    /// Family over `[-1 + tau, 1 - tau]` with an explicit edge margin.
    pub fn with_margin(true_rho: f64, tau: f64) -> Result<Self, ModelError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(ModelError::InvalidSpec(format!(
                "edge margin must lie in (0, 1), got {tau}"
            )));
        }
        let domain = ParamDomain::scalar(-1.0 + tau, 1.0 - tau)
            .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        if !domain.contains(&[true_rho]) {
            return Err(ModelError::ParamOutOfDomain);
        }
        Ok(Self { domain, true_rho })
    }

    pub fn true_rho(&self) -> f64 {
        self.true_rho
    }

    /// Returns the same family with a different true parameter.
    pub fn with_true_rho(&self, true_rho: f64) -> Result<Self, ModelError> {
        if !self.domain.contains(&[true_rho]) {
            return Err(ModelError::ParamOutOfDomain);
        }
        Ok(Self {
            domain: self.domain.clone(),
            true_rho,
        })
    }

    /// Closed-form inner product `<p^a, p^b>` under the product of standard
    /// normal marginals.
    pub fn inner_product(&self, rho_a: f64, rho_b: f64) -> f64 {
        1.0 / (1.0 - rho_a * rho_b)
    }
}

impl DensityModel for BivariateNormalRatio {
    fn param_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    fn param_names(&self) -> Vec<String> {
        vec!["rho".into()]
    }

    fn density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> f64 {
        self.log_density(theta, x, y).exp()
    }

    fn log_density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> f64 {
        let rho = theta.coords()[0];
        let (x, y) = (x.coord(0), y.coord(0));
        let one_minus = 1.0 - rho * rho;
        rho * (2.0 * x * y - rho * (x * x + y * y)) / (2.0 * one_minus) - 0.5 * one_minus.ln()
    }

    fn grad_density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> Vec<f64> {
        let rho = theta.coords()[0];
        let p = self.density(theta, x, y);
        let (x, y) = (x.coord(0), y.coord(0));
        let one_minus = 1.0 - rho * rho;
        let dlogp = rho / one_minus
            + (x * y * (1.0 + rho * rho) - rho * (x * x + y * y)) / (one_minus * one_minus);
        vec![dlogp * p]
    }

    fn l2_norm_sq_true(&self) -> Option<f64> {
        Some(self.inner_product(self.true_rho, self.true_rho))
    }

    fn l2_dist_sq(&self, theta: &ParamPoint) -> Option<f64> {
        let rho = theta.coords()[0];
        Some(
            self.inner_product(rho, rho) - 2.0 * self.inner_product(rho, self.true_rho)
                + self.inner_product(self.true_rho, self.true_rho),
        )
    }

    fn uniform_bound(&self) -> Option<f64> {
        // the ratio is unbounded in (x, y); no finite sup-norm bound exists
        None
    }
}

impl GenerativeModel for BivariateNormalRatio {
    fn true_param(&self) -> ParamPoint {
        self.domain
            .point(vec![self.true_rho])
            .expect("true parameter validated at construction")
    }

    fn sample_pair(&self, rng: &mut dyn RngCore) -> PairSample {
        let (z1, z2) = normal_pair(rng);
        let x = z1;
        let y = self.true_rho * x + (1.0 - self.true_rho * self.true_rho).sqrt() * z2;
        PairSample {
            x: Point::scalar(x),
            y: Point::scalar(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{unit_f64, SeedSpec};

    fn model() -> BivariateNormalRatio {
        BivariateNormalRatio::new(0.5).unwrap()
    }

    #[test]
    fn density_spot_values() {
        let m = model();
        let theta = m.domain().point(vec![0.5]).unwrap();
        // at the origin the exponent vanishes: p = (1 - rho^2)^{-1/2}
        let p0 = m.density(&theta, &Point::scalar(0.0), &Point::scalar(0.0));
        assert!((p0 - 1.154_700_538_379_251_5).abs() < 1e-15);
        // rho = 0 is exactly the product law
        let theta0 = m.domain().point(vec![0.0]).unwrap();
        let p = m.density(&theta0, &Point::scalar(1.3), &Point::scalar(-0.4));
        assert_eq!(p, 1.0);
    }

    #[test]
    fn closed_form_inner_products() {
        let m = model();
        assert!((m.inner_product(0.5, 0.5) - 4.0 / 3.0).abs() < 1e-15);
        let n2 = m.l2_norm_sq_true().unwrap();
        assert!((n2 - 4.0 / 3.0).abs() < 1e-15);
        // |p^0 - p^rho*|^2 = 1/(1-0) - 2/(1-0) + 1/(1-rho*^2) = 1/(1-rho*^2) - 1
        let d = m.l2_dist_sq(&m.domain().point(vec![0.0]).unwrap()).unwrap();
        assert!((d - (n2 - 1.0)).abs() < 1e-15);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        // and the distance at the truth is zero
        let at_truth = m.l2_dist_sq(&m.domain().point(vec![0.5]).unwrap()).unwrap();
        assert!(at_truth.abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = model();
        let h = 1e-6;
        let mut rng = SeedSpec::new(7).stream(0);
        for _ in 0..10 {
            let rho = -0.9 + 1.8 * unit_f64(&mut rng);
            let (x, y) = normal_pair(&mut rng);
            let xp = Point::scalar(x);
            let yp = Point::scalar(y);
            let theta = m.domain().point(vec![rho]).unwrap();
            let up = m.domain().point(vec![rho + h]).unwrap();
            let dn = m.domain().point(vec![rho - h]).unwrap();
            let fd = (m.density(&up, &xp, &yp) - m.density(&dn, &xp, &yp)) / (2.0 * h);
            let an = m.grad_density(&theta, &xp, &yp)[0];
            let scale = an.abs().max(1e-8);
            assert!(
                ((an - fd) / scale).abs() < 1e-5,
                "rho {rho} at ({x}, {y}): analytic {an} vs fd {fd}"
            );
        }
    }

    #[test]
    fn gradient_at_independence_and_origin_is_zero() {
        let m = model();
        let theta = m.domain().point(vec![0.0]).unwrap();
        let g = m.grad_density(&theta, &Point::scalar(0.0), &Point::scalar(0.0));
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn sampling_reproduces_the_correlation() {
        let m = model();
        let mut rng = SeedSpec::new(5).stream(0);
        let n = 50_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let pair = m.sample_pair(&mut rng);
            let (x, y) = (pair.x.coord(0), pair.y.coord(0));
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.5).abs() < 0.01, "empirical correlation {corr}");
    }

    #[test]
    fn constructor_rejects_bad_specs() {
        assert!(BivariateNormalRatio::new(0.96).is_err());
        assert!(BivariateNormalRatio::with_margin(0.5, 0.0).is_err());
        assert!(BivariateNormalRatio::with_margin(0.5, 1.0).is_err());
        assert!(matches!(
            model().with_true_rho(-0.99),
            Err(ModelError::ParamOutOfDomain)
        ));
    }
}
