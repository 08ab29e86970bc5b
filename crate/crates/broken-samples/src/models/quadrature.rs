//! Numerical integration helpers used to cross-check closed-form identities.
//!
//! Two rules cover the two continuous model families:
//!
//! * **Gauss–Hermite** nodes and weights for integrals against the
//!   physicists' weight `exp(-t^2)`, computed by Newton iteration on the
//!   orthonormal Hermite recurrence. Expectations under one or two
//!   independent standard normals follow by the substitution `x = sqrt(2) t`.
//! * A plain **rectangle rule** on the unit square, exact enough for smooth
//!   periodic integrands on the torus, where the trapezoid corrections
//!   cancel and convergence is spectral.
//!
//! These routines exist to *validate* analytic formulas elsewhere in the
//! crate; production code paths never integrate numerically.

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `exp(-t^2)`: `integral f(t) exp(-t^2) dt ~= sum_i w_i f(t_i)`.
///
/// Newton iteration on the orthonormal recurrence
/// `p_{k+1}(t) = t sqrt(2/(k+1)) p_k(t) - sqrt(k/(k+1)) p_{k-1}(t)`
/// converges to machine precision in a handful of steps from the classical
/// asymptotic initial guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // pi^{-1/4}, the value of the orthonormal p_0
    let p0 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        // initial guesses (largest root first), after Numerical Recipes
        z = match i {
            0 => ((2 * n + 1) as f64).sqrt() - 1.85575 * ((2 * n + 1) as f64).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // evaluate p_n and its derivative at z via the recurrence
            let mut p_prev = 0.0;
            let mut p = p0;
            for k in 0..n {
                let kf = k as f64;
                let next = z * (2.0 / (kf + 1.0)).sqrt() * p - (kf / (kf + 1.0)).sqrt() * p_prev;
                p_prev = p;
                p = next;
            }
            // p'_n(z) = sqrt(2 n) p_{n-1}(z)
            pp = (2.0 * n as f64).sqrt() * p_prev;
            let dz = p / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        let w = 2.0 / (pp * pp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    (nodes, weights)
}

/// `E[f(X)]` for standard normal `X` via an `n`-point Gauss–Hermite rule.
pub fn gh_expect1(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let scale = std::f64::consts::FRAC_2_SQRT_PI * 0.5; // 1/sqrt(pi)
    let mut acc = 0.0;
    for i in 0..n {
        acc += w[i] * f(std::f64::consts::SQRT_2 * t[i]);
    }
    acc * scale
}

/// `E[f(X, Y)]` for independent standard normals via a tensorized
/// `n x n`-point Gauss–Hermite rule.
pub fn gh_expect2(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let scale = 1.0 / std::f64::consts::PI;
    let mut acc = 0.0;
    for i in 0..n {
        let xi = std::f64::consts::SQRT_2 * t[i];
        let mut inner = 0.0;
        for j in 0..n {
            inner += w[j] * f(xi, std::f64::consts::SQRT_2 * t[j]);
        }
        acc += w[i] * inner;
    }
    acc * scale
}

/// Rectangle-rule integral of `f` over the unit square with an `n x n` grid
/// of cell midpoints. For smooth 1-periodic integrands this converges
/// spectrally in `n`.
pub fn torus_grid_integral2(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    assert!(n >= 1, "grid resolution must be positive");
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) * h;
        let mut inner = 0.0;
        for j in 0..n {
            inner += f(u, (j as f64 + 0.5) * h);
        }
        acc += inner;
    }
    acc * h * h
}
