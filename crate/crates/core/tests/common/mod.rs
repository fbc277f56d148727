//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(νt) dt by composite Simpson.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    // integrand is below e^-745 once x cosh t > 745
    let upper = ((745.0 / x).max(1.0)).acosh() + 1.0;
    let n = 20_000;
    let h = upper / n as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut s = f(0.0) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0
}

/// Mean and variance of GIG(λ, χ, ψ) from Bessel ratios.
pub fn gig_moments(lambda: f64, chi: f64, psi: f64) -> (f64, f64) {
    let w = (chi * psi).sqrt();
    let r = (chi / psi).sqrt();
    let k0 = bessel_k(lambda, w);
    let m1 = r * bessel_k(lambda + 1.0, w) / k0;
    let m2 = r * r * bessel_k(lambda + 2.0, w) / k0;
    (m1, m2 - m1 * m1)
}

/// Exact posterior of the stacked non-centered path (time-major, n·k) for
/// target_t = Σ_j s_j z_tj β̃_tj + e_t with β̃ a driftless random walk from 0.
pub fn exact_state_posterior(
    rows: &[Vec<f64>],
    target: &[f64],
    sqrt_theta: &[f64],
    obs_var: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let k = sqrt_theta.len();
    let dim = n * k;
    let mut prior = DMatrix::zeros(dim, dim);
    for s in 0..n {
        for t in 0..n {
            for j in 0..k {
                prior[(s * k + j, t * k + j)] = (s.min(t) + 1) as f64;
            }
        }
    }
    let mut q = prior.try_inverse().expect("prior covariance is invertible");
    let mut b = DVector::zeros(dim);
    for t in 0..n {
        let g: Vec<f64> = (0..k).map(|j| sqrt_theta[j] * rows[t][j]).collect();
        for r in 0..k {
            b[t * k + r] += g[r] * target[t] / obs_var[t];
            for c in 0..k {
                q[(t * k + r, t * k + c)] += g[r] * g[c] / obs_var[t];
            }
        }
    }
    let cov = q.try_inverse().expect("posterior precision is invertible");
    let mean = &cov * b;
    (mean, cov)
}

/// Minimize w'Pw subject to A w = b by solving the KKT system with LU.
pub fn kkt_solve(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = p.nrows();
    let c = a.nrows();
    let mut kkt = DMatrix::zeros(n + c, n + c);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(p * 2.0));
    kkt.view_mut((0, n), (n, c)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (c, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + c);
    rhs.rows_mut(n, c).copy_from(b);
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    sol.rows(0, n).into_owned()
}

/// Inequality-constrained target portfolio by active-set enumeration: the
/// budget-only solution if it meets the target, otherwise both as equalities.
pub fn kkt_target(p: &DMatrix<f64>, mu: &DVector<f64>, r_star: f64) -> DVector<f64> {
    let n = p.nrows();
    let ones = DMatrix::from_element(1, n, 1.0);
    let w = kkt_solve(p, &ones, &DVector::from_element(1, 1.0));
    if w.dot(mu) >= r_star {
        return w;
    }
    let mut a = DMatrix::zeros(2, n);
    a.row_mut(0).fill(1.0);
    a.row_mut(1).copy_from(&mu.transpose());
    kkt_solve(p, &a, &DVector::from_vec(vec![1.0, r_star]))
}

/// Random symmetric positive definite matrix L L' + δI.
pub fn random_pd<R: rand::Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &l * l.transpose() + DMatrix::identity(n, n) * 0.05
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
