//! Small dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Maximum number of diagonal jitter additions attempted on a failed factorization.
pub const MAX_JITTER_ATTEMPTS: usize = 3;
/// Jitter magnitude relative to the mean diagonal entry.
pub const JITTER_SCALE: f64 = 1e-10;

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Cholesky factorization with diagonal jitter escalation.
///
/// On failure `JITTER_SCALE * trace / n` is added to the diagonal, at most
/// `MAX_JITTER_ATTEMPTS` times.
pub fn cholesky_jitter(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what}: non-finite entries"
        )));
    }
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let n = a.nrows().max(1);
    let trace: f64 = a.diagonal().iter().map(|v| v.abs()).sum();
    let jitter = (JITTER_SCALE * trace / n as f64).max(f64::MIN_POSITIVE);
    let mut work = a.clone();
    for _ in 0..MAX_JITTER_ATTEMPTS {
        for i in 0..work.nrows() {
            work[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(work.clone()) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite(what.to_string()))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draw from N(Q⁻¹b, Q⁻¹) given the precision matrix `q` and the vector `b`.
pub fn sample_from_precision<R: Rng + ?Sized>(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
    what: &str,
) -> Result<DVector<f64>> {
    let chol = cholesky_jitter(q, what)?;
    let mean = chol.solve(b);
    let u = standard_normal_vector(b.len(), rng);
    // L Lᵀ = Q, so Lᵀ x = u gives x ~ N(0, Q⁻¹).
    let lt = chol.l().transpose();
    let x = lt
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(mean + x)
}

/// Log-density of N(x; mean, cov) from a precomputed Cholesky factor of `cov`.
pub fn mvn_logpdf_chol(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let diff = x - mean;
    let l = chol.l_dirty();
    let n = diff.len();
    // forward substitution on the lower factor only
    let mut w = vec![0.0; n];
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for i in 0..n {
        let mut s = diff[i];
        for j in 0..i {
            s -= l[(i, j)] * w[j];
        }
        w[i] = s / l[(i, i)];
        quad += w[i] * w[i];
        logdet += l[(i, i)].ln();
    }
    -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - logdet - 0.5 * quad
}

/// Lower-triangular solve for unit-diagonal `l`: returns x with (I + L) x = b,
/// where `l` holds the strictly lower part.
pub fn unit_lower_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s;
    }
    x
}

/// Inverse of I + L for strictly lower `l`.
pub fn unit_lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = DVector::zeros(n);
        e[c] = 1.0;
        let col = unit_lower_solve(l, &e);
        inv.set_column(c, &col);
    }
    inv
}

/// Ridge-regularized least squares: returns (coefficients, residuals).
pub fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
) -> (DVector<f64>, DVector<f64>) {
    let k = x.ncols();
    let mut xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let coef = match Cholesky::new(xtx.clone()) {
        Some(c) => c.solve(&xty),
        None => {
            for i in 0..k {
                xtx[(i, i)] += ridge;
            }
            match Cholesky::new(xtx) {
                Some(c) => c.solve(&xty),
                None => DVector::zeros(k),
            }
        }
    };
    let resid = y - x * &coef;
    (coef, resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Cholesky::new(a.clone()).is_none());
        assert!(cholesky_jitter(&a, "psd").is_ok());
    }

    #[test]
    fn jitter_gives_up_on_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cholesky_jitter(&a, "indef"),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn unit_lower_inverse_roundtrip() {
        let l = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.5, 0.0, 0.0, -1.0, 2.0, 0.0]);
        let u = DMatrix::identity(3, 3) + &l;
        let prod = &u * unit_lower_inverse(&l);
        assert!((prod - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn precision_sampler_moments() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut mean = DVector::zeros(2);
        let draws: Vec<_> = (0..n)
            .map(|_| sample_from_precision(&q, &b, &mut rng, "t").unwrap())
            .collect();
        for d in &draws {
            mean += d;
        }
        mean /= n as f64;
        let exact = q.clone().cholesky().unwrap().solve(&b);
        assert!((mean - exact).norm() < 0.02);
    }
}
