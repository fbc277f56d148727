//! Triangular equation-by-equation regression system and latent coefficient
//! path sampling in the non-centered parameterization
//!
//! ```text
//! y_t = β0' z_t + (√ϑ ⊙ β̃_t)' z_t + η_t,   η_t ~ N(0, σ²_t)
//! β̃_t = β̃_{t-1} + ξ_t,  ξ_t ~ N(0, I),  β̃_0 = 0
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::std_normal;
use crate::linalg::sample_from_precision;

/// Regression data of one equation over the effective sample t = p+1..T.
///
/// Regressors are `[x_t', −c_1t, …, −c_{i−1,t}]` where `x_t` stacks lags
/// 1..p and `c_j` are the contemporaneous series handed in by the caller
/// (reduced-form shocks of the preceding equations, or their levels).
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    /// 0-based equation index
    eq: usize,
    m: usize,
    p: usize,
    n: usize,
    k: usize,
    /// n×k row-major
    z: Vec<f64>,
    y: Vec<f64>,
}

impl EquationSystem {
    /// System with arbitrary regressors (n×k row-major `z`), used by the
    /// univariate benchmarks.
    pub fn from_parts(eq: usize, k: usize, z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if z.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "design has {} cells, expected {}",
                z.len(),
                n * k
            )));
        }
        Ok(Self {
            eq,
            m: 0,
            p: 0,
            n,
            k,
            z,
            y,
        })
    }

    pub fn equation(&self) -> usize {
        self.eq
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    /// Regressor count k = m p + eq.
    pub fn n_regressors(&self) -> usize {
        self.k
    }

    pub fn n_lagged(&self) -> usize {
        self.m * self.p
    }

    pub fn lag_order(&self) -> usize {
        self.p
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn regressors(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.z[t * self.k..(t + 1) * self.k]
    }

    /// Overwrite the contemporaneous columns with the negated series.
    pub fn set_contemporaneous(&mut self, series: &[Vec<f64>]) -> Result<()> {
        if series.len() != self.eq {
            return Err(Error::DimensionMismatch(format!(
                "equation {} needs {} contemporaneous series, got {}",
                self.eq + 1,
                self.eq,
                series.len()
            )));
        }
        let mp = self.m * self.p;
        for (j, s) in series.iter().enumerate() {
            if s.len() != self.n {
                return Err(Error::DimensionMismatch(format!(
                    "contemporaneous series {j} has length {}, expected {}",
                    s.len(),
                    self.n
                )));
            }
            for t in 0..self.n {
                self.z[t * self.k + mp + j] = -s[t];
            }
        }
        Ok(())
    }

    /// β_t' z_t for a coefficient vector held fixed over time.
    pub fn fitted_constant(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|t| dot(self.row(t), beta)).collect()
    }

    /// y_t − β0' z_t − (√ϑ ⊙ β̃_t)' z_t.
    pub fn residuals(&self, beta0: &[f64], sqrt_theta: &[f64], beta_tilde: &[f64]) -> Vec<f64> {
        let k = self.k;
        (0..self.n)
            .map(|t| {
                let z = self.row(t);
                let bt = &beta_tilde[t * k..(t + 1) * k];
                let mut f = 0.0;
                for j in 0..k {
                    f += (beta0[j] + sqrt_theta[j] * bt[j]) * z[j];
                }
                self.y[t] - f
            })
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Build equation `eq` (0-based) from a T×m data matrix.
///
/// `contemporaneous` must hold exactly `eq` series of length T − p.
pub fn build_equation_system(
    data: &DMatrix<f64>,
    p: usize,
    eq: usize,
    contemporaneous: &[Vec<f64>],
) -> Result<EquationSystem> {
    let (t_len, m) = (data.nrows(), data.ncols());
    if p == 0 {
        return Err(Error::InvalidParameter("lag order must be >= 1".into()));
    }
    if t_len <= p {
        return Err(Error::InvalidInput(format!("T = {t_len} <= p = {p}")));
    }
    if eq >= m {
        return Err(Error::InvalidInput(format!(
            "equation {eq} out of range for m = {m}"
        )));
    }
    let n = t_len - p;
    let mp = m * p;
    let k = mp + eq;
    let mut z = vec![0.0; n * k];
    let mut y = vec![0.0; n];
    for t in 0..n {
        let row = t + p;
        y[t] = data[(row, eq)];
        for l in 0..p {
            for j in 0..m {
                z[t * k + l * m + j] = data[(row - l - 1, j)];
            }
        }
    }
    let mut sys = EquationSystem {
        eq,
        m,
        p,
        n,
        k,
        z,
        y,
    };
    sys.set_contemporaneous(contemporaneous)?;
    Ok(sys)
}

/// Joint draw of the normalized state path β̃_{1..n} given the observation
/// target `target_t = y_t − β0' z_t`, loadings `sqrt_theta`, and observation
/// variances. Returns an n×k row-major path.
///
/// Forward Kalman filter in covariance form on the prior-simulated
/// difference series, followed by a backward smoothing pass; the smoothed
/// mean plus the prior simulation is a draw from the smoothing distribution.
pub fn ffbs_draw<R: Rng + ?Sized>(
    sys: &EquationSystem,
    target: &[f64],
    sqrt_theta: &[f64],
    obs_var: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (n, k) = (sys.n, sys.k);
    if target.len() != n || obs_var.len() != n || sqrt_theta.len() != k {
        return Err(Error::DimensionMismatch(
            "ffbs inputs do not match the system".into(),
        ));
    }
    if let Some(v) = obs_var.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "observation variance {v} must be positive"
        )));
    }

    // Prior simulation and the difference series.
    let mut path = vec![0.0; n * k];
    let mut diff = vec![0.0; n];
    let mut g = vec![0.0; n * k];
    {
        let mut state = vec![0.0; k];
        for t in 0..n {
            let z = sys.row(t);
            let gt = &mut g[t * k..(t + 1) * k];
            let mut fit = 0.0;
            for j in 0..k {
                state[j] += std_normal(rng);
                path[t * k + j] = state[j];
                gt[j] = sqrt_theta[j] * z[j];
                fit += gt[j] * state[j];
            }
            let sim = fit + obs_var[t].sqrt() * std_normal(rng);
            diff[t] = target[t] - sim;
        }
    }

    // Forward filter. P is the one-step predicted covariance, kept symmetric
    // by updating the lower triangle and mirroring.
    let mut p_mat = vec![0.0; k * k];
    for j in 0..k {
        p_mat[j * k + j] = 1.0;
    }
    let mut a = vec![0.0; k];
    let mut gains = vec![0.0; n * k];
    let mut innov = vec![0.0; n];
    let mut fvar = vec![0.0; n];
    let mut u = vec![0.0; k];
    for t in 0..n {
        let gt = &g[t * k..(t + 1) * k];
        for r in 0..k {
            let row = &p_mat[r * k..(r + 1) * k];
            u[r] = dot(row, gt);
        }
        let quad = dot(gt, &u).max(0.0);
        let f = quad + obs_var[t];
        let v = diff[t] - dot(gt, &a);
        if !(f.is_finite() && v.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!(
                "state filter at step {t}"
            )));
        }
        let kt = &mut gains[t * k..(t + 1) * k];
        for j in 0..k {
            kt[j] = u[j] / f;
            a[j] += kt[j] * v;
        }
        for r in 0..k {
            let ur = u[r] / f;
            for c in 0..=r {
                let val = p_mat[r * k + c] - ur * u[c];
                p_mat[r * k + c] = val;
                p_mat[c * k + r] = val;
            }
            p_mat[r * k + r] += 1.0;
        }
        innov[t] = v;
        fvar[t] = f;
    }

    // Backward pass for the smoothing weights r_t.
    let mut r_vec = vec![0.0; k];
    let mut rs = vec![0.0; n * k];
    for t in (0..n).rev() {
        let gt = &g[t * k..(t + 1) * k];
        let kt = &gains[t * k..(t + 1) * k];
        let kr = dot(kt, &r_vec);
        let scale = innov[t] / fvar[t] - kr;
        for j in 0..k {
            r_vec[j] += gt[j] * scale;
        }
        rs[t * k..(t + 1) * k].copy_from_slice(&r_vec);
    }

    // Smoothed mean: α̂_1 = r_0, α̂_{t+1} = α̂_t + r_t.
    let mut mean = vec![0.0; k];
    for t in 0..n {
        for j in 0..k {
            mean[j] += rs[t * k + j];
            path[t * k + j] += mean[j];
        }
    }
    if path.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(
            "state draw is not finite".into(),
        ));
    }
    Ok(path)
}

/// Conjugate Gaussian regression draw with independent N(prior_mean, prior_var)
/// priors, heteroskedastic known variances, and an n×q row-major design.
pub fn conjugate_regression_draw<R: Rng + ?Sized>(
    design: &[f64],
    q: usize,
    y: &[f64],
    obs_var: &[f64],
    prior_mean: &[f64],
    prior_var: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = y.len();
    if design.len() != n * q || obs_var.len() != n || prior_mean.len() != q || prior_var.len() != q
    {
        return Err(Error::DimensionMismatch(
            "regression inputs do not agree".into(),
        ));
    }
    if let Some(v) = prior_var.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "prior variance {v} must be positive"
        )));
    }
    let (prec, rhs) = posterior_precision(design, q, y, obs_var, prior_mean, prior_var);
    let draw = sample_from_precision(&prec, &rhs, rng, "coefficient posterior precision")?;
    Ok(draw.iter().copied().collect())
}

/// Posterior precision Q = X'WX + V⁻¹ and right-hand side b = X'Wy + V⁻¹m.
pub fn posterior_precision(
    design: &[f64],
    q: usize,
    y: &[f64],
    obs_var: &[f64],
    prior_mean: &[f64],
    prior_var: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = y.len();
    let mut prec = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    for t in 0..n {
        let x = &design[t * q..(t + 1) * q];
        let w = 1.0 / obs_var[t];
        for r in 0..q {
            let xr = x[r] * w;
            if xr == 0.0 {
                continue;
            }
            rhs[r] += xr * y[t];
            let row = &mut prec[r * q..r * q + r + 1];
            for (c, slot) in row.iter_mut().enumerate() {
                *slot += xr * x[c];
            }
        }
    }
    let mut qm = DMatrix::zeros(q, q);
    for r in 0..q {
        for c in 0..=r {
            qm[(r, c)] = prec[r * q + c];
            qm[(c, r)] = prec[r * q + c];
        }
        qm[(r, r)] += 1.0 / prior_var[r];
    }
    let b = DVector::from_fn(q, |r, _| rhs[r] + prior_mean[r] / prior_var[r]);
    (qm, b)
}

/// Joint draw of (β0, √ϑ) from the regression of y_t on [z_t, β̃_t ⊙ z_t]
/// with zero-mean Gaussian priors of the given variances.
pub fn draw_static_and_scales<R: Rng + ?Sized>(
    sys: &EquationSystem,
    beta_tilde: &[f64],
    obs_var: &[f64],
    prior_var_beta: &[f64],
    prior_var_theta: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, k) = (sys.n, sys.k);
    if beta_tilde.len() != n * k || prior_var_beta.len() != k || prior_var_theta.len() != k {
        return Err(Error::DimensionMismatch(
            "static draw inputs do not match the system".into(),
        ));
    }
    let q = 2 * k;
    let mut design = vec![0.0; n * q];
    for t in 0..n {
        let z = sys.row(t);
        let bt = &beta_tilde[t * k..(t + 1) * k];
        let row = &mut design[t * q..(t + 1) * q];
        row[..k].copy_from_slice(z);
        for j in 0..k {
            row[k + j] = bt[j] * z[j];
        }
    }
    let mut prior_var = prior_var_beta.to_vec();
    prior_var.extend_from_slice(prior_var_theta);
    let draw =
        conjugate_regression_draw(&design, q, &sys.y, obs_var, &vec![0.0; q], &prior_var, rng)?;
    Ok((draw[..k].to_vec(), draw[k..].to_vec()))
}

/// Draw constant coefficients (no time variation) with prior N(mean, var).
pub fn draw_constant_coefficients<R: Rng + ?Sized>(
    sys: &EquationSystem,
    obs_var: &[f64],
    prior_mean: &[f64],
    prior_var: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    conjugate_regression_draw(&sys.z, sys.k, &sys.y, obs_var, prior_mean, prior_var, rng)
}

/// Jointly negate (√ϑ_j, β̃_{j,·}) with probability 1/2 per coefficient.
///
/// The likelihood and the symmetric priors are invariant under the flip.
pub fn random_sign_flip<R: Rng + ?Sized>(
    sqrt_theta: &mut [f64],
    beta_tilde: &mut [f64],
    rng: &mut R,
) {
    let k = sqrt_theta.len();
    if k == 0 {
        return;
    }
    let n = beta_tilde.len() / k;
    for j in 0..k {
        if rng.random::<bool>() {
            sqrt_theta[j] = -sqrt_theta[j];
            for t in 0..n {
                beta_tilde[t * k + j] = -beta_tilde[t * k + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(t: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t, m, |r, c| ((r * 7 + c * 3) % 11) as f64 * 0.1 - 0.5)
    }

    #[test]
    fn first_equation_has_only_lags() {
        let d = data(10, 2);
        let sys = build_equation_system(&d, 1, 0, &[]).unwrap();
        assert_eq!(sys.n_regressors(), 2);
        for t in 0..sys.n_obs() {
            assert_eq!(sys.row(t), &[d[(t, 0)], d[(t, 1)]]);
            assert_eq!(sys.response()[t], d[(t + 1, 0)]);
        }
    }

    #[test]
    fn regressor_count_grows_with_equation_index() {
        let d = data(12, 9);
        let resid = vec![vec![0.0; 11]; 2];
        let sys = build_equation_system(&d, 1, 2, &resid).unwrap();
        assert_eq!(sys.n_regressors(), 11);
    }

    #[test]
    fn contemporaneous_columns_enter_negated() {
        let d = data(8, 2);
        let e: Vec<f64> = (0..7).map(|t| t as f64 * 0.3 - 1.0).collect();
        let sys = build_equation_system(&d, 1, 1, &[e.clone()]).unwrap();
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        let flipped = build_equation_system(&d, 1, 1, &[neg]).unwrap();
        for t in 0..7 {
            assert_eq!(sys.row(t)[2], -e[t]);
            assert_eq!(flipped.row(t)[2], -sys.row(t)[2]);
            assert_eq!(flipped.row(t)[..2], sys.row(t)[..2]);
        }
    }

    #[test]
    fn build_errors() {
        let d = data(5, 2);
        assert!(build_equation_system(&d, 1, 1, &[]).is_err());
        assert!(build_equation_system(&d, 5, 0, &[]).is_err());
        assert!(build_equation_system(&d, 1, 1, &[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn zero_loadings_give_prior_random_walk() {
        let d = data(401, 1);
        let sys = build_equation_system(&d, 1, 0, &[]).unwrap();
        let target = sys.response().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // increments of a prior random walk are iid N(0, 1) whatever the data
        let mut incs = Vec::new();
        for _ in 0..20 {
            let path = ffbs_draw(&sys, &target, &[0.0], &vec![0.5; 400], &mut rng).unwrap();
            incs.push(path[0]);
            incs.extend(path.windows(2).map(|w| w[1] - w[0]));
        }
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        let var = incs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn ffbs_rejects_bad_variances() {
        let d = data(6, 1);
        let sys = build_equation_system(&d, 1, 0, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = ffbs_draw(
            &sys,
            &[0.0; 5],
            &[1.0],
            &[1.0, 1.0, 0.0, 1.0, 1.0],
            &mut rng,
        );
        assert!(r.is_err());
    }

    #[test]
    fn sign_flip_preserves_implied_path() {
        let d = data(30, 2);
        let sys = build_equation_system(&d, 1, 1, &[vec![0.1; 29]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beta0 = vec![0.2, -0.1, 0.4];
        let mut st = vec![0.3, -0.2, 0.05];
        let mut bt: Vec<f64> = (0..29 * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let before = sys.residuals(&beta0, &st, &bt);
        random_sign_flip(&mut st, &mut bt, &mut rng);
        let after = sys.residuals(&beta0, &st, &bt);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dogmatic_prior_pins_coefficient() {
        let d = data(40, 1);
        let sys = build_equation_system(&d, 1, 0, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bt: Vec<f64> = (0..39).map(|t| t as f64 * 0.1).collect();
        for _ in 0..100 {
            let (b0, st) =
                draw_static_and_scales(&sys, &bt, &vec![0.1; 39], &[1.0], &[1e-12], &mut rng)
                    .unwrap();
            assert!(st[0].abs() < 1e-4);
            assert!(b0[0].is_finite());
        }
    }
}
