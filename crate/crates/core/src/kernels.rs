//! Random-variate generators and Gaussian-mixture density evaluation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, mvn_logpdf_chol};

const GIG_ZERO_TOL: f64 = 1e-300;

/// Gamma draw with the (shape, rate) convention used throughout the crate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma requires shape, rate > 0 (got {shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Reciprocal of a Gamma(shape, rate) draw.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma requires shape, rate > 0 (got {shape}, {rate})"
        )));
    }
    // Gamma(shape, scale = 1/rate) inverted; guard underflow to exactly zero.
    loop {
        let g = sample_gamma(shape, rate, rng)?;
        if g > 0.0 {
            return Ok(1.0 / g);
        }
    }
}

/// Draw from the generalized inverse Gaussian law with density proportional to
/// `x^(lambda-1) exp(-(chi/x + psi*x)/2)`.
///
/// Ratio-of-uniforms with or without mode shift, and a dedicated rejection
/// scheme for small `omega = sqrt(chi*psi)` (Hörmann & Leydold, 2014).
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> Result<f64> {
    if !(lambda.is_finite() && chi.is_finite() && psi.is_finite()) || chi < 0.0 || psi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "GIG({lambda}, {chi}, {psi}): parameters must be finite with chi, psi >= 0"
        )));
    }
    if chi < GIG_ZERO_TOL && psi < GIG_ZERO_TOL {
        return Err(Error::InvalidParameter(
            "GIG with chi = psi = 0 is not normalizable".into(),
        ));
    }
    if chi < GIG_ZERO_TOL {
        if lambda > 0.0 {
            return sample_gamma(lambda, psi / 2.0, rng);
        }
        return Err(Error::InvalidParameter(format!(
            "GIG with chi = 0 requires lambda > 0 (got {lambda})"
        )));
    }
    if psi < GIG_ZERO_TOL {
        if lambda < 0.0 {
            return sample_inverse_gamma(-lambda, chi / 2.0, rng);
        }
        return Err(Error::InvalidParameter(format!(
            "GIG with psi = 0 requires lambda < 0 (got {lambda})"
        )));
    }

    let lambda_abs = lambda.abs();
    let alpha = (chi / psi).sqrt();
    let omega = (chi * psi).sqrt();

    let y = if lambda_abs > 2.0 || omega > 3.0 {
        gig_rou_shift(lambda_abs, omega, rng)
    } else if lambda_abs >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        gig_rou_noshift(lambda_abs, omega, rng)
    } else {
        gig_concave(lambda_abs, omega, rng)
    };
    Ok(if lambda < 0.0 { alpha / y } else { alpha * y })
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // open interval (0, 1) so logs stay finite
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn gig_rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * uniform01(rng);
        let v = uniform01(rng);
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn gig_rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // Bounding rectangle from the roots of a depressed cubic.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt()))
        .clamp(-1.0, 1.0)
        .acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();

    loop {
        let u = uminus + uniform01(rng) * (uplus - uminus);
        let v = uniform01(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a three-piece hat; valid for 0 <= lambda < 1, 0 < omega <= 1.
fn gig_concave<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * uniform01(rng);
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = if x0 > 2.0 / omega { x0 } else { 2.0 / omega };
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0 && x.is_finite()) {
            continue;
        }
        let u = uniform01(rng) * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Standard normal CDF with full relative accuracy in the lower tail.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Finite mixture of multivariate Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidInput(
                "mixture needs at least one component".into(),
            ));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{k} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("zero-dimensional mixture".into()));
        }
        for (mu, cov) in means.iter().zip(&covariances) {
            if mu.len() != dim || cov.nrows() != dim || cov.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "component dimensions differ from {dim}"
                )));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("negative or NaN mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}"
            )));
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Equal-weight mixture, one component per (mean, covariance) pair.
    pub fn equal_weights(means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = means.len();
        let w = if k == 0 { 0.0 } else { 1.0 / k as f64 };
        Self::new(vec![w; k], means, covariances)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Overall mixture mean.
    pub fn mean(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            out.axpy(*w, mu, 1.0);
        }
        out
    }

    /// Overall mixture covariance (law of total variance).
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for ((w, mu), cov) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            let d = mu - &mean;
            out += (cov + &d * d.transpose()) * *w;
        }
        out
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        mixture_logpdf(x, self)
    }
}

/// log Σ_k w_k N(x; μ_k, Σ_k), evaluated with log-sum-exp.
pub fn mixture_logpdf(x: &DVector<f64>, gm: &GaussianMixture) -> Result<f64> {
    if x.len() != gm.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has dimension {}, mixture {}",
            x.len(),
            gm.dim()
        )));
    }
    let mut terms = Vec::with_capacity(gm.n_components());
    for ((w, mu), cov) in gm.weights.iter().zip(&gm.means).zip(&gm.covariances) {
        if *w == 0.0 {
            continue;
        }
        let chol = cholesky_jitter(cov, "mixture component covariance")?;
        terms.push(w.ln() + mvn_logpdf_chol(x, mu, &chol));
    }
    Ok(log_sum_exp(&terms))
}

/// Exact Gaussian marginal over the coordinates in `keep` (in the given order).
pub fn mixture_marginal(gm: &GaussianMixture, keep: &[usize]) -> Result<GaussianMixture> {
    if keep.is_empty() {
        return Err(Error::InvalidInput("marginal index set is empty".into()));
    }
    if let Some(bad) = keep.iter().find(|&&i| i >= gm.dim()) {
        return Err(Error::InvalidInput(format!(
            "marginal index {bad} out of range for dimension {}",
            gm.dim()
        )));
    }
    let means = gm
        .means
        .iter()
        .map(|mu| DVector::from_iterator(keep.len(), keep.iter().map(|&i| mu[i])))
        .collect();
    let covs = gm
        .covariances
        .iter()
        .map(|c| DMatrix::from_fn(keep.len(), keep.len(), |r, s| c[(keep[r], keep[s])]))
        .collect();
    Ok(GaussianMixture {
        weights: gm.weights.clone(),
        means,
        covariances: covs,
    })
}

/// Σ_k w_k Φ((y − μ_k)/σ_k) for a univariate mixture.
pub fn mixture_cdf_univariate(gm: &GaussianMixture, y: f64) -> Result<f64> {
    if gm.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "univariate CDF requested for a {}-dimensional mixture",
            gm.dim()
        )));
    }
    let mut acc = 0.0;
    for ((w, mu), cov) in gm.weights.iter().zip(&gm.means).zip(&gm.covariances) {
        let sd = cov[(0, 0)].sqrt();
        acc += w * std_normal_cdf((y - mu[0]) / sd);
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// Draw one standard normal.
#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
