//! Prior hierarchies for the regression coefficients and their updates.
//!
//! Coefficient `j` of an equation with `m` series and `p` lags belongs to lag
//! block `j / m + 1` when `j < m·p`, and to the covariance block otherwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sample_gamma, sample_gig, std_normal};
use crate::linalg::cholesky_jitter;
use crate::volatility::{mh_accept, MhTuning};

/// Floor on the squared coefficient in the GIG χ argument.
pub const COEF_SQ_FLOOR: f64 = 1e-16;
pub const SPIKE_FACTOR: f64 = 0.1;
pub const SLAB_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgHyper {
    pub kappa: f64,
    pub c0: f64,
    pub d0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for NgHyper {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            c0: 1.5,
            d0: 1.0,
            a0: 0.01,
            b0: 0.01,
        }
    }
}

impl NgHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("c0", self.c0),
            ("d0", self.d0),
            ("a0", self.a0),
            ("b0", self.b0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Block a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// 1-based lag
    Lag(usize),
    Covariance,
}

pub fn coefficient_block(j: usize, m: usize, p: usize) -> Block {
    if j < m * p {
        Block::Lag(j / m + 1)
    } else {
        Block::Covariance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgState {
    pub m: usize,
    pub p: usize,
    /// per equation, one entry per regressor
    pub tau_beta: Vec<Vec<f64>>,
    /// empty inner vectors for constant-coefficient models
    pub tau_theta: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub rho_cov: f64,
}

impl NgState {
    /// Unit scales everywhere. `time_varying` controls whether τ²_ϑ exist.
    pub fn new(m: usize, p: usize, time_varying: bool) -> Self {
        let tau_beta: Vec<Vec<f64>> = (0..m).map(|i| vec![1.0; m * p + i]).collect();
        let tau_theta = if time_varying {
            tau_beta.clone()
        } else {
            vec![Vec::new(); m]
        };
        Self {
            m,
            p,
            tau_beta,
            tau_theta,
            pi: vec![1.0; p],
            rho_cov: 1.0,
        }
    }

    /// λ_L = Π_{l ≤ L} π_l for L = 1..p.
    pub fn lambda(&self) -> Vec<f64> {
        let mut acc = 1.0;
        self.pi
            .iter()
            .map(|pi| {
                acc *= pi;
                acc
            })
            .collect()
    }

    /// Global scale applied to each regressor of equation `eq`.
    pub fn globals(&self, eq: usize) -> Vec<f64> {
        let lambda = self.lambda();
        let k = self.m * self.p + eq;
        (0..k)
            .map(|j| match coefficient_block(j, self.m, self.p) {
                Block::Lag(l) => lambda[l - 1],
                Block::Covariance => self.rho_cov,
            })
            .collect()
    }
}

/// τ² ~ GIG(κ − ½, max(coef², floor), κ·global), independently per coefficient.
pub fn update_local_scales<R: Rng + ?Sized>(
    coefs: &[f64],
    globals: &[f64],
    kappa: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if coefs.len() != globals.len() {
        return Err(Error::DimensionMismatch(
            "coefficients and globals differ in length".into(),
        ));
    }
    coefs
        .iter()
        .zip(globals)
        .map(|(c, g)| {
            if !(*g > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "global scale {g} must be positive"
                )));
            }
            let draw = sample_gig(kappa - 0.5, (c * c).max(COEF_SQ_FLOOR), kappa * g, rng)?;
            // guard against under/overflow in extreme regions
            Ok(draw.clamp(1e-300, 1e300))
        })
        .collect()
}

/// Shape and rate of the Gamma full conditional of π_l (1-based `l`).
///
/// Every τ² attached to lag L ≥ l carries λ_L = π_l · (λ_L / π_l) in its
/// prior rate, so all of them inform π_l.
pub fn lag_multiplier_params(state: &NgState, hyper: &NgHyper, l: usize) -> (f64, f64) {
    let lambda = state.lambda();
    let (m, p) = (state.m, state.p);
    let mut count = 0usize;
    let mut weighted = 0.0;
    for (tb, tt) in state.tau_beta.iter().zip(&state.tau_theta) {
        for j in 0..(m * p).min(tb.len()) {
            let lag = j / m + 1;
            if lag < l {
                continue;
            }
            let w = lambda[lag - 1] / state.pi[l - 1];
            count += 1;
            weighted += w * tb[j];
            if let Some(t) = tt.get(j) {
                count += 1;
                weighted += w * t;
            }
        }
    }
    (
        hyper.c0 + hyper.kappa * count as f64,
        hyper.d0 + 0.5 * hyper.kappa * weighted,
    )
}

/// Sequential update of π_1..π_p; λ is recomputed from the current π each time.
pub fn update_lag_multipliers<R: Rng + ?Sized>(
    state: &mut NgState,
    hyper: &NgHyper,
    rng: &mut R,
) -> Result<()> {
    for l in 1..=state.p {
        let (shape, rate) = lag_multiplier_params(state, hyper, l);
        state.pi[l - 1] = sample_gamma(shape, rate, rng)?.max(1e-300);
    }
    Ok(())
}

/// Shape and rate of the Gamma full conditional of ϱ; `None` if no
/// covariance coefficients exist (m = 1).
pub fn covariance_global_params(state: &NgState, hyper: &NgHyper) -> Option<(f64, f64)> {
    let mp = state.m * state.p;
    let mut count = 0usize;
    let mut sum = 0.0;
    for (tb, tt) in state.tau_beta.iter().zip(&state.tau_theta) {
        for j in mp..tb.len() {
            count += 1;
            sum += tb[j];
            if let Some(t) = tt.get(j) {
                count += 1;
                sum += t;
            }
        }
    }
    if count == 0 {
        return None;
    }
    Some((
        hyper.a0 + hyper.kappa * count as f64,
        hyper.b0 + 0.5 * hyper.kappa * sum,
    ))
}

pub fn update_covariance_global<R: Rng + ?Sized>(
    state: &mut NgState,
    hyper: &NgHyper,
    rng: &mut R,
) -> Result<()> {
    if let Some((shape, rate)) = covariance_global_params(state, hyper) {
        state.rho_cov = sample_gamma(shape, rate, rng)?.max(1e-300);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsState {
    pub included: Vec<Vec<bool>>,
    pub spike_sd: Vec<Vec<f64>>,
    pub slab_sd: Vec<Vec<f64>>,
    pub prior_inclusion: f64,
}

impl SsvsState {
    /// Spike and slab standard deviations from per-equation OLS standard errors.
    pub fn from_ols(ols_sd: &[Vec<f64>], prior_inclusion: f64) -> Result<Self> {
        if !(prior_inclusion > 0.0 && prior_inclusion < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prior inclusion {prior_inclusion} outside (0, 1)"
            )));
        }
        for (i, row) in ols_sd.iter().enumerate() {
            if let Some(j) = row.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::Degenerate(format!(
                    "zero OLS standard deviation for equation {i}, regressor {j}"
                )));
            }
        }
        let scale = |f: f64| {
            ols_sd
                .iter()
                .map(|r| r.iter().map(|s| f * s).collect())
                .collect()
        };
        Ok(Self {
            included: ols_sd.iter().map(|r| vec![true; r.len()]).collect(),
            spike_sd: scale(SPIKE_FACTOR),
            slab_sd: scale(SLAB_FACTOR),
            prior_inclusion,
        })
    }

    pub fn prior_variances(&self, eq: usize) -> Vec<f64> {
        self.included[eq]
            .iter()
            .zip(&self.spike_sd[eq])
            .zip(&self.slab_sd[eq])
            .map(|((inc, sp), sl)| if *inc { sl * sl } else { sp * sp })
            .collect()
    }
}

/// Posterior probability that a coefficient comes from the slab.
pub fn inclusion_probability(coef: f64, spike_sd: f64, slab_sd: f64, prior_inclusion: f64) -> f64 {
    let log_slab = prior_inclusion.ln() - slab_sd.ln() - 0.5 * (coef / slab_sd).powi(2);
    let log_spike = (1.0 - prior_inclusion).ln() - spike_sd.ln() - 0.5 * (coef / spike_sd).powi(2);
    1.0 / (1.0 + (log_spike - log_slab).exp())
}

/// Redraw the inclusion indicators of equation `eq` given its coefficients.
pub fn update_ssvs<R: Rng + ?Sized>(
    coefs: &[f64],
    eq: usize,
    state: &mut SsvsState,
    rng: &mut R,
) -> Result<()> {
    if coefs.len() != state.included[eq].len() {
        return Err(Error::DimensionMismatch("SSVS coefficient count".into()));
    }
    for (j, c) in coefs.iter().enumerate() {
        let prob = inclusion_probability(
            *c,
            state.spike_sd[eq][j],
            state.slab_sd[eq][j],
            state.prior_inclusion,
        );
        state.included[eq][j] = rng.random::<f64>() < prob;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinnesotaHyper {
    /// Gamma(shape, rate) hyperprior on each tightness
    pub shape: f64,
    pub rate: f64,
    /// prior variance on contemporaneous (covariance) coefficients
    pub covariance_var: f64,
    pub initial_step: f64,
}

impl Default for MinnesotaHyper {
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 1.0,
            covariance_var: 10.0,
            initial_step: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinnesotaState {
    /// overall tightness
    pub lambda1: f64,
    /// cross-variable tightness
    pub lambda2: f64,
    /// residual variances of univariate AR(1) fits, one per series
    pub scales: Vec<f64>,
    pub tuning: MhTuning,
}

impl MinnesotaState {
    pub fn new(scales: Vec<f64>, hyper: &MinnesotaHyper) -> Result<Self> {
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Degenerate(format!("AR(1) residual variance {s}")));
        }
        Ok(Self {
            lambda1: 0.2,
            lambda2: 0.5,
            scales,
            tuning: MhTuning::new(hyper.initial_step),
        })
    }
}

/// Prior variances for equation `eq` under tightness (λ1, λ2).
///
/// Own lag L: λ1²/L². Lag L of series j ≠ eq: λ1² λ2² σ²_eq / (L² σ²_j).
pub fn minnesota_prior_variances(
    lambda1: f64,
    lambda2: f64,
    scales: &[f64],
    p: usize,
    eq: usize,
    covariance_var: f64,
) -> Vec<f64> {
    let m = scales.len();
    let mut out = Vec::with_capacity(m * p + eq);
    for l in 1..=p {
        let l2 = (l * l) as f64;
        for j in 0..m {
            if j == eq {
                out.push(lambda1 * lambda1 / l2);
            } else {
                out.push(lambda1 * lambda1 * lambda2 * lambda2 * scales[eq] / (l2 * scales[j]));
            }
        }
    }
    out.extend(std::iter::repeat(covariance_var).take(eq));
    out
}

/// Weighted sufficient statistics of one regression y = Zβ + e, e ~ N(0, W⁻¹).
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub n: usize,
    pub ztwz: DMatrix<f64>,
    pub ztwy: DVector<f64>,
    pub ytwy: f64,
    pub logdet_w: f64,
}

impl RegressionStats {
    /// `design` is n×k row-major, `obs_var` the per-observation variances.
    pub fn new(design: &[f64], k: usize, y: &[f64], obs_var: &[f64]) -> Self {
        let n = y.len();
        let mut ztwz = DMatrix::zeros(k, k);
        let mut ztwy = DVector::zeros(k);
        let mut ytwy = 0.0;
        let mut logdet_w = 0.0;
        for t in 0..n {
            let z = &design[t * k..(t + 1) * k];
            let w = 1.0 / obs_var[t];
            logdet_w -= obs_var[t].ln();
            ytwy += w * y[t] * y[t];
            for r in 0..k {
                let zr = w * z[r];
                ztwy[r] += zr * y[t];
                for c in 0..=r {
                    ztwz[(r, c)] += zr * z[c];
                }
            }
        }
        for r in 0..k {
            for c in 0..r {
                ztwz[(c, r)] = ztwz[(r, c)];
            }
        }
        Self {
            n,
            ztwz,
            ztwy,
            ytwy,
            logdet_w,
        }
    }

    /// log N(y; 0, W⁻¹ + Z V Z') with V = diag(prior_var), via the k×k form.
    pub fn log_marginal(&self, prior_var: &[f64]) -> Result<f64> {
        let k = prior_var.len();
        let mut q = self.ztwz.clone();
        let mut logdet_v = 0.0;
        for j in 0..k {
            q[(j, j)] += 1.0 / prior_var[j];
            logdet_v += prior_var[j].ln();
        }
        let chol = cholesky_jitter(&q, "marginal likelihood precision")?;
        let logdet_q: f64 = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let sol = chol.solve(&self.ztwy);
        let quad = self.ytwy - self.ztwy.dot(&sol);
        Ok(
            -0.5 * self.n as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * self.logdet_w
                - 0.5 * logdet_v
                - 0.5 * logdet_q
                - 0.5 * quad,
        )
    }
}

/// Log target of (log λ1, log λ2): Σ_i log marginal likelihood + log hyperprior
/// (Gamma on λ, plus the log-scale Jacobian).
pub fn minnesota_log_target(
    lambda1: f64,
    lambda2: f64,
    scales: &[f64],
    p: usize,
    stats: &[RegressionStats],
    hyper: &MinnesotaHyper,
) -> Result<f64> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for (eq, s) in stats.iter().enumerate() {
        let v = minnesota_prior_variances(lambda1, lambda2, scales, p, eq, hyper.covariance_var);
        total += s.log_marginal(&v)?;
    }
    for l in [lambda1, lambda2] {
        total += hyper.shape * l.ln() - hyper.rate * l;
    }
    Ok(total)
}

/// One random-walk MH step on (log λ1, log λ2) with step `state.tuning.step`.
pub fn update_minnesota<R: Rng + ?Sized>(
    state: &mut MinnesotaState,
    p: usize,
    stats: &[RegressionStats],
    hyper: &MinnesotaHyper,
    rng: &mut R,
) -> Result<bool> {
    let step = state.tuning.step;
    let l1 = state.lambda1 * (step * std_normal(rng)).exp();
    let l2 = state.lambda2 * (step * std_normal(rng)).exp();
    let ratio = if l1 == state.lambda1 && l2 == state.lambda2 {
        0.0
    } else {
        minnesota_log_target(l1, l2, &state.scales, p, stats, hyper)?
            - minnesota_log_target(state.lambda1, state.lambda2, &state.scales, p, stats, hyper)?
    };
    let accepted = mh_accept(ratio, rng);
    if accepted {
        state.lambda1 = l1;
        state.lambda2 = l2;
    }
    state.tuning.record(accepted);
    Ok(accepted)
}
