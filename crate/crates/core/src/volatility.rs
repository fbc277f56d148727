//! Stochastic volatility and Student-t scale-mixture blocks.
//!
//! Log-volatility follows h_t = μ + ρ(h_{t−1} − μ) + ς ν_t with a stationary
//! start. The path is drawn through the auxiliary-mixture linearization
//! log(η²/φ) = h + log χ²₁, approximating log χ²₁ by a ten-component
//! Gaussian mixture, then forward-filtering backward-sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{sample_gamma, sample_inverse_gamma, std_normal};

/// Ten-component approximation to the log χ²₁ density (Omori, Chib,
/// Shephard & Nakajima, 2007): (weight, mean, variance).
pub const LOG_CHI2_MIXTURE: [(f64, f64, f64); 10] = [
    (0.00609, 1.92677, 0.11265),
    (0.04775, 1.34744, 0.17788),
    (0.13057, 0.73504, 0.26768),
    (0.20674, 0.02266, 0.40611),
    (0.22715, -0.85173, 0.62699),
    (0.18842, -1.97278, 0.98583),
    (0.12047, -3.46788, 1.57469),
    (0.05591, -5.55246, 2.54498),
    (0.01575, -8.68384, 4.16591),
    (0.00115, -14.65000, 7.33342),
];

/// Relative offset added to squared residuals before taking logs.
pub const LOG_SQ_OFFSET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvPrior {
    pub mu_mean: f64,
    pub mu_var: f64,
    /// Beta prior on (ρ + 1)/2
    pub rho_a: f64,
    pub rho_b: f64,
    /// Gamma(shape, rate) prior on ς
    pub sigma_shape: f64,
    pub sigma_rate: f64,
}

impl Default for SvPrior {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 100.0,
            rho_a: 25.0,
            rho_b: 5.0,
            sigma_shape: 0.5,
            sigma_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvState {
    pub h: Vec<f64>,
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl SvState {
    pub fn new(h: Vec<f64>, mu: f64, rho: f64, sigma: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|rho| = {} must be < 1",
                rho.abs()
            )));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {sigma} must be > 0"
            )));
        }
        Ok(Self { h, mu, rho, sigma })
    }

    /// Flat start at level `mu`.
    pub fn initial(n: usize, mu: f64) -> Self {
        Self {
            h: vec![mu; n],
            mu,
            rho: 0.9,
            sigma: 0.2,
        }
    }
}

/// Random-walk Metropolis tuning for the (atanh ρ, log ς) update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhTuning {
    pub step: f64,
    pub accepted: u64,
    pub proposed: u64,
}

impl MhTuning {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Nudge the step toward 20–40% acceptance and reset the counters.
    pub fn adapt(&mut self) {
        if self.proposed < 20 {
            return;
        }
        let rate = self.acceptance_rate();
        if rate < 0.2 {
            self.step *= 0.8;
        } else if rate > 0.4 {
            self.step *= 1.25;
        }
        self.step = self.step.clamp(1e-4, 5.0);
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// log(η²/φ + c) with c = LOG_SQ_OFFSET × sample variance of η/√φ.
pub fn log_squared_residuals(eta: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = eta.len();
    let scaled: Vec<f64> = eta.iter().zip(phi).map(|(e, f)| e * e / f).collect();
    let mean_sq = scaled.iter().sum::<f64>() / n.max(1) as f64;
    let mean = eta.iter().zip(phi).map(|(e, f)| e / f.sqrt()).sum::<f64>() / n.max(1) as f64;
    let var = (mean_sq - mean * mean).max(0.0);
    let offset = (LOG_SQ_OFFSET * var).max(f64::MIN_POSITIVE);
    scaled.iter().map(|s| (s + offset).ln()).collect()
}

/// Mixture-component indicators given the current log-volatility path.
pub fn draw_mixture_indicators<R: Rng + ?Sized>(ystar: &[f64], h: &[f64], rng: &mut R) -> Vec<u8> {
    let mut logw = [0.0f64; 10];
    ystar
        .iter()
        .zip(h)
        .map(|(y, ht)| {
            let d = y - ht;
            let mut max = f64::NEG_INFINITY;
            for (c, (w, m, v)) in LOG_CHI2_MIXTURE.iter().enumerate() {
                let e = d - m;
                logw[c] = w.ln() - 0.5 * v.ln() - 0.5 * e * e / v;
                max = max.max(logw[c]);
            }
            let mut total = 0.0;
            for lw in logw.iter_mut() {
                *lw = (*lw - max).exp();
                total += *lw;
            }
            let mut u = rng.random::<f64>() * total;
            for (c, w) in logw.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    return c as u8;
                }
            }
            9
        })
        .collect()
}

/// Forward-filtering backward-sampling of h given the mixture indicators.
pub fn draw_log_vol_given_indicators<R: Rng + ?Sized>(
    ystar: &[f64],
    indicators: &[u8],
    mu: f64,
    rho: f64,
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = ystar.len();
    let s2 = sigma * sigma;
    let mut filt_mean = vec![0.0; n];
    let mut filt_var = vec![0.0; n];
    let mut pred_mean = mu;
    let mut pred_var = s2 / (1.0 - rho * rho);
    for t in 0..n {
        let (_, cm, cv) = LOG_CHI2_MIXTURE[indicators[t] as usize];
        let obs = ystar[t] - cm;
        let f = pred_var + cv;
        let gain = pred_var / f;
        let m = pred_mean + gain * (obs - pred_mean);
        let v = (pred_var * cv / f).max(0.0);
        filt_mean[t] = m;
        filt_var[t] = v;
        pred_mean = mu + rho * (m - mu);
        pred_var = rho * rho * v + s2;
    }
    let mut h = vec![0.0; n];
    if n == 0 {
        return h;
    }
    h[n - 1] = filt_mean[n - 1] + filt_var[n - 1].sqrt() * std_normal(rng);
    for t in (0..n - 1).rev() {
        let pv = rho * rho * filt_var[t] + s2;
        let (mean, var) = if pv > 0.0 {
            let j = rho * filt_var[t] / pv;
            let mean = filt_mean[t] + j * (h[t + 1] - mu - rho * (filt_mean[t] - mu));
            (mean, (filt_var[t] - j * rho * filt_var[t]).max(0.0))
        } else {
            (filt_mean[t], filt_var[t])
        };
        h[t] = mean + var.sqrt() * std_normal(rng);
    }
    h
}

/// New log-volatility path from its full conditional under the mixture
/// approximation: indicators | h, then h | indicators.
pub fn sample_sv_path<R: Rng + ?Sized>(
    log_sq_resid: &[f64],
    state: &SvState,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if log_sq_resid.len() != state.h.len() {
        return Err(Error::DimensionMismatch(
            "log-volatility path length".into(),
        ));
    }
    if let Some(v) = log_sq_resid.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite log squared residual {v}"
        )));
    }
    let ind = draw_mixture_indicators(log_sq_resid, &state.h, rng);
    Ok(draw_log_vol_given_indicators(
        log_sq_resid,
        &ind,
        state.mu,
        state.rho,
        state.sigma,
        rng,
    ))
}

/// log p(h | μ, ρ, ς) + log prior(ρ, ς) + log Jacobian of (atanh ρ, log ς).
pub fn sv_params_log_target(h: &[f64], mu: f64, rho: f64, sigma: f64, prior: &SvPrior) -> f64 {
    if !(rho.abs() < 1.0) || !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let s2 = sigma * sigma;
    let mut ll = 0.0;
    if let Some(&h0) = h.first() {
        let v0 = s2 / (1.0 - rho * rho);
        ll += -0.5 * v0.ln() - 0.5 * (h0 - mu) * (h0 - mu) / v0;
        let mut ss = 0.0;
        for w in h.windows(2) {
            let e = w[1] - mu - rho * (w[0] - mu);
            ss += e * e;
        }
        ll += -0.5 * (h.len() - 1) as f64 * s2.ln() - 0.5 * ss / s2;
    }
    let u = 0.5 * (1.0 + rho);
    let lp_rho = (prior.rho_a - 1.0) * u.ln() + (prior.rho_b - 1.0) * (1.0 - u).ln();
    let lp_sigma = (prior.sigma_shape - 1.0) * sigma.ln() - prior.sigma_rate * sigma;
    let log_jac = (1.0 - rho * rho).ln() + sigma.ln();
    ll + lp_rho + lp_sigma + log_jac
}

/// Conjugate draw of μ given (h, ρ, ς).
pub fn draw_sv_mu<R: Rng + ?Sized>(
    h: &[f64],
    rho: f64,
    sigma: f64,
    prior: &SvPrior,
    rng: &mut R,
) -> f64 {
    let s2 = sigma * sigma;
    let mut prec = 1.0 / prior.mu_var;
    let mut num = prior.mu_mean / prior.mu_var;
    if let Some(&h0) = h.first() {
        let w0 = (1.0 - rho * rho) / s2;
        prec += w0;
        num += w0 * h0;
        let c = (1.0 - rho) * (1.0 - rho) / s2;
        for w in h.windows(2) {
            prec += c;
            num += (1.0 - rho) * (w[1] - rho * w[0]) / s2;
        }
    }
    num / prec + std_normal(rng) / prec.sqrt()
}

/// One update of (μ, ρ, ς): conjugate μ step, then joint random-walk MH on
/// (atanh ρ, log ς). Returns the new parameters and whether the MH proposal
/// was accepted. An empty `h` samples from the prior.
pub fn sample_sv_params<R: Rng + ?Sized>(
    h: &[f64],
    current: (f64, f64, f64),
    prior: &SvPrior,
    step: f64,
    rng: &mut R,
) -> Result<((f64, f64, f64), bool)> {
    let (_, rho, sigma) = current;
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "current |rho| = {} >= 1",
            rho.abs()
        )));
    }
    let mu = draw_sv_mu(h, rho, sigma, prior, rng);
    let prop_rho = (rho.atanh() + step * std_normal(rng)).tanh();
    let prop_sigma = (sigma.ln() + step * std_normal(rng)).exp();
    let accepted = mh_accept(
        sv_params_log_target(h, mu, prop_rho, prop_sigma, prior)
            - sv_params_log_target(h, mu, rho, sigma, prior),
        rng,
    );
    Ok(if accepted {
        ((mu, prop_rho, prop_sigma), true)
    } else {
        ((mu, rho, sigma), false)
    })
}

/// Ancillarity-sufficiency interweaving for (μ, ς).
///
/// Writes h = μ + ς h̃ and redraws (μ, ς) given the standardized path h̃ and
/// fresh mixture indicators, where the pair enters the observation equation
/// y*_t − m_t = μ + ς h̃_t + e_t linearly. ς is extended to the real line
/// with the symmetric prior ½ p(|ς|); the Gaussian posterior under a flat ς
/// prior is the proposal, so the acceptance ratio is the prior ratio.
/// A negative draw flips the sign of h̃, leaving h = μ + ς h̃ valid.
/// Returns whether the proposal was accepted. The centered update mixes
/// poorly when ς is small; this step does not.
pub fn interweave_sv<R: Rng + ?Sized>(
    log_sq_resid: &[f64],
    state: &mut SvState,
    prior: &SvPrior,
    rng: &mut R,
) -> bool {
    let n = state.h.len();
    if n < 2 || log_sq_resid.len() != n {
        return false;
    }
    let ind = draw_mixture_indicators(log_sq_resid, &state.h, rng);
    let std_path: Vec<f64> = state
        .h
        .iter()
        .map(|h| (h - state.mu) / state.sigma)
        .collect();
    // normal equations for (μ, ς)
    let (mut a11, mut a12, mut a22) = (1.0 / prior.mu_var, 0.0, 0.0);
    let (mut b1, mut b2) = (prior.mu_mean / prior.mu_var, 0.0);
    for t in 0..n {
        let (_, cm, cv) = LOG_CHI2_MIXTURE[ind[t] as usize];
        let y = log_sq_resid[t] - cm;
        let x = std_path[t];
        a11 += 1.0 / cv;
        a12 += x / cv;
        a22 += x * x / cv;
        b1 += y / cv;
        b2 += x * y / cv;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 0.0) {
        return false;
    }
    let mean_mu = (a22 * b1 - a12 * b2) / det;
    let mean_sigma = (a11 * b2 - a12 * b1) / det;
    // Cholesky of the covariance inverse(A) = [a22, −a12; −a12, a11] / det
    let l11 = (a22 / det).sqrt();
    let l21 = -a12 / det / l11;
    let l22 = (a11 / det - l21 * l21).max(0.0).sqrt();
    let (z1, z2) = (std_normal(rng), std_normal(rng));
    let new_mu = mean_mu + l11 * z1;
    let new_sigma = mean_sigma + l21 * z1 + l22 * z2;
    let log_prior = |s: f64| (prior.sigma_shape - 1.0) * s.abs().ln() - prior.sigma_rate * s.abs();
    if new_sigma == 0.0 || !mh_accept(log_prior(new_sigma) - log_prior(state.sigma), rng) {
        return false;
    }
    for (h, x) in state.h.iter_mut().zip(&std_path) {
        *h = new_mu + new_sigma * x;
    }
    state.mu = new_mu;
    state.sigma = new_sigma.abs();
    true
}

/// Metropolis accept/reject on a log acceptance ratio.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// Shape and rate of the inverse-Gamma full conditional of φ_t.
#[inline]
pub fn phi_posterior_params(eta: f64, h: f64, dof: f64) -> (f64, f64) {
    ((dof + 1.0) / 2.0, (dof + eta * eta * (-h).exp()) / 2.0)
}

/// Independent inverse-Gamma draws of the latent t-error scales.
pub fn sample_phi<R: Rng + ?Sized>(
    eta: &[f64],
    h: &[f64],
    dof: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if eta.len() != h.len() {
        return Err(Error::DimensionMismatch(
            "residual and volatility lengths differ".into(),
        ));
    }
    if !(dof > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom {dof} must be > 0"
        )));
    }
    eta.iter()
        .zip(h)
        .map(|(&e, &ht)| {
            let (shape, rate) = phi_posterior_params(e, ht, dof);
            sample_inverse_gamma(shape, rate, rng)
        })
        .collect()
}

/// Bounds of the uniform prior on the degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for DofBounds {
    fn default() -> Self {
        Self {
            lower: 2.0,
            upper: 20.0,
        }
    }
}

impl DofBounds {
    pub fn contains(&self, v: f64) -> bool {
        v > self.lower && v < self.upper
    }
}

/// Sufficient statistics of φ for the degrees-of-freedom update.
#[derive(Debug, Clone, Copy)]
pub struct PhiStats {
    n: f64,
    sum_log: f64,
    sum_inv: f64,
}

impl PhiStats {
    pub fn new(phi: &[f64]) -> Self {
        Self {
            n: phi.len() as f64,
            sum_log: phi.iter().map(|f| f.ln()).sum(),
            sum_inv: phi.iter().map(|f| 1.0 / f).sum(),
        }
    }

    /// Σ_t log IG(φ_t; v/2, v/2).
    pub fn log_likelihood(&self, v: f64) -> f64 {
        let half = 0.5 * v;
        self.n * (half * half.ln() - ln_gamma(half))
            - (half + 1.0) * self.sum_log
            - half * self.sum_inv
    }
}

/// Metropolis–Hastings acceptance probability for moving `current → proposal`
/// under the uniform independence proposal.
pub fn dof_acceptance(stats: &PhiStats, bounds: &DofBounds, current: f64, proposal: f64) -> f64 {
    if !bounds.contains(proposal) {
        return 0.0;
    }
    if proposal == current {
        return 1.0;
    }
    (stats.log_likelihood(proposal) - stats.log_likelihood(current))
        .exp()
        .min(1.0)
}

/// Independence MH update of v with a uniform proposal over the prior support.
pub fn sample_dof<R: Rng + ?Sized>(
    phi: &[f64],
    bounds: &DofBounds,
    current: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if let Some(f) = phi.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "scale {f} must be positive"
        )));
    }
    let stats = PhiStats::new(phi);
    let proposal = bounds.lower + (bounds.upper - bounds.lower) * rng.random::<f64>();
    let alpha = dof_acceptance(&stats, bounds, current, proposal);
    if rng.random::<f64>() < alpha {
        Ok((proposal, true))
    } else {
        Ok((current, false))
    }
}

/// Draw φ from its prior IG(v/2, v/2).
pub fn sample_phi_prior<R: Rng + ?Sized>(dof: f64, rng: &mut R) -> Result<f64> {
    sample_inverse_gamma(dof / 2.0, dof / 2.0, rng)
}

/// Draw ς from its Gamma prior.
pub fn sample_sigma_prior<R: Rng + ?Sized>(prior: &SvPrior, rng: &mut R) -> Result<f64> {
    sample_gamma(prior.sigma_shape, prior.sigma_rate, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixture_table_matches_log_chi2_moments() {
        let wsum: f64 = LOG_CHI2_MIXTURE.iter().map(|c| c.0).sum();
        assert!((wsum - 1.0).abs() < 1e-4);
        let mean: f64 = LOG_CHI2_MIXTURE.iter().map(|c| c.0 * c.1).sum();
        let second: f64 = LOG_CHI2_MIXTURE
            .iter()
            .map(|c| c.0 * (c.2 + c.1 * c.1))
            .sum();
        // E log χ²₁ = ψ(1/2) + ln 2, Var = π²/2
        assert!((mean + 1.2704).abs() < 2e-3);
        assert!((second - mean * mean - std::f64::consts::PI.powi(2) / 2.0).abs() < 0.02);
    }

    #[test]
    fn degenerate_sigma_pins_path_at_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ystar: Vec<f64> = (0..50).map(|t| (t as f64).sin() * 3.0 - 2.0).collect();
        let state = SvState {
            h: vec![-1.0; 50],
            mu: -1.0,
            rho: 0.5,
            sigma: 1e-9,
        };
        let h = sample_sv_path(&ystar, &state, &mut rng).unwrap();
        assert!(h.iter().all(|v| (v + 1.0).abs() < 1e-6));
    }

    #[test]
    fn rho_outside_unit_interval_has_zero_target() {
        let h = vec![0.1, 0.2, 0.0];
        let prior = SvPrior::default();
        assert_eq!(
            sv_params_log_target(&h, 0.0, 1.0, 0.3, &prior),
            f64::NEG_INFINITY
        );
        assert_eq!(
            sv_params_log_target(&h, 0.0, -1.2, 0.3, &prior),
            f64::NEG_INFINITY
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert!(!mh_accept(f64::NEG_INFINITY, &mut rng));
        }
        assert!(sample_sv_params(&h, (0.0, 1.0, 0.3), &prior, 0.1, &mut rng).is_err());
    }

    #[test]
    fn phi_shape_transcription() {
        for &(v, e, h) in &[(3.5, 0.2, -1.0), (10.0, -1.3, 0.4), (19.0, 0.0, 2.0)] {
            let (shape, rate) = phi_posterior_params(e, h, v);
            assert_eq!(shape, (v + 1.0) / 2.0);
            assert!((rate - (v + e * e * (-h as f64).exp()) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dof_mh_identities() {
        let phi = vec![0.8, 1.3, 0.5, 2.2];
        let stats = PhiStats::new(&phi);
        let b = DofBounds::default();
        assert_eq!(dof_acceptance(&stats, &b, 7.0, 7.0), 1.0);
        assert_eq!(dof_acceptance(&stats, &b, 7.0, 1.5), 0.0);
        assert_eq!(dof_acceptance(&stats, &b, 7.0, 25.0), 0.0);
        assert_eq!(dof_acceptance(&stats, &b, 7.0, 20.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (v, _) = sample_dof(&phi, &b, 7.0, &mut rng).unwrap();
            assert!(b.contains(v));
        }
    }

    #[test]
    fn tuning_moves_toward_target_band() {
        let mut t = MhTuning::new(1.0);
        for _ in 0..100 {
            t.record(false);
        }
        t.adapt();
        assert!(t.step < 1.0);
        for _ in 0..100 {
            t.record(true);
        }
        let before = t.step;
        t.adapt();
        assert!(t.step > before);
    }

    #[test]
    fn log_squared_residuals_are_finite_at_zero() {
        let eta = vec![0.0, 1.0, -2.0, 0.5];
        let out = log_squared_residuals(&eta, &[1.0; 4]);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
