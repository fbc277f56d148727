//! Kolmogorov–Smirnov tests and the getting-it-right simulation check of the
//! Gibbs sampler (Geweke, 2004).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{sample_prior_state, simulate_given_state, ChainState, ModelSpec, Sampler};

/// Asymptotic Kolmogorov tail probability P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample KS test against a continuous CDF: (statistic, p-value).
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    (d, ks_p_value(d, n))
}

/// Two-sample KS test: (statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    (d, ks_p_value(d, n_eff))
}

#[derive(Debug, Clone, Copy)]
pub struct GirSettings {
    pub m: usize,
    /// effective observations per simulated data set
    pub n: usize,
    pub samples: usize,
    /// Gibbs/data alternations between recorded successive-conditional samples
    pub inner: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GirResult {
    pub names: Vec<&'static str>,
    pub marginal: Vec<Vec<f64>>,
    pub successive: Vec<Vec<f64>>,
    pub p_values: Vec<f64>,
}

/// Statistics tracked by the check: β0 and √ϑ of the first regressor in the
/// first equation, and that equation's ρ, ς and v.
pub fn tracked_statistics(state: &ChainState) -> Vec<f64> {
    let e = &state.equations[0];
    vec![
        e.beta0.first().copied().unwrap_or(0.0),
        e.sqrt_theta.first().copied().unwrap_or(0.0),
        e.sv.rho,
        e.sv.sigma,
        e.dof.unwrap_or(0.0),
    ]
}

pub const TRACKED_NAMES: [&str; 5] = ["beta0", "sqrt_theta", "rho", "sigma", "dof"];

/// Compare draws from the prior (marginal-conditional simulator) with the
/// chain that alternates Gibbs sweeps and data simulation
/// (successive-conditional simulator).
pub fn getting_it_right(spec: &ModelSpec, settings: &GirSettings) -> Result<GirResult> {
    if settings.samples == 0 || settings.inner == 0 {
        return Err(Error::InvalidParameter(
            "samples and inner must be positive".into(),
        ));
    }
    let p = spec.lags();
    let presample = DMatrix::zeros(p, settings.m);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let n_stats = TRACKED_NAMES.len();
    let mut marginal = vec![Vec::with_capacity(settings.samples); n_stats];
    for _ in 0..settings.samples {
        let state = sample_prior_state(spec, settings.m, settings.n, &mut rng)?;
        for (s, v) in tracked_statistics(&state).into_iter().enumerate() {
            marginal[s].push(v);
        }
    }

    let mut successive = vec![Vec::with_capacity(settings.samples); n_stats];
    let mut state = sample_prior_state(spec, settings.m, settings.n, &mut rng)?;
    let mut data = simulate_given_state(spec, &state, &presample, &mut rng)?;
    for _ in 0..settings.samples {
        for _ in 0..settings.inner {
            let mut sampler = Sampler::with_state(&data, spec, state)?;
            sampler.sweep(&mut rng, false)?;
            state = sampler.into_state();
            data = simulate_given_state(spec, &state, &presample, &mut rng)?;
        }
        for (s, v) in tracked_statistics(&state).into_iter().enumerate() {
            successive[s].push(v);
        }
    }
    let p_values = marginal
        .iter()
        .zip(&successive)
        .map(|(a, b)| ks_two_sample(a, b).1)
        .collect();
    Ok(GirResult {
        names: TRACKED_NAMES.to_vec(),
        marginal,
        successive,
        p_values,
    })
}
