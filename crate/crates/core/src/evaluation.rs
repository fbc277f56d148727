//! Expanding-window forecasting and density-forecast scoring.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::error::{Error, Result};
use crate::kernels::{
    mixture_cdf_univariate, mixture_marginal, std_normal_cdf, std_normal_quantile,
};
use crate::models::{
    joint_and_marginal_logscore, predict_one_step, run_chain, Family, ModelSpec, PredictiveDensity,
};

/// CDF values are clipped to this distance from 0 and 1 before Φ⁻¹.
pub const PIT_CLAMP: f64 = 1e-12;

/// Human-readable statement of [`window_seed`], written into run metadata.
pub const WINDOW_SEED_RULE: &str = "seed = fold(splitmix64, master_seed, [window_index, bytes(model_tag)...]) \
     where fold starts from splitmix64(master_seed) and applies h <- splitmix64(h xor x) per element; \
     the predictive draw stream uses splitmix64(seed xor 0x5052454449435421)";

const PREDICT_SALT: u64 = 0x5052_4544_4943_5421;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chain seed for one (model, window) job.
pub fn window_seed(master: u64, window: usize, family: Family) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ window as u64);
    for b in family.tag().bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// 0-based position inside the hold-out
    pub window: usize,
    pub date: NaiveDate,
    pub model: Family,
    /// rows used for estimation
    pub train_rows: usize,
    pub seed: u64,
    pub density: PredictiveDensity,
    pub realized: DVector<f64>,
}

/// Smallest estimation sample a chain accepts.
pub fn min_training_rows(spec: &ModelSpec) -> usize {
    spec.lags() + 11
}

fn check_holdout(panel: &Panel, spec: &ModelSpec, holdout: usize) -> Result<()> {
    if holdout == 0 {
        return Err(Error::InvalidInput(
            "hold-out must contain at least one date".into(),
        ));
    }
    let need = holdout + min_training_rows(spec);
    if panel.len() < need {
        return Err(Error::InvalidInput(format!(
            "panel has {} rows; hold-out {holdout} needs at least {need}",
            panel.len()
        )));
    }
    Ok(())
}

/// Estimate on every row before hold-out position `window` and predict that row.
pub fn forecast_window(
    panel: &Panel,
    spec: &ModelSpec,
    holdout: usize,
    window: usize,
) -> Result<ForecastRecord> {
    check_holdout(panel, spec, holdout)?;
    if window >= holdout {
        return Err(Error::InvalidInput(format!(
            "window {window} outside hold-out of {holdout}"
        )));
    }
    let train = panel.len() - holdout + window;
    let seed = window_seed(spec.seed, window, spec.family);
    let wrap = |e: Error| Error::Window {
        window,
        source: Box::new(e),
    };

    let data: DMatrix<f64> = panel.values().rows(0, train).into_owned();
    let mut job = spec.clone();
    job.seed = seed;
    let chain = run_chain(&data, &job).map_err(wrap)?;
    let p = spec.lags();
    let tail = data.rows(train - p, p).into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ PREDICT_SALT));
    let date = panel.dates()[train];
    let density = predict_one_step(&chain, &tail, Some(date), &mut rng).map_err(wrap)?;
    let realized = panel.values().row(train).transpose();
    Ok(ForecastRecord {
        window,
        date,
        model: spec.family,
        train_rows: train,
        seed,
        density,
        realized,
    })
}

/// One record per hold-out date, windows run on the current rayon pool.
/// The result does not depend on the pool size.
pub fn expanding_window_run(
    panel: &Panel,
    spec: &ModelSpec,
    holdout: usize,
) -> Result<Vec<ForecastRecord>> {
    check_holdout(panel, spec, holdout)?;
    let results: Vec<Result<ForecastRecord>> = (0..holdout)
        .into_par_iter()
        .map(|w| forecast_window(panel, spec, holdout, w))
        .collect();
    // report the earliest failing window whatever order they finished in
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub estimate: f64,
    pub t_stat: f64,
    /// two-sided, asymptotic normal
    pub p_value: f64,
}

fn normal_test(estimate: f64, null: f64, se: f64) -> TestResult {
    let t_stat = (estimate - null) / se;
    TestResult {
        estimate,
        t_stat,
        p_value: 2.0 * std_normal_cdf(-t_stat.abs()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitTests {
    /// E[z] = 0
    pub mean: TestResult,
    /// E[z²] = 1
    pub variance: TestResult,
    /// AR(1) slope = 0
    pub persistence: TestResult,
}

pub const PIT_MIN_LENGTH: usize = 30;

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Regression tests on normalized forecast errors with plain OLS standard errors.
pub fn pit_tests(z: &[f64]) -> Result<PitTests> {
    if z.len() < PIT_MIN_LENGTH {
        return Err(Error::InvalidInput(format!(
            "PIT tests need {PIT_MIN_LENGTH} values, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite z value".into()));
    }
    let (m, se_m) = mean_and_se(z);
    let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    let (v, se_v) = mean_and_se(&sq);
    if !(se_m > 0.0) || !(se_v > 0.0) {
        return Err(Error::Degenerate("constant z series".into()));
    }

    let x = &z[..z.len() - 1];
    let y = &z[1..];
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("constant lagged z series".into()));
    }
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - ym - slope * (a - xm)).powi(2))
        .sum();
    let se_slope = (rss / (n - 2.0) / sxx).sqrt();

    Ok(PitTests {
        mean: normal_test(m, 0.0, se_m),
        variance: normal_test(v, 1.0, se_v),
        persistence: normal_test(slope, 0.0, se_slope),
    })
}

/// Jarque–Bera statistic and its χ²(2) p-value.
pub fn jarque_bera(z: &[f64]) -> Result<(f64, f64)> {
    let n = z.len() as f64;
    if z.len() < 3 {
        return Err(Error::InvalidInput(
            "Jarque-Bera needs at least 3 values".into(),
        ));
    }
    let mean = z.iter().sum::<f64>() / n;
    let m2 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("constant series".into()));
    }
    let m3 = z.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = z.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    Ok((jb, (-jb / 2.0).exp()))
}

/// Φ⁻¹ of a CDF value after clipping to [PIT_CLAMP, 1 − PIT_CLAMP].
pub fn normalize_pit(u: f64) -> f64 {
    std_normal_quantile(u.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP))
}

pub fn pit_z_series(records: &[ForecastRecord], target: usize) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let marginal = mixture_marginal(&r.density.mixture, &[target])?;
            let u = mixture_cdf_univariate(&marginal, r.realized[target])?;
            Ok(normalize_pit(u))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: Family,
    pub targets: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub joint_lps: f64,
    pub marginal_lps: Vec<f64>,
    pub rmse: Vec<f64>,
    /// per-date joint log score
    pub joint_scores: Vec<f64>,
    /// `marginal_scores[target][date]`
    pub marginal_scores: Vec<Vec<f64>>,
    /// `pit_z[target][date]`
    pub pit_z: Vec<Vec<f64>>,
    /// `None` when the series is too short or degenerate
    pub pit_tests: Vec<Option<PitTests>>,
    pub jarque_bera: Vec<Option<(f64, f64)>>,
}

/// Fold records (all from one model, in date order) into scores.
pub fn score(records: &[ForecastRecord], targets: &[usize]) -> Result<EvalReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidInput("no forecast records".into()))?;
    if targets.is_empty() {
        return Err(Error::InvalidInput("no target series".into()));
    }
    let nt = targets.len();
    let mut joint_scores = Vec::with_capacity(records.len());
    let mut marginal_scores = vec![Vec::with_capacity(records.len()); nt];
    let mut sq_err = vec![0.0; nt];
    for r in records {
        let (joint, marg) = joint_and_marginal_logscore(&r.density, &r.realized, targets)?;
        joint_scores.push(joint);
        let mean = r.density.mixture.mean();
        for (k, &j) in targets.iter().enumerate() {
            marginal_scores[k].push(marg[k]);
            sq_err[k] += (r.realized[j] - mean[j]).powi(2);
        }
    }
    let n = records.len() as f64;
    let pit_z = targets
        .iter()
        .map(|&j| pit_z_series(records, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        model: first.model,
        targets: targets.to_vec(),
        dates: records.iter().map(|r| r.date).collect(),
        joint_lps: joint_scores.iter().sum(),
        marginal_lps: marginal_scores.iter().map(|s| s.iter().sum()).collect(),
        rmse: sq_err.iter().map(|s| (s / n).sqrt()).collect(),
        joint_scores,
        marginal_scores,
        pit_tests: pit_z.iter().map(|z| pit_tests(z).ok()).collect(),
        jarque_bera: pit_z.iter().map(|z| jarque_bera(z).ok()).collect(),
        pit_z,
    })
}

/// Cumulative log predictive Bayes factor of `a` against `b`, date by date.
pub fn bayes_factor_series(a: &EvalReport, b: &EvalReport) -> Result<Vec<f64>> {
    if a.dates != b.dates {
        return Err(Error::DateMismatch(format!(
            "{} has {} dates, {} has {}",
            a.model,
            a.dates.len(),
            b.model,
            b.dates.len()
        )));
    }
    let mut acc = 0.0;
    Ok(a.joint_scores
        .iter()
        .zip(&b.joint_scores)
        .map(|(x, y)| {
            acc += x - y;
            acc
        })
        .collect())
}

/// Same as [`bayes_factor_series`] for the marginal score of target slot `k`.
pub fn marginal_bayes_factor_series(a: &EvalReport, b: &EvalReport, k: usize) -> Result<Vec<f64>> {
    if a.dates != b.dates {
        return Err(Error::DateMismatch(format!(
            "{} and {} cover different dates",
            a.model, b.model
        )));
    }
    let (sa, sb) = match (a.marginal_scores.get(k), b.marginal_scores.get(k)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::InvalidInput(format!("target slot {k} missing"))),
    };
    let mut acc = 0.0;
    Ok(sa
        .iter()
        .zip(sb)
        .map(|(x, y)| {
            acc += x - y;
            acc
        })
        .collect())
}
