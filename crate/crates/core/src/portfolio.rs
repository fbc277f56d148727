//! Minimum-variance and target-return portfolios built from predictive
//! moments, and their backtest against fixed-weight baselines.
//!
//! Weights are unrestricted in sign. There are no transaction costs.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ForecastRecord;
use crate::linalg::cholesky_jitter;

pub const TRADING_DAYS: f64 = 252.0;

/// Target daily returns used in the published comparison.
pub const DEFAULT_TARGETS: [f64; 3] = [
    0.10 / TRADING_DAYS,
    0.15 / TRADING_DAYS,
    0.30 / TRADING_DAYS,
];

/// Which branch produced a target-return portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TargetBranch {
    /// the minimum-variance portfolio already meets the target
    Slack,
    /// the return constraint binds
    Active,
    /// μ is proportional to 1; fell back to minimum variance
    Degenerate,
}

fn solve_pd(p: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if p.nrows() != p.ncols() || p.nrows() != rhs.len() || p.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}×{} covariance with {} assets",
            p.nrows(),
            p.ncols(),
            rhs.len()
        )));
    }
    Ok(cholesky_jitter(p, "portfolio covariance")?.solve(rhs))
}

/// w = P⁻¹1 / 1'P⁻¹1.
pub fn min_variance_weights(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let ones = DVector::from_element(p.nrows(), 1.0);
    let x = solve_pd(p, &ones)?;
    let a = x.sum();
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::NotPositiveDefinite("1'P⁻¹1 is not positive".into()));
    }
    Ok(x / a)
}

/// Minimum variance subject to 1'w = 1 and w'μ ≥ r_star.
pub fn target_mv_weights(
    p: &DMatrix<f64>,
    mu: &DVector<f64>,
    r_star: f64,
) -> Result<(DVector<f64>, TargetBranch)> {
    let ones = DVector::from_element(p.nrows(), 1.0);
    let pi_one = solve_pd(p, &ones)?;
    let pi_mu = solve_pd(p, mu)?;
    let a = pi_one.sum();
    let b = ones.dot(&pi_mu);
    let c = mu.dot(&pi_mu);
    let w_min = &pi_one / a;
    if w_min.dot(mu) >= r_star {
        return Ok((w_min, TargetBranch::Slack));
    }
    let d = a * c - b * b;
    // Cauchy–Schwarz gives d ≥ 0 with equality iff μ ∝ 1
    if !(d > 1e-12 * a * c.abs().max(f64::MIN_POSITIVE)) {
        log::warn!("target portfolio frontier is degenerate (mean vector proportional to ones); using minimum variance");
        return Ok((w_min, TargetBranch::Degenerate));
    }
    let la = (c - r_star * b) / d;
    let lb = (r_star * a - b) / d;
    Ok((pi_one * la + pi_mu * lb, TargetBranch::Active))
}

/// Portfolio variance w'Pw.
pub fn portfolio_variance(w: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    (w.transpose() * p * w)[(0, 0)]
}

/// Annualized Sharpe ratio with zero risk-free rate.
pub fn sharpe_ratio(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Degenerate(
            "degenerate return series: fewer than two returns".into(),
        ));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // relative guard: an all-equal series leaves only rounding noise
    if !(sd > 1e-14 * mean.abs()) || sd == 0.0 {
        return Err(Error::Degenerate(
            "degenerate return series: zero standard deviation".into(),
        ));
    }
    Ok(mean / sd * TRADING_DAYS.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub strategy: String,
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<DVector<f64>>,
    /// target-return branch per date, empty for other strategies
    pub branches: Vec<TargetBranch>,
    pub returns: Vec<f64>,
    /// `None` for a degenerate return series
    pub sharpe: Option<f64>,
}

/// r^p_t = w_t' r_t, where w_t was formed from the density predicted for date t.
pub fn backtest(
    strategy: &str,
    weight_dates: &[NaiveDate],
    weights: Vec<DVector<f64>>,
    return_dates: &[NaiveDate],
    returns: &[DVector<f64>],
) -> Result<Backtest> {
    if weight_dates != return_dates {
        return Err(Error::DateMismatch(format!(
            "weights and returns for '{strategy}' are not aligned"
        )));
    }
    if weights.len() != weight_dates.len() || returns.len() != return_dates.len() {
        return Err(Error::DimensionMismatch(
            "one weight vector and one return vector per date".into(),
        ));
    }
    let port: Vec<f64> = weights
        .iter()
        .zip(returns)
        .map(|(w, r)| {
            if w.len() != r.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} assets",
                    w.len(),
                    r.len()
                )));
            }
            Ok(w.dot(r))
        })
        .collect::<Result<_>>()?;
    let sharpe = sharpe_ratio(&port).ok();
    Ok(Backtest {
        strategy: strategy.to_string(),
        dates: weight_dates.to_vec(),
        weights,
        branches: Vec::new(),
        returns: port,
        sharpe,
    })
}

pub fn target_label(r_star: f64) -> String {
    format!("r*={:.2}/252", r_star * TRADING_DAYS)
}

pub const MIN_VARIANCE_LABEL: &str = "Min-Variance";

/// Predictive mean and covariance of the asset block of a record's mixture.
pub fn asset_moments(
    record: &ForecastRecord,
    assets: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let dim = record.density.mixture.dim();
    if let Some(bad) = assets.iter().find(|&&a| a >= dim) {
        return Err(Error::InvalidInput(format!(
            "asset index {bad} outside {dim} series"
        )));
    }
    let mean = record.density.mixture.mean();
    let cov = record.density.mixture.covariance();
    let mu = DVector::from_iterator(assets.len(), assets.iter().map(|&a| mean[a]));
    let p = DMatrix::from_fn(assets.len(), assets.len(), |i, j| {
        cov[(assets[i], assets[j])]
    });
    let r = DVector::from_iterator(assets.len(), assets.iter().map(|&a| record.realized[a]));
    Ok((mu, p, r))
}

/// Min-variance plus one target-return strategy per `r_stars` entry for one
/// model's forecast records.
pub fn model_strategies(
    records: &[ForecastRecord],
    assets: &[usize],
    r_stars: &[f64],
) -> Result<Vec<Backtest>> {
    if records.is_empty() || assets.is_empty() {
        return Err(Error::InvalidInput(
            "need forecast records and at least one asset".into(),
        ));
    }
    let dates: Vec<NaiveDate> = records.iter().map(|r| r.date).collect();
    let mut moments = Vec::with_capacity(records.len());
    for r in records {
        moments.push(asset_moments(r, assets)?);
    }
    let realized: Vec<DVector<f64>> = moments.iter().map(|m| m.2.clone()).collect();
    let min_w = moments
        .iter()
        .map(|(_, p, _)| min_variance_weights(p))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![backtest(
        MIN_VARIANCE_LABEL,
        &dates,
        min_w,
        &dates,
        &realized,
    )?];
    for &r_star in r_stars {
        let mut weights = Vec::with_capacity(records.len());
        let mut branches = Vec::with_capacity(records.len());
        for (mu, p, _) in &moments {
            let (w, b) = target_mv_weights(p, mu, r_star)?;
            weights.push(w);
            branches.push(b);
        }
        let mut bt = backtest(&target_label(r_star), &dates, weights, &dates, &realized)?;
        bt.branches = branches;
        out.push(bt);
    }
    Ok(out)
}

/// Equal weights 1/n and a single-asset holding of `assets[lead]`.
pub fn baselines(
    dates: &[NaiveDate],
    realized: &[DVector<f64>],
    lead: usize,
    lead_name: &str,
) -> Result<(Backtest, Backtest)> {
    let n = realized.first().map(|r| r.len()).unwrap_or(0);
    if n == 0 || lead >= n {
        return Err(Error::InvalidInput(format!(
            "lead asset {lead} outside {n} assets"
        )));
    }
    let equal = vec![DVector::from_element(n, 1.0 / n as f64); realized.len()];
    let mut single = DVector::zeros(n);
    single[lead] = 1.0;
    let only = vec![single; realized.len()];
    Ok((
        backtest("Equal weights", dates, equal, dates, realized)?,
        backtest(&format!("only {lead_name}"), dates, only, dates, realized)?,
    ))
}
