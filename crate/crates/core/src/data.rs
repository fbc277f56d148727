//! Panel ingestion, log-return transform, and synthetic data generation.
//!
//! CSV dialect: comma separated, header row mandatory, ISO-8601 dates
//! (`YYYY-MM-DD`) in the first written column, `.` decimal point. Values are
//! written in shortest round-trip form so save/load is bit-exact.

use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sample_inverse_gamma, std_normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    dates: Vec<NaiveDate>,
    /// T×m, one row per date
    values: DMatrix<f64>,
    names: Vec<String>,
    target_indices: Vec<usize>,
}

impl Panel {
    pub fn new(
        dates: Vec<NaiveDate>,
        values: DMatrix<f64>,
        names: Vec<String>,
        target_indices: Vec<usize>,
    ) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates for {} rows",
                dates.len(),
                values.nrows()
            )));
        }
        if values.ncols() == 0 || names.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if let Some(row) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneDates {
                row: row + 1,
                date: dates[row + 1].to_string(),
            });
        }
        for (r, row) in values.row_iter().enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingCell {
                    row: r,
                    column: names[c].clone(),
                });
            }
        }
        let mut seen = vec![false; values.ncols()];
        for &t in &target_indices {
            if t >= values.ncols() || seen[t] {
                return Err(Error::InvalidInput(format!(
                    "target index {t} is duplicated or out of bounds"
                )));
            }
            seen[t] = true;
        }
        Ok(Self {
            dates,
            values,
            names,
            target_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_indices
    }

    pub fn with_targets(mut self, targets: Vec<usize>) -> Result<Self> {
        self.target_indices = targets;
        Self::new(self.dates, self.values, self.names, self.target_indices)
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Panel {
        let n = n.min(self.len());
        Panel {
            dates: self.dates[..n].to_vec(),
            values: self.values.rows(0, n).into_owned(),
            names: self.names.clone(),
            target_indices: self.target_indices.clone(),
        }
    }

    /// Log-return panel: drops the first date, row t is ln p_{t+1} − ln p_t.
    pub fn log_returns(&self) -> Result<Panel> {
        let values = to_log_returns(&self.values)?;
        Panel::new(
            self.dates[1..].to_vec(),
            values,
            self.names.clone(),
            self.target_indices.clone(),
        )
    }
}

/// Column mapping for [`load_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub date_column: String,
    pub value_columns: Vec<String>,
    /// Target series names; must be a subset of `value_columns`.
    #[serde(default)]
    pub targets: Vec<String>,
}

impl PanelSchema {
    pub fn new(date_column: &str, value_columns: &[&str], targets: &[&str]) -> Self {
        Self {
            date_column: date_column.to_string(),
            value_columns: value_columns.iter().map(|s| s.to_string()).collect(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Read a panel from CSV. Missing or unparsable cells are errors, never imputed.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<Panel> {
    let path = path.as_ref();
    if schema.value_columns.is_empty() {
        return Err(Error::InvalidInput("schema names no value columns".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel(&text, schema)
}

pub fn parse_panel(text: &str, schema: &PanelSchema) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let date_idx = find(&schema.date_column)?;
    let value_idx: Vec<usize> = schema
        .value_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let targets: Vec<usize> = schema
        .targets
        .iter()
        .map(|t| {
            schema
                .value_columns
                .iter()
                .position(|c| c == t)
                .ok_or_else(|| Error::UnknownColumn(t.clone()))
        })
        .collect::<Result<_>>()?;

    let mut dates = Vec::new();
    let mut data = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let raw_date = rec.get(date_idx).map(str::trim).unwrap_or("");
        if raw_date.is_empty() {
            return Err(Error::MissingCell {
                row,
                column: schema.date_column.clone(),
            });
        }
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| Error::Csv(format!("row {row}: bad date '{raw_date}': {e}")))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::NonMonotoneDates {
                    row,
                    date: raw_date.to_string(),
                });
            }
        }
        dates.push(date);
        for (&ci, name) in value_idx.iter().zip(&schema.value_columns) {
            let cell = rec.get(ci).map(str::trim).unwrap_or("");
            if cell.is_empty()
                || cell.eq_ignore_ascii_case("na")
                || cell.eq_ignore_ascii_case("nan")
            {
                return Err(Error::MissingCell {
                    row,
                    column: name.clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!("row {row}, column '{name}': bad number '{cell}'"))
            })?;
            if !v.is_finite() {
                return Err(Error::MissingCell {
                    row,
                    column: name.clone(),
                });
            }
            data.push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    let values = DMatrix::from_row_slice(dates.len(), value_idx.len(), &data);
    Panel::new(dates, values, schema.value_columns.clone(), targets)
}

/// Serialize a panel in the documented CSV dialect.
pub fn panel_to_csv(panel: &Panel) -> String {
    let mut out = String::from("date");
    for n in panel.names() {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (t, d) in panel.dates().iter().enumerate() {
        out.push_str(&d.format("%Y-%m-%d").to_string());
        for j in 0..panel.n_series() {
            out.push(',');
            out.push_str(&format!("{:?}", panel.values()[(t, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, panel_to_csv(panel)).map_err(|e| Error::io(path, e))
}

/// Schema matching what [`save_panel`] writes.
pub fn schema_for(panel: &Panel) -> PanelSchema {
    PanelSchema {
        date_column: "date".into(),
        value_columns: panel.names().to_vec(),
        targets: panel
            .target_indices()
            .iter()
            .map(|&i| panel.names()[i].clone())
            .collect(),
    }
}

/// Row t of the output is ln p_{t+1} − ln p_t.
pub fn to_log_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if prices.nrows() < 2 {
        return Err(Error::InvalidInput("need at least two price rows".into()));
    }
    if let Some(bad) = prices.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidInput(format!("nonpositive price {bad}")));
    }
    Ok(DMatrix::from_fn(
        prices.nrows() - 1,
        prices.ncols(),
        |t, j| prices[(t + 1, j)].ln() - prices[(t, j)].ln(),
    ))
}

// ---------------------------------------------------------------------------
// Synthetic data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DgpFamily {
    /// Time-varying coefficients, SV, t errors.
    TTvp,
    /// Time-varying coefficients, SV, Gaussian errors.
    GaussianTvp,
    /// Constant coefficients, SV, Gaussian errors.
    ConstantVar,
}

/// Everything needed to generate a synthetic panel.
///
/// Coefficients are in the triangular equation-by-equation form: row `i`
/// of `beta0` holds `k_i = m p + i` entries (0-based `i`), the VAR row first
/// followed by the contemporaneous loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: DgpFamily,
    pub m: usize,
    pub p: usize,
    pub beta0: Vec<Vec<f64>>,
    pub sqrt_theta: Vec<Vec<f64>>,
    pub sv_mu: Vec<f64>,
    pub sv_rho: Vec<f64>,
    pub sv_sigma: Vec<f64>,
    /// Degrees of freedom; ignored for Gaussian families.
    pub dof: Vec<f64>,
}

impl DgpSpec {
    /// Default design: mildly persistent own lags, small cross effects,
    /// contemporaneous loadings of 0.4, random-walk drift on own lags and
    /// loadings (TVP families), persistent SV, five degrees of freedom.
    pub fn default_for(family: DgpFamily, m: usize, p: usize) -> Self {
        let mut beta0 = Vec::with_capacity(m);
        let mut sqrt_theta = Vec::with_capacity(m);
        let tv = matches!(family, DgpFamily::TTvp | DgpFamily::GaussianTvp);
        for i in 0..m {
            let k = m * p + i;
            let mut b = vec![0.0; k];
            let mut s = vec![0.0; k];
            for l in 0..p {
                for j in 0..m {
                    let idx = l * m + j;
                    let decay = 1.0 / (l + 1) as f64;
                    b[idx] = if i == j {
                        0.25 * decay * if i % 2 == 0 { 1.0 } else { -1.0 }
                    } else if j + 1 == i {
                        0.1 * decay
                    } else {
                        0.0
                    };
                    if tv && i == j {
                        s[idx] = 0.015;
                    }
                }
            }
            for j in 0..i {
                b[m * p + j] = if j + 1 == i { -0.4 } else { 0.1 };
                if tv {
                    s[m * p + j] = 0.01;
                }
            }
            beta0.push(b);
            sqrt_theta.push(s);
        }
        Self {
            family,
            m,
            p,
            beta0,
            sqrt_theta,
            sv_mu: (0..m).map(|j| -3.0 - 0.5 * (j % 3) as f64).collect(),
            sv_rho: vec![0.9; m],
            sv_sigma: vec![0.3; m],
            dof: vec![5.0; m],
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.m;
        if m == 0 || self.p == 0 {
            return Err(Error::InvalidParameter(
                "DGP needs m >= 1 and p >= 1".into(),
            ));
        }
        for v in [&self.sv_mu, &self.sv_rho, &self.sv_sigma, &self.dof] {
            if v.len() != m {
                return Err(Error::DimensionMismatch(
                    "per-equation DGP vectors must have length m".into(),
                ));
            }
        }
        if self.beta0.len() != m || self.sqrt_theta.len() != m {
            return Err(Error::DimensionMismatch(
                "coefficient rows must number m".into(),
            ));
        }
        for i in 0..m {
            let k = m * self.p + i;
            if self.beta0[i].len() != k || self.sqrt_theta[i].len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "equation {i} needs {k} coefficients"
                )));
            }
        }
        if let Some(r) = self.sv_rho.iter().find(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "nonstationary volatility: |rho| = {} >= 1",
                r.abs()
            )));
        }
        if self.sv_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "volatility scale must be >= 0".into(),
            ));
        }
        if self.family == DgpFamily::TTvp && self.dof.iter().any(|v| !(*v > 2.0 && *v <= 20.0)) {
            return Err(Error::InvalidParameter(
                "degrees of freedom must lie in (2, 20]".into(),
            ));
        }
        Ok(())
    }
}

/// Every latent behind a simulated panel, indexed by panel row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub spec: DgpSpec,
    pub seed: u64,
    /// `beta_paths[i][t]` is equation i's coefficient vector at row t.
    pub beta_paths: Vec<Vec<Vec<f64>>>,
    /// `h_paths[i][t]`
    pub h_paths: Vec<Vec<f64>>,
    /// `phi_paths[i][t]`; identically one for Gaussian families
    pub phi_paths: Vec<Vec<f64>>,
    /// Orthogonal shocks η; `eta[i][t]`
    pub eta: Vec<Vec<f64>>,
    /// hash of the run configuration that produced this file, if any
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl DgpTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub const SIM_START_DATE: (i32, u32, u32) = (2016, 11, 26);

/// Draw a panel of `t_len` rows from the reduced-form triangular model.
///
/// Presample lags are zero. Row t: y_t = A_t x_t + ε_t with
/// ε_it = −Σ_{j<i} ũ_ij,t ε_jt + η_it, η_it ~ N(0, φ_it e^{h_it}).
pub fn simulate_dgp(spec: &DgpSpec, t_len: usize, seed: u64) -> Result<(Panel, DgpTruth)> {
    spec.validate()?;
    if t_len < 50 {
        return Err(Error::InvalidInput(format!(
            "simulation length {t_len} < 50"
        )));
    }
    let (m, p) = (spec.m, spec.p);
    let mp = m * p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heavy = spec.family == DgpFamily::TTvp;
    let tv = matches!(spec.family, DgpFamily::TTvp | DgpFamily::GaussianTvp);

    // log-volatility paths
    let mut h_paths = vec![vec![0.0; t_len]; m];
    for i in 0..m {
        let (mu, rho, sig) = (spec.sv_mu[i], spec.sv_rho[i], spec.sv_sigma[i]);
        let mut h = mu + sig / (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
        for t in 0..t_len {
            if t > 0 {
                h = mu + rho * (h - mu) + sig * std_normal(&mut rng);
            }
            h_paths[i][t] = h;
        }
    }
    let mut phi_paths = vec![vec![1.0; t_len]; m];
    if heavy {
        for i in 0..m {
            let v = spec.dof[i];
            for t in 0..t_len {
                phi_paths[i][t] = sample_inverse_gamma(v / 2.0, v / 2.0, &mut rng)?;
            }
        }
    }
    // coefficient paths in the non-centered form
    let mut beta_paths = Vec::with_capacity(m);
    for i in 0..m {
        let k = mp + i;
        let mut tilde = vec![0.0; k];
        let mut path = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let mut b = spec.beta0[i].clone();
            if tv {
                for j in 0..k {
                    tilde[j] += std_normal(&mut rng);
                    b[j] += spec.sqrt_theta[i][j] * tilde[j];
                }
            }
            path.push(b);
        }
        beta_paths.push(path);
    }

    let mut eta = vec![vec![0.0; t_len]; m];
    let mut y = DMatrix::zeros(t_len, m);
    for t in 0..t_len {
        let mut eps = vec![0.0; m];
        for i in 0..m {
            let sd = (phi_paths[i][t] * h_paths[i][t].exp()).sqrt();
            let e = sd * std_normal(&mut rng);
            eta[i][t] = e;
            let b = &beta_paths[i][t];
            let mut mean = 0.0;
            for l in 0..p {
                if t > l {
                    for j in 0..m {
                        mean += b[l * m + j] * y[(t - l - 1, j)];
                    }
                }
            }
            let mut shock = e;
            for j in 0..i {
                shock -= b[mp + j] * eps[j];
            }
            eps[i] = shock;
            y[(t, i)] = mean + shock;
        }
    }

    let start = NaiveDate::from_ymd_opt(SIM_START_DATE.0, SIM_START_DATE.1, SIM_START_DATE.2)
        .expect("valid start date");
    let dates = (0..t_len)
        .map(|t| {
            start
                .checked_add_days(Days::new(t as u64))
                .expect("date in range")
        })
        .collect();
    let names = (0..m).map(|j| format!("y{}", j + 1)).collect();
    let targets = (0..m.min(3)).collect();
    let panel = Panel::new(dates, y, names, targets)?;
    let truth = DgpTruth {
        spec: spec.clone(),
        seed,
        beta_paths,
        h_paths,
        phi_paths,
        eta,
        config_hash: None,
    };
    Ok((panel, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> PanelSchema {
        PanelSchema::new("date", &["a", "b"], &["a"])
    }

    #[test]
    fn loads_small_panel() {
        let csv = "date,a,b\n2020-01-01,1.0,2.0\n2020-01-02,1.5,2.5\n2020-01-03,2.0,3.0\n";
        let p = parse_panel(csv, &schema2()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.n_series(), 2);
        assert_eq!(p.target_indices(), &[0]);
    }

    #[test]
    fn duplicated_date_is_rejected() {
        let csv = "date,a,b\n2020-01-01,1,2\n2020-01-01,1,2\n";
        let err = parse_panel(csv, &schema2()).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneDates { .. }));
        assert!(err.to_string().contains("non-monotone dates"));
    }

    #[test]
    fn missing_cell_is_rejected() {
        let csv = "date,a,b\n2020-01-01,1,\n2020-01-02,1,2\n";
        assert!(matches!(
            parse_panel(csv, &schema2()),
            Err(Error::MissingCell { row: 0, .. })
        ));
        let csv = "date,a,b\n2020-01-01,1,NA\n";
        assert!(matches!(
            parse_panel(csv, &schema2()),
            Err(Error::MissingCell { .. })
        ));
    }

    #[test]
    fn unknown_column_is_rejected() {
        let csv = "date,a,c\n2020-01-01,1,2\n";
        assert!(matches!(parse_panel(csv, &schema2()), Err(Error::UnknownColumn(c)) if c == "b"));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let csv = "date,a,b\n2020-01-01,1,2,3\n";
        assert!(matches!(parse_panel(csv, &schema2()), Err(Error::Csv(_))));
        let csv = "date,a,b\n2020-01-01,x,2\n";
        assert!(matches!(parse_panel(csv, &schema2()), Err(Error::Csv(_))));
    }

    #[test]
    fn log_returns_examples() {
        let c = DMatrix::from_column_slice(3, 1, &[5.0, 5.0, 5.0]);
        assert_eq!(to_log_returns(&c).unwrap().as_slice(), &[0.0, 0.0]);
        let e = DMatrix::from_column_slice(2, 1, &[1.0, std::f64::consts::E]);
        assert!((to_log_returns(&e).unwrap()[0] - 1.0).abs() < 1e-15);
        let p = DMatrix::from_column_slice(3, 1, &[100.0, 110.0, 99.0]);
        let r = to_log_returns(&p).unwrap();
        assert!((r[0] - 1.1f64.ln()).abs() < 1e-15);
        assert!((r[1] - 0.9f64.ln()).abs() < 1e-15);
        assert!((r[0] - 0.09531).abs() < 1e-5 && (r[1] + 0.10536).abs() < 1e-5);
    }

    #[test]
    fn log_returns_reject_nonpositive() {
        let p = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(to_log_returns(&p).is_err());
        let p = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert!(to_log_returns(&p).is_err());
    }

    #[test]
    fn nonstationary_dgp_rejected() {
        let mut spec = DgpSpec::default_for(DgpFamily::TTvp, 3, 1);
        spec.sv_rho[1] = 1.0;
        assert!(simulate_dgp(&spec, 100, 1).is_err());
    }

    #[test]
    fn degenerate_dgp_is_constant_homoskedastic() {
        let mut spec = DgpSpec::default_for(DgpFamily::ConstantVar, 2, 1);
        spec.sv_sigma = vec![0.0; 2];
        let (_, truth) = simulate_dgp(&spec, 60, 4).unwrap();
        for i in 0..2 {
            assert!(truth.beta_paths[i].iter().all(|b| *b == spec.beta0[i]));
            assert!(truth.h_paths[i].iter().all(|h| *h == spec.sv_mu[i]));
            assert!(truth.phi_paths[i].iter().all(|f| *f == 1.0));
        }
    }

    #[test]
    fn dgp_is_deterministic() {
        let spec = DgpSpec::default_for(DgpFamily::TTvp, 3, 1);
        let (a, ta) = simulate_dgp(&spec, 120, 77).unwrap();
        let (b, tb) = simulate_dgp(&spec, 120, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate_dgp(&spec, 120, 78).unwrap();
        assert_ne!(a, c);
    }
}
