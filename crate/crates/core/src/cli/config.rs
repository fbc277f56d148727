//! Run configuration: one JSON file per experiment.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "data": {
//!     "path": "prices.csv",
//!     "schema": { "date_column": "date", "value_columns": ["btc", "eth", "ltc", "sp500"],
//!                 "targets": ["btc", "eth", "ltc"] },
//!     "transform": "logReturns"
//!   },
//!   "models": ["tTvpNg", "tvpNg", "tvpFlat", "ngVar", "minnVar", "ssvsVar", "rwSv", "arSv"],
//!   "holdout": 160,
//!   "mcmc": { "iterations": 6000, "p": 1, "max_components": 1000 },
//!   "portfolio": { "r_star": [0.000396825, 0.000595238, 0.001190476], "lead_asset": "btc" },
//!   "output_dir": "out",
//!   "seed": 20171003,
//!   "jobs": 8
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DgpFamily, PanelSchema};
use crate::error::{Error, Result};
use crate::models::{ChainSettings, Family, ModelSpec, RegressorForm};
use crate::portfolio::DEFAULT_TARGETS;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Transform {
    /// columns are already returns
    #[default]
    None,
    /// columns are prices; use log differences
    LogReturns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: PanelSchema,
    #[serde(default)]
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    /// defaults to half of `iterations`
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// defaults to the smallest value keeping at most `max_components` draws
    #[serde(default)]
    pub thin: Option<usize>,
    #[serde(default = "default_components")]
    pub max_components: usize,
    #[serde(default = "default_lags")]
    pub p: usize,
    #[serde(default = "default_form")]
    pub form: RegressorForm,
}

fn default_components() -> usize {
    1000
}

fn default_lags() -> usize {
    1
}

fn default_form() -> RegressorForm {
    RegressorForm::StructuralLevels
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            burn_in: None,
            thin: None,
            max_components: default_components(),
            p: default_lags(),
            form: default_form(),
        }
    }
}

impl McmcConfig {
    pub fn chain_settings(&self) -> ChainSettings {
        let burn_in = self.burn_in.unwrap_or(self.iterations / 2);
        let kept = self.iterations.saturating_sub(burn_in);
        let thin = self
            .thin
            .unwrap_or_else(|| kept.div_ceil(self.max_components.max(1)).max(1));
        ChainSettings {
            iterations: self.iterations,
            burn_in,
            thin,
            max_components: self.max_components,
            ..ChainSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    /// daily target returns, one target mean-variance strategy each
    #[serde(default = "default_r_star")]
    pub r_star: Vec<f64>,
    /// traded series; defaults to the schema targets
    #[serde(default)]
    pub assets: Vec<String>,
    /// series held by the single-asset baseline; defaults to the first asset
    #[serde(default)]
    pub lead_asset: Option<String>,
}

fn default_r_star() -> Vec<f64> {
    DEFAULT_TARGETS.to_vec()
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            r_star: default_r_star(),
            assets: Vec::new(),
            lead_asset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: String,
    pub t: usize,
    pub m: usize,
    #[serde(default = "default_lags")]
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub holdout: usize,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    /// reference model for the cumulative Bayes factor series; defaults to
    /// rwSv when configured, otherwise the first model
    #[serde(default)]
    pub reference_model: Option<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// concurrent (model, window) jobs; defaults to the number of cores
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Parse and resolve relative paths against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.data.as_mut() {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn families(&self) -> Result<Vec<Family>> {
        let mut out: Vec<Family> = Vec::with_capacity(self.models.len());
        for tag in &self.models {
            let f: Family = tag.parse()?;
            if out.contains(&f) {
                return Err(Error::InvalidInput(format!("model '{tag}' listed twice")));
            }
            out.push(f);
        }
        Ok(out)
    }

    pub fn reference(&self) -> Result<Option<Family>> {
        let families = self.families()?;
        if let Some(tag) = &self.reference_model {
            let f: Family = tag.parse()?;
            if !families.contains(&f) {
                return Err(Error::InvalidInput(format!(
                    "reference model '{tag}' is not configured"
                )));
            }
            return Ok(Some(f));
        }
        Ok(families
            .iter()
            .copied()
            .find(|f| *f == Family::RwSv)
            .or(families.first().copied()))
    }

    /// Base spec of a configured model; window jobs replace the seed.
    pub fn model_spec(&self, family: Family) -> ModelSpec {
        let mut spec = ModelSpec::new(family);
        spec.p = self.mcmc.p;
        spec.form = self.mcmc.form;
        spec.chain = self.mcmc.chain_settings();
        spec.seed = self.seed;
        spec
    }

    /// Checks for the forecast and trade commands.
    pub fn validate_forecast(&self) -> Result<()> {
        let families = self.families()?;
        if families.is_empty() {
            return Err(Error::InvalidInput("config lists no models".into()));
        }
        if self.data.is_none() {
            return Err(Error::InvalidInput("config has no data section".into()));
        }
        if self.holdout == 0 {
            return Err(Error::InvalidInput("holdout must be positive".into()));
        }
        for f in families {
            self.model_spec(f).validate()?;
        }
        if self.portfolio.r_star.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("r_star values must be finite".into()));
        }
        self.reference()?;
        if self.jobs == Some(0) {
            return Err(Error::InvalidInput("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every field that can change results.
    /// The output directory and the job count are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("jobs");
        }
        // serde_json maps are ordered by key, so this text is canonical
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Model family to data-generating family.
pub fn dgp_family(family: Family) -> Result<DgpFamily> {
    match family {
        Family::TTvpNg => Ok(DgpFamily::TTvp),
        Family::TvpNg | Family::TvpFlat => Ok(DgpFamily::GaussianTvp),
        Family::NgVar | Family::MinnVar | Family::SsvsVar => Ok(DgpFamily::ConstantVar),
        Family::RwSv | Family::ArSv => Err(Error::InvalidInput(format!(
            "family '{family}' has no multivariate generator; use tTvpNg, tvpNg, tvpFlat or a constant VAR"
        ))),
    }
}
