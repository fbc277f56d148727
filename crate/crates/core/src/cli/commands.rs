//! The four subcommands. Every file they write starts with (CSV) or carries
//! (JSON) the config hash, and `manifest.json` records a SHA-256 per file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{dgp_family, RunConfig, Transform};
use crate::data::{load_panel, panel_to_csv, simulate_dgp, DgpSpec, Panel};
use crate::error::{Error, Result};
use crate::evaluation::{
    bayes_factor_series, forecast_window, marginal_bayes_factor_series, min_training_rows, score,
    window_seed, EvalReport, ForecastRecord, WINDOW_SEED_RULE,
};
use crate::kernels::mixture_marginal;
use crate::models::{Family, ModelSpec, PredictiveDensity};
use crate::portfolio::{baselines, model_strategies, Backtest, MIN_VARIANCE_LABEL};

pub const ARCHIVE_FORMAT: &str = "tvpsv-forecast-archive/1";
pub const MANIFEST: &str = "manifest.json";
const HASH_PREFIX: &str = "# config_hash: ";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NA".into())
}

fn csv_text(hash: &str, header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)
            .map_err(|e| Error::Csv(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    }
    Ok(out)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    files: BTreeMap<String, String>,
}

/// Collects written files for the manifest.
struct Outputs {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path, hash: String) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
        let bytes = csv_text(&self.hash, &header, &rows)?;
        self.write(name, &bytes)
    }

    fn json(&mut self, name: &str, body: serde_json::Value) -> Result<()> {
        let mut v = body;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("config_hash".into(), self.hash.clone().into());
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Merge into the manifest; entries from a different config are dropped.
    fn finish(self) -> Result<Vec<PathBuf>> {
        let path = self.dir.join(MANIFEST);
        let mut manifest = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str::<Manifest>(&s).ok())
            .filter(|m| m.config_hash == self.hash)
            .unwrap_or_else(|| Manifest {
                config_hash: self.hash.clone(),
                files: BTreeMap::new(),
            });
        for p in &self.written {
            let name = p
                .file_name()
                .expect("file name")
                .to_string_lossy()
                .into_owned();
            manifest.files.insert(name, sha256_file(p)?);
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(self.written)
    }
}

// ---------------------------------------------------------------------------
// simulate

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config has no simulate section".into()))?;
    let family: Family = sim.family.parse()?;
    let spec = DgpSpec::default_for(dgp_family(family)?, sim.m, sim.p);
    let (panel, mut truth) = simulate_dgp(&spec, sim.t, cfg.seed)?;
    let hash = cfg.hash();
    truth.config_hash = Some(hash.clone());
    let mut out = Outputs::new(&cfg.output_dir, hash.clone())?;
    let mut text = format!("{HASH_PREFIX}{hash}\n");
    text.push_str(&panel_to_csv(&panel));
    out.write("simulated_panel.csv", text.as_bytes())?;
    let mut json = truth.to_json()?;
    json.push('\n');
    out.write("dgp_truth.json", json.as_bytes())?;
    out.finish()
}

// ---------------------------------------------------------------------------
// forecast

/// Panel named by the config, transformed, with targets defaulting to every column.
pub fn load_run_panel(cfg: &RunConfig) -> Result<Panel> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config has no data section".into()))?;
    let mut panel = load_panel(&data.path, &data.schema)?;
    if data.transform == Transform::LogReturns {
        panel = panel.log_returns()?;
    }
    if panel.target_indices().is_empty() {
        let all = (0..panel.n_series()).collect();
        panel = panel.with_targets(all)?;
    }
    Ok(panel)
}

/// One stored (model, window) result. The density and realized vector are
/// restricted to the target series, in target order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub format: String,
    pub config_hash: String,
    pub spec: ModelSpec,
    pub holdout: usize,
    pub target_names: Vec<String>,
    pub record: ForecastRecord,
}

pub fn archive_path(dir: &Path, family: Family, window: usize) -> PathBuf {
    dir.join("archive")
        .join(family.tag())
        .join(format!("window_{window:04}.json"))
}

struct Job {
    family: Family,
    window: usize,
    spec: ModelSpec,
    train_rows: usize,
    date: NaiveDate,
}

fn jobs_for(cfg: &RunConfig, panel: &Panel) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for family in cfg.families()? {
        let base = cfg.model_spec(family);
        let need = cfg.holdout + min_training_rows(&base);
        if panel.len() < need {
            return Err(Error::InvalidInput(format!(
                "panel has {} rows; holdout {} with model {family} needs at least {need}",
                panel.len(),
                cfg.holdout
            )));
        }
        for window in 0..cfg.holdout {
            let mut spec = base.clone();
            spec.seed = window_seed(cfg.seed, window, family);
            let train_rows = panel.len() - cfg.holdout + window;
            jobs.push(Job {
                family,
                window,
                spec,
                train_rows,
                date: panel.dates()[train_rows],
            });
        }
    }
    Ok(jobs)
}

fn target_names(panel: &Panel) -> Vec<String> {
    panel
        .target_indices()
        .iter()
        .map(|&i| panel.names()[i].clone())
        .collect()
}

fn read_archive(path: &Path) -> Result<ArchiveEntry> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entry: ArchiveEntry = serde_json::from_str(&text)?;
    if entry.format != ARCHIVE_FORMAT {
        return Err(Error::InvalidInput(format!(
            "{} is not a forecast archive",
            path.display()
        )));
    }
    Ok(entry)
}

/// An archive is reusable when it was produced by the same job on the same data.
fn archive_matches(
    entry: &ArchiveEntry,
    job: &Job,
    holdout: usize,
    names: &[String],
    realized: &DVector<f64>,
) -> bool {
    entry.spec == job.spec
        && entry.holdout == holdout
        && entry.target_names == names
        && entry.record.window == job.window
        && entry.record.train_rows == job.train_rows
        && entry.record.date == job.date
        && entry.record.realized == *realized
}

fn realized_targets(panel: &Panel, row: usize) -> DVector<f64> {
    let t = panel.target_indices();
    DVector::from_iterator(t.len(), t.iter().map(|&j| panel.values()[(row, j)]))
}

fn run_job(cfg: &RunConfig, panel: &Panel, job: &Job, hash: &str) -> Result<()> {
    let mut spec = job.spec.clone();
    // forecast_window derives the window seed from the master seed itself
    spec.seed = cfg.seed;
    let rec = forecast_window(panel, &spec, cfg.holdout, job.window)?;
    debug_assert_eq!(rec.seed, job.spec.seed);
    let targets = panel.target_indices();
    let mixture = mixture_marginal(&rec.density.mixture, targets)?;
    let record = ForecastRecord {
        density: PredictiveDensity {
            model: rec.density.model,
            date: rec.density.date,
            mixture,
        },
        realized: realized_targets(panel, job.train_rows),
        ..rec
    };
    let entry = ArchiveEntry {
        format: ARCHIVE_FORMAT.into(),
        config_hash: hash.into(),
        spec: job.spec.clone(),
        holdout: cfg.holdout,
        target_names: target_names(panel),
        record,
    };
    let path = archive_path(&cfg.output_dir, job.family, job.window);
    write_atomic(&path, serde_json::to_string(&entry)?.as_bytes())?;
    log::info!(
        "{} window {} done ({} training rows)",
        job.family,
        job.window,
        job.train_rows
    );
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastSummary {
    pub computed: usize,
    pub reused: usize,
    pub files: Vec<PathBuf>,
}

const CONVENTIONS: [&str; 6] = [
    "window w trains on rows [0, T - H + w) and predicts row T - H + w",
    "predictive density: equal-weight Gaussian mixture over thinned post-burn-in draws",
    "PIT values clipped to [1e-12, 1 - 1e-12] before the normal quantile",
    "PIT tests: OLS t-statistics with plain standard errors, two-sided normal p-values; variance test is E[z^2] = 1",
    "Sharpe ratio: mean / sample sd of daily portfolio returns times sqrt(252), zero risk-free rate",
    "target mean-variance: inequality constraint; the branch that fired is reported per date",
];

pub fn cmd_forecast(cfg: &RunConfig) -> Result<ForecastSummary> {
    cfg.validate_forecast()?;
    let panel = load_run_panel(cfg)?;
    let hash = cfg.hash();
    let names = target_names(&panel);
    let jobs = jobs_for(cfg, &panel)?;

    let mut pending = Vec::new();
    for job in &jobs {
        let path = archive_path(&cfg.output_dir, job.family, job.window);
        let realized = realized_targets(&panel, job.train_rows);
        let reusable = path.exists()
            && read_archive(&path)
                .map(|e| archive_matches(&e, job, cfg.holdout, &names, &realized))
                .unwrap_or(false);
        if !reusable {
            pending.push(job);
        }
    }
    let computed = pending.len();
    log::info!("{} of {} (model, window) jobs to run", computed, jobs.len());
    let pool = thread_pool(cfg.jobs)?;
    let results: Vec<Result<()>> = pool.install(|| {
        pending
            .par_iter()
            .map(|job| run_job(cfg, &panel, job, &hash))
            .collect()
    });
    for (job, r) in pending.iter().zip(results) {
        r.map_err(|e| match e {
            Error::Window { .. } => e,
            other => Error::Window {
                window: job.window,
                source: Box::new(other),
            },
        })?;
    }

    // every score comes from the archives, so resumed and fresh runs agree
    let records = load_records(cfg, &panel)?;
    let nt = names.len();
    let slots: Vec<usize> = (0..nt).collect();
    let reports = records
        .iter()
        .map(|(_, r)| score(r, &slots))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::new(&cfg.output_dir, hash.clone())?;
    write_eval_tables(&mut out, cfg, &names, &reports)?;
    write_panel_series(&mut out, &panel)?;
    write_metadata(&mut out, cfg, &panel, &names)?;
    let files = out.finish()?;
    Ok(ForecastSummary {
        computed,
        reused: jobs.len() - computed,
        files,
    })
}

/// Archived records per configured model, in window order.
fn load_records(cfg: &RunConfig, panel: &Panel) -> Result<Vec<(Family, Vec<ForecastRecord>)>> {
    let names = target_names(panel);
    let jobs = jobs_for(cfg, panel)?;
    let mut out: Vec<(Family, Vec<ForecastRecord>)> = Vec::new();
    for job in &jobs {
        let path = archive_path(&cfg.output_dir, job.family, job.window);
        if !path.exists() {
            return Err(Error::MissingArtifact(format!(
                "forecast archive {} is missing; run the `forecast` subcommand with this config first",
                path.display()
            )));
        }
        let entry = read_archive(&path)?;
        let realized = realized_targets(panel, job.train_rows);
        if !archive_matches(&entry, job, cfg.holdout, &names, &realized) {
            return Err(Error::MissingArtifact(format!(
                "forecast archive {} was produced by a different configuration or data set; \
                 rerun the `forecast` subcommand with this config",
                path.display()
            )));
        }
        match out.last_mut() {
            Some((f, recs)) if *f == job.family => recs.push(entry.record),
            _ => out.push((job.family, vec![entry.record])),
        }
    }
    Ok(out)
}

fn write_eval_tables(
    out: &mut Outputs,
    cfg: &RunConfig,
    names: &[String],
    reports: &[EvalReport],
) -> Result<()> {
    // joint and marginal LPS with RMSE per model
    let mut header = vec!["model".to_string(), "label".into(), "joint_lps".into()];
    header.extend(names.iter().map(|n| format!("lps_{n}")));
    header.extend(names.iter().map(|n| format!("rmse_{n}")));
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.model.tag().to_string(),
                r.model.label().to_string(),
                num(r.joint_lps),
            ];
            row.extend(r.marginal_lps.iter().map(|v| num(*v)));
            row.extend(r.rmse.iter().map(|v| num(*v)));
            row
        })
        .collect();
    out.csv("table1_scores.csv", header, rows)?;

    // per-date log scores
    let mut header = vec!["date".to_string(), "model".into(), "joint".into()];
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for r in reports {
        for (t, d) in r.dates.iter().enumerate() {
            let mut row = vec![d.to_string(), r.model.tag().into(), num(r.joint_scores[t])];
            row.extend(r.marginal_scores.iter().map(|s| num(s[t])));
            rows.push(row);
        }
    }
    out.csv("log_scores.csv", header.clone(), rows)?;

    // cumulative log predictive Bayes factors against the reference model
    if let Some(reference) = cfg.reference()? {
        let base = reports
            .iter()
            .find(|r| r.model == reference)
            .expect("reference is configured");
        let mut rows = Vec::new();
        for r in reports {
            let joint = bayes_factor_series(r, base)?;
            let marg = (0..names.len())
                .map(|k| marginal_bayes_factor_series(r, base, k))
                .collect::<Result<Vec<_>>>()?;
            for (t, d) in r.dates.iter().enumerate() {
                let mut row = vec![d.to_string(), r.model.tag().into(), num(joint[t])];
                row.extend(marg.iter().map(|s| num(s[t])));
                rows.push(row);
            }
        }
        let mut h = header.clone();
        h.push("reference".into());
        for row in &mut rows {
            row.push(reference.tag().into());
        }
        out.csv("bayes_factors.csv", h, rows)?;
    }

    // PIT regression tests
    let header = [
        "model",
        "target",
        "n",
        "mean",
        "mean_p",
        "variance",
        "variance_p",
        "persistence",
        "persistence_p",
        "jarque_bera",
        "jarque_bera_p",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for r in reports {
        for (k, name) in names.iter().enumerate() {
            let t = r.pit_tests[k];
            let jb = r.jarque_bera[k];
            rows.push(vec![
                r.model.tag().into(),
                name.clone(),
                r.pit_z[k].len().to_string(),
                opt_num(t.map(|x| x.mean.estimate)),
                opt_num(t.map(|x| x.mean.p_value)),
                opt_num(t.map(|x| x.variance.estimate)),
                opt_num(t.map(|x| x.variance.p_value)),
                opt_num(t.map(|x| x.persistence.estimate)),
                opt_num(t.map(|x| x.persistence.p_value)),
                opt_num(jb.map(|x| x.0)),
                opt_num(jb.map(|x| x.1)),
            ]);
        }
    }
    out.csv("table2_pit.csv", header, rows)?;

    let mut header = vec!["date".to_string(), "model".into()];
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for r in reports {
        for (t, d) in r.dates.iter().enumerate() {
            let mut row = vec![d.to_string(), r.model.tag().into()];
            row.extend(r.pit_z.iter().map(|z| num(z[t])));
            rows.push(row);
        }
    }
    out.csv("pit_z.csv", header, rows)?;
    out.json(
        "eval_report.json",
        serde_json::json!({ "reports": reports }),
    )
}

fn write_panel_series(out: &mut Outputs, panel: &Panel) -> Result<()> {
    let mut header = vec!["date".to_string()];
    header.extend(panel.names().iter().cloned());
    let rows = (0..panel.len())
        .map(|t| {
            let mut row = vec![panel.dates()[t].to_string()];
            row.extend(panel.values().row(t).iter().map(|v| num(*v)));
            row
        })
        .collect();
    out.csv("data_series.csv", header, rows)
}

fn write_metadata(
    out: &mut Outputs,
    cfg: &RunConfig,
    panel: &Panel,
    names: &[String],
) -> Result<()> {
    let models: Vec<serde_json::Value> = cfg
        .families()?
        .into_iter()
        .map(|f| serde_json::json!({ "tag": f.tag(), "label": f.label(), "spec": cfg.model_spec(f) }))
        .collect();
    let body = serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": cfg.seed,
        "window_seed_rule": WINDOW_SEED_RULE,
        "holdout": cfg.holdout,
        "panel_rows": panel.len(),
        "first_training_rows": panel.len() - cfg.holdout,
        "first_forecast_date": panel.dates()[panel.len() - cfg.holdout].to_string(),
        "targets": names,
        "models": models,
        "conventions": CONVENTIONS,
    });
    out.json("metadata.json", body)
}

// ---------------------------------------------------------------------------
// trade

pub fn cmd_trade(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate_forecast()?;
    let panel = load_run_panel(cfg)?;
    let names = target_names(&panel);
    let asset_names = if cfg.portfolio.assets.is_empty() {
        names.clone()
    } else {
        cfg.portfolio.assets.clone()
    };
    let assets = asset_names
        .iter()
        .map(|a| {
            names.iter().position(|n| n == a).ok_or_else(|| {
                Error::InvalidInput(format!("portfolio asset '{a}' is not a target series"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lead_name = cfg
        .portfolio
        .lead_asset
        .clone()
        .unwrap_or_else(|| asset_names[0].clone());
    let lead = asset_names
        .iter()
        .position(|n| *n == lead_name)
        .ok_or_else(|| {
            Error::InvalidInput(format!("lead asset '{lead_name}' is not a portfolio asset"))
        })?;

    let records = load_records(cfg, &panel)?;
    let mut per_model: Vec<(Family, Vec<Backtest>)> = Vec::new();
    for (family, recs) in &records {
        per_model.push((
            *family,
            model_strategies(recs, &assets, &cfg.portfolio.r_star)?,
        ));
    }
    let first = &records[0].1;
    let dates: Vec<NaiveDate> = first.iter().map(|r| r.date).collect();
    let realized: Vec<DVector<f64>> = first
        .iter()
        .map(|r| DVector::from_iterator(assets.len(), assets.iter().map(|&a| r.realized[a])))
        .collect();
    let (equal, only) = baselines(&dates, &realized, lead, &lead_name)?;

    let mut out = Outputs::new(&cfg.output_dir, cfg.hash())?;
    let strategies: Vec<String> = per_model[0].1.iter().map(|b| b.strategy.clone()).collect();
    let mut header = vec!["model".to_string()];
    header.extend(strategies.iter().cloned());
    let mut rows: Vec<Vec<String>> = per_model
        .iter()
        .map(|(f, bts)| {
            let mut row = vec![f.label().to_string()];
            row.extend(bts.iter().map(|b| opt_num(b.sharpe)));
            row
        })
        .collect();
    for b in [&equal, &only] {
        let mut row = vec![b.strategy.clone()];
        row.extend(strategies.iter().map(|_| opt_num(b.sharpe)));
        rows.push(row);
    }
    out.csv("table3_sharpe.csv", header, rows)?;

    let mut header = vec![
        "date".to_string(),
        "model".into(),
        "strategy".into(),
        "branch".into(),
    ];
    header.extend(asset_names.iter().map(|a| format!("w_{a}")));
    header.push("return".into());
    let mut rows = Vec::new();
    let mut push = |model: &str, b: &Backtest| {
        for (t, d) in b.dates.iter().enumerate() {
            let branch = match b.branches.get(t) {
                Some(x) => serde_json::to_value(x)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                None if b.strategy == MIN_VARIANCE_LABEL => "minVariance".into(),
                None => "fixed".into(),
            };
            let mut row = vec![d.to_string(), model.to_string(), b.strategy.clone(), branch];
            row.extend(b.weights[t].iter().map(|w| num(*w)));
            row.push(num(b.returns[t]));
            rows.push(row);
        }
    };
    for (f, bts) in &per_model {
        for b in bts {
            push(f.tag(), b);
        }
    }
    push("baseline", &equal);
    push("baseline", &only);
    out.csv("weights.csv", header, rows)?;
    out.finish()
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub config_hash: String,
    pub checked: usize,
}

fn embedded_hash(path: &Path) -> Result<Option<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        return Ok(v
            .get("config_hash")
            .and_then(|h| h.as_str())
            .map(String::from));
    }
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string()))
}

/// Re-hash the config and every file listed in the manifest.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let hash = cfg.hash();
    let path = cfg.output_dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} not found; run `simulate`, `forecast` or `trade` first",
            path.display()
        )));
    }
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let mut problems = Vec::new();
    if manifest.config_hash != hash {
        problems.push(format!(
            "manifest hash {} differs from config hash {hash}",
            manifest.config_hash
        ));
    }
    for (name, digest) in &manifest.files {
        let file = cfg.output_dir.join(name);
        if !file.exists() {
            problems.push(format!("{name}: missing"));
            continue;
        }
        if sha256_file(&file)? != *digest {
            problems.push(format!("{name}: content changed since it was written"));
        }
        match embedded_hash(&file)? {
            Some(h) if h == hash => {}
            Some(h) => problems.push(format!("{name}: embeds config hash {h}")),
            None => problems.push(format!("{name}: no embedded config hash")),
        }
    }
    if problems.is_empty() {
        Ok(VerifyReport {
            config_hash: hash,
            checked: manifest.files.len(),
        })
    } else {
        Err(Error::Verification(problems.join("; ")))
    }
}
