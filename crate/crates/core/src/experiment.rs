//! Experiment configuration and the driver that writes result artifacts.
//!
//! A run writes four files to its output directory:
//!
//! * `summary.csv`: one row per method and grid point
//! * `forecasts.csv`: every individual forecast
//! * `dm.csv`: Diebold–Mariano tests of the reference method against each other method
//! * `run.json`: the resolved configuration, which can be fed back in to repeat the run

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::DgpConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    dm_test, monte_carlo_study, rmsfe_of_errors, rolling_forecast, DmResult, ForecastRecord, Forecaster, Oracle,
    ReplicationFailure,
};
use crate::io::{load_csv, read_records, write_records_with_header, DatasetSpec, LoadReport};
use crate::methods::{GridMethod, MethodConfig};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "GOSDPCA_THREADS";

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Forecast,
    Dm,
}

fn default_h() -> usize {
    1
}
fn default_q() -> Vec<usize> {
    vec![2]
}
fn default_r() -> Vec<usize> {
    vec![10]
}
fn default_replications() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Simulation design; replication `i` uses seed `base_seed + i` and
    /// ignores `dgp.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    /// Number of rolling-window forecast origins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_len: Option<usize>,
    /// Rolling window length; defaults to `n − h − test_len`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_q")]
    pub q: Vec<usize>,
    #[serde(default = "default_r")]
    pub r: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Label of the method every other method is tested against; defaults to
    /// the first method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Two forecast CSVs to compare in `dm` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_files: Option<[PathBuf; 2]>,
    /// Add the infeasible truth-based forecast to simulation studies.
    #[serde(default)]
    pub include_oracle: bool,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub software_version: String,
    pub config: ExperimentConfig,
    /// Seeds of every replication, in order (simulation only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_report: Option<LoadReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ReplicationFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(config_err("h must be at least 1"));
        }
        if self.mode == Mode::Dm {
            if self.forecast_files.is_none() {
                return Err(config_err("dm mode needs forecast_files"));
            }
            return Ok(());
        }
        match (&self.dgp, &self.dataset) {
            (Some(_), Some(_)) | (None, None) => return Err(config_err("set exactly one of dgp and dataset")),
            (Some(_), None) if self.mode != Mode::Simulate => return Err(config_err("dgp requires mode simulate")),
            (None, Some(_)) if self.mode != Mode::Forecast => return Err(config_err("dataset requires mode forecast")),
            _ => {}
        }
        if let Some(d) = &self.dgp {
            d.validate()?;
            if self.h != 1 {
                return Err(config_err("simulation studies forecast one step ahead; set h = 1"));
            }
            if self.replications == 0 {
                return Err(config_err("replications must be at least 1"));
            }
        }
        if self.mode == Mode::Forecast && self.test_len.unwrap_or(0) == 0 {
            return Err(config_err("forecast mode needs test_len >= 1"));
        }
        if self.window == Some(0) {
            return Err(config_err("window must be at least 1"));
        }
        if self.q.is_empty() || self.r.is_empty() {
            return Err(config_err("q and r grids must be non-empty"));
        }
        if self.q.contains(&0) || self.r.contains(&0) {
            return Err(config_err("grid values must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("no methods configured"));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            if !labels.insert(m.label()) {
                return Err(config_err(format!("duplicate method label {:?}", m.label())));
            }
        }
        if let Some(r) = &self.reference {
            if !labels.contains(r) {
                return Err(config_err(format!("reference method {r:?} is not configured")));
            }
        }
        Ok(())
    }

    fn reference_label(&self) -> Option<String> {
        self.reference.clone().or_else(|| self.methods.first().map(MethodConfig::label))
    }

    /// Grid methods in output order (grid point, then method), with methods
    /// that ignore `q` or `r` listed once.
    pub fn grid_methods(&self) -> Vec<GridMethod> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &q in &self.q {
            for &r in &self.r {
                for m in &self.methods {
                    let g = m.at(q, r);
                    if seen.insert((m.label(), g.q, g.r)) {
                        out.push(g);
                    }
                }
            }
        }
        out
    }

    /// Makes relative input and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.dataset {
            fix(&mut d.path);
        }
        if let Some(files) = &mut self.forecast_files {
            files.iter_mut().for_each(fix);
        }
    }
}

/// Reads either a plain configuration or a previous run's `run.json`.
/// Relative paths are taken relative to the file's directory and made
/// absolute, so the recorded `run.json` replays from any working directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let mut cfg: ExperimentConfig = if value.get("software_version").is_some() {
        serde_json::from_value::<RunRecord>(value)?.config
    } else {
        serde_json::from_value(value)?
    };
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::path::absolute(base)
        .map_err(|e| config_err(format!("cannot resolve {}: {e}", base.display())))?;
    cfg.resolve_paths(&base);
    Ok(cfg)
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(config_err(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub q: Option<usize>,
    pub r: Option<usize>,
    pub rmsfe: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub n_obs: usize,
    pub n_failed: usize,
}

pub const SUMMARY_HEADER: [&str; 7] = ["method", "q", "r", "rmsfe", "mc_stderr", "n_obs", "n_failed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmRow {
    pub reference: String,
    pub method: String,
    pub q: Option<usize>,
    pub r: Option<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub n_forecasts: usize,
    pub horizon: usize,
    pub variance_floored: bool,
    pub degenerate: bool,
}

pub const DM_HEADER: [&str; 10] = [
    "reference",
    "method",
    "q",
    "r",
    "statistic",
    "p_value",
    "n_forecasts",
    "horizon",
    "variance_floored",
    "degenerate",
];

pub const FORECAST_HEADER: [&str; 9] =
    ["method", "q", "r", "seed", "origin", "horizon", "predicted", "realized", "config_digest"];

impl DmRow {
    fn new(reference: &str, method: &str, q: Option<usize>, r: Option<usize>, d: DmResult) -> Self {
        DmRow {
            reference: reference.into(),
            method: method.into(),
            q,
            r,
            statistic: d.statistic,
            p_value: d.p_value,
            n_forecasts: d.n_forecasts,
            horizon: d.horizon,
            variance_floored: d.variance_floored,
            degenerate: d.degenerate,
        }
    }
}

/// Everything a run produced, as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: Vec<SummaryRow>,
    pub forecasts: Vec<ForecastRecord>,
    pub dm: Vec<DmRow>,
    pub record: RunRecord,
}

/// Runs the configured experiment and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    if resolved.mode != Mode::Dm && resolved.reference.is_none() {
        resolved.reference = resolved.reference_label();
    }
    let output = match cfg.mode {
        Mode::Simulate => run_simulation(resolved)?,
        Mode::Forecast => run_forecast(resolved)?,
        Mode::Dm => run_dm(resolved)?,
    };
    write_outputs(&output)?;
    Ok(output)
}

fn write_outputs(out: &RunOutput) -> Result<()> {
    let dir = &out.record.config.output_dir;
    std::fs::create_dir_all(dir)?;
    write_records_with_header(&dir.join("summary.csv"), &SUMMARY_HEADER, &out.summary)?;
    write_records_with_header(&dir.join("forecasts.csv"), &FORECAST_HEADER, &out.forecasts)?;
    write_records_with_header(&dir.join("dm.csv"), &DM_HEADER, &out.dm)?;
    let json = serde_json::to_string_pretty(&out.record)?;
    std::fs::write(dir.join("run.json"), json + "\n")?;
    Ok(())
}

/// Errors of `method` keyed by (seed, origin), for pairing with another method.
fn keyed_errors(records: &[ForecastRecord], label: &str, q: Option<usize>, r: Option<usize>) -> Vec<((u64, usize), f64)> {
    records
        .iter()
        .filter(|rec| rec.method == label && rec.q == q && rec.r == r)
        .map(|rec| ((rec.seed.unwrap_or(0), rec.origin), rec.error()))
        .collect()
}

/// Pairs two keyed error lists on their common keys, in key order.
fn paired(a: &[((u64, usize), f64)], b: &[((u64, usize), f64)]) -> (Vec<f64>, Vec<f64>) {
    let bmap: std::collections::BTreeMap<_, _> = b.iter().copied().collect();
    let mut pairs: Vec<((u64, usize), f64, f64)> =
        a.iter().filter_map(|(k, ea)| bmap.get(k).map(|eb| (*k, *ea, *eb))).collect();
    pairs.sort_by_key(|p| p.0);
    pairs.into_iter().map(|(_, ea, eb)| (ea, eb)).unzip()
}

/// Tests the reference against every other method at each grid point.
fn dm_against_reference(
    cfg: &ExperimentConfig,
    records: &[ForecastRecord],
    notes: &mut Vec<String>,
) -> Vec<DmRow> {
    let Some(reference) = cfg.reference_label() else {
        return Vec::new();
    };
    let ref_cfg = cfg.methods.iter().find(|m| m.label() == reference).expect("validated reference");
    let mut rows = Vec::new();
    for &q in &cfg.q {
        for &r in &cfg.r {
            let rg = ref_cfg.at(q, r);
            let ref_errors = keyed_errors(records, &reference, rg.q, rg.r);
            for m in &cfg.methods {
                if m.label() == reference {
                    continue;
                }
                let g = m.at(q, r);
                // report each pairing once even when a method ignores r
                if rows.iter().any(|row: &DmRow| row.method == m.label() && row.q == g.q.or(rg.q) && row.r == g.r.or(rg.r)) {
                    continue;
                }
                let other = keyed_errors(records, &m.label(), g.q, g.r);
                let (ea, eb) = paired(&ref_errors, &other);
                match dm_test(&ea, &eb, cfg.h) {
                    Ok(d) => rows.push(DmRow::new(&reference, &m.label(), g.q.or(rg.q), g.r.or(rg.r), d)),
                    Err(e) => notes.push(format!("no DM test of {reference} vs {} at q={q}, r={r}: {e}", m.label())),
                }
            }
        }
    }
    rows
}

fn run_simulation(cfg: ExperimentConfig) -> Result<RunOutput> {
    let template = cfg.dgp.clone().expect("validated");
    let grid = cfg.grid_methods();
    let mut methods: Vec<&dyn Forecaster> = grid.iter().map(|g| g as &dyn Forecaster).collect();
    if cfg.include_oracle {
        methods.push(&Oracle);
    }
    let mc = monte_carlo_study(&template, &methods, cfg.replications, cfg.base_seed)?;
    let summary = mc
        .rows
        .iter()
        .map(|row| SummaryRow {
            method: row.method.clone(),
            q: row.q,
            r: row.r,
            rmsfe: row.rmsfe,
            mc_stderr: row.mc_stderr,
            n_obs: row.n_ok,
            n_failed: row.n_failed,
        })
        .collect();
    let mut notes = Vec::new();
    let dm = dm_against_reference(&cfg, &mc.records, &mut notes);
    let seeds = (0..cfg.replications).map(|i| crate::evaluation::replication_seed(cfg.base_seed, i)).collect();
    let record = RunRecord {
        software_version: SOFTWARE_VERSION.into(),
        config: cfg,
        seeds,
        load_report: None,
        failures: mc.failures,
        notes,
    };
    Ok(RunOutput { summary, forecasts: mc.records, dm, record })
}

fn run_forecast(mut cfg: ExperimentConfig) -> Result<RunOutput> {
    let spec = cfg.dataset.clone().expect("validated");
    let loaded = load_csv(&spec)?;
    let n = loaded.series.n_obs();
    let test_len = cfg.test_len.expect("validated");
    if n < cfg.h + test_len + 1 {
        return Err(config_err(format!("{n} observations cannot hold h = {} and test_len = {test_len}", cfg.h)));
    }
    let window = *cfg.window.get_or_insert(n - cfg.h - test_len);
    if window + cfg.h + test_len > n {
        return Err(config_err(format!(
            "window {window} + h {} + test_len {test_len} exceeds {n} observations",
            cfg.h
        )));
    }

    let grid = cfg.grid_methods();
    let mut forecasts = Vec::new();
    let mut summary = Vec::new();
    for g in &grid {
        let recs = rolling_forecast(&loaded.series, loaded.target, g, window, cfg.h, test_len)?;
        let errors: Vec<f64> = recs.iter().map(ForecastRecord::error).collect();
        summary.push(SummaryRow {
            method: g.config.label(),
            q: g.q,
            r: g.r,
            rmsfe: Some(rmsfe_of_errors(&errors)),
            mc_stderr: None,
            n_obs: recs.len(),
            n_failed: 0,
        });
        forecasts.extend(recs);
    }
    let mut notes = Vec::new();
    let dm = dm_against_reference(&cfg, &forecasts, &mut notes);
    let record = RunRecord {
        software_version: SOFTWARE_VERSION.into(),
        config: cfg,
        seeds: Vec::new(),
        load_report: Some(loaded.report),
        failures: Vec::new(),
        notes,
    };
    Ok(RunOutput { summary, forecasts, dm, record })
}

/// Compares two stored forecast files on their common (seed, origin) keys.
pub fn dm_from_files(a: &Path, b: &Path, h: usize) -> Result<(DmResult, Vec<ForecastRecord>, Vec<ForecastRecord>)> {
    let ra: Vec<ForecastRecord> = read_records(a)?;
    let rb: Vec<ForecastRecord> = read_records(b)?;
    let key = |r: &ForecastRecord| ((r.seed.unwrap_or(0), r.origin), r.error());
    let ka: Vec<_> = ra.iter().map(key).collect();
    let kb: Vec<_> = rb.iter().map(key).collect();
    for (k, name) in [(&ka, a), (&kb, b)] {
        let unique: BTreeSet<_> = k.iter().map(|x| x.0).collect();
        if unique.len() != k.len() {
            return Err(Error::input(format!(
                "{} has repeated origins; filter it to a single method and grid point",
                name.display()
            )));
        }
    }
    let (ea, eb) = paired(&ka, &kb);
    let d = dm_test(&ea, &eb, h)?;
    Ok((d, ra, rb))
}

fn run_dm(cfg: ExperimentConfig) -> Result<RunOutput> {
    let [a, b] = cfg.forecast_files.clone().expect("validated");
    let (d, ra, rb) = dm_from_files(&a, &b, cfg.h)?;
    let name = |recs: &[ForecastRecord], path: &Path| {
        recs.first().map_or_else(|| path.display().to_string(), |r| r.method.clone())
    };
    let (la, lb) = (name(&ra, &a), name(&rb, &b));
    let row = |label: String, recs: &[ForecastRecord]| {
        let errors: Vec<f64> = recs.iter().map(ForecastRecord::error).collect();
        SummaryRow {
            method: label,
            q: recs.first().and_then(|r| r.q),
            r: recs.first().and_then(|r| r.r),
            rmsfe: (!errors.is_empty()).then(|| rmsfe_of_errors(&errors)),
            mc_stderr: None,
            n_obs: errors.len(),
            n_failed: 0,
        }
    };
    let summary = vec![row(la.clone(), &ra), row(lb.clone(), &rb)];
    let dm = vec![DmRow::new(&la, &lb, None, None, d)];
    let mut forecasts = ra;
    forecasts.extend(rb);
    let record = RunRecord {
        software_version: SOFTWARE_VERSION.into(),
        config: cfg,
        seeds: Vec::new(),
        load_report: None,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    Ok(RunOutput { summary, forecasts, dm, record })
}
