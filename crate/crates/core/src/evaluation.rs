//! Forecast evaluation: the rolling-window protocol, RMSFE, the
//! Diebold–Mariano comparison, and the Monte Carlo driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dgp::{generate, oracle_forecast, DgpConfig, GeneratedPanel};
use crate::error::{ensure_input, Error, Result};
use crate::numerics::mean;
use crate::series::SeriesMatrix;

/// Anything that can produce an `h`-step forecast from a history panel.
pub trait Forecaster: Send + Sync {
    /// Display name, used as the `method` column.
    fn label(&self) -> String;

    /// Stable hash of every setting that affects the forecast.
    fn config_digest(&self) -> String;

    /// Forecast of `y_{t+h}` where `t` is the last row of `history`.
    fn forecast(&self, history: &SeriesMatrix, target: usize, h: usize) -> Result<f64>;

    /// One-step forecast of a simulated panel's holdout target from its
    /// training rows. Oracles override this to read the truth record.
    fn forecast_panel(&self, panel: &GeneratedPanel) -> Result<f64> {
        self.forecast(&panel.training(), 0, 1)
    }

    /// `(q, r)` this forecaster was configured with, where meaningful.
    fn grid_point(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
}

/// First 16 hex digits of the SHA-256 of a value's JSON form.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    let hash = Sha256::digest(&json);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Carries the last observed target value forward.
#[derive(Debug, Clone, Copy, Default)]
pub struct LastValue;

impl Forecaster for LastValue {
    fn label(&self) -> String {
        "Naive".into()
    }

    fn config_digest(&self) -> String {
        config_digest(&"last_value")
    }

    fn forecast(&self, history: &SeriesMatrix, target: usize, _h: usize) -> Result<f64> {
        history.check_target(target)?;
        history.column(target).last().copied().ok_or_else(|| Error::input("empty history"))
    }
}

/// The infeasible forecast from the planted parameters of a simulated panel.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oracle;

impl Forecaster for Oracle {
    fn label(&self) -> String {
        "Oracle".into()
    }

    fn config_digest(&self) -> String {
        config_digest(&"oracle")
    }

    fn forecast(&self, _history: &SeriesMatrix, _target: usize, _h: usize) -> Result<f64> {
        Err(Error::input("the oracle needs a simulated panel with its truth record"))
    }

    fn forecast_panel(&self, panel: &GeneratedPanel) -> Result<f64> {
        Ok(oracle_forecast(panel))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub method: String,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub r: Option<usize>,
    /// Replication seed in simulation studies.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Zero-based row of the forecast origin `t`.
    pub origin: usize,
    pub horizon: usize,
    pub predicted: f64,
    pub realized: f64,
    pub config_digest: String,
}

impl ForecastRecord {
    pub fn error(&self) -> f64 {
        self.predicted - self.realized
    }
}

/// Refits `method` on the trailing `window` rows at each of the last
/// `test_len` origins and forecasts `h` steps ahead.
///
/// Origins run from `n − h − test_len` to `n − 1 − h`, so every realized
/// value is observed. Windows are processed in parallel; the output is in
/// origin order. The first failing origin aborts the run.
pub fn rolling_forecast(
    series: &SeriesMatrix,
    target: usize,
    method: &dyn Forecaster,
    window: usize,
    h: usize,
    test_len: usize,
) -> Result<Vec<ForecastRecord>> {
    series.check_target(target)?;
    let n = series.n_obs();
    ensure_input!(h >= 1 && test_len >= 1 && window >= 1, "window, h and test_len must be positive");
    ensure_input!(
        window + h + test_len <= n,
        "window {window} + h {h} + test_len {test_len} exceeds {n} observations"
    );
    let first = n - h - test_len;
    let (q, r) = method.grid_point();
    let label = method.label();
    let digest = method.config_digest();
    let y = series.column(target);

    let outcomes: Vec<Result<ForecastRecord>> = (first..n - h)
        .into_par_iter()
        .map(|t| {
            let history = series.slice_rows(t + 1 - window, t + 1);
            let predicted = method.forecast(&history, target, h).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::input("non-finite forecast"))
                }
            });
            predicted
                .map(|predicted| ForecastRecord {
                    method: label.clone(),
                    q,
                    r,
                    seed: None,
                    origin: t,
                    horizon: h,
                    predicted,
                    realized: y[t + h],
                    config_digest: digest.clone(),
                })
                .map_err(|e| Error::Window { origin: t, method: label.clone(), source: Box::new(e) })
        })
        .collect();
    outcomes.into_iter().collect()
}

pub fn rmsfe(records: &[ForecastRecord]) -> Result<f64> {
    ensure_input!(!records.is_empty(), "no forecasts to score");
    let errors: Vec<f64> = records.iter().map(ForecastRecord::error).collect();
    Ok(rmsfe_of_errors(&errors))
}

/// `sqrt(mean(e²))`, accumulated in sorted order so the result does not
/// depend on the order of the errors.
pub fn rmsfe_of_errors(errors: &[f64]) -> f64 {
    let mut sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    sq.sort_by(f64::total_cmp);
    mean(&sq).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided p-value against "a is more accurate than b".
    pub p_value: f64,
    pub n_forecasts: usize,
    pub horizon: usize,
    /// The long-run variance estimate was non-positive and fell back to `γ̂₀`.
    pub variance_floored: bool,
    /// The loss differential was constant, so the test is uninformative.
    pub degenerate: bool,
}

/// Autocovariance of `d` at `lag` with `1/T` normalisation.
fn autocovariance(d: &[f64], dbar: f64, lag: usize) -> f64 {
    let t = d.len();
    (lag..t).map(|i| (d[i] - dbar) * (d[i - lag] - dbar)).sum::<f64>() / t as f64
}

/// Diebold–Mariano test on squared-error loss with the Harvey small-sample
/// correction.
///
/// The p-value is the Student-t(`T − 1`) lower tail at the statistic, so a
/// negative statistic (method `a` has smaller losses) gives a small p-value.
/// The lower tail of `−|stat|` is rounded to a value whose complement is exact,
/// which makes swapping `a` and `b` map `p` to exactly `1 − p`.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], h: usize) -> Result<DmResult> {
    ensure_input!(
        errors_a.len() == errors_b.len(),
        "error vectors differ in length ({} vs {})",
        errors_a.len(),
        errors_b.len()
    );
    ensure_input!(h >= 1, "horizon must be at least 1");
    let t = errors_a.len();
    ensure_input!(t >= 8, "need at least 8 forecasts, got {t}");
    ensure_input!(
        errors_a.iter().chain(errors_b).all(|e| e.is_finite()),
        "forecast errors must be finite"
    );

    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a * a - b * b).collect();
    let dbar = d.iter().sum::<f64>() / t as f64;
    let gamma0 = autocovariance(&d, dbar, 0);

    if gamma0 == 0.0 {
        // constant differential: zero gives no evidence either way, a nonzero
        // constant is infinitely significant
        let (statistic, p_value) = if dbar == 0.0 {
            (0.0, 0.5)
        } else if dbar < 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else {
            (f64::INFINITY, 1.0)
        };
        return Ok(DmResult { statistic, p_value, n_forecasts: t, horizon: h, variance_floored: false, degenerate: true });
    }

    let mut v = gamma0;
    for l in 1..h.min(t) {
        v += 2.0 * autocovariance(&d, dbar, l);
    }
    let variance_floored = v <= 0.0;
    if variance_floored {
        v = gamma0;
    }
    let (tf, hf) = (t as f64, h as f64);
    let harvey = ((tf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / tf) / tf).sqrt();
    let statistic = dbar / (v / tf).sqrt() * harvey;

    let dist = StudentsT::new(0.0, 1.0, tf - 1.0).expect("positive degrees of freedom");
    let lower = dist.cdf(-statistic.abs());
    let lower = 1.0 - (1.0 - lower);
    let p_value = if statistic <= 0.0 { lower } else { 1.0 - lower };
    Ok(DmResult { statistic, p_value, n_forecasts: t, horizon: h, variance_floored, degenerate: false })
}

/// Per-method result of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub method: String,
    pub q: Option<usize>,
    pub r: Option<usize>,
    pub config_digest: String,
    /// `None` when every replication failed.
    pub rmsfe: Option<f64>,
    /// Delta-method standard error of the RMSFE; 0 with one replication.
    pub mc_stderr: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub seed: u64,
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub rows: Vec<McRow>,
    /// Successful forecasts, ordered by seed then method.
    pub records: Vec<ForecastRecord>,
    pub failures: Vec<ReplicationFailure>,
}

impl MonteCarloSummary {
    pub fn row(&self, label: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| r.method == label)
    }

    /// Forecast errors of one method keyed by seed.
    pub fn errors_by_seed(&self, method_index: usize) -> Vec<(u64, f64)> {
        let row = &self.rows[method_index];
        self.records
            .iter()
            .filter(|r| r.config_digest == row.config_digest && r.method == row.method)
            .map(|r| (r.seed.unwrap_or(0), r.error()))
            .collect()
    }
}

/// Seed of replication `i`.
pub fn replication_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_add(i as u64)
}

/// Summarises squared errors into an RMSFE and its delta-method standard error.
fn summarise(errors: &[f64]) -> (Option<f64>, Option<f64>) {
    if errors.is_empty() {
        return (None, None);
    }
    let rmsfe = rmsfe_of_errors(errors);
    let k = errors.len();
    if k < 2 || rmsfe == 0.0 {
        return (Some(rmsfe), Some(0.0));
    }
    let mut sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    sq.sort_by(f64::total_cmp);
    let mse = mean(&sq);
    let var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (k - 1) as f64;
    let se_mse = (var / k as f64).sqrt();
    (Some(rmsfe), Some(se_mse / (2.0 * rmsfe)))
}

/// Simulates `replications` panels from `template` (seeds `base_seed + i`),
/// forecasts each holdout target with every method, and reports RMSFE per
/// method. Failed fits are counted and listed, never dropped silently.
pub fn monte_carlo_study(
    template: &DgpConfig,
    methods: &[&dyn Forecaster],
    replications: usize,
    base_seed: u64,
) -> Result<MonteCarloSummary> {
    ensure_input!(replications >= 1, "need at least one replication");
    ensure_input!(!methods.is_empty(), "no methods to evaluate");
    template.validate()?;
    let n = template.n;

    type Outcome = (u64, usize, std::result::Result<(f64, f64), String>);
    let per_rep: Vec<Result<Vec<Outcome>>> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let seed = replication_seed(base_seed, i);
            let panel = generate(&template.with_seed(seed))?;
            let realized = panel.holdout_target();
            Ok(methods
                .iter()
                .enumerate()
                .map(|(m, method)| {
                    let out = match method.forecast_panel(&panel) {
                        Ok(v) if v.is_finite() => Ok((v, realized)),
                        Ok(_) => Err("non-finite forecast".to_string()),
                        Err(e) => Err(e.to_string()),
                    };
                    (seed, m, out)
                })
                .collect())
        })
        .collect();

    let mut outcomes = Vec::with_capacity(replications * methods.len());
    for rep in per_rep {
        outcomes.extend(rep?);
    }
    outcomes.sort_by_key(|(seed, m, _)| (*seed, *m));

    let labels: Vec<String> = methods.iter().map(|m| m.label()).collect();
    let digests: Vec<String> = methods.iter().map(|m| m.config_digest()).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    for (seed, m, out) in outcomes {
        match out {
            Ok((predicted, realized)) => {
                let (q, r) = methods[m].grid_point();
                errors[m].push(predicted - realized);
                records.push(ForecastRecord {
                    method: labels[m].clone(),
                    q,
                    r,
                    seed: Some(seed),
                    origin: n - 1,
                    horizon: 1,
                    predicted,
                    realized,
                    config_digest: digests[m].clone(),
                });
            }
            Err(message) => failures.push(ReplicationFailure { seed, method: labels[m].clone(), message }),
        }
    }

    let rows = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let (rmsfe, mc_stderr) = summarise(&errors[m]);
            let (q, r) = method.grid_point();
            McRow {
                method: labels[m].clone(),
                q,
                r,
                config_digest: digests[m].clone(),
                rmsfe,
                mc_stderr,
                n_ok: errors[m].len(),
                n_failed: replications - errors[m].len(),
            }
        })
        .collect();
    Ok(MonteCarloSummary { rows, records, failures })
}
