//! The composed forecaster: group screening with peeling, supervised dynamic
//! PCA on the screened predictors, and a predictive regression on the factors.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Error, Result};
use crate::numerics::{mean, Matrix};
use crate::sdpca::{
    build_intermediate_panel, extract_sdpca_factors, fit_predictive_from, forecast_one, FactorPanel, FitMethod,
    IntermediatePanel, PredictiveModel, DEFAULT_LASSO_PATH_LEN,
};
use crate::selection::{build_group_design, default_k_n, peel_with, PeelOptions, PeelResult};
use crate::series::SeriesMatrix;

fn default_two() -> usize {
    2
}
fn default_one() -> usize {
    1
}
fn default_r() -> usize {
    10
}
fn default_rounds() -> usize {
    10
}
fn default_c() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoSdpcaConfig {
    /// Lags per predictor in the screening groups.
    #[serde(default = "default_two")]
    pub q1: usize,
    /// Lags in each intermediate regression.
    #[serde(default = "default_two")]
    pub q2: usize,
    /// Autoregressive order of the predictive regression.
    #[serde(default = "default_two")]
    pub q3: usize,
    #[serde(default = "default_one")]
    pub h: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    /// Peeling rounds; 1 gives the single-pass variant.
    #[serde(default = "default_rounds", alias = "M")]
    pub m: usize,
    /// Greedy path cap; `None` uses the sample-size rule in [`default_k_n`].
    #[serde(default, alias = "K_n")]
    pub k_n: Option<usize>,
    #[serde(default = "default_c", alias = "C")]
    pub c: f64,
    #[serde(default)]
    pub fit_method: FitMethod,
    /// Stop peeling at a round whose chosen model does not beat the empty model.
    #[serde(default = "default_true")]
    pub null_check: bool,
    /// Demean every column before screening. The greedy criterion has no
    /// intercept, so a nonzero target mean would otherwise be chased by
    /// whichever predictor has the largest level.
    #[serde(default = "default_true")]
    pub center_screening: bool,
    /// Extra lags of the factors in the predictive regression.
    #[serde(default)]
    pub factor_lags: usize,
    /// Choose each intermediate regression's lag count by BIC, up to `q2`.
    #[serde(default)]
    pub bic_lags: bool,
}

impl Default for GoSdpcaConfig {
    fn default() -> Self {
        GoSdpcaConfig {
            q1: 2,
            q2: 2,
            q3: 2,
            h: 1,
            r: 10,
            m: 10,
            k_n: None,
            c: 2.0,
            fit_method: FitMethod::Ols,
            null_check: true,
            center_screening: true,
            factor_lags: 0,
            bic_lags: false,
        }
    }
}

impl GoSdpcaConfig {
    /// The single-round variant of `self`.
    pub fn single_round(&self) -> Self {
        GoSdpcaConfig { m: 1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [("q1", self.q1), ("q2", self.q2), ("q3", self.q3), ("h", self.h), ("r", self.r), ("M", self.m)];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.k_n == Some(0) {
            return Err(Error::Config("K_n must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// First origin of the predictive regression; the intermediate panel
    /// starts `factor_lags` rows earlier.
    fn first_origin(&self) -> usize {
        (self.q2 - 1 + self.factor_lags).max(self.q3 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGoSdpca {
    pub target: usize,
    /// Screening outcome. Group `g` is the `g`-th non-target column.
    pub selection: PeelResult,
    /// Panel column ids of the selected predictors, ascending.
    pub selected_columns: Vec<usize>,
    /// `None` for the autoregressive fallback.
    pub panel: Option<IntermediatePanel>,
    pub factors: Option<FactorPanel>,
    pub model: PredictiveModel,
    pub config: GoSdpcaConfig,
    /// True when nothing was selected and the model is a pure AR.
    pub degraded: bool,
    /// Factor count actually used.
    pub r_used: usize,
    pub warnings: Vec<String>,
}

fn centred_copy(series: &SeriesMatrix) -> Result<SeriesMatrix> {
    let data = series.data();
    let cols: Vec<Vec<f64>> = data
        .columns()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    SeriesMatrix::with_time_index(
        series.names().to_vec(),
        series.time_index().to_vec(),
        Matrix::from_columns(series.n_obs(), &cols),
    )
}

/// Fits the full pipeline on every row of `series`.
pub fn fit_go_sdpca(series: &SeriesMatrix, target: usize, config: &GoSdpcaConfig) -> Result<FittedGoSdpca> {
    config.validate()?;
    series.check_target(target)?;
    let screened = if config.center_screening { centred_copy(series)? } else { series.clone() };
    let design = build_group_design(&screened, target, config.q1, config.h)?;
    let k_n = config.k_n.unwrap_or_else(|| default_k_n(design.n_eff(), design.n_groups(), config.q1));
    let opts = PeelOptions { rounds: config.m, k_n, c: config.c, null_check: config.null_check };
    let selection = peel_with(&design, &opts)?;
    let columns: Vec<usize> = selection.union_set.iter().map(|&g| design.predictor_ids[g]).collect();
    fit_on_predictors(series, target, config, selection, columns)
}

/// sdPCA on every predictor, skipping the screening step.
pub fn fit_sdpca_all(series: &SeriesMatrix, target: usize, config: &GoSdpcaConfig) -> Result<FittedGoSdpca> {
    config.validate()?;
    series.check_target(target)?;
    let columns = series.predictor_ids(target);
    let selection = PeelResult { rounds: Vec::new(), union_set: (0..columns.len()).collect() };
    fit_on_predictors(series, target, config, selection, columns)
}

fn fit_on_predictors(
    series: &SeriesMatrix,
    target: usize,
    config: &GoSdpcaConfig,
    selection: PeelResult,
    columns: Vec<usize>,
) -> Result<FittedGoSdpca> {
    let y = series.column(target);
    let start = config.first_origin();
    let mut warnings = Vec::new();

    let panel = if columns.is_empty() {
        None
    } else {
        let panel = build_intermediate_panel(
            series,
            target,
            &columns,
            config.q2,
            config.h,
            start - config.factor_lags,
            config.bic_lags,
        )?;
        warnings.extend(panel.warnings.iter().cloned());
        (!panel.predictor_ids.is_empty()).then_some(panel)
    };

    let Some(panel) = panel else {
        warnings.push("no predictors selected; using an autoregressive model".into());
        let empty = Matrix::zeros(series.n_obs(), 0);
        let model = fit_predictive_from(
            y,
            &empty,
            0,
            config.q3,
            config.h,
            config.fit_method,
            0,
            config.q3 - 1,
            DEFAULT_LASSO_PATH_LEN,
        )?;
        return Ok(FittedGoSdpca {
            target,
            selection,
            selected_columns: columns,
            panel: None,
            factors: None,
            model,
            config: config.clone(),
            degraded: true,
            r_used: 0,
            warnings,
        });
    };

    // clip r to what the panel and the predictive regression can support
    let rows = panel.xhat.rows();
    let regression_rows = rows - config.factor_lags;
    let room = regression_rows.saturating_sub(config.q3 + 5) / (config.factor_lags + 1);
    let r_used = config.r.min(panel.predictor_ids.len()).min(rows).min(room);
    ensure_input!(r_used >= 1, "too few rows ({rows}) to fit any factor");
    if r_used < config.r {
        warnings.push(format!(
            "factor count clipped from {} to {r_used} ({} predictors kept, {rows} rows)",
            config.r,
            panel.predictor_ids.len()
        ));
    }

    let factors = extract_sdpca_factors(&panel, r_used)?;
    let model = fit_predictive_from(
        y,
        &factors.factors,
        factors.first_row,
        config.q3,
        config.h,
        config.fit_method,
        config.factor_lags,
        start,
        DEFAULT_LASSO_PATH_LEN,
    )?;
    Ok(FittedGoSdpca {
        target,
        selection,
        selected_columns: columns,
        panel: Some(panel),
        factors: Some(factors),
        model,
        config: config.clone(),
        degraded: false,
        r_used,
        warnings,
    })
}

/// Factor vector at origin `t` from the fitted per-predictor coefficients
/// and loadings.
pub fn factors_at(fit: &FittedGoSdpca, series: &SeriesMatrix, t: usize) -> Result<Vec<f64>> {
    let (Some(panel), Some(factors)) = (&fit.panel, &fit.factors) else {
        return Ok(Vec::new());
    };
    let history = panel.fits.iter().map(|f| f.lags()).max().unwrap_or(1);
    ensure_input!(t + 1 >= history, "origin {t} has too little history for {history} lags");
    let xhat = panel.xhat_at(series, t);
    Ok(factors.loadings.tr_mul_vec(&xhat))
}

/// Forecast of `y_{t+h}` where `t` is the last row of `series`.
///
/// Only rows up to `t` are read. The panel must have the same columns as the
/// one the model was fitted on.
pub fn predict_go_sdpca(fit: &FittedGoSdpca, series: &SeriesMatrix) -> Result<f64> {
    ensure_input!(series.n_obs() >= 1, "empty history");
    ensure_input!(
        fit.selected_columns.iter().all(|&j| j < series.n_cols()) && fit.target < series.n_cols(),
        "history panel is missing fitted columns"
    );
    let t = series.n_obs() - 1;
    let q3 = fit.model.q3;
    let lags = fit.model.factor_lags;
    ensure_input!(t + 1 >= q3 && t >= lags, "origin {t} has too little history");
    let y = series.column(fit.target);
    let y_recent = &y[t + 1 - q3..=t];
    let mut stacked = Vec::new();
    if !fit.degraded {
        for l in 0..=lags {
            stacked.extend(factors_at(fit, series, t - l)?);
        }
    }
    forecast_one(&fit.model, y_recent, &stacked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::goga_hdaic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn factor_panel(seed: u64, n: usize, p: usize, relevant: usize) -> SeriesMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::from_fn(n, p, |t, j| {
            let e: f64 = rng.sample(StandardNormal);
            if j < relevant {
                2.0 * f[t] + 0.5 * e
            } else {
                e
            }
        });
        let mut y = vec![0.0; n];
        for t in 1..n {
            let e: f64 = rng.sample(StandardNormal);
            y[t] = 0.4 * y[t - 1] + 1.5 * f[t - 1] + 0.3 * e;
        }
        SeriesMatrix::from_target_and_predictors(y, &x).unwrap()
    }

    fn small_config() -> GoSdpcaConfig {
        GoSdpcaConfig { r: 2, m: 3, ..GoSdpcaConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(GoSdpcaConfig::default().validate().is_ok());
        assert!(GoSdpcaConfig { q2: 0, ..Default::default() }.validate().is_err());
        assert!(GoSdpcaConfig { c: 0.0, ..Default::default() }.validate().is_err());
        assert!(GoSdpcaConfig { k_n: Some(0), ..Default::default() }.validate().is_err());
        let parsed: GoSdpcaConfig = serde_json::from_str(r#"{"M": 1, "C": 3.0}"#).unwrap();
        assert_eq!(parsed.m, 1);
        assert_eq!(parsed.c, 3.0);
        assert!(serde_json::from_str::<GoSdpcaConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn finds_relevant_predictors() {
        let s = factor_panel(1, 150, 40, 6);
        let fit = fit_go_sdpca(&s, 0, &small_config()).unwrap();
        assert!(!fit.degraded);
        let relevant = fit.selected_columns.iter().filter(|&&j| j <= 6).count();
        assert!(relevant >= 4, "selected {:?}", fit.selected_columns);
        assert_eq!(fit.r_used, 2);
    }

    #[test]
    fn single_round_matches_plain_selection() {
        let s = factor_panel(2, 120, 30, 5);
        let cfg = GoSdpcaConfig { null_check: false, ..small_config().single_round() };
        let fit = fit_go_sdpca(&s, 0, &cfg).unwrap();
        let design = build_group_design(&centred_copy(&s).unwrap(), 0, 2, 1).unwrap();
        let k_n = default_k_n(design.n_eff(), design.n_groups(), 2);
        let all: Vec<usize> = (0..design.n_groups()).collect();
        let single = goga_hdaic(&design, &all, k_n, 2.0).unwrap();
        assert_eq!(fit.selection.rounds.len(), 1);
        assert_eq!(fit.selection.rounds[0], single);
    }

    #[test]
    fn last_origin_reproduces_fitted_value() {
        let s = factor_panel(3, 120, 25, 5);
        let fit = fit_go_sdpca(&s, 0, &small_config()).unwrap();
        let t = fit.model.last_origin;
        let pred = predict_go_sdpca(&fit, &s.slice_rows(0, t + 1)).unwrap();
        let last = *fit.model.fitted.last().unwrap();
        assert!((pred - last).abs() < 1e-10, "{pred} vs {last}");
    }

    #[test]
    fn prediction_matches_hand_chain() {
        let s = factor_panel(4, 100, 5, 3);
        let cfg = GoSdpcaConfig { r: 2, ..GoSdpcaConfig::default() };
        let fit = fit_sdpca_all(&s, 0, &cfg).unwrap();
        let panel = fit.panel.as_ref().unwrap();
        let fp = fit.factors.as_ref().unwrap();
        let t = s.n_obs() - 1;
        let y = s.column(0);
        let mut f = [0.0; 2];
        for (k, (&j, ifit)) in panel.predictor_ids.iter().zip(&panel.fits).enumerate() {
            let x = s.column(j);
            let xhat = ifit.slopes[0] * (x[t] - ifit.lag_means[0]) + ifit.slopes[1] * (x[t - 1] - ifit.lag_means[1]);
            for (c, fc) in f.iter_mut().enumerate() {
                *fc += fp.loadings[(k, c)] * xhat;
            }
        }
        let m = &fit.model;
        let manual = m.intercept
            + m.ar_coefficients[0] * y[t]
            + m.ar_coefficients[1] * y[t - 1]
            + m.factor_coefficients[0] * f[0]
            + m.factor_coefficients[1] * f[1];
        assert!((predict_go_sdpca(&fit, &s).unwrap() - manual).abs() < 1e-10);
    }

    #[test]
    fn noiseless_planted_model() {
        let n = 160;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Vec<f64> = (0..n + 1).map(|_| rng.sample(StandardNormal)).collect();
        // x_j = a_j·f exactly for the first four predictors, noise elsewhere
        let x = Matrix::from_fn(n + 1, 12, |t, j| if j < 4 { (j as f64 + 1.0) * f[t] } else { rng.sample(StandardNormal) });
        let mut y = vec![0.0; n + 1];
        for t in 2..=n {
            y[t] = 0.6 * y[t - 1] + 0.2 * y[t - 2] + f[t - 1];
        }
        let s = SeriesMatrix::from_target_and_predictors(y.clone(), &x).unwrap();
        let cfg = GoSdpcaConfig { r: 1, q2: 1, ..GoSdpcaConfig::default() };
        let fit = fit_go_sdpca(&s.slice_rows(0, n), 0, &cfg).unwrap();
        assert!(!fit.degraded);
        let pred = predict_go_sdpca(&fit, &s.slice_rows(0, n)).unwrap();
        assert!((pred - y[n]).abs() < 1e-4, "{pred} vs {}", y[n]);
    }

    #[test]
    fn degraded_fit_ignores_predictors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..80).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::from_fn(80, 10, |_, _| rng.sample(StandardNormal));
        let s = SeriesMatrix::from_target_and_predictors(y, &x).unwrap();
        let cfg = GoSdpcaConfig { c: 1e6, ..small_config() };
        let fit = fit_go_sdpca(&s, 0, &cfg).unwrap();
        assert!(fit.degraded);
        assert_eq!(fit.r_used, 0);
        let base = predict_go_sdpca(&fit, &s).unwrap();
        let mut data = s.data().clone();
        data.col_mut(3).iter_mut().for_each(|v| *v += 5.0);
        let moved = SeriesMatrix::new(s.names().to_vec(), data).unwrap();
        assert_eq!(predict_go_sdpca(&fit, &moved).unwrap(), base);
    }

    #[test]
    fn factor_count_is_clipped() {
        let s = factor_panel(7, 100, 3, 3);
        let cfg = GoSdpcaConfig { r: 10, ..GoSdpcaConfig::default() };
        let fit = fit_sdpca_all(&s, 0, &cfg).unwrap();
        assert_eq!(fit.r_used, 3);
        assert!(fit.warnings.iter().any(|w| w.contains("clipped")));
    }

    #[test]
    fn fits_are_deterministic() {
        let s = factor_panel(8, 120, 30, 5);
        let a = fit_go_sdpca(&s, 0, &small_config()).unwrap();
        let b = fit_go_sdpca(&s, 0, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lasso_predictive_fit_runs() {
        let s = factor_panel(9, 150, 20, 5);
        let cfg = GoSdpcaConfig { fit_method: FitMethod::Lasso, factor_lags: 1, ..small_config() };
        let fit = fit_go_sdpca(&s, 0, &cfg).unwrap();
        assert_eq!(fit.model.factor_coefficients.len(), 2 * fit.r_used);
        assert!(predict_go_sdpca(&fit, &s).unwrap().is_finite());
    }
}
