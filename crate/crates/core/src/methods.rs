//! Forecasting methods as serialisable configurations.
//!
//! A [`MethodConfig`] fixes everything except the lag count `q` and the
//! factor count `r`, which come from the experiment grid. Binding both
//! yields a [`GridMethod`], the unit that gets evaluated.

use serde::{Deserialize, Serialize};

use crate::baselines::{lagged_design, lagged_row, lasso_bic, lyb_factors, sw_factors};
use crate::error::{ensure_input, Result};
use crate::evaluation::{config_digest, Forecaster};
use crate::numerics::Matrix;
use crate::pipeline::{fit_go_sdpca, fit_sdpca_all, predict_go_sdpca, GoSdpcaConfig};
use crate::sdpca::{fit_predictive_from, forecast_one, FactorPanel, FitMethod, DEFAULT_LASSO_PATH_LEN};
use crate::series::SeriesMatrix;

fn default_rounds() -> usize {
    10
}
fn default_c() -> f64 {
    2.0
}
fn default_q1() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_path_len() -> usize {
    DEFAULT_LASSO_PATH_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Screening with peeling, then sdPCA on the survivors.
    GoSdpca {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_rounds", alias = "M")]
        rounds: usize,
        #[serde(default = "default_c", alias = "C")]
        c: f64,
        #[serde(default = "default_q1")]
        q1: usize,
        #[serde(default, alias = "K_n")]
        k_n: Option<usize>,
        #[serde(default)]
        fit_method: FitMethod,
        #[serde(default = "default_true")]
        null_check: bool,
    },
    /// sdPCA on every predictor.
    Sdpca {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        fit_method: FitMethod,
    },
    /// Principal components of the standardised panel.
    Sw {
        #[serde(default)]
        label: Option<String>,
    },
    /// Autocovariance eigenanalysis factors using `q` lags.
    Lyb {
        #[serde(default)]
        label: Option<String>,
    },
    /// BIC-tuned Lasso on `q` lags of the target and every predictor.
    Lasso {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_path_len")]
        path_len: usize,
    },
    /// Autoregression of order `q`.
    Ar {
        #[serde(default)]
        label: Option<String>,
    },
    /// Last observed value.
    LastValue {
        #[serde(default)]
        label: Option<String>,
    },
}

impl MethodConfig {
    pub fn go_sdpca(rounds: usize) -> Self {
        MethodConfig::GoSdpca {
            label: None,
            rounds,
            c: 2.0,
            q1: 2,
            k_n: None,
            fit_method: FitMethod::Ols,
            null_check: true,
        }
    }

    pub fn label(&self) -> String {
        use MethodConfig::*;
        let (custom, default) = match self {
            GoSdpca { label, rounds, .. } => (label, if *rounds == 1 { "GsP" } else { "GsP*" }),
            Sdpca { label, .. } => (label, "sdPCA"),
            Sw { label } => (label, "SW"),
            Lyb { label } => (label, "LYB"),
            Lasso { label, .. } => (label, "Lasso"),
            Ar { label } => (label, "AR"),
            LastValue { label } => (label, "Naive"),
        };
        custom.clone().unwrap_or_else(|| default.to_string())
    }

    pub fn uses_q(&self) -> bool {
        !matches!(self, MethodConfig::LastValue { .. })
    }

    pub fn uses_r(&self) -> bool {
        matches!(
            self,
            MethodConfig::GoSdpca { .. } | MethodConfig::Sdpca { .. } | MethodConfig::Sw { .. } | MethodConfig::Lyb { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::GoSdpca { rounds, c, q1, k_n, fit_method, null_check, .. } => {
                let cfg = GoSdpcaConfig {
                    q1: *q1,
                    m: *rounds,
                    c: *c,
                    k_n: *k_n,
                    fit_method: *fit_method,
                    null_check: *null_check,
                    ..GoSdpcaConfig::default()
                };
                cfg.validate()
            }
            MethodConfig::Lasso { path_len, .. } if *path_len < 2 => {
                Err(crate::error::Error::Config("lasso path_len must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }

    /// Binds the grid point. Methods that ignore `q` or `r` drop them.
    pub fn at(&self, q: usize, r: usize) -> GridMethod {
        GridMethod {
            config: self.clone(),
            q: self.uses_q().then_some(q),
            r: self.uses_r().then_some(r),
        }
    }
}

/// A method with its grid point fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMethod {
    pub config: MethodConfig,
    pub q: Option<usize>,
    pub r: Option<usize>,
}

impl GridMethod {
    fn q(&self) -> usize {
        self.q.unwrap_or(1)
    }

    fn r(&self) -> usize {
        self.r.unwrap_or(1)
    }

    fn pipeline_config(&self, h: usize) -> GoSdpcaConfig {
        let (q, r) = (self.q(), self.r());
        let base = GoSdpcaConfig { q2: q, q3: q, h, r, ..GoSdpcaConfig::default() };
        match &self.config {
            MethodConfig::GoSdpca { rounds, c, q1, k_n, fit_method, null_check, .. } => GoSdpcaConfig {
                q1: *q1,
                m: *rounds,
                c: *c,
                k_n: *k_n,
                fit_method: *fit_method,
                null_check: *null_check,
                ..base
            },
            MethodConfig::Sdpca { fit_method, .. } => GoSdpcaConfig { fit_method: *fit_method, ..base },
            _ => base,
        }
    }
}

/// OLS predictive regression on factors that cover every row of the history,
/// evaluated at the last row.
fn forecast_with_factors(history: &SeriesMatrix, target: usize, panel: &FactorPanel, q: usize, h: usize) -> Result<f64> {
    let y = history.column(target);
    let model = fit_predictive_from(y, &panel.factors, 0, q, h, FitMethod::Ols, 0, q - 1, DEFAULT_LASSO_PATH_LEN)?;
    let t = history.n_obs() - 1;
    forecast_one(&model, &y[t + 1 - q..=t], &panel.factors.row(t))
}

/// Largest factor count the predictive regression can carry.
fn clip_r(history: &SeriesMatrix, q: usize, h: usize, r: usize, predictors: usize) -> Result<usize> {
    let rows = history.n_obs().saturating_sub(h + q - 1);
    let room = rows.saturating_sub(q + 5);
    let r = r.min(room).min(predictors).min(history.n_obs());
    ensure_input!(r >= 1, "too few rows for a factor model");
    Ok(r)
}

impl Forecaster for GridMethod {
    fn label(&self) -> String {
        self.config.label()
    }

    fn config_digest(&self) -> String {
        config_digest(self)
    }

    fn grid_point(&self) -> (Option<usize>, Option<usize>) {
        (self.q, self.r)
    }

    fn forecast(&self, history: &SeriesMatrix, target: usize, h: usize) -> Result<f64> {
        history.check_target(target)?;
        ensure_input!(history.n_obs() >= 1, "empty history");
        let q = self.q();
        let p = history.n_cols() - 1;
        match &self.config {
            MethodConfig::GoSdpca { .. } => {
                let fit = fit_go_sdpca(history, target, &self.pipeline_config(h))?;
                predict_go_sdpca(&fit, history)
            }
            MethodConfig::Sdpca { .. } => {
                let fit = fit_sdpca_all(history, target, &self.pipeline_config(h))?;
                predict_go_sdpca(&fit, history)
            }
            MethodConfig::Sw { .. } => {
                let r = clip_r(history, q, h, self.r(), p)?;
                let panel = sw_factors(history, target, r)?;
                forecast_with_factors(history, target, &panel, q, h)
            }
            MethodConfig::Lyb { .. } => {
                let r = clip_r(history, q, h, self.r(), p)?;
                let panel = lyb_factors(history, target, q, r)?;
                forecast_with_factors(history, target, &panel, q, h)
            }
            MethodConfig::Lasso { path_len, .. } => {
                let (x, response) = lagged_design(history, target, q, h)?;
                let fit = lasso_bic(&x, &response, *path_len)?;
                let row = lagged_row(history, target, q, history.n_obs() - 1);
                Ok(fit.intercept + row.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>())
            }
            MethodConfig::Ar { .. } => {
                let y = history.column(target);
                let empty = Matrix::zeros(history.n_obs(), 0);
                let model = fit_predictive_from(y, &empty, 0, q, h, FitMethod::Ols, 0, q - 1, DEFAULT_LASSO_PATH_LEN)?;
                let t = history.n_obs() - 1;
                forecast_one(&model, &y[t + 1 - q..=t], &[])
            }
            MethodConfig::LastValue { .. } => Ok(*history.column(target).last().expect("non-empty")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate, DgpConfig};

    #[test]
    fn json_round_trip_and_labels() {
        let text = r#"[
            {"method": "go_sdpca"},
            {"method": "go_sdpca", "M": 1},
            {"method": "sdpca"},
            {"method": "sw"},
            {"method": "lyb", "label": "LYB-q"},
            {"method": "lasso", "path_len": 50},
            {"method": "ar"},
            {"method": "last_value"}
        ]"#;
        let methods: Vec<MethodConfig> = serde_json::from_str(text).unwrap();
        let labels: Vec<String> = methods.iter().map(MethodConfig::label).collect();
        assert_eq!(labels, ["GsP*", "GsP", "sdPCA", "SW", "LYB-q", "Lasso", "AR", "Naive"]);
        let back: Vec<MethodConfig> = serde_json::from_str(&serde_json::to_string(&methods).unwrap()).unwrap();
        assert_eq!(back, methods);
        assert!(serde_json::from_str::<MethodConfig>(r#"{"method": "sw", "r": 3}"#).is_err());
        assert!(serde_json::from_str::<MethodConfig>(r#"{"method": "rf"}"#).is_err());
    }

    #[test]
    fn digests_ignore_unused_grid_values() {
        let lasso = MethodConfig::Lasso { label: None, path_len: 100 };
        assert_eq!(lasso.at(2, 3).config_digest(), lasso.at(2, 7).config_digest());
        assert_ne!(lasso.at(2, 3).config_digest(), lasso.at(3, 3).config_digest());
        let sw = MethodConfig::Sw { label: None };
        assert_ne!(sw.at(2, 3).config_digest(), sw.at(2, 4).config_digest());
    }

    #[test]
    fn every_method_forecasts_a_simulated_panel() {
        let panel = generate(&DgpConfig { dgp_id: 1, n: 120, p: 40, r_dgp: 2, s: 10, seed: 3 }).unwrap();
        let methods = [
            MethodConfig::go_sdpca(10),
            MethodConfig::go_sdpca(1),
            MethodConfig::Sdpca { label: None, fit_method: FitMethod::Ols },
            MethodConfig::Sw { label: None },
            MethodConfig::Lyb { label: None },
            MethodConfig::Lasso { label: None, path_len: 40 },
            MethodConfig::Ar { label: None },
            MethodConfig::LastValue { label: None },
        ];
        for m in &methods {
            let v = m.at(2, 3).forecast_panel(&panel).unwrap();
            assert!(v.is_finite(), "{}", m.label());
        }
    }
}
