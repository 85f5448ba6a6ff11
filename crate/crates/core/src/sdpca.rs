//! Supervised dynamic PCA.
//!
//! For each predictor `j`, regress `y_{t+h}` on an intercept and the lags
//! `x_{t,j}, …, x_{t−q2+1,j}`. The slope part of the fit, centred over the
//! regression rows, is the intermediate prediction `x̂_{t,j}`; it is measured in
//! the target's units, so no re-standardisation is needed before PCA. The top
//! principal directions of the `x̂` panel give the factors, which enter a
//! predictive regression together with autoregressive lags of the target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::lasso_bic;
use crate::error::{ensure_input, Error, Result};
use crate::numerics::{dot, fix_sign, least_squares, mean, norm, sym_eig_top, variance, Matrix, DEFAULT_RANK_TOL};
use crate::series::SeriesMatrix;

/// Default number of penalty levels on the Lasso path of the predictive regression.
pub const DEFAULT_LASSO_PATH_LEN: usize = 100;

/// One per-predictor regression of the future target on the predictor's own lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateFit {
    /// `γ̂_{j,0..q2}`: weight on `x_{t−k}`.
    pub slopes: Vec<f64>,
    /// Mean of lag `k` over the regression rows; `x̂` is centred with these.
    pub lag_means: Vec<f64>,
    /// `μ̂_j`: the fitted intercept in the centred parametrisation (mean of the aligned target).
    pub intercept: f64,
    /// `x̂_{t,j}` over the regression rows.
    pub xhat: Vec<f64>,
    /// First origin `t` (zero-based) of the regression rows.
    pub first_row: usize,
}

impl IntermediateFit {
    pub fn lags(&self) -> usize {
        self.slopes.len()
    }

    /// `x̂_{t}` for any origin with enough history, using the fitted coefficients.
    pub fn apply(&self, x: &[f64], t: usize) -> f64 {
        self.slopes
            .iter()
            .zip(&self.lag_means)
            .enumerate()
            .map(|(k, (g, m))| g * (x[t - k] - m))
            .sum()
    }
}

/// Intermediate prediction over the maximal aligned range.
pub fn intermediate_prediction(y: &[f64], x: &[f64], q2: usize, h: usize) -> Result<IntermediateFit> {
    ensure_input!(q2 >= 1, "q2 must be at least 1");
    intermediate_prediction_from(y, x, q2, h, q2 - 1)
}

/// Intermediate prediction with regression origins `start..=n−1−h`.
pub fn intermediate_prediction_from(
    y: &[f64],
    x: &[f64],
    q2: usize,
    h: usize,
    start: usize,
) -> Result<IntermediateFit> {
    ensure_input!(q2 >= 1, "q2 must be at least 1");
    ensure_input!(h >= 1, "horizon must be at least 1");
    ensure_input!(y.len() == x.len(), "target and predictor lengths differ");
    ensure_input!(start + 1 >= q2, "regression start {start} leaves too little history for {q2} lags");
    let n = y.len();
    let rows = (n.saturating_sub(h)).saturating_sub(start);
    ensure_input!(
        rows >= q2 + h + 5,
        "insufficient rows for intermediate prediction: {rows} usable, need {}",
        q2 + h + 5
    );

    let response: Vec<f64> = (start..start + rows).map(|t| y[t + h]).collect();
    let intercept = mean(&response);
    let centred_resp: Vec<f64> = response.iter().map(|v| v - intercept).collect();

    let mut lag_means = Vec::with_capacity(q2);
    let mut cols = Vec::with_capacity(q2);
    for k in 0..q2 {
        let col: Vec<f64> = (start..start + rows).map(|t| x[t - k]).collect();
        let m = mean(&col);
        lag_means.push(m);
        cols.push(col.into_iter().map(|v| v - m).collect::<Vec<_>>());
    }
    let design = Matrix::from_columns(rows, &cols);
    let fit = least_squares(&design, &centred_resp, DEFAULT_RANK_TOL)?;
    Ok(IntermediateFit { slopes: fit.coefficients, lag_means, intercept, xhat: fit.fitted, first_row: start })
}

/// BIC choice of the lag count for one predictor, with every candidate fitted
/// on the rows available at `q2_max` so the criteria are comparable.
pub fn select_lag_bic(y: &[f64], x: &[f64], h: usize, q2_max: usize) -> Result<usize> {
    ensure_input!(q2_max >= 1, "q2_max must be at least 1");
    if q2_max == 1 {
        // still validate the row count
        intermediate_prediction_from(y, x, 1, h, 0)?;
        return Ok(1);
    }
    let start = q2_max - 1;
    let mut best = (1, f64::INFINITY);
    for q in 1..=q2_max {
        let fit = intermediate_prediction_from(y, x, q, h, start)?;
        let n_a = fit.xhat.len() as f64;
        let rss: f64 = (0..fit.xhat.len())
            .map(|i| {
                let r = y[start + i + h] - fit.intercept - fit.xhat[i];
                r * r
            })
            .sum();
        let bic = n_a * (rss / n_a).ln() + (q as f64 + 1.0) * n_a.ln();
        if bic < best.1 {
            best = (q, bic);
        }
    }
    Ok(best.0)
}

/// Intermediate predictions for a set of predictors over one shared range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediatePanel {
    /// `x̂`, one column per kept predictor, rows are origins `first_row..=last_row`.
    pub xhat: Matrix,
    pub predictor_ids: Vec<usize>,
    pub fits: Vec<IntermediateFit>,
    pub first_row: usize,
    pub last_row: usize,
    pub warnings: Vec<String>,
}

impl IntermediatePanel {
    pub fn intercepts(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.intercept).collect()
    }

    pub fn lags_used(&self) -> Vec<usize> {
        self.fits.iter().map(IntermediateFit::lags).collect()
    }

    /// The `x̂` row at origin `t` from the fitted coefficients.
    pub fn xhat_at(&self, series: &SeriesMatrix, t: usize) -> Vec<f64> {
        self.predictor_ids
            .iter()
            .zip(&self.fits)
            .map(|(&j, fit)| fit.apply(series.column(j), t))
            .collect()
    }
}

/// Runs the per-predictor regressions with origins `start..=n−1−h`.
///
/// Predictors with zero variance are dropped with a warning. With
/// `bic_lags`, each predictor's lag count is chosen by BIC up to `q2`.
pub fn build_intermediate_panel(
    series: &SeriesMatrix,
    target: usize,
    predictors: &[usize],
    q2: usize,
    h: usize,
    start: usize,
    bic_lags: bool,
) -> Result<IntermediatePanel> {
    series.check_target(target)?;
    let y = series.column(target);
    let mut warnings = Vec::new();
    let mut kept = Vec::with_capacity(predictors.len());
    for &j in predictors {
        ensure_input!(j < series.n_cols() && j != target, "bad predictor column {j}");
        if variance(series.column(j)) == 0.0 {
            warnings.push(format!("dropped zero-variance predictor {}", series.names()[j]));
        } else {
            kept.push(j);
        }
    }

    let fits = kept
        .par_iter()
        .map(|&j| {
            let x = series.column(j);
            let lags = if bic_lags { select_lag_bic(y, x, h, q2)? } else { q2 };
            intermediate_prediction_from(y, x, lags, h, start)
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = series.n_obs() - h - start;
    let cols: Vec<&[f64]> = fits.iter().map(|f| f.xhat.as_slice()).collect();
    let xhat = Matrix::from_columns(rows, &cols);
    Ok(IntermediatePanel {
        xhat,
        predictor_ids: kept,
        fits,
        first_row: start,
        last_row: start + rows - 1,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorMethod {
    Sdpca,
    Sw,
    Lyb,
}

/// Extracted factors with their loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    /// One column per factor, rows are origins starting at `first_row`.
    pub factors: Matrix,
    /// Orthonormal columns, one per factor.
    pub loadings: Matrix,
    /// Eigenvalues matching the factor order, descending.
    pub eigenvalues: Vec<f64>,
    pub method: FactorMethod,
    pub r: usize,
    pub first_row: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Top-`r` principal directions of `data`'s column covariance `dataᵀdata / T`.
///
/// `data` must already be centred. Wide panels go through the `T × T` Gram
/// matrix instead; directions with a zero eigenvalue are completed to an
/// orthonormal set.
pub(crate) fn pca_top(data: &Matrix, r: usize) -> Result<(Matrix, Vec<f64>)> {
    let (t, p) = (data.rows(), data.cols());
    ensure_input!(r >= 1 && r <= p, "cannot extract {r} components from {p} columns");
    ensure_input!(t >= 1, "no rows");
    let scale = 1.0 / t as f64;

    if p <= t {
        let mut cov = data.tr_matmul(data);
        cov.scale(scale);
        let pairs = sym_eig_top(&cov, r)?;
        let values = pairs.iter().map(|e| e.value).collect();
        let cols: Vec<Vec<f64>> = pairs.into_iter().map(|e| e.vector).collect();
        return Ok((Matrix::from_columns(p, &cols), values));
    }

    let mut gram = data.transpose().tr_matmul(&data.transpose());
    gram.scale(scale);
    let pairs = sym_eig_top(&gram, r.min(t))?;
    let top = pairs.first().map_or(0.0, |e| e.value.max(0.0));
    let mut values = Vec::with_capacity(r);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for e in pairs {
        if e.value > 1e-12 * top && e.value > 0.0 {
            let mut v = data.tr_mul_vec(&e.vector);
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            fix_sign(&mut v);
            values.push(e.value);
            cols.push(v);
        }
    }
    complete_orthonormal(&mut cols, &mut values, p, r);
    Ok((Matrix::from_columns(p, &cols), values))
}

/// Pads `cols` with unit vectors orthogonalised against the existing columns
/// until there are `r` of them; padded directions get eigenvalue 0.
pub(crate) fn complete_orthonormal(cols: &mut Vec<Vec<f64>>, values: &mut Vec<f64>, p: usize, r: usize) {
    let mut unit = 0;
    while cols.len() < r && unit < p {
        let mut v = vec![0.0; p];
        v[unit] = 1.0;
        unit += 1;
        for _ in 0..2 {
            for c in cols.iter() {
                let d = dot(c, &v);
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            fix_sign(&mut v);
            values.push(0.0);
            cols.push(v);
        }
    }
}

/// PCA on the `x̂` panel.
pub fn extract_sdpca_factors(panel: &IntermediatePanel, r: usize) -> Result<FactorPanel> {
    let (rows, cols) = (panel.xhat.rows(), panel.xhat.cols());
    ensure_input!(
        r >= 1 && r <= rows.min(cols),
        "cannot extract {r} factors from a {rows}x{cols} panel"
    );
    let (loadings, eigenvalues) = pca_top(&panel.xhat, r)?;
    let factors = panel.xhat.matmul(&loadings);
    Ok(FactorPanel {
        factors,
        loadings,
        eigenvalues,
        method: FactorMethod::Sdpca,
        r,
        first_row: panel.first_row,
        warnings: panel.warnings.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    #[default]
    Ols,
    Lasso,
}

/// `y_{t+h} = intercept + Σ α_k y_{t−k+1} + βᵀ [f_t, f_{t−1}, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveModel {
    pub intercept: f64,
    /// `α_1..α_{q3}`; `α_1` multiplies the most recent target value.
    pub ar_coefficients: Vec<f64>,
    /// Weights on `f_t` followed by each factor lag block.
    pub factor_coefficients: Vec<f64>,
    pub fit_method: FitMethod,
    pub h: usize,
    pub q3: usize,
    pub factor_lags: usize,
    /// Origins used in the fit.
    pub first_origin: usize,
    pub last_origin: usize,
    /// In-sample fitted values, one per origin.
    pub fitted: Vec<f64>,
}

impl PredictiveModel {
    pub fn n_factors(&self) -> usize {
        self.factor_coefficients.len() / (self.factor_lags + 1)
    }
}

/// Regressor row for origin `t`: target lags, then `f_t`, `f_{t−1}`, ….
fn predictive_row(y: &[f64], factors: &Matrix, first_row: usize, q3: usize, factor_lags: usize, t: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..q3).map(|k| y[t - k]).collect();
    for l in 0..=factor_lags {
        row.extend((0..factors.cols()).map(|c| factors[(t - l - first_row, c)]));
    }
    row
}

/// Predictive regression on factors whose first row is origin `factors.first_row`.
pub fn fit_predictive(
    y: &[f64],
    factors: &FactorPanel,
    q3: usize,
    h: usize,
    fit_method: FitMethod,
) -> Result<PredictiveModel> {
    let start = factors.first_row.max(q3.saturating_sub(1));
    fit_predictive_from(y, &factors.factors, factors.first_row, q3, h, fit_method, 0, start, DEFAULT_LASSO_PATH_LEN)
}

/// General predictive regression.
///
/// `factors` holds factor values for origins `first_row..first_row+rows`;
/// regression origins run from `start` to the last origin whose `t+h` target
/// is observed and whose factors are available.
#[allow(clippy::too_many_arguments)]
pub fn fit_predictive_from(
    y: &[f64],
    factors: &Matrix,
    first_row: usize,
    q3: usize,
    h: usize,
    fit_method: FitMethod,
    factor_lags: usize,
    start: usize,
    lasso_path_len: usize,
) -> Result<PredictiveModel> {
    ensure_input!(q3 >= 1, "q3 must be at least 1");
    ensure_input!(h >= 1, "horizon must be at least 1");
    ensure_input!(start + 1 >= q3, "start {start} leaves too few target lags");
    ensure_input!(start >= first_row + factor_lags, "start {start} precedes available factors");
    let n = y.len();
    let last_factor = first_row + factors.rows();
    ensure_input!(n > h, "series shorter than horizon");
    let end = (n - h).min(last_factor); // exclusive
    let rows = end.saturating_sub(start);
    let r = factors.cols() * (factor_lags + 1);
    ensure_input!(
        rows >= q3 + r + 5,
        "insufficient rows for predictive regression: {rows} usable, need {}",
        q3 + r + 5
    );

    let design_rows: Vec<Vec<f64>> =
        (start..end).map(|t| predictive_row(y, factors, first_row, q3, factor_lags, t)).collect();
    let response: Vec<f64> = (start..end).map(|t| y[t + h]).collect();
    let k = q3 + r;
    let x = Matrix::from_fn(rows, k, |i, j| design_rows[i][j]);

    let (intercept, coefs) = match fit_method {
        FitMethod::Ols => {
            let mut cols: Vec<Vec<f64>> = vec![vec![1.0; rows]];
            cols.extend(x.columns().map(|c| c.to_vec()));
            let fit = least_squares(&Matrix::from_columns(rows, &cols), &response, DEFAULT_RANK_TOL)?;
            (fit.coefficients[0], fit.coefficients[1..].to_vec())
        }
        FitMethod::Lasso => {
            let fit = lasso_bic(&x, &response, lasso_path_len)?;
            (fit.intercept, fit.coefficients)
        }
    };
    if !intercept.is_finite() || coefs.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("predictive regression produced non-finite coefficients"));
    }
    let fitted = x.mul_vec(&coefs).into_iter().map(|v| v + intercept).collect();
    Ok(PredictiveModel {
        intercept,
        ar_coefficients: coefs[..q3].to_vec(),
        factor_coefficients: coefs[q3..].to_vec(),
        fit_method,
        h,
        q3,
        factor_lags,
        first_origin: start,
        last_origin: end - 1,
        fitted,
    })
}

/// Point forecast from the most recent `q3` target values (chronological,
/// newest last) and the stacked factor vector `[f_t, f_{t−1}, …]`.
pub fn forecast_one(model: &PredictiveModel, y_recent: &[f64], f_latest: &[f64]) -> Result<f64> {
    ensure_input!(
        y_recent.len() == model.q3,
        "expected {} recent target values, got {}",
        model.q3,
        y_recent.len()
    );
    ensure_input!(
        f_latest.len() == model.factor_coefficients.len(),
        "expected {} factor values, got {}",
        model.factor_coefficients.len(),
        f_latest.len()
    );
    let ar: f64 = model.ar_coefficients.iter().zip(y_recent.iter().rev()).map(|(a, y)| a * y).sum();
    let fac: f64 = model.factor_coefficients.iter().zip(f_latest).map(|(b, f)| b * f).sum();
    Ok(model.intercept + ar + fac)
}
