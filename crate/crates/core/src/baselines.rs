//! Benchmark forecasters: diffusion-index PCA (SW), autocovariance
//! eigenanalysis factors (LYB), and the Lasso with BIC tuning.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Error, Result};
use crate::numerics::{least_squares, mean, orthonormal_basis, sym_eig_top, variance, Matrix, DEFAULT_RANK_TOL};
use crate::sdpca::{complete_orthonormal, pca_top, FactorMethod, FactorPanel};
use crate::series::SeriesMatrix;

/// Coordinate-descent stopping rule for single fits: largest coefficient
/// change in a sweep, on the standardised scale.
pub const LASSO_TOL: f64 = 1e-8;
/// Path fits stop when the largest squared change falls below this fraction
/// of the response variance, as glmnet does.
pub const LASSO_PATH_REL_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
/// Smallest penalty on the BIC path relative to the null-model threshold,
/// for designs with more rows than columns.
pub const LASSO_PATH_MIN_RATIO: f64 = 1e-4;
/// The same ratio when there are at least as many columns as rows.
pub const LASSO_PATH_MIN_RATIO_WIDE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    /// Coefficients on the original predictor scale.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub bic: f64,
    pub nonzero_count: usize,
    pub rss: f64,
    pub sweeps: usize,
    /// The BIC path ended early because a penalty level did not converge.
    #[serde(default)]
    pub path_truncated: bool,
}

/// Centred and scaled copy of a design (`1/n` variance), kept alongside the
/// transformation so coefficients can be mapped back.
struct Standardized {
    x: Matrix,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    y: Vec<f64>,
}

impl Standardized {
    fn new(x: &Matrix, y: &[f64]) -> Self {
        let n = x.rows();
        let mut means = Vec::with_capacity(x.cols());
        let mut scales = Vec::with_capacity(x.cols());
        let mut cols = Vec::with_capacity(x.cols());
        for c in x.columns() {
            let m = mean(c);
            let sd = variance(c).sqrt();
            means.push(m);
            if sd > 0.0 {
                scales.push(sd);
                cols.push(c.iter().map(|v| (v - m) / sd).collect::<Vec<_>>());
            } else {
                scales.push(0.0);
                cols.push(vec![0.0; n]);
            }
        }
        let y_mean = mean(y);
        Standardized {
            x: Matrix::from_columns(n, &cols),
            means,
            scales,
            y_mean,
            y: y.iter().map(|v| v - y_mean).collect(),
        }
    }

    fn n(&self) -> usize {
        self.x.rows()
    }

    /// Smallest penalty at which every coefficient is zero.
    fn lambda_max(&self) -> f64 {
        let n = self.n() as f64;
        self.x.columns().map(|c| (dot_plain(c, &self.y) / n).abs()).fold(0.0, f64::max)
    }

    fn to_fit(&self, beta: &[f64], resid: &[f64], lambda: f64, sweeps: usize) -> LassoFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s > 0.0 && *b != 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coefficients.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        let nonzero_count = beta.iter().filter(|b| **b != 0.0).count();
        let n = self.n() as f64;
        let rss = dot_plain(resid, resid);
        let bic = n * (rss / n).ln() + nonzero_count as f64 * n.ln();
        LassoFit { intercept, coefficients, lambda, bic, nonzero_count, rss, sweeps, path_truncated: false }
    }
}

// The inner loops dominate Lasso runtime; plain summation is enough here.
#[inline]
fn dot_plain(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent from a warm start, alternating full sweeps
/// with sweeps over the active set. Returns the number of sweeps used, or
/// `Err(sweeps)` when the limit was hit.
fn coordinate_descent(
    std: &Standardized,
    lambda: f64,
    beta: &mut [f64],
    resid: &mut [f64],
    tol: f64,
    max_sweeps: usize,
) -> std::result::Result<usize, usize> {
    let n = std.n() as f64;
    let p = beta.len();
    let mut sweeps = 0;

    let sweep = |coords: &mut dyn Iterator<Item = usize>, beta: &mut [f64], resid: &mut [f64]| -> f64 {
        let mut max_change = 0.0_f64;
        for j in coords {
            if std.scales[j] == 0.0 {
                continue;
            }
            let col = std.x.col(j);
            let old = beta[j];
            let z = dot_plain(col, resid) / n + old;
            let new = soft_threshold(z, lambda);
            if new != old {
                let delta = new - old;
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };

    loop {
        if sweeps >= max_sweeps {
            return Err(sweeps);
        }
        sweeps += 1;
        let change = sweep(&mut (0..p), beta, resid);
        if change < tol {
            return Ok(sweeps);
        }
        // settle the active set before the next full pass
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        loop {
            if sweeps >= max_sweeps {
                return Err(sweeps);
            }
            sweeps += 1;
            if sweep(&mut active.iter().copied(), beta, resid) < tol {
                break;
            }
        }
    }
}

/// Exact solution for a fixed active set and sign pattern:
/// `X_AᵀX_A b = X_Aᵀy − nλs`. Accepted only when the signs survive and every
/// inactive gradient stays within the penalty, so the result satisfies the
/// optimality conditions to rounding error. Rescues badly conditioned fits
/// where coordinate descent creeps.
fn active_set_refine(std: &Standardized, lambda: f64, beta: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = std.n() as f64;
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let xa = std.x.select_columns(&active);
    let gram = xa.tr_matmul(&xa);
    let rhs: Vec<f64> = xa
        .tr_mul_vec(&std.y)
        .iter()
        .zip(&active)
        .map(|(c, &j)| c - n * lambda * beta[j].signum())
        .collect();
    let solved = least_squares(&gram, &rhs, DEFAULT_RANK_TOL).ok()?;
    if solved.effective_rank < active.len() {
        return None;
    }
    let mut refined = vec![0.0; beta.len()];
    for (b, &j) in solved.coefficients.iter().zip(&active) {
        if b.signum() != beta[j].signum() {
            return None;
        }
        refined[j] = *b;
    }
    let pred = std.x.mul_vec(&refined);
    let resid: Vec<f64> = std.y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let slack = 1e-9 * lambda.max(1e-12);
    let feasible = (0..beta.len())
        .filter(|&j| refined[j] == 0.0 && std.scales[j] > 0.0)
        .all(|j| (dot_plain(std.x.col(j), &resid) / n).abs() <= lambda + slack);
    feasible.then_some((refined, resid))
}

/// Minimises `(2n)⁻¹‖y − b0 − Xb‖² + λ‖b‖₁` on internally standardised
/// columns; the intercept is unpenalised and coefficients are returned on the
/// original scale. If the sweeps run out, the last iterate's active set is
/// solved exactly; only when that is inconsistent does the fit fail with
/// [`Error::Convergence`].
pub fn lasso_coordinate_descent(x: &Matrix, y: &[f64], lambda: f64) -> Result<LassoFit> {
    ensure_input!(x.rows() == y.len(), "design has {} rows, response {}", x.rows(), y.len());
    ensure_input!(x.rows() >= 2, "lasso needs at least two rows");
    ensure_input!(lambda >= 0.0 && lambda.is_finite(), "lambda must be finite and non-negative");
    let std = Standardized::new(x, y);
    let mut beta = vec![0.0; x.cols()];
    let mut resid = std.y.clone();
    match coordinate_descent(&std, lambda, &mut beta, &mut resid, LASSO_TOL, LASSO_MAX_SWEEPS) {
        Ok(sweeps) => Ok(std.to_fit(&beta, &resid, lambda, sweeps)),
        Err(sweeps) => match active_set_refine(&std, lambda, &beta) {
            Some((exact, resid)) => Ok(std.to_fit(&exact, &resid, lambda, sweeps)),
            None => Err(Error::Convergence {
                sweeps,
                lambda,
                last: Box::new(std.to_fit(&beta, &resid, lambda, sweeps)),
            }),
        },
    }
}

/// Lasso along a geometric penalty path from the null-model threshold down to
/// `1e-4` of it (`1e-2` when columns outnumber rows), choosing the fit with the
/// smallest `n·ln(RSS/n) + df·ln(n)`; ties go to the larger penalty.
///
/// The path is cut once the fit saturates (`df ≥ n − 1` or more than 99.9% of
/// the centred variation explained), as `ln(RSS)` stops being informative
/// there. A penalty level after the first that fails to converge also ends
/// the path; the fit then reports `path_truncated`.
///
/// The path itself is solved to a loose tolerance; the chosen penalty is then
/// re-solved from its warm start to the tight tolerance of
/// [`lasso_coordinate_descent`].
pub fn lasso_bic(x: &Matrix, y: &[f64], path_len: usize) -> Result<LassoFit> {
    ensure_input!(path_len >= 2, "path length must be at least 2");
    ensure_input!(x.rows() == y.len(), "design has {} rows, response {}", x.rows(), y.len());
    ensure_input!(x.rows() >= 2, "lasso needs at least two rows");
    let std = Standardized::new(x, y);
    let n = std.n();
    let tss = dot_plain(&std.y, &std.y);
    let lambda_max = std.lambda_max();

    let mut beta = vec![0.0; x.cols()];
    let mut resid = std.y.clone();
    if lambda_max == 0.0 {
        return Ok(std.to_fit(&beta, &resid, 0.0, 0));
    }

    let min_ratio = if x.cols() >= n { LASSO_PATH_MIN_RATIO_WIDE } else { LASSO_PATH_MIN_RATIO };
    let ratio = min_ratio.powf(1.0 / (path_len - 1) as f64);
    let tol = (LASSO_PATH_REL_TOL * tss / n as f64).sqrt();
    let mut best: Option<(LassoFit, Vec<f64>)> = None;
    let mut truncated = false;
    let mut lambda = lambda_max;
    for step in 0..path_len {
        if step > 0 {
            lambda *= ratio;
        }
        let sweeps = match coordinate_descent(&std, lambda, &mut beta, &mut resid, tol, LASSO_MAX_SWEEPS) {
            Ok(sweeps) => sweeps,
            Err(sweeps) if best.is_none() => {
                let last = Box::new(std.to_fit(&beta, &resid, lambda, sweeps));
                return Err(Error::Convergence { sweeps, lambda, last });
            }
            Err(_) => {
                truncated = true;
                break;
            }
        };
        let fit = std.to_fit(&beta, &resid, lambda, sweeps);
        let saturated = fit.nonzero_count + 1 >= n || fit.rss <= 1e-3 * tss;
        if best.as_ref().is_none_or(|(b, _)| fit.bic < b.bic) {
            best = Some((fit, beta.clone()));
        }
        if saturated {
            break;
        }
    }

    let (coarse, mut beta) = best.expect("path has at least one point");
    let pred = std.x.mul_vec(&beta);
    let mut resid: Vec<f64> = std.y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mut fit = match coordinate_descent(&std, coarse.lambda, &mut beta, &mut resid, LASSO_TOL, LASSO_MAX_SWEEPS) {
        Ok(sweeps) => std.to_fit(&beta, &resid, coarse.lambda, coarse.sweeps + sweeps),
        Err(sweeps) => match active_set_refine(&std, coarse.lambda, &beta) {
            Some((exact, resid)) => std.to_fit(&exact, &resid, coarse.lambda, coarse.sweeps + sweeps),
            None => coarse,
        },
    };
    fit.path_truncated = truncated;
    Ok(fit)
}

/// KKT residuals on the standardised scale: for each coefficient, the
/// gradient `x̃ⱼᵀ(ỹ − X̃b̃)/n`. Exposed for verification.
pub fn lasso_gradient(x: &Matrix, y: &[f64], fit: &LassoFit) -> (Vec<f64>, Vec<f64>) {
    let std = Standardized::new(x, y);
    let n = std.n() as f64;
    let beta_std: Vec<f64> = fit.coefficients.iter().zip(&std.scales).map(|(b, s)| b * s).collect();
    let pred = std.x.mul_vec(&beta_std);
    let resid: Vec<f64> = std.y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let grad = std.x.columns().map(|c| dot_plain(c, &resid) / n).collect();
    (grad, beta_std)
}

/// Column ids kept after dropping zero-variance predictors, with warnings.
fn nonconstant_predictors(series: &SeriesMatrix, target: usize) -> (Vec<usize>, Vec<String>) {
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for j in series.predictor_ids(target) {
        if variance(series.column(j)) > 0.0 {
            kept.push(j);
        } else {
            warnings.push(format!("dropped zero-variance predictor {}", series.names()[j]));
        }
    }
    (kept, warnings)
}

/// Diffusion-index factors: PCA of the standardised predictor panel.
pub fn sw_factors(series: &SeriesMatrix, target: usize, r: usize) -> Result<FactorPanel> {
    series.check_target(target)?;
    let (kept, warnings) = nonconstant_predictors(series, target);
    let n = series.n_obs();
    ensure_input!(
        r >= 1 && r <= n.min(kept.len()),
        "cannot extract {r} factors from {n} rows and {} predictors",
        kept.len()
    );
    let cols: Vec<Vec<f64>> = kept
        .iter()
        .map(|&j| {
            let c = series.column(j);
            let m = mean(c);
            let sd = variance(c).sqrt();
            c.iter().map(|v| (v - m) / sd).collect()
        })
        .collect();
    let z = Matrix::from_columns(n, &cols);
    let (loadings, eigenvalues) = pca_top(&z, r)?;
    let factors = z.matmul(&loadings);
    Ok(FactorPanel { factors, loadings, eigenvalues, method: FactorMethod::Sw, r, first_row: 0, warnings })
}

fn demeaned_predictors(series: &SeriesMatrix, target: usize) -> Matrix {
    let n = series.n_obs();
    let cols: Vec<Vec<f64>> = series
        .predictor_ids(target)
        .into_iter()
        .map(|j| {
            let c = series.column(j);
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    Matrix::from_columns(n, &cols)
}

/// `Σ_{l=1}^{q} Σ̂(l) Σ̂(l)ᵀ` of the demeaned predictors, with
/// `Σ̂(l) = n⁻¹ Σ_t x_{t+l} x_tᵀ`. Dense `p × p`; meant for modest `p`.
pub fn lyb_matrix(series: &SeriesMatrix, target: usize, q: usize) -> Result<Matrix> {
    series.check_target(target)?;
    let n = series.n_obs();
    ensure_input!(q >= 1 && n > q + 2, "need n > q + 2 (n = {n}, q = {q})");
    let x = demeaned_predictors(series, target);
    let p = x.cols();
    let mut m = Matrix::zeros(p, p);
    for w in lag_products(&x, None, q, n) {
        let add = w.tr_matmul(&w);
        for j in 0..p {
            for i in 0..p {
                m[(i, j)] += add[(i, j)];
            }
        }
    }
    Ok(m)
}

/// `W_l = B_lᵀ A_l Q / n` for each lag, where `A_l` holds rows `l..n` and
/// `B_l` rows `0..n−l` of `x`. Then `Qᵀ M Q = Σ_l W_lᵀ W_l`.
fn lag_products(x: &Matrix, basis: Option<&Matrix>, q: usize, n: usize) -> Vec<Matrix> {
    let scale = 1.0 / n as f64;
    (1..=q)
        .map(|l| {
            let a = x.row_range(l, n);
            let b = x.row_range(0, n - l);
            let aq = match basis {
                Some(qm) => a.matmul(qm),
                None => a,
            };
            let mut w = b.tr_matmul(&aq);
            w.scale(scale);
            w
        })
        .collect()
}

/// Factors from the eigenanalysis of the lagged autocovariance Gram sum.
///
/// When `p ≥ n` the eigenproblem is solved in the row space of the data,
/// which contains the range of the matrix.
pub fn lyb_factors(series: &SeriesMatrix, target: usize, q: usize, r: usize) -> Result<FactorPanel> {
    series.check_target(target)?;
    let n = series.n_obs();
    ensure_input!(q >= 1 && n > q + 2, "need n > q + 2 (n = {n}, q = {q})");
    let x = demeaned_predictors(series, target);
    let p = x.cols();
    ensure_input!(r >= 1 && r <= p, "cannot extract {r} factors from {p} predictors");

    let basis = if p >= n { Some(orthonormal_basis(&x.transpose(), DEFAULT_RANK_TOL)?) } else { None };
    let k = basis.as_ref().map_or(p, Matrix::cols);
    let mut reduced = Matrix::zeros(k, k);
    for w in lag_products(&x, basis.as_ref(), q, n) {
        let add = w.tr_matmul(&w);
        for j in 0..k {
            for i in 0..k {
                reduced[(i, j)] += add[(i, j)];
            }
        }
    }

    let pairs = if k > 0 { sym_eig_top(&reduced, r.min(k))? } else { Vec::new() };
    let mut values = Vec::with_capacity(r);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for e in pairs {
        let mut v = match &basis {
            Some(qm) => qm.mul_vec(&e.vector),
            None => e.vector,
        };
        crate::numerics::fix_sign(&mut v);
        values.push(e.value);
        cols.push(v);
    }
    complete_orthonormal(&mut cols, &mut values, p, r);
    let loadings = Matrix::from_columns(p, &cols);
    let factors = x.matmul(&loadings);
    Ok(FactorPanel { factors, loadings, eigenvalues: values, method: FactorMethod::Lyb, r, first_row: 0, warnings: vec![] })
}

/// Regressors for origin `t`: `y_t … y_{t−q+1}` then, for each predictor,
/// `x_t … x_{t−q+1}`.
pub fn lagged_row(series: &SeriesMatrix, target: usize, q: usize, t: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(q * series.n_cols());
    let y = series.column(target);
    row.extend((0..q).map(|k| y[t - k]));
    for j in series.predictor_ids(target) {
        let x = series.column(j);
        row.extend((0..q).map(|k| x[t - k]));
    }
    row
}

/// Lasso regression design for horizon `h`: origins `q−1 ..= n−1−h`.
pub fn lagged_design(series: &SeriesMatrix, target: usize, q: usize, h: usize) -> Result<(Matrix, Vec<f64>)> {
    series.check_target(target)?;
    ensure_input!(q >= 1 && h >= 1, "q and h must be at least 1");
    let n = series.n_obs();
    ensure_input!(n >= q + h + 2, "insufficient rows for lagged design");
    let origins: Vec<usize> = (q - 1..n - h).collect();
    let rows: Vec<Vec<f64>> = origins.iter().map(|&t| lagged_row(series, target, q, t)).collect();
    let y = series.column(target);
    let response = origins.iter().map(|&t| y[t + h]).collect();
    let k = rows[0].len();
    Ok((Matrix::from_fn(rows.len(), k, |i, j| rows[i][j]), response))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, least_squares};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn check_kkt(x: &Matrix, y: &[f64], fit: &LassoFit) {
        let (grad, beta) = lasso_gradient(x, y, fit);
        for (g, b) in grad.iter().zip(&beta) {
            if *b == 0.0 {
                assert!(g.abs() <= fit.lambda + 1e-6, "zero coef gradient {g} > lambda {}", fit.lambda);
            } else {
                assert!((g - fit.lambda * b.signum()).abs() <= 1e-6, "active gradient {g}");
            }
        }
    }

    #[test]
    fn unpenalised_limit_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(&mut rng, 60, 5);
        let y: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let fit = lasso_coordinate_descent(&x, &y, 0.0).unwrap();
        let mut cols = vec![vec![1.0; 60]];
        cols.extend(x.columns().map(|c| c.to_vec()));
        let ols = least_squares(&Matrix::from_columns(60, &cols), &y, DEFAULT_RANK_TOL).unwrap();
        assert!((fit.intercept - ols.coefficients[0]).abs() < 1e-6);
        for (a, b) in fit.coefficients.iter().zip(&ols.coefficients[1..]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn null_threshold_zeroes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 40, 6);
        let y: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let lmax = Standardized::new(&x, &y).lambda_max();
        let fit = lasso_coordinate_descent(&x, &y, lmax).unwrap();
        assert_eq!(fit.nonzero_count, 0);
        assert!(fit.coefficients.iter().all(|c| *c == 0.0));
        assert!((fit.intercept - mean(&y)).abs() < 1e-12);
    }

    /// Design whose standardised columns are exactly orthonormal (scaled by √n).
    fn orthogonal_design() -> Matrix {
        // ±1 Hadamard columns of length 8, minus the constant column
        let h = [
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
        ];
        Matrix::from_columns(8, &h[1..])
    }

    #[test]
    fn orthonormal_design_is_soft_threshold() {
        let x = orthogonal_design();
        let y = [3.0, -1.0, 0.5, 2.0, -0.7, 1.1, 0.2, -2.4];
        let n = 8.0;
        let ym = mean(&y);
        for &lambda in &[0.0, 0.1, 0.4, 0.9] {
            let fit = lasso_coordinate_descent(&x, &y, lambda).unwrap();
            for (j, c) in x.columns().enumerate() {
                let ols = c.iter().zip(&y).map(|(a, b)| a * (b - ym)).sum::<f64>() / n;
                let expect = soft_threshold(ols, lambda);
                assert!((fit.coefficients[j] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn path_support_grows_on_orthonormal_design() {
        let x = orthogonal_design();
        let y = [3.0, -1.0, 0.5, 2.0, -0.7, 1.1, 0.2, -2.4];
        let lmax = Standardized::new(&x, &y).lambda_max();
        let mut last = 0;
        for k in 0..20 {
            let lambda = lmax * 0.8f64.powi(k);
            let fit = lasso_coordinate_descent(&x, &y, lambda).unwrap();
            assert!(fit.nonzero_count >= last);
            last = fit.nonzero_count;
        }
    }

    #[test]
    fn kkt_holds_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = gaussian(&mut rng, 50, 30);
            let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
            let lmax = Standardized::new(&x, &y).lambda_max();
            let lambda = lmax * rng.random_range(0.05..0.9);
            let fit = lasso_coordinate_descent(&x, &y, lambda).unwrap();
            check_kkt(&x, &y, &fit);
        }
    }

    #[test]
    fn bic_choice_is_polished_to_kkt_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = gaussian(&mut rng, 80, 120);
            let y: Vec<f64> = (0..80).map(|i| 2.0 * x[(i, 3)] - x[(i, 7)] + rng.sample::<f64, _>(StandardNormal)).collect();
            let fit = lasso_bic(&x, &y, 40).unwrap();
            check_kkt(&x, &y, &fit);
        }
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 30, 10);
        let y: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let std = Standardized::new(&x, &y);
        let mut beta = vec![0.0; 10];
        let mut resid = std.y.clone();
        let out = coordinate_descent(&std, 1e-3, &mut beta, &mut resid, LASSO_TOL, 1);
        assert_eq!(out, Err(1));
    }

    #[test]
    fn bic_on_noise_picks_empty_model() {
        let mut empty = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = gaussian(&mut rng, 100, 40);
            let y: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            if lasso_bic(&x, &y, 30).unwrap().nonzero_count == 0 {
                empty += 1;
            }
        }
        assert!(empty > 100, "empty model chosen {empty}/200 times");
    }

    #[test]
    fn lyb_matrix_is_nonnegative_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 80, 7);
        let y: Vec<f64> = (0..80).map(|_| rng.sample(StandardNormal)).collect();
        let s = SeriesMatrix::from_target_and_predictors(y, &x).unwrap();
        let m = lyb_matrix(&s, 0, 3).unwrap();
        let eig = sym_eig_top(&m, 7).unwrap();
        assert!(eig.last().unwrap().value >= -1e-8 * m.frobenius_norm());
    }

    #[test]
    fn lyb_reduced_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(&mut rng, 20, 30);
        let y: Vec<f64> = (0..20).map(|_| rng.sample(StandardNormal)).collect();
        let s = SeriesMatrix::from_target_and_predictors(y, &x).unwrap();
        let dense = sym_eig_top(&lyb_matrix(&s, 0, 2).unwrap(), 3).unwrap();
        let fp = lyb_factors(&s, 0, 2, 3).unwrap();
        for (k, e) in dense.iter().enumerate() {
            assert!((fp.eigenvalues[k] - e.value).abs() < 1e-9 * dense[0].value);
            assert!((dot(fp.loadings.col(k), &e.vector).abs() - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn sw_rank_one_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let common: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::from_columns(50, &[common.clone(), common.iter().map(|v| 3.0 * v + 1.0).collect()]);
        let y = vec![0.0; 50];
        let s = SeriesMatrix::from_target_and_predictors(y, &x).unwrap();
        let fp = sw_factors(&s, 0, 1).unwrap();
        let m = mean(&common);
        let sd = variance(&common).sqrt();
        let z: Vec<f64> = common.iter().map(|v| (v - m) / sd).collect();
        let ratio = fp.factors[(0, 0)] / z[0];
        for t in 0..50 {
            assert!((fp.factors[(t, 0)] - ratio * z[t]).abs() < 1e-10);
        }
        let ltl = fp.loadings.tr_matmul(&fp.loadings);
        assert!((ltl[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sw_drops_constant_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = gaussian(&mut rng, 30, 4);
        x.col_mut(2).iter_mut().for_each(|v| *v = 1.0);
        let s = SeriesMatrix::from_target_and_predictors(vec![0.0; 30], &x).unwrap();
        let fp = sw_factors(&s, 0, 2).unwrap();
        assert_eq!(fp.loadings.rows(), 3);
        assert_eq!(fp.warnings.len(), 1);
    }

    #[test]
    fn lagged_design_layout() {
        let y: Vec<f64> = (0..10).map(|t| t as f64).collect();
        let x = Matrix::from_fn(10, 2, |t, j| (100 * (j + 1) + t) as f64);
        let s = SeriesMatrix::from_target_and_predictors(y, &x).unwrap();
        let (d, resp) = lagged_design(&s, 0, 2, 1).unwrap();
        assert_eq!(d.cols(), 6);
        assert_eq!(d.rows(), 8);
        assert_eq!(d.row(0), vec![1.0, 0.0, 101.0, 100.0, 201.0, 200.0]);
        assert_eq!(resp[0], 2.0);
    }
}
