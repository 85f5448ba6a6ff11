//! Simulation designs: a static factor model with a sparse loading matrix,
//! a vector MA(1) with a low-rank spiked covariance, and a low-rank VAR(1).
//!
//! Every draw comes from a single `ChaCha8Rng` seeded from the config, in a
//! fixed order (parameters first, then innovations step by step), so a config
//! determines its panel bit for bit.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};
use crate::series::SeriesMatrix;

/// Steps simulated and discarded before the kept sample.
pub const BURN_IN: usize = 200;

const POWER_MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub dgp_id: u8,
    /// Training length; the generated panel has one extra holdout row.
    pub n: usize,
    pub p: usize,
    pub r_dgp: usize,
    pub s: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dgp_id) {
            return bad(format!("dgp_id must be 1, 2 or 3, got {}", self.dgp_id));
        }
        if self.n < 20 {
            return bad(format!("n must be at least 20, got {}", self.n));
        }
        if self.p == 0 || self.r_dgp == 0 {
            return bad("p and r_dgp must be positive".into());
        }
        if self.s > self.p || self.r_dgp > self.p {
            return bad(format!("need s <= p and r_dgp <= p (p = {}, s = {}, r_dgp = {})", self.p, self.s, self.r_dgp));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> DgpConfig {
        DgpConfig { seed, ..self.clone() }
    }
}

/// Planted parameters plus everything needed to replay the target recursion.
///
/// For the VMA and VAR designs the `p × p` transition matrix is stored in
/// factored form, `B = b_scale · b_left · b_right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub dgp_id: u8,
    /// Loadings (`p × r`) of the factor design; zero outside `support`.
    pub loadings: Option<Matrix>,
    pub b_left: Option<Matrix>,
    pub b_right: Option<Matrix>,
    pub b_scale: f64,
    /// Autoregressive coefficients of the target, lag 1 first.
    pub ar: Vec<f64>,
    /// Weights on the lag-1 drivers.
    pub beta1: Vec<f64>,
    /// Weights on the lag-2 drivers; empty for the VAR design.
    pub beta2: Vec<f64>,
    /// Sorted predictor indices (zero-based, excluding the target) that carry signal.
    pub support: Vec<usize>,
    /// Latent factors for rows `0..=n` (factor design only).
    pub factors: Option<Matrix>,
    /// Driver rows at times −2 and −1 (factors or predictors).
    pub presample_drivers: Matrix,
    /// Target values at times −2 and −1.
    pub presample_y: Vec<f64>,
    /// Target innovations for rows `0..=n`.
    pub epsilon: Vec<f64>,
}

impl DgpTruth {
    /// The dense transition matrix for the VMA and VAR designs.
    pub fn b_dense(&self) -> Option<Matrix> {
        let (l, r) = (self.b_left.as_ref()?, self.b_right.as_ref()?);
        let mut b = l.matmul(r);
        b.scale(self.b_scale);
        Some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPanel {
    /// Columns `y, x1, …, xp`; `n + 1` rows, the last one held out.
    pub series: SeriesMatrix,
    pub truth: DgpTruth,
    pub config: DgpConfig,
}

impl GeneratedPanel {
    /// Training rows `0..n`.
    pub fn training(&self) -> SeriesMatrix {
        self.series.slice_rows(0, self.config.n)
    }

    pub fn holdout_target(&self) -> f64 {
        self.series.column(0)[self.config.n]
    }
}

pub fn generate(cfg: &DgpConfig) -> Result<GeneratedPanel> {
    cfg.validate()?;
    match cfg.dgp_id {
        1 => generate_dgp1(cfg),
        2 => generate_dgp2(cfg),
        _ => generate_dgp3(cfg),
    }
}

fn check_id(cfg: &DgpConfig, id: u8) -> Result<()> {
    cfg.validate()?;
    if cfg.dgp_id != id {
        return Err(Error::Config(format!("config is for design {}, not {id}", cfg.dgp_id)));
    }
    Ok(())
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_col_major(rows, cols, normal_vec(rng, rows * cols))
}

/// Student-t with five degrees of freedom as `z / sqrt(χ²₅ / 5)`.
fn student_t5(rng: &mut ChaCha8Rng, chi: &ChiSquared<f64>) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z / (chi.sample(rng) / 5.0).sqrt()
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new(lo, hi).expect("valid uniform bounds")
}

/// Largest singular value by power iteration on `AᵀA`, where `gram` applies
/// `AᵀA` to a vector.
fn power_iteration(dim: usize, gram: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = gram(&v);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Operator 2-norm of a dense matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    power_iteration(m.cols(), |v| m.tr_mul_vec(&m.mul_vec(v)))
}

/// Operator 2-norm of `left · right` without forming the product.
pub fn spectral_norm_factored(left: &Matrix, right: &Matrix) -> f64 {
    power_iteration(right.cols(), |v| {
        let bv = left.mul_vec(&right.mul_vec(v));
        right.tr_mul_vec(&left.tr_mul_vec(&bv))
    })
}

/// Random rank-`r` matrix `left · right` with standard-normal factors.
fn low_rank(rng: &mut ChaCha8Rng, p: usize, r: usize) -> (Matrix, Matrix) {
    let left = gaussian_matrix(rng, p, r);
    let right = gaussian_matrix(rng, r, p);
    (left, right)
}

/// `scale · left · (right · v)`.
fn apply_low_rank(left: &Matrix, right: &Matrix, scale: f64, v: &[f64]) -> Vec<f64> {
    let mut out = left.mul_vec(&right.mul_vec(v));
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

fn assemble(cfg: &DgpConfig, y: Vec<f64>, x_rows: Vec<Vec<f64>>, truth: DgpTruth) -> Result<GeneratedPanel> {
    let rows = y.len();
    let x = Matrix::from_fn(rows, cfg.p, |t, j| x_rows[t][j]);
    let series = SeriesMatrix::from_target_and_predictors(y, &x)
        .map_err(|_| Error::input(format!("design {} produced non-finite values (seed {})", cfg.dgp_id, cfg.seed)))?;
    Ok(GeneratedPanel { series, truth, config: cfg.clone() })
}

/// Static factor design with `s` loaded predictors and Student-t noise.
pub fn generate_dgp1(cfg: &DgpConfig) -> Result<GeneratedPanel> {
    check_id(cfg, 1)?;
    generate_factor_design(cfg, false)
}

fn generate_factor_design(cfg: &DgpConfig, zero_beta: bool) -> Result<GeneratedPanel> {
    let (n, p, r, s) = (cfg.n, cfg.p, cfg.r_dgp, cfg.s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let load = uniform(-2.0, 2.0);
    let mut loadings = Matrix::from_fn(p, r, |_, _| 0.0);
    for j in 0..r {
        for i in 0..p {
            loadings.col_mut(j)[i] = rng.sample(load);
        }
    }
    let zeroed = index::sample(&mut rng, p, p - s).into_vec();
    let mut keep = vec![true; p];
    for &i in &zeroed {
        keep[i] = false;
        for j in 0..r {
            loadings.col_mut(j)[i] = 0.0;
        }
    }
    let support: Vec<usize> = (0..p).filter(|&i| keep[i]).collect();

    let (b1, b2) = (uniform(1.0, 2.5), uniform(-2.0, -0.8));
    let mut beta1: Vec<f64> = (0..r).map(|_| rng.sample(b1)).collect();
    let mut beta2: Vec<f64> = (0..r).map(|_| rng.sample(b2)).collect();
    if zero_beta {
        beta1.iter_mut().chain(beta2.iter_mut()).for_each(|b| *b = 0.0);
    }

    let chi = ChiSquared::new(5.0).expect("positive degrees of freedom");
    let total = BURN_IN + n + 1;
    // f and y carry two extra leading zeros so the recursion can start at once
    let mut f: Vec<Vec<f64>> = vec![vec![0.0; r]; 2];
    let mut y = vec![0.0; 2];
    let mut x_rows = Vec::with_capacity(n + 1);
    let mut eps = Vec::with_capacity(n + 1);
    for step in 0..total {
        let ft = normal_vec(&mut rng, r);
        let noise: Vec<f64> = (0..p).map(|_| 2.0 * student_t5(&mut rng, &chi)).collect();
        let e: f64 = rng.sample(StandardNormal);
        let k = f.len();
        let yt = 0.6 * y[k - 1] + 0.2 * y[k - 2] + dot(&beta1, &f[k - 1]) + dot(&beta2, &f[k - 2]) + e;
        if step >= BURN_IN {
            let bf = loadings.mul_vec(&ft);
            x_rows.push(bf.iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<_>>());
            eps.push(e);
        }
        f.push(ft);
        y.push(yt);
    }

    let kept = 2 + BURN_IN;
    let presample = Matrix::from_fn(2, r, |i, j| f[kept - 2 + i][j]);
    let factors = Matrix::from_fn(n + 1, r, |t, j| f[kept + t][j]);
    let truth = DgpTruth {
        dgp_id: 1,
        loadings: Some(loadings),
        b_left: None,
        b_right: None,
        b_scale: 1.0,
        ar: vec![0.6, 0.2],
        beta1,
        beta2,
        support,
        factors: Some(factors),
        presample_drivers: presample,
        presample_y: y[kept - 2..kept].to_vec(),
        epsilon: eps,
    };
    assemble(cfg, y[kept..].to_vec(), x_rows, truth)
}

/// Vector MA(1) predictors whose covariance is the spike `I + 0.64·BBᵀ`.
pub fn generate_dgp2(cfg: &DgpConfig) -> Result<GeneratedPanel> {
    check_id(cfg, 2)?;
    let (n, p, r, s) = (cfg.n, cfg.p, cfg.r_dgp, cfg.s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (left, right) = low_rank(&mut rng, p, r);
    let raw = spectral_norm_factored(&left, &right);
    let scale = if raw > 0.0 { 1.0 / raw } else { 0.0 };

    let mut support = index::sample(&mut rng, p, s).into_vec();
    support.sort_unstable();
    let (b1, b2) = (uniform(1.0, 3.0), uniform(-2.5, -0.5));
    let mut beta1 = vec![0.0; p];
    let mut beta2 = vec![0.0; p];
    for &j in &support {
        beta1[j] = rng.sample(b1);
        beta2[j] = rng.sample(b2);
    }

    let total = BURN_IN + n + 1;
    let mut delta_prev = normal_vec(&mut rng, p);
    let mut x: Vec<Vec<f64>> = vec![vec![0.0; p]; 2];
    let mut y = vec![0.0; 2];
    let mut eps = Vec::with_capacity(n + 1);
    for step in 0..total {
        let delta = normal_vec(&mut rng, p);
        let e: f64 = rng.sample(StandardNormal);
        let k = x.len();
        let yt = 0.6 * y[k - 1] + 0.2 * y[k - 2] + dot(&beta1, &x[k - 1]) + dot(&beta2, &x[k - 2]) + e;
        let carry = apply_low_rank(&left, &right, 0.8 * scale, &delta_prev);
        let xt: Vec<f64> = delta.iter().zip(&carry).map(|(a, b)| a + b).collect();
        if step >= BURN_IN {
            eps.push(e);
        }
        x.push(xt);
        y.push(yt);
        delta_prev = delta;
    }

    let kept = 2 + BURN_IN;
    let truth = DgpTruth {
        dgp_id: 2,
        loadings: None,
        b_left: Some(left),
        b_right: Some(right),
        b_scale: scale,
        ar: vec![0.6, 0.2],
        beta1,
        beta2,
        support,
        factors: None,
        presample_drivers: Matrix::from_fn(2, p, |i, j| x[kept - 2 + i][j]),
        presample_y: y[kept - 2..kept].to_vec(),
        epsilon: eps,
    };
    let x_rows = x.split_off(kept);
    assemble(cfg, y[kept..].to_vec(), x_rows, truth)
}

/// Low-rank VAR(1) predictors with a sparse, sign-alternating target loading.
pub fn generate_dgp3(cfg: &DgpConfig) -> Result<GeneratedPanel> {
    check_id(cfg, 3)?;
    let (n, p, r, s) = (cfg.n, cfg.p, cfg.r_dgp, cfg.s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (left, right) = low_rank(&mut rng, p, r);
    let raw = spectral_norm_factored(&left, &right);
    let scale = if raw > 0.0 { 1.0 / (1.05 * raw) } else { 0.0 };

    let u = uniform(0.1, 3.0);
    let mut beta = vec![0.0; p];
    for (j, b) in beta.iter_mut().enumerate().take(s) {
        // 1-based index j+1, so the first coefficient is negative
        let sign = if (j + 1) % 2 == 0 { 1.0 } else { -1.0 };
        *b = sign * rng.sample(u);
    }

    let total = BURN_IN + n + 1;
    let mut x: Vec<Vec<f64>> = vec![vec![0.0; p]];
    let mut y = vec![0.0];
    let mut eps = Vec::with_capacity(n + 1);
    for step in 0..total {
        let delta = normal_vec(&mut rng, p);
        let e: f64 = rng.sample(StandardNormal);
        let k = x.len();
        let yt = 0.5 * y[k - 1] + dot(&beta, &x[k - 1]) + e;
        let carry = apply_low_rank(&left, &right, scale, &x[k - 1]);
        let xt: Vec<f64> = delta.iter().zip(&carry).map(|(a, b)| a + b).collect();
        if step >= BURN_IN {
            eps.push(e);
        }
        x.push(xt);
        y.push(yt);
    }

    let kept = 1 + BURN_IN;
    let truth = DgpTruth {
        dgp_id: 3,
        loadings: None,
        b_left: Some(left),
        b_right: Some(right),
        b_scale: scale,
        ar: vec![0.5],
        beta1: beta,
        beta2: Vec::new(),
        support: (0..s).collect(),
        factors: None,
        presample_drivers: Matrix::from_fn(2, p, |i, j| x[kept - 2 + i][j]),
        presample_y: y[kept - 2..kept].to_vec(),
        epsilon: eps,
    };
    let x_rows = x.split_off(kept);
    assemble(cfg, y[kept..].to_vec(), x_rows, truth)
}

/// Driver vector (factors or predictors) at time `t`, where `t = −1, −2`
/// reach into the stored pre-sample.
fn driver(panel: &GeneratedPanel, t: isize) -> Vec<f64> {
    let truth = &panel.truth;
    if t < 0 {
        return truth.presample_drivers.row((2 + t) as usize);
    }
    let t = t as usize;
    match &truth.factors {
        Some(f) => f.row(t),
        None => (1..panel.series.n_cols()).map(|j| panel.series.column(j)[t]).collect(),
    }
}

fn target_at(panel: &GeneratedPanel, y: &[f64], t: isize) -> f64 {
    if t < 0 {
        panel.truth.presample_y[(2 + t) as usize]
    } else {
        y[t as usize]
    }
}

/// Conditional mean of `y_t` given the past, from the planted parameters.
fn conditional_mean(panel: &GeneratedPanel, y: &[f64], t: usize) -> f64 {
    let truth = &panel.truth;
    let t = t as isize;
    let mut m: f64 = truth.ar.iter().enumerate().map(|(k, a)| a * target_at(panel, y, t - 1 - k as isize)).sum();
    m += dot(&truth.beta1, &driver(panel, t - 1));
    if !truth.beta2.is_empty() {
        m += dot(&truth.beta2, &driver(panel, t - 2));
    }
    m
}

/// Recomputes the target from the truth record and the drivers.
pub fn replay_target(panel: &GeneratedPanel) -> Vec<f64> {
    let rows = panel.series.n_obs();
    let mut y = Vec::with_capacity(rows);
    for t in 0..rows {
        let v = conditional_mean(panel, &y, t) + panel.truth.epsilon[t];
        y.push(v);
    }
    y
}

/// Infeasible one-step forecast of the holdout target using the true model.
pub fn oracle_forecast(panel: &GeneratedPanel) -> f64 {
    let y = panel.series.column(0);
    conditional_mean(panel, y, panel.config.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mean, sym_eig_top, variance};

    fn cfg(id: u8, n: usize, p: usize, r: usize, s: usize, seed: u64) -> DgpConfig {
        DgpConfig { dgp_id: id, n, p, r_dgp: r, s, seed }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate(&cfg(4, 50, 10, 2, 3, 0)).is_err());
        assert!(generate(&cfg(1, 19, 10, 2, 3, 0)).is_err());
        assert!(generate(&cfg(1, 50, 10, 2, 11, 0)).is_err());
        assert!(generate(&cfg(1, 50, 10, 11, 3, 0)).is_err());
        assert!(generate_dgp2(&cfg(1, 50, 10, 2, 3, 0)).is_err());
    }

    #[test]
    fn shapes_and_determinism() {
        for id in 1..=3 {
            let c = cfg(id, 60, 15, 3, 5, 42);
            let a = generate(&c).unwrap();
            let b = generate(&c).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.series.n_obs(), 61);
            assert_eq!(a.series.n_cols(), 16);
            assert_eq!(a.truth.support.len(), 5);
            assert_eq!(a.training().n_obs(), 60);
            let other = generate(&c.with_seed(43)).unwrap();
            assert_ne!(a.series, other.series);
        }
    }

    #[test]
    fn replay_reproduces_target() {
        for id in 1..=3 {
            let panel = generate(&cfg(id, 80, 20, 3, 6, 7)).unwrap();
            let replay = replay_target(&panel);
            for (a, b) in replay.iter().zip(panel.series.column(0)) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "design {id}: {a} vs {b}");
            }
            let oracle = oracle_forecast(&panel);
            let e = panel.holdout_target() - oracle;
            assert!((e - panel.truth.epsilon[80]).abs() < 1e-9);
        }
    }

    #[test]
    fn factor_design_loading_rows() {
        let panel = generate(&cfg(1, 40, 30, 4, 12, 3)).unwrap();
        let l = panel.truth.loadings.as_ref().unwrap();
        let nonzero: Vec<usize> = (0..30).filter(|&i| l.row(i).iter().any(|v| *v != 0.0)).collect();
        assert_eq!(nonzero, panel.truth.support);
        assert_eq!(nonzero.len(), 12);
        assert!(panel.truth.beta1.iter().all(|b| (1.0..2.5).contains(b)));
        assert!(panel.truth.beta2.iter().all(|b| (-2.0..-0.8).contains(b)));
    }

    #[test]
    fn zero_support_is_pure_noise() {
        let panel = generate(&cfg(1, 40, 10, 2, 0, 3)).unwrap();
        assert!(panel.truth.support.is_empty());
        assert_eq!(panel.truth.loadings.as_ref().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn ar2_variance_without_signal() {
        // stationary variance of y = 0.6 y₋₁ + 0.2 y₋₂ + ε
        let (a1, a2) = (0.6, 0.2);
        let rho1 = a1 / (1.0 - a2);
        let target = 1.0 / (1.0 - a1 * rho1 - a2 * (a1 * rho1 + a2));
        let panel = generate_factor_design(&cfg(1, 5000, 2, 1, 1, 11), true).unwrap();
        let v = variance(panel.series.column(0));
        assert!((v / target - 1.0).abs() < 0.1, "variance {v}, expected {target}");
    }

    #[test]
    fn vma_support_and_lag_two_cutoff() {
        let panel = generate(&cfg(2, 4000, 6, 2, 3, 5)).unwrap();
        let t = &panel.truth;
        let s1: Vec<usize> = (0..6).filter(|&j| t.beta1[j] != 0.0).collect();
        let s2: Vec<usize> = (0..6).filter(|&j| t.beta2[j] != 0.0).collect();
        assert_eq!(s1, t.support);
        assert_eq!(s2, t.support);
        let b = t.b_dense().unwrap();
        assert!((spectral_norm(&b) - 1.0).abs() < 1e-8);
        let n = 4000;
        for j in 1..=6 {
            let x = &panel.series.column(j)[..n];
            let m = mean(x);
            let g2: f64 = (2..n).map(|i| (x[i] - m) * (x[i - 2] - m)).sum::<f64>() / n as f64;
            // roughly 4 standard errors of an autocovariance of an MA(1)
            assert!(g2.abs() < 4.0 * 2.0 / (n as f64).sqrt(), "lag-2 autocovariance {g2}");
        }
    }

    #[test]
    fn var_scaling_signs_and_stability() {
        let panel = generate(&cfg(3, 10_000, 20, 3, 7, 9)).unwrap();
        let t = &panel.truth;
        let b = t.b_dense().unwrap();
        assert!((spectral_norm(&b) - 1.0 / 1.05).abs() < 1e-8);
        for j in 0..7 {
            assert_eq!(t.beta1[j] > 0.0, j % 2 == 1);
        }
        assert!(t.beta1[7..].iter().all(|b| *b == 0.0));
        for j in 1..=20 {
            let x = panel.series.column(j);
            assert!(x.iter().all(|v| v.abs() < 100.0));
            assert!(mean(x).abs() < 0.5);
        }
    }

    #[test]
    fn power_iteration_matches_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let (l, r) = low_rank(&mut rng, 30, 4);
            let b = l.matmul(&r);
            let gram = b.tr_matmul(&b);
            let top = sym_eig_top(&gram, 1).unwrap()[0].value.sqrt();
            assert!((spectral_norm_factored(&l, &r) - top).abs() < 1e-8 * top);
            assert!((spectral_norm(&b) - top).abs() < 1e-8 * top);
        }
    }
}
