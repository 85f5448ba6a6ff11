//! Group orthogonal greedy selection with HDAIC stopping, and peeling.
//!
//! Each predictor contributes a *group*: the block of its `q1` most recent
//! lags aligned against the target `h` steps ahead. The greedy step picks the
//! group whose column space best explains the current residual; the residual
//! is then recomputed as the projection of the response off the span of every
//! group selected so far. The path is cut at the minimiser of the HDAIC
//!
//! ```text
//! HDAIC(k) = (1 + C · k · ln p / n) · σ̂²(k)
//! ```
//!
//! Peeling reruns the whole procedure against the original response with all
//! previously selected groups removed from candidacy, and unions the picks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Result};
use crate::numerics::{dot, norm, orthonormal_basis, variance, Matrix, DEFAULT_RANK_TOL};
use crate::series::SeriesMatrix;

/// Residual variance (relative to the response variance) below which the
/// greedy path stops.
pub const EARLY_STOP_REL_VARIANCE: f64 = 1e-12;

const PARALLEL_SCAN_MIN: usize = 256;

/// Lagged group blocks for every predictor plus the aligned response.
#[derive(Debug, Clone)]
pub struct GroupDesign {
    /// One `n_eff × q1` block per predictor.
    pub groups: Vec<Matrix>,
    pub response: Vec<f64>,
    /// Column id in the source panel for each group.
    pub predictor_ids: Vec<usize>,
    pub q1: usize,
    pub h: usize,
    pub n: usize,
}

impl GroupDesign {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_eff(&self) -> usize {
        self.response.len()
    }
}

/// Builds the lag blocks and response for horizon `h`.
///
/// Row `t` (zero-based) of group `j` holds `x[t+q1-1], x[t+q1-2], …, x[t]`
/// and the matching response entry is `y[t+q1+h-1]`.
pub fn build_group_design(series: &SeriesMatrix, target: usize, q1: usize, h: usize) -> Result<GroupDesign> {
    series.check_target(target)?;
    ensure_input!(q1 >= 1, "q1 must be at least 1");
    ensure_input!(h >= 1, "horizon must be at least 1");
    let n = series.n_obs();
    ensure_input!(
        n > q1 + h,
        "insufficient usable rows: n = {n} but q1 + h = {}",
        q1 + h
    );
    let n_eff = n - h - q1 + 1;
    let y = series.column(target);
    let response = y[q1 + h - 1..].to_vec();
    debug_assert_eq!(response.len(), n_eff);

    let predictor_ids = series.predictor_ids(target);
    let groups = predictor_ids
        .iter()
        .map(|&j| {
            let x = series.column(j);
            Matrix::from_fn(n_eff, q1, |t, k| x[t + q1 - 1 - k])
        })
        .collect();

    Ok(GroupDesign { groups, response, predictor_ids, q1, h, n })
}

/// Orthonormal bases of every group's column space, computed once per design.
#[derive(Debug, Clone)]
pub struct GroupBases {
    bases: Vec<Matrix>,
}

impl GroupBases {
    pub fn new(design: &GroupDesign) -> Result<Self> {
        let bases = design
            .groups
            .par_iter()
            .map(|g| orthonormal_basis(g, DEFAULT_RANK_TOL))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupBases { bases })
    }

    pub fn get(&self, j: usize) -> &Matrix {
        &self.bases[j]
    }

    /// `‖Q_jᵀ u‖²`, the reduction in residual sum of squares from projecting
    /// `u` onto group `j`.
    fn score(&self, j: usize, u: &[f64]) -> f64 {
        self.bases[j].columns().map(|q| dot(q, u).powi(2)).sum()
    }

    /// Highest-scoring candidate; lowest index wins ties.
    fn best(&self, u: &[f64], candidates: &[usize]) -> usize {
        let scores: Vec<f64> = if candidates.len() >= PARALLEL_SCAN_MIN {
            candidates.par_iter().map(|&j| self.score(j, u)).collect()
        } else {
            candidates.iter().map(|&j| self.score(j, u)).collect()
        };
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] || (scores[i] == scores[best] && candidates[i] < candidates[best]) {
                best = i;
            }
        }
        candidates[best]
    }
}

/// One greedy step: the candidate group minimising `‖u − P_j u‖²`.
pub fn goga_step(residual: &[f64], design: &GroupDesign, candidates: &[usize]) -> Result<usize> {
    ensure_input!(!candidates.is_empty(), "candidate set is empty");
    ensure_input!(
        residual.len() == design.n_eff(),
        "residual length {} does not match design rows {}",
        residual.len(),
        design.n_eff()
    );
    check_candidates(design, candidates)?;
    let mut best: Option<(usize, f64)> = None;
    for &j in candidates {
        let q = orthonormal_basis(&design.groups[j], DEFAULT_RANK_TOL)?;
        let score: f64 = q.columns().map(|c| dot(c, residual).powi(2)).sum();
        match best {
            Some((bj, bs)) if bs > score || (bs == score && bj < j) => {}
            _ => best = Some((j, score)),
        }
    }
    Ok(best.map(|(j, _)| j).expect("candidates checked non-empty"))
}

fn check_candidates(design: &GroupDesign, candidates: &[usize]) -> Result<()> {
    for &j in candidates {
        ensure_input!(j < design.n_groups(), "candidate {j} out of range ({} groups)", design.n_groups());
    }
    Ok(())
}

/// `(1 + C·k·ln(p)/n)·σ̂²`.
pub fn hdaic(sigma2: f64, k: usize, p_total: usize, n_eff: usize, c: f64) -> Result<f64> {
    ensure_input!(sigma2 >= 0.0, "sigma2 must be non-negative");
    ensure_input!(p_total >= 2, "p_total must be at least 2");
    ensure_input!(n_eff >= 1, "n_eff must be at least 1");
    ensure_input!(c > 0.0, "C must be positive");
    ensure_input!(k >= 1, "k must be at least 1");
    Ok((1.0 + c * k as f64 * (p_total as f64).ln() / n_eff as f64) * sigma2)
}

/// Default greedy cap: `⌈5·√(n_eff / ln p)⌉`, capped at `⌊n_eff / (2·q1)⌋`.
pub fn default_k_n(n_eff: usize, p_total: usize, q1: usize) -> usize {
    let cap = (n_eff / (2 * q1.max(1))).max(1);
    let lnp = (p_total.max(2) as f64).ln();
    let k = (5.0 * (n_eff as f64 / lnp).sqrt()).ceil() as usize;
    k.clamp(1, cap)
}

/// Greedy path, its residual variances and HDAIC values, and the cut point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Group indices in the order they were picked.
    pub path: Vec<usize>,
    /// `σ̂²(k)` after each step.
    pub sigma2_path: Vec<f64>,
    pub hdaic_path: Vec<f64>,
    /// Number of leading path entries kept (`k̂`); 0 only when no step was possible.
    pub chosen_k: usize,
    pub selected: Vec<usize>,
    /// `σ̂²(0) = ‖y‖²/n`, the residual variance of the empty model.
    pub sigma2_null: f64,
}

impl SelectionResult {
    /// True when the HDAIC-chosen model does not beat the empty model.
    pub fn null_preferred(&self) -> bool {
        match self.chosen_k {
            0 => true,
            k => self.hdaic_path[k - 1] >= self.sigma2_null,
        }
    }
}

/// Greedy selection over `candidates` with at most `k_n` steps, cut by HDAIC.
pub fn goga_hdaic(design: &GroupDesign, candidates: &[usize], k_n: usize, c: f64) -> Result<SelectionResult> {
    let bases = GroupBases::new(design)?;
    goga_hdaic_with_bases(design, &bases, candidates, k_n, c)
}

/// As [`goga_hdaic`] with precomputed group bases.
pub fn goga_hdaic_with_bases(
    design: &GroupDesign,
    bases: &GroupBases,
    candidates: &[usize],
    k_n: usize,
    c: f64,
) -> Result<SelectionResult> {
    ensure_input!(k_n >= 1, "K_n must be at least 1");
    ensure_input!(!candidates.is_empty(), "candidate set is empty");
    ensure_input!(c > 0.0, "C must be positive");
    check_candidates(design, candidates)?;

    let y = &design.response;
    let n_eff = y.len();
    let p_total = design.n_groups().max(2);
    let stop_level = EARLY_STOP_REL_VARIANCE * variance(y);

    let mut pool: Vec<usize> = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let max_steps = k_n.min(pool.len());

    let mut span: Vec<Vec<f64>> = Vec::new();
    let mut u = y.clone();
    let mut path = Vec::new();
    let mut sigma2_path = Vec::new();
    let mut hdaic_path = Vec::new();
    let sigma2_null = dot(y, y) / n_eff as f64;

    while path.len() < max_steps && !pool.is_empty() {
        // A group that adds nothing to the span never will later, so drop it for good.
        let mut added = 0;
        let mut pick = None;
        while !pool.is_empty() {
            let j = bases.best(&u, &pool);
            pool.retain(|&g| g != j);
            added = extend_span(&mut span, bases.get(j));
            if added > 0 {
                pick = Some(j);
                break;
            }
        }
        let Some(j) = pick else { break };
        debug_assert!(added > 0);

        u = residual_off_span(y, &span);
        let sigma2 = dot(&u, &u) / n_eff as f64;
        path.push(j);
        sigma2_path.push(sigma2);
        hdaic_path.push(hdaic(sigma2, path.len(), p_total, n_eff, c)?);
        if sigma2 < stop_level {
            break;
        }
    }

    let chosen_k = argmin_first(&hdaic_path).map_or(0, |i| i + 1);
    let selected = path[..chosen_k].to_vec();
    Ok(SelectionResult { path, sigma2_path, hdaic_path, chosen_k, selected, sigma2_null })
}

fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Gram–Schmidt with one reorthogonalisation pass; returns how many new
/// directions were appended.
fn extend_span(span: &mut Vec<Vec<f64>>, block: &Matrix) -> usize {
    let before = span.len();
    for q in block.columns() {
        let mut v = q.to_vec();
        let start = norm(&v);
        if start == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for b in span.iter() {
                let c = dot(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let nv = norm(&v);
        if nv > DEFAULT_RANK_TOL * start {
            v.iter_mut().for_each(|x| *x /= nv);
            span.push(v);
        }
    }
    span.len() - before
}

/// `(I − H) y` for the orthonormal `span`.
fn residual_off_span(y: &[f64], span: &[Vec<f64>]) -> Vec<f64> {
    let mut u = y.to_vec();
    for b in span {
        let c = dot(b, y);
        for (ui, bi) in u.iter_mut().zip(b) {
            *ui -= c * bi;
        }
    }
    u
}

/// Output of the peeling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelResult {
    pub rounds: Vec<SelectionResult>,
    /// Union of every round's selection, ascending.
    pub union_set: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeelOptions {
    pub rounds: usize,
    pub k_n: usize,
    pub c: f64,
    /// Treat a round whose HDAIC-chosen model does not beat the empty model as
    /// selecting nothing.
    pub null_check: bool,
}

/// Peeling with `m` rounds.
pub fn peel(design: &GroupDesign, m: usize, k_n: usize, c: f64) -> Result<PeelResult> {
    peel_with(design, &PeelOptions { rounds: m, k_n, c, null_check: false })
}

pub fn peel_with(design: &GroupDesign, opts: &PeelOptions) -> Result<PeelResult> {
    ensure_input!(opts.rounds >= 1, "M must be at least 1");
    let bases = GroupBases::new(design)?;
    let mut candidates: Vec<usize> = (0..design.n_groups()).collect();
    let mut rounds = Vec::new();
    let mut union_set: Vec<usize> = Vec::new();

    for _ in 0..opts.rounds {
        if candidates.is_empty() {
            break;
        }
        let round = goga_hdaic_with_bases(design, &bases, &candidates, opts.k_n, opts.c)?;
        if round.selected.is_empty() || (opts.null_check && round.null_preferred()) {
            break;
        }
        union_set.extend_from_slice(&round.selected);
        candidates.retain(|j| !round.selected.contains(j));
        rounds.push(round);
    }
    union_set.sort_unstable();
    Ok(PeelResult { rounds, union_set })
}
