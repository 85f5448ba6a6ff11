//! Dense linear-algebra kernels shared by the rest of the crate.
//!
//! Everything here is deterministic and single-threaded: a column-major
//! [`Matrix`], least squares through a column-pivoted Householder QR,
//! orthonormal bases of column spaces, and a cyclic Jacobi eigensolver for
//! symmetric matrices. Inner products use compensated summation.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Error, Result};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Dense column-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "storage length does not match shape");
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row-major values, as written in source code.
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "storage length does not match shape");
        Matrix::from_fn(rows, cols, |i, j| values[i * cols + j])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Stacks equal-length columns side by side.
    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, columns: &[C]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            let c = c.as_ref();
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Matrix { rows, cols: columns.len(), data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.cols).map(move |j| self.col(j))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let cols: Vec<&[f64]> = idx.iter().map(|&j| self.col(j)).collect();
        Matrix::from_columns(self.rows, &cols)
    }

    /// Keeps rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.rows);
        let cols: Vec<&[f64]> = (0..self.cols).map(|j| &self.col(j)[start..end]).collect();
        Matrix::from_columns(end - start, &cols)
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let b = other.col(j);
            let dst = out.col_mut(j);
            for (k, &bk) in b.iter().enumerate() {
                if bk != 0.0 {
                    axpy(bk, self.col(k), dst);
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "row counts differ");
        Matrix::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "vector length mismatch");
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "vector length mismatch");
        self.columns().map(|c| dot(c, v)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// Inner product with Neumaier compensation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated sum.
pub fn sum(values: &[f64]) -> f64 {
    let mut s = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            comp += (s - t) + v;
        } else {
            comp += (v - t) + s;
        }
        s = t;
    }
    s + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values) / values.len() as f64
}

/// Population variance (1/n normalisation).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - m).collect();
    dot(&centered, &centered) / values.len() as f64
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Result of a rank-revealing least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub effective_rank: usize,
}

impl LeastSquaresFit {
    pub fn rss(&self) -> f64 {
        dot(&self.residuals, &self.residuals)
    }
}

/// Householder QR with column pivoting. Reflectors are stored below the
/// diagonal with an implicit unit leading entry.
#[derive(Debug, Clone)]
struct PivotedQr {
    qr: Matrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn new(x: &Matrix, rank_tol: f64) -> Self {
        let (m, n) = (x.rows(), x.cols());
        let mut qr = x.clone();
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..n).collect();
        let mut diag_max = 0.0_f64;
        let mut rank = 0;
        let mut rank_settled = false;

        for k in 0..steps {
            // Exact trailing norms each step; cheap relative to the update.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let nj = norm(&qr.col(j)[k..]);
                if nj > best_norm {
                    best_norm = nj;
                    best = j;
                }
            }
            if best != k {
                swap_columns(&mut qr, k, best);
                perm.swap(k, best);
            }

            let (beta, t) = householder(&mut qr.col_mut(k)[k..]);
            tau[k] = t;
            if k == 0 {
                diag_max = beta.abs();
            }
            if !rank_settled {
                if beta.abs() > rank_tol * diag_max && diag_max > 0.0 {
                    rank += 1;
                } else {
                    rank_settled = true;
                }
            }

            if t != 0.0 {
                let (left, right) = qr.data.split_at_mut((k + 1) * m);
                let v = &left[k * m + k..k * m + m];
                for j in 0..(n - k - 1) {
                    let col = &mut right[j * m + k..j * m + m];
                    apply_reflector(v, t, col);
                }
            }
        }

        PivotedQr { qr, tau, perm, rank }
    }

    /// Overwrites `y` with `Qᵀ y`.
    fn apply_qt(&self, y: &mut [f64]) {
        let m = self.qr.rows();
        for k in 0..self.tau.len() {
            if self.tau[k] != 0.0 {
                let v = &self.qr.col(k)[k..m];
                apply_reflector(v, self.tau[k], &mut y[k..]);
            }
        }
    }

    /// Overwrites `y` with `Q y`.
    fn apply_q(&self, y: &mut [f64]) {
        let m = self.qr.rows();
        for k in (0..self.tau.len()).rev() {
            if self.tau[k] != 0.0 {
                let v = &self.qr.col(k)[k..m];
                apply_reflector(v, self.tau[k], &mut y[k..]);
            }
        }
    }
}

fn swap_columns(m: &mut Matrix, a: usize, b: usize) {
    let rows = m.rows();
    for i in 0..rows {
        m.data.swap(a * rows + i, b * rows + i);
    }
}

/// Turns `x` into a reflector `v` (with `v[0]` replaced by `beta`) such that
/// `(I − τ v vᵀ) x = beta e₁`. Returns `(beta, τ)`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail_norm = norm(&x[1..]);
    if tail_norm == 0.0 {
        return (alpha, 0.0);
    }
    let xnorm = alpha.hypot(tail_norm);
    let beta = if alpha >= 0.0 { -xnorm } else { xnorm };
    let v0 = alpha - beta;
    for xi in x[1..].iter_mut() {
        *xi /= v0;
    }
    x[0] = beta;
    let tau = (beta - alpha) / beta;
    (beta, tau)
}

/// `y ← (I − τ v vᵀ) y` where `v[0]` is implicitly 1.
#[inline]
fn apply_reflector(v: &[f64], tau: f64, y: &mut [f64]) {
    let mut s = y[0];
    s += dot(&v[1..], &y[1..]);
    s *= tau;
    y[0] -= s;
    for (yi, vi) in y[1..].iter_mut().zip(&v[1..]) {
        *yi -= s * vi;
    }
}

/// Least squares through a column-pivoted QR.
///
/// Columns whose pivoted diagonal falls below `rank_tol` times the largest
/// diagonal get coefficient 0 and are left out of `effective_rank`.
pub fn least_squares(x: &Matrix, y: &[f64], rank_tol: f64) -> Result<LeastSquaresFit> {
    ensure_input!(x.rows() > 0, "least squares needs at least one row");
    ensure_input!(
        x.rows() == y.len(),
        "design has {} rows but response has length {}",
        x.rows(),
        y.len()
    );
    ensure_input!(rank_tol > 0.0, "rank tolerance must be positive");

    let n = x.cols();
    if n == 0 {
        return Ok(LeastSquaresFit {
            coefficients: Vec::new(),
            fitted: vec![0.0; y.len()],
            residuals: y.to_vec(),
            effective_rank: 0,
        });
    }

    let qr = PivotedQr::new(x, rank_tol);
    let rank = qr.rank;
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);

    // Back substitution on the leading rank×rank block of R.
    let mut z = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for (k, zk) in z.iter().enumerate().skip(i + 1) {
            s -= qr.qr[(i, k)] * zk;
        }
        z[i] = s / qr.qr[(i, i)];
    }
    let mut coefficients = vec![0.0; n];
    for (i, zi) in z.into_iter().enumerate() {
        coefficients[qr.perm[i]] = zi;
    }

    let mut fitted = qty;
    for v in fitted.iter_mut().skip(rank) {
        *v = 0.0;
    }
    qr.apply_q(&mut fitted);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();

    Ok(LeastSquaresFit { coefficients, fitted, residuals, effective_rank: rank })
}

/// Orthonormal basis for the column space of `x`, truncated at the numerical
/// rank. An all-zero input yields a matrix with zero columns.
pub fn orthonormal_basis(x: &Matrix, rank_tol: f64) -> Result<Matrix> {
    ensure_input!(x.rows() >= 1, "orthonormal basis needs at least one row");
    ensure_input!(rank_tol > 0.0, "rank tolerance must be positive");
    if x.cols() == 0 {
        return Ok(Matrix::zeros(x.rows(), 0));
    }
    let qr = PivotedQr::new(x, rank_tol);
    let m = x.rows();
    let mut q = Matrix::zeros(m, qr.rank);
    for j in 0..qr.rank {
        let col = q.col_mut(j);
        col[j] = 1.0;
        qr.apply_q(col);
    }
    Ok(q)
}

/// One eigenvalue with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Largest `r` eigenpairs of a symmetric matrix, by descending eigenvalue.
pub fn sym_eig_top(s: &Matrix, r: usize) -> Result<Vec<EigPair>> {
    ensure_input!(s.rows() == s.cols(), "matrix must be square, got {}x{}", s.rows(), s.cols());
    ensure_input!(
        r >= 1 && r <= s.cols(),
        "requested {} eigenpairs from a {}x{} matrix",
        r,
        s.rows(),
        s.cols()
    );
    let scale = s.max_abs();
    let n = s.rows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::input(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut pairs = jacobi_eigen(s);
    pairs.truncate(r);
    Ok(pairs)
}

/// All eigenpairs of a symmetric matrix, descending.
pub fn sym_eig_all(s: &Matrix) -> Result<Vec<EigPair>> {
    if s.cols() == 0 {
        return Ok(Vec::new());
    }
    sym_eig_top(s, s.cols())
}

fn jacobi_eigen(s: &Matrix) -> Vec<EigPair> {
    let n = s.rows();
    let mut a = s.clone();
    // symmetrise exactly so the two-sided updates stay consistent
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let s_norm = a.frobenius_norm();
    let target = 1e-12 * s_norm;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for j in 0..n {
            for i in (j + 1)..n {
                off += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - sn * akq;
                    let new_kq = sn * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                let (vp, vq) = two_cols_mut(&mut v, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - sn * xq;
                    *y = sn * xp + c * xq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    order
        .into_iter()
        .map(|j| {
            let mut vector = v.col(j).to_vec();
            fix_sign(&mut vector);
            EigPair { value: a[(j, j)], vector }
        })
        .collect()
}

fn two_cols_mut(m: &mut Matrix, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let rows = m.rows();
    let (left, right) = m.data.split_at_mut(q * rows);
    (&mut left[p * rows..(p + 1) * rows], &mut right[..rows])
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
