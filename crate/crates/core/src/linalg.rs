//! Small dense linear algebra used by the QP kernel and the coordinator.
//!
//! Everything here is row-major `f64` and sized for problems with at most a
//! few hundred variables.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| math::max(m, math::abs(*v)))
    }

    /// `x^T M x` for a square matrix.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            acc += x[i] * dot(self.row(i), x);
        }
        acc
    }

    pub fn push_row(&mut self, row: &[f64]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| math::max(m, math::abs(*x)))
}

pub fn norm2(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

/// Householder QR of a tall matrix `a` (`n x k`, `n >= k`).
///
/// Returns the full orthogonal factor `Q` (`n x n`) and the upper-triangular
/// `k x k` block of `R`.
pub fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.rows();
    let k = a.cols();
    debug_assert!(n >= k);
    let mut r = a.clone();
    let mut q = Matrix::identity(n);
    let mut v = vec![0.0; n];
    for j in 0..k {
        let mut norm_sq = 0.0;
        for i in j..n {
            norm_sq += r[(i, j)] * r[(i, j)];
        }
        let norm = math::sqrt(norm_sq);
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(j, j)] > 0.0 { -norm } else { norm };
        for (i, vi) in v.iter_mut().enumerate().take(n).skip(j) {
            *vi = r[(i, j)];
        }
        v[j] -= alpha;
        let vnorm_sq: f64 = v[j..n].iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm_sq;
        // R <- (I - beta v v^T) R
        for c in j..k {
            let mut s = 0.0;
            for i in j..n {
                s += v[i] * r[(i, c)];
            }
            s *= beta;
            for i in j..n {
                r[(i, c)] -= s * v[i];
            }
        }
        // Q <- Q (I - beta v v^T)
        for row in 0..n {
            let qr = q.row_mut(row);
            let mut s = 0.0;
            for i in j..n {
                s += qr[i] * v[i];
            }
            s *= beta;
            for i in j..n {
                qr[i] -= s * v[i];
            }
        }
    }
    let mut rk = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            rk[(i, j)] = r[(i, j)];
        }
    }
    (q, rk)
}

/// Result of a diagonally pivoted Cholesky factorization of a symmetric
/// positive semidefinite matrix: `P A P^T ~= L L^T` with `L` of size
/// `n x rank`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    pub perm: Vec<usize>,
    pub l: Matrix,
    pub rank: usize,
    /// Largest absolute entry of the trailing Schur complement left over when
    /// the factorization stopped.
    pub residual: f64,
    /// Smallest diagonal entry of that trailing block (negative means the
    /// input was slightly indefinite).
    pub residual_min_diag: f64,
}

/// Pivoted Cholesky; stops once every remaining diagonal entry is `<= tol`.
pub fn pivoted_cholesky(a: &Matrix, tol: f64) -> PivotedCholesky {
    let n = a.rows();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while rank < n {
        let mut best = rank;
        let mut best_val = w[(perm[rank], perm[rank])];
        for (idx, &p) in perm.iter().enumerate().skip(rank + 1) {
            let d = w[(p, p)];
            if d > best_val {
                best_val = d;
                best = idx;
            }
        }
        if best_val <= tol {
            break;
        }
        perm.swap(rank, best);
        let p = perm[rank];
        let piv = math::sqrt(best_val);
        // Column p of L, stored in place in w[., p] for the remaining rows.
        w[(p, p)] = piv;
        for &q in &perm[rank + 1..] {
            w[(q, p)] /= piv;
        }
        for (ii, &qi) in perm.iter().enumerate().skip(rank + 1) {
            let lqi = w[(qi, p)];
            if lqi == 0.0 {
                continue;
            }
            for &qj in &perm[rank + 1..=ii] {
                let v = w[(qj, p)] * lqi;
                w[(qi, qj)] -= v;
                if qi != qj {
                    w[(qj, qi)] -= v;
                }
            }
        }
        rank += 1;
    }
    let mut l = Matrix::zeros(n, rank);
    for c in 0..rank {
        let p = perm[c];
        for r in c..n {
            l[(r, c)] = w[(perm[r], p)];
        }
    }
    let mut residual: f64 = 0.0;
    let mut residual_min_diag = 0.0f64;
    for &qi in &perm[rank..] {
        residual_min_diag = math::min(residual_min_diag, w[(qi, qi)]);
        for &qj in &perm[rank..] {
            residual = math::max(residual, math::abs(w[(qi, qj)]));
        }
    }
    PivotedCholesky {
        perm,
        l,
        rank,
        residual,
        residual_min_diag,
    }
}

/// Solves `L y = b` for lower-triangular square `l` (uses the leading
/// `b.len()` rows/cols).
pub fn forward_subst(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for (j, yj) in y.iter().enumerate().take(i) {
            s -= l[(i, j)] * yj;
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `L^T x = y` for lower-triangular `l`.
pub fn backward_subst_lt(l: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for (j, xj) in x.iter().enumerate().take(n).skip(i + 1) {
            s -= l[(j, i)] * xj;
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `R x = b` for upper-triangular square `r`.
pub fn backward_subst_upper(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for (j, xj) in x.iter().enumerate().take(n).skip(i + 1) {
            s -= r[(i, j)] * xj;
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Dense Cholesky factor of a symmetric positive definite matrix. Returns
/// `None` if a pivot is not strictly positive.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let y = forward_subst(l, b);
    backward_subst_lt(l, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn qr_reconstructs_and_q_is_orthogonal() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, -1.0],
            vec![0.5, 4.0],
            vec![-2.0, 1.0],
        ]);
        let (q, r) = householder_qr(&a);
        let qtq = matmul(&q.transpose(), &q);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - e).abs() < 1e-12);
            }
        }
        // A = Q[:, :2] R
        for i in 0..4 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| q[(i, k)] * r[(k, j)]).sum();
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pivoted_cholesky_detects_rank() {
        // rank-2 PSD matrix v1 v1^T + v2 v2^T in R^3
        let v1 = [1.0, 2.0, 0.0];
        let v2 = [0.0, 1.0, 1.0];
        let mut a = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = v1[i] * v1[j] + v2[i] * v2[j];
            }
        }
        let pc = pivoted_cholesky(&a, 1e-12);
        assert_eq!(pc.rank, 2);
        assert!(pc.residual < 1e-12);
    }

    #[test]
    fn cholesky_solves_spd() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0]);
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }
}
