//! Dense convex QP and binary MIQP solvers.
//!
//! Problems use the convention `min x^T H x + c^T x + k` (no factor one half),
//! subject to `A x <= b`, `E x = e` and `lower <= x <= upper`.

mod active_set;
mod branch_bound;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, Matrix};

pub use active_set::solve_qp;
pub(crate) use active_set::{solve_qp_from, Prepared};
pub use branch_bound::{brute_force_miqp, solve_miqp};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub ineq_lhs: Matrix,
    pub ineq_rhs: Vec<f64>,
    pub eq_lhs: Matrix,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadraticProgram {
    /// Empty problem over `n` unbounded variables with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            hessian: Matrix::zeros(n, n),
            linear: vec![0.0; n],
            constant: 0.0,
            ineq_lhs: Matrix::zeros(0, n),
            ineq_rhs: Vec::new(),
            eq_lhs: Matrix::zeros(0, n),
            eq_rhs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn add_ineq(&mut self, row: &[f64], rhs: f64) {
        self.ineq_lhs.push_row(row);
        self.ineq_rhs.push(rhs);
    }

    /// Adds `sum coef_i x_i <= rhs` from sparse `(index, coef)` pairs.
    pub fn add_ineq_sparse(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(terms);
        self.add_ineq(&row, rhs);
    }

    pub fn add_eq(&mut self, row: &[f64], rhs: f64) {
        self.eq_lhs.push_row(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_eq_sparse(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(terms);
        self.add_eq(&row, rhs);
    }

    pub fn set_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.lower[i] = lower;
        self.upper[i] = upper;
    }

    /// Adds `w * x_i * x_j` to the objective (split symmetrically).
    pub fn add_quad(&mut self, i: usize, j: usize, w: f64) {
        if i == j {
            self.hessian[(i, i)] += w;
        } else {
            self.hessian[(i, j)] += 0.5 * w;
            self.hessian[(j, i)] += 0.5 * w;
        }
    }

    /// Adds `w * (sum coef_i x_i + offset)^2` to the objective.
    pub fn add_squared_affine(&mut self, terms: &[(usize, f64)], offset: f64, w: f64) {
        for &(i, a) in terms {
            for &(j, b) in terms {
                self.hessian[(i, j)] += w * a * b;
            }
            self.linear[i] += 2.0 * w * a * offset;
        }
        self.constant += w * offset * offset;
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.hessian.quad_form(x) + dot(&self.linear, x) + self.constant
    }

    /// Largest constraint violation at `x`, with general rows scaled to unit
    /// infinity-norm.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.ineq_lhs.rows() {
            let row = self.ineq_lhs.row(i);
            let s = row_scale(row);
            worst = worst.max((dot(row, x) - self.ineq_rhs[i]) / s);
        }
        for i in 0..self.eq_lhs.rows() {
            let row = self.eq_lhs.row(i);
            let s = row_scale(row);
            worst = worst.max(((dot(row, x) - self.eq_rhs[i]) / s).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    fn dense_row(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars()];
        for &(i, a) in terms {
            row[i] += a;
        }
        row
    }
}

pub(crate) fn row_scale(row: &[f64]) -> f64 {
    let s = crate::linalg::norm_inf(row);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerQP {
    pub base: QuadraticProgram,
    pub binary_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Active-set iterations (QP) or explored nodes (MIQP).
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Feasibility tolerance on rows scaled to unit infinity-norm.
    pub feas_tol: f64,
    /// Relative stationarity tolerance.
    pub stat_tol: f64,
    /// Branch-and-bound node budget.
    pub max_nodes: usize,
    pub max_binaries: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            feas_tol: 1e-6,
            stat_tol: 1e-9,
            max_nodes: 200_000,
            max_binaries: 32,
        }
    }
}

impl SolveOptions {
    /// 5000 iterations and a 1e-3 constraint tolerance, matching a common
    /// interior-point default.
    pub fn legacy() -> Self {
        Self {
            feas_tol: 1e-3,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("dimension mismatch in {0}")]
    DimensionMismatch(&'static str),
    #[error("hessian is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("hessian is not positive semidefinite (indefinite residual {0:e})")]
    NotConvex(f64),
    #[error("variable {0} has lower bound above upper bound")]
    BoundsCrossed(usize),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("binary index {0} out of range")]
    BinaryIndexOutOfRange(usize),
    #[error("binary variable {0} has bounds outside [0, 1]")]
    BinaryBounds(usize),
    #[error("{got} binaries exceed the configured cap of {cap}")]
    TooManyBinaries { got: usize, cap: usize },
    #[error("problem is unbounded below")]
    Unbounded,
}
