//! Primal active-set method for convex (possibly singular) QPs.
//!
//! Phase one minimises the total violation of the rows that the starting
//! point breaks, keeping every satisfied row hard. Phase two is a null-space
//! active-set iteration. Zero-curvature directions of the reduced Hessian are
//! handled with a pivoted Cholesky factor: if the reduced gradient has a
//! component in its null space the iteration follows that ray to the next
//! blocking constraint, otherwise it takes the (minimum-norm) Newton step.

use alloc::vec;
use alloc::vec::Vec;

use super::{OptError, QuadraticProgram, SolveOptions, SolveResult, SolveStatus};
use crate::linalg::{
    backward_subst_lt, backward_subst_upper, dot, forward_subst, householder_qr, norm2, norm_inf,
    pivoted_cholesky, Matrix,
};
use crate::math;

/// Consecutive zero-length steps before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 8;

/// Solves a convex QP.
pub fn solve_qp(qp: &QuadraticProgram, opts: &SolveOptions) -> Result<SolveResult, OptError> {
    solve_qp_from(qp, opts, None)
}

/// Like [`solve_qp`], seeding phase one with `start` (clamped into bounds).
pub(crate) fn solve_qp_from(
    qp: &QuadraticProgram,
    opts: &SolveOptions,
    start: Option<&[f64]>,
) -> Result<SolveResult, OptError> {
    let prepared = Prepared::new(qp)?;
    prepared.solve(&qp.lower, &qp.upper, start, opts)
}

/// A validated problem with normalised rows, reusable across bound changes.
pub(crate) struct Prepared<'a> {
    qp: &'a QuadraticProgram,
    h2: Matrix,
    h_zero: bool,
    rows: Matrix,
    rhs: Vec<f64>,
    is_eq: Vec<bool>,
    /// A row with no coefficients that can never be satisfied.
    hopeless: bool,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(qp: &'a QuadraticProgram) -> Result<Self, OptError> {
        let n = qp.num_vars();
        let h = &qp.hessian;
        if h.rows() != n || h.cols() != n {
            return Err(OptError::DimensionMismatch("hessian"));
        }
        if qp.ineq_lhs.cols() != n || qp.ineq_lhs.rows() != qp.ineq_rhs.len() {
            return Err(OptError::DimensionMismatch("inequality rows"));
        }
        if qp.eq_lhs.cols() != n || qp.eq_lhs.rows() != qp.eq_rhs.len() {
            return Err(OptError::DimensionMismatch("equality rows"));
        }
        if qp.lower.len() != n || qp.upper.len() != n {
            return Err(OptError::DimensionMismatch("bounds"));
        }
        if h.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(OptError::NonFinite("hessian"));
        }
        if qp.linear.iter().any(|v| !v.is_finite()) || !qp.constant.is_finite() {
            return Err(OptError::NonFinite("linear term"));
        }
        if qp.ineq_lhs.as_slice().iter().any(|v| !v.is_finite())
            || qp.eq_lhs.as_slice().iter().any(|v| !v.is_finite())
            || qp.ineq_rhs.iter().any(|v| !v.is_finite())
            || qp.eq_rhs.iter().any(|v| !v.is_finite())
        {
            return Err(OptError::NonFinite("constraints"));
        }
        for j in 0..n {
            if qp.lower[j].is_nan() || qp.upper[j].is_nan() {
                return Err(OptError::NonFinite("bounds"));
            }
            if qp.lower[j] > qp.upper[j] {
                return Err(OptError::BoundsCrossed(j));
            }
        }

        let hnorm = h.max_abs();
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
        if asym > 1e-12 * hnorm.max(1.0) {
            return Err(OptError::NotSymmetric(asym));
        }

        let mut h2 = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h2[(i, j)] = h[(i, j)] + h[(j, i)];
            }
        }
        if hnorm > 0.0 {
            let pc = pivoted_cholesky(h, 1e-13 * hnorm);
            let limit = 1e-9 * hnorm;
            if pc.residual > limit || pc.residual_min_diag < -limit {
                return Err(OptError::NotConvex(pc.residual.max(-pc.residual_min_diag)));
            }
            if pc.residual_min_diag < 0.0 {
                for i in 0..n {
                    h2[(i, i)] += 2.0 * limit;
                }
            }
        }

        let mut rows = Matrix::zeros(0, n);
        let mut rhs = Vec::new();
        let mut is_eq = Vec::new();
        let mut hopeless = false;
        let mut push = |row: &[f64], b: f64, eq: bool| {
            let s = norm_inf(row);
            if s == 0.0 {
                if (eq && b.abs() > 0.0) || (!eq && b < 0.0) {
                    hopeless = true;
                }
                return;
            }
            let scaled: Vec<f64> = row.iter().map(|v| v / s).collect();
            rows.push_row(&scaled);
            rhs.push(b / s);
            is_eq.push(eq);
        };
        for i in 0..qp.eq_lhs.rows() {
            push(qp.eq_lhs.row(i), qp.eq_rhs[i], true);
        }
        for i in 0..qp.ineq_lhs.rows() {
            push(qp.ineq_lhs.row(i), qp.ineq_rhs[i], false);
        }
        if rows.cols() != n {
            rows = Matrix::zeros(0, n);
        }

        Ok(Self {
            qp,
            h_zero: hnorm == 0.0,
            h2,
            rows,
            rhs,
            is_eq,
            hopeless,
        })
    }

    /// Solves with replacement bounds (used for branch-and-bound fixings).
    pub(crate) fn solve(
        &self,
        lower: &[f64],
        upper: &[f64],
        start: Option<&[f64]>,
        opts: &SolveOptions,
    ) -> Result<SolveResult, OptError> {
        let n = self.qp.num_vars();
        let x0: Vec<f64> = (0..n)
            .map(|j| {
                let v = start.map_or(0.0, |s| s[j]);
                math::clamp(v, lower[j], upper[j])
            })
            .collect();
        if self.hopeless || (0..n).any(|j| lower[j] > upper[j]) {
            return Ok(self.finish(SolveStatus::Infeasible, x0, 0, f64::INFINITY));
        }

        let problem = EngineProblem {
            h2: if self.h_zero { None } else { Some(&self.h2) },
            c: &self.qp.linear,
            rows: &self.rows,
            rhs: &self.rhs,
            is_eq: &self.is_eq,
            lower,
            upper,
        };
        // A warm start seeds the working set with the constraints it sits
        // on; should that stall, the solve is repeated from an empty set.
        if start.is_some() {
            let res = self.attempt(&problem, x0.clone(), opts, true)?;
            if res.status == SolveStatus::Optimal || res.status == SolveStatus::Infeasible {
                return Ok(res);
            }
        }
        self.attempt(&problem, x0, opts, false)
    }

    fn attempt(
        &self,
        problem: &EngineProblem,
        x0: Vec<f64>,
        opts: &SolveOptions,
        seed: bool,
    ) -> Result<SolveResult, OptError> {
        let mut iters = 0;
        let (mut x, mut ws) =
            match phase_one(problem, x0, opts.feas_tol, opts.stat_tol, opts.max_iter, seed, &mut iters) {
                PhaseOne::Feasible(x, ws) => (x, ws),
                PhaseOne::Infeasible(x) => {
                    return Ok(self.finish(SolveStatus::Infeasible, x, iters, f64::INFINITY))
                }
                PhaseOne::IterationLimit(x) => {
                    return Ok(self.finish(SolveStatus::IterationLimit, x, iters, f64::INFINITY))
                }
            };
        let tols = Tols {
            stat: opts.stat_tol,
            stall_limit: seed.then(|| 4 * (problem.n() + problem.rows.rows()) + 32),
        };
        match run_engine(problem, &mut x, &mut ws, &tols, opts.max_iter, &mut iters) {
            EngineExit::Optimal { kkt } => Ok(self.finish(SolveStatus::Optimal, x, iters, kkt)),
            EngineExit::IterationLimit => {
                Ok(self.finish(SolveStatus::IterationLimit, x, iters, f64::INFINITY))
            }
            EngineExit::Unbounded if seed => {
                Ok(self.finish(SolveStatus::IterationLimit, x, iters, f64::INFINITY))
            }
            EngineExit::Unbounded => Err(OptError::Unbounded),
        }
    }

    fn finish(&self, status: SolveStatus, x: Vec<f64>, iterations: usize, kkt: f64) -> SolveResult {
        SolveResult {
            status,
            objective: self.qp.objective(&x),
            x,
            iterations,
            kkt_residual: kkt,
        }
    }
}

struct EngineProblem<'a> {
    /// Twice the objective Hessian (`None` when identically zero).
    h2: Option<&'a Matrix>,
    c: &'a [f64],
    rows: &'a Matrix,
    rhs: &'a [f64],
    is_eq: &'a [bool],
    lower: &'a [f64],
    upper: &'a [f64],
}

impl EngineProblem<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.h2 {
            Some(h) => {
                let mut g = h.mul_vec(x);
                for (gi, ci) in g.iter_mut().zip(self.c) {
                    *gi += ci;
                }
                g
            }
            None => self.c.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Free,
    AtLower,
    AtUpper,
    Fixed,
}

struct WorkingSet {
    rows: Vec<usize>,
    in_set: Vec<bool>,
    var: Vec<VarState>,
}

impl WorkingSet {
    fn new(n_rows: usize, lower: &[f64], upper: &[f64]) -> Self {
        Self {
            rows: Vec::new(),
            in_set: vec![false; n_rows],
            var: lower
                .iter()
                .zip(upper)
                .map(|(l, u)| if l == u { VarState::Fixed } else { VarState::Free })
                .collect(),
        }
    }

    fn add_row(&mut self, r: usize) {
        self.rows.push(r);
        self.in_set[r] = true;
    }

    fn remove_row(&mut self, pos: usize) {
        let r = self.rows.remove(pos);
        self.in_set[r] = false;
    }

    fn free_vars(&self) -> Vec<usize> {
        (0..self.var.len())
            .filter(|&j| self.var[j] == VarState::Free)
            .collect()
    }

    /// Adds the equality rows, skipping any that are linearly dependent on
    /// the ones already present (restricted to the free variables).
    fn add_equalities(&mut self, p: &EngineProblem) {
        let free = self.free_vars();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for r in 0..p.rows.rows() {
            if !p.is_eq[r] {
                continue;
            }
            let row = p.rows.row(r);
            let mut v: Vec<f64> = free.iter().map(|&j| row[j]).collect();
            let orig = norm2(&v);
            if orig == 0.0 {
                continue;
            }
            for b in &basis {
                let d = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= d * bi;
                }
            }
            let res = norm2(&v);
            if res > 1e-9 * orig {
                for vi in &mut v {
                    *vi /= res;
                }
                basis.push(v);
                self.add_row(r);
            }
        }
    }

    /// Adds the bounds `x` sits on, each only when independent of the
    /// constraints already in the set (fixed variables count as unit rows).
    fn seed_active(&mut self, p: &EngineProblem, x: &[f64], tol: f64) {
        let n = x.len();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let try_add = |basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>| -> bool {
            let orig = norm2(&v);
            if orig == 0.0 {
                return false;
            }
            for b in basis.iter() {
                let d = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= d * bi;
                }
            }
            let res = norm2(&v);
            if res <= 1e-3 * orig {
                return false;
            }
            v.iter_mut().for_each(|vi| *vi /= res);
            basis.push(v);
            true
        };
        let unit = |j: usize| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        };
        for j in 0..n {
            if self.var[j] != VarState::Free {
                try_add(&mut basis, unit(j));
            }
        }
        for &r in &self.rows {
            try_add(&mut basis, p.rows.row(r).to_vec());
        }
        for j in 0..n {
            if self.var[j] != VarState::Free || basis.len() >= n {
                continue;
            }
            let state = if x[j] == p.lower[j] {
                VarState::AtLower
            } else if x[j] == p.upper[j] {
                VarState::AtUpper
            } else {
                continue;
            };
            if try_add(&mut basis, unit(j)) {
                self.var[j] = state;
            }
        }
        for r in 0..p.rows.rows() {
            if p.is_eq[r] || self.in_set[r] || basis.len() >= n {
                continue;
            }
            let row = p.rows.row(r);
            if (dot(row, x) - p.rhs[r]).abs() > tol {
                continue;
            }
            if try_add(&mut basis, row.to_vec()) {
                self.add_row(r);
            }
        }
    }
}

struct Tols {
    stat: f64,
    /// Consecutive zero-length steps tolerated before giving up.
    stall_limit: Option<usize>,
}

enum EngineExit {
    Optimal { kkt: f64 },
    IterationLimit,
    Unbounded,
}

enum Block {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

fn run_engine(
    p: &EngineProblem,
    x: &mut [f64],
    ws: &mut WorkingSet,
    tols: &Tols,
    max_iter: usize,
    iters: &mut usize,
) -> EngineExit {
    let n = p.n();
    let c_scale = norm_inf(p.c);
    let mut zero_steps = 0usize;
    loop {
        if *iters >= max_iter {
            return EngineExit::IterationLimit;
        }
        if tols.stall_limit.is_some_and(|l| zero_steps > l) {
            return EngineExit::IterationLimit;
        }
        *iters += 1;
        let bland = zero_steps >= DEGENERATE_SWITCH;

        let g = p.gradient(x);
        let gs = norm_inf(&g).max(c_scale).max(1e-300);
        let grad_tol = tols.stat * gs;

        let free = ws.free_vars();
        let nf = free.len();
        let a = ws.rows.len();
        let (q, r) = if a > 0 {
            let mut nt = Matrix::zeros(nf, a);
            for (k, &ri) in ws.rows.iter().enumerate() {
                let row = p.rows.row(ri);
                for (fi, &v) in free.iter().enumerate() {
                    nt[(fi, k)] = row[v];
                }
            }
            householder_qr(&nt)
        } else {
            (Matrix::identity(nf), Matrix::zeros(0, 0))
        };
        let k = nf.saturating_sub(a);
        let gf: Vec<f64> = free.iter().map(|&v| g[v]).collect();
        let gz: Vec<f64> = (0..k)
            .map(|j| (0..nf).map(|i| q[(i, a + j)] * gf[i]).sum())
            .collect();

        if k > 0 && norm2(&gz) > grad_tol {
            let (pz, ray) = match p.h2 {
                Some(h2) => {
                    let mut hz = Matrix::zeros(nf, k);
                    for i in 0..nf {
                        let hrow = h2.row(free[i]);
                        for j in 0..k {
                            let mut s = 0.0;
                            for (l, &fl) in free.iter().enumerate() {
                                let hv = hrow[fl];
                                if hv != 0.0 {
                                    s += hv * q[(l, a + j)];
                                }
                            }
                            hz[(i, j)] = s;
                        }
                    }
                    let mut zhz = Matrix::zeros(k, k);
                    for i in 0..k {
                        for j in i..k {
                            let s: f64 = (0..nf).map(|l| q[(l, a + i)] * hz[(l, j)]).sum();
                            zhz[(i, j)] = s;
                            zhz[(j, i)] = s;
                        }
                    }
                    reduced_step(&zhz, &gz, grad_tol)
                }
                None => (gz.iter().map(|v| -v).collect(), true),
            };
            let mut step = vec![0.0; n];
            for (i, &fi) in free.iter().enumerate() {
                step[fi] = (0..k).map(|j| q[(i, a + j)] * pz[j]).sum();
            }

            // Ratio test; first minimum wins, which is also Bland's choice.
            let pn = norm_inf(&step);
            let mut alpha = if ray { f64::INFINITY } else { 1.0 };
            let mut block = None;
            for ri in 0..p.rows.rows() {
                if p.is_eq[ri] || ws.in_set[ri] {
                    continue;
                }
                let row = p.rows.row(ri);
                let ap = dot(row, &step);
                if ap > 1e-12 * pn {
                    let slack = (p.rhs[ri] - dot(row, x)).max(0.0);
                    let t = slack / ap;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Row(ri));
                    }
                }
            }
            for &v in &free {
                let pv = step[v];
                if pv > 1e-14 * pn && p.upper[v].is_finite() {
                    let t = (p.upper[v] - x[v]).max(0.0) / pv;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Upper(v));
                    }
                } else if pv < -1e-14 * pn && p.lower[v].is_finite() {
                    let t = (p.lower[v] - x[v]).min(0.0) / pv;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Lower(v));
                    }
                }
            }
            if block.is_none() && ray {
                return EngineExit::Unbounded;
            }
            if alpha > 0.0 {
                for (xi, si) in x.iter_mut().zip(&step) {
                    *xi += alpha * si;
                }
                zero_steps = 0;
            } else {
                zero_steps += 1;
            }
            match block {
                Some(Block::Row(ri)) => ws.add_row(ri),
                Some(Block::Upper(v)) => {
                    x[v] = p.upper[v];
                    ws.var[v] = VarState::AtUpper;
                }
                Some(Block::Lower(v)) => {
                    x[v] = p.lower[v];
                    ws.var[v] = VarState::AtLower;
                }
                None => {}
            }
            continue;
        }

        // Stationary on the working set: check multiplier signs.
        let lam: Vec<f64> = if a > 0 {
            let ytg: Vec<f64> = (0..a)
                .map(|rr| -(0..nf).map(|i| q[(i, rr)] * gf[i]).sum::<f64>())
                .collect();
            backward_subst_upper(&r, &ytg)
        } else {
            Vec::new()
        };
        let dual_tol = grad_tol;
        // (multiplier, tie-break id, action)
        let mut chosen: Option<(f64, usize, Drop)> = None;
        let mut consider = |m: f64, id: usize, d: Drop| {
            if m >= -dual_tol {
                return;
            }
            let better = match &chosen {
                None => true,
                Some((cm, cid, _)) => {
                    if bland {
                        id < *cid
                    } else {
                        m < *cm
                    }
                }
            };
            if better {
                chosen = Some((m, id, d));
            }
        };
        for (pos, &ri) in ws.rows.iter().enumerate() {
            if !p.is_eq[ri] {
                consider(lam[pos], ri, Drop::Row(pos));
            }
        }
        let n_rows = p.rows.rows();
        for v in 0..n {
            let state = ws.var[v];
            if state == VarState::Free || state == VarState::Fixed {
                continue;
            }
            let mut s = g[v];
            for (pos, &ri) in ws.rows.iter().enumerate() {
                s += lam[pos] * p.rows[(ri, v)];
            }
            let m = if state == VarState::AtLower { s } else { -s };
            consider(m, n_rows + v, Drop::Var(v));
        }
        match chosen {
            None => {
                let kkt = if gs > 0.0 { norm2(&gz) / gs } else { 0.0 };
                return EngineExit::Optimal { kkt };
            }
            Some((_, _, Drop::Row(pos))) => ws.remove_row(pos),
            Some((_, _, Drop::Var(v))) => ws.var[v] = VarState::Free,
        }
    }
}

enum Drop {
    Row(usize),
    Var(usize),
}

/// Step in reduced coordinates. Returns `(direction, is_ray)`.
fn reduced_step(zhz: &Matrix, gz: &[f64], grad_tol: f64) -> (Vec<f64>, bool) {
    let k = gz.len();
    let scale = zhz.max_abs();
    if scale == 0.0 {
        return (gz.iter().map(|v| -v).collect(), true);
    }
    let pc = pivoted_cholesky(zhz, 1e-12 * scale);
    let rank = pc.rank;
    let gh: Vec<f64> = pc.perm.iter().map(|&i| gz[i]).collect();
    let y = forward_subst(&pc.l, &gh[..rank]);
    let h: Vec<f64> = (rank..k)
        .map(|i| gh[i] - (0..rank).map(|j| pc.l[(i, j)] * y[j]).sum::<f64>())
        .collect();
    let mut v = vec![0.0; k];
    let ray = norm2(&h) > grad_tol;
    if ray {
        let w: Vec<f64> = h.iter().map(|x| -x).collect();
        let t: Vec<f64> = (0..rank)
            .map(|j| (rank..k).map(|i| pc.l[(i, j)] * w[i - rank]).sum())
            .collect();
        let u = backward_subst_lt(&pc.l, &t);
        for j in 0..rank {
            v[j] = -u[j];
        }
        v[rank..k].copy_from_slice(&w);
    } else {
        let p1 = backward_subst_lt(&pc.l, &y);
        for j in 0..rank {
            v[j] = -p1[j];
        }
    }
    let mut out = vec![0.0; k];
    for (i, &pi) in pc.perm.iter().enumerate() {
        out[pi] = v[i];
    }
    (out, ray)
}

enum PhaseOne {
    Feasible(Vec<f64>, WorkingSet),
    Infeasible(Vec<f64>),
    IterationLimit(Vec<f64>),
}

fn phase_one(
    p: &EngineProblem,
    x0: Vec<f64>,
    feas_tol: f64,
    stat_tol: f64,
    max_iter: usize,
    seed: bool,
    iters: &mut usize,
) -> PhaseOne {
    let n = p.n();
    let m = p.rows.rows();
    // (row, slack coefficient, initial slack)
    let mut elastic: Vec<(usize, f64, f64)> = Vec::new();
    for r in 0..m {
        let res = dot(p.rows.row(r), &x0) - p.rhs[r];
        if p.is_eq[r] {
            if res.abs() > feas_tol {
                let coef = if res > 0.0 { -1.0 } else { 1.0 };
                elastic.push((r, coef, res.abs()));
            }
        } else if res > feas_tol {
            elastic.push((r, -1.0, res));
        }
    }
    if elastic.is_empty() {
        let mut ws = WorkingSet::new(m, p.lower, p.upper);
        ws.add_equalities(p);
        if seed {
            ws.seed_active(p, &x0, feas_tol);
        }
        return PhaseOne::Feasible(x0, ws);
    }

    let ns = elastic.len();
    let na = n + ns;
    let mut rows = Matrix::zeros(0, na);
    let mut slack_of_row = vec![None; m];
    for (s, &(r, coef, _)) in elastic.iter().enumerate() {
        slack_of_row[r] = Some((s, coef));
    }
    for (r, slack) in slack_of_row.iter().enumerate() {
        let mut row = vec![0.0; na];
        row[..n].copy_from_slice(p.rows.row(r));
        if let Some((s, coef)) = slack {
            row[n + s] = *coef;
        }
        rows.push_row(&row);
    }
    if rows.cols() != na {
        rows = Matrix::zeros(0, na);
    }
    let mut c = vec![0.0; na];
    let mut lower = p.lower.to_vec();
    let mut upper = p.upper.to_vec();
    let mut xa = x0;
    for &(_, _, s0) in &elastic {
        lower.push(0.0);
        upper.push(f64::INFINITY);
        xa.push(s0);
    }
    for ci in c.iter_mut().skip(n) {
        *ci = 1.0;
    }
    let aug = EngineProblem {
        h2: None,
        c: &c,
        rows: &rows,
        rhs: p.rhs,
        is_eq: p.is_eq,
        lower: &lower,
        upper: &upper,
    };
    let mut ws = WorkingSet::new(m, &lower, &upper);
    ws.add_equalities(&aug);
    let tols = Tols {
        stat: stat_tol,
        stall_limit: None,
    };
    let exit = run_engine(&aug, &mut xa, &mut ws, &tols, max_iter, iters);
    xa.truncate(n);
    if matches!(exit, EngineExit::IterationLimit) {
        return PhaseOne::IterationLimit(xa);
    }
    let worst = (0..m)
        .map(|r| {
            let res = dot(p.rows.row(r), &xa) - p.rhs[r];
            if p.is_eq[r] {
                res.abs()
            } else {
                res
            }
        })
        .fold(0.0f64, f64::max);
    if worst > feas_tol {
        return PhaseOne::Infeasible(xa);
    }
    let mut ws2 = WorkingSet::new(m, p.lower, p.upper);
    ws2.add_equalities(p);
    if seed {
        ws2.seed_active(p, &xa, feas_tol);
    }
    PhaseOne::Feasible(xa, ws2)
}
