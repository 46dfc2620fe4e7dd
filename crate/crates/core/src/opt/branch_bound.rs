//! Best-first branch and bound over binary variables, plus an exhaustive
//! reference solver for small problems.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{MixedIntegerQP, OptError, Prepared, SolveOptions, SolveResult, SolveStatus};

/// Binaries whose relaxed value is this close to 0 or 1 count as integral.
const INTEGRALITY_TOL: f64 = 1e-6;
/// Binary cap for [`brute_force_miqp`].
const BRUTE_FORCE_CAP: usize = 16;

struct Node {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound (then oldest) must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn checked_binaries(miqp: &MixedIntegerQP, cap: usize) -> Result<Vec<usize>, OptError> {
    let n = miqp.base.num_vars();
    let mut idx = miqp.binary_indices.clone();
    idx.sort_unstable();
    idx.dedup();
    for &i in &idx {
        if i >= n {
            return Err(OptError::BinaryIndexOutOfRange(i));
        }
        if miqp.base.lower[i] < 0.0 || miqp.base.upper[i] > 1.0 {
            return Err(OptError::BinaryBounds(i));
        }
    }
    if idx.len() > cap {
        return Err(OptError::TooManyBinaries {
            got: idx.len(),
            cap,
        });
    }
    Ok(idx)
}

fn fix(lower: &mut [f64], upper: &mut [f64], i: usize, v: f64) {
    lower[i] = lower[i].max(v);
    upper[i] = upper[i].min(v);
}

fn improves(candidate: f64, incumbent: Option<f64>) -> bool {
    match incumbent {
        None => true,
        Some(best) => candidate < best - 1e-12 * (1.0 + best.abs()),
    }
}

/// Solves a convex QP with binary variables by best-first branch and bound.
///
/// Nodes are expanded in order of their parent's relaxation bound (ties by
/// creation order) and branch on the most fractional binary, lowest index
/// first. `iterations` in the result counts relaxations solved.
pub fn solve_miqp(miqp: &MixedIntegerQP, opts: &SolveOptions) -> Result<SolveResult, OptError> {
    let binaries = checked_binaries(miqp, opts.max_binaries)?;
    let base = &miqp.base;
    let prepared = Prepared::new(base)?;

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        lower: base.lower.clone(),
        upper: base.upper.clone(),
        start: Vec::new(),
    });
    seq += 1;

    let mut incumbent: Option<SolveResult> = None;
    let mut nodes = 0usize;
    let mut incomplete = false;
    let prune = |bound: f64, inc: &Option<SolveResult>| match inc {
        Some(best) => bound >= best.objective - 1e-10 * (1.0 + best.objective.abs()),
        None => false,
    };

    while let Some(node) = heap.pop() {
        if prune(node.bound, &incumbent) {
            continue;
        }
        if nodes >= opts.max_nodes {
            incomplete = true;
            break;
        }
        nodes += 1;
        let start = if node.start.is_empty() {
            None
        } else {
            Some(node.start.as_slice())
        };
        let relax = prepared.solve(&node.lower, &node.upper, start, opts)?;
        match relax.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::IterationLimit => {
                incomplete = true;
                continue;
            }
        }
        if prune(relax.objective, &incumbent) {
            continue;
        }

        let mut branch: Option<(usize, f64)> = None;
        for &i in &binaries {
            let v = relax.x[i];
            let frac = v.min(1.0 - v).max(0.0);
            if frac > INTEGRALITY_TOL && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((i, frac));
            }
        }

        match branch {
            Some((i, _)) => {
                for v in [0.0, 1.0] {
                    let mut lower = node.lower.clone();
                    let mut upper = node.upper.clone();
                    fix(&mut lower, &mut upper, i, v);
                    if lower[i] > upper[i] {
                        continue;
                    }
                    heap.push(Node {
                        bound: relax.objective,
                        seq,
                        lower,
                        upper,
                        start: relax.x.clone(),
                    });
                    seq += 1;
                }
            }
            None => {
                // Snap binaries exactly and re-solve the continuous part.
                let mut lower = node.lower.clone();
                let mut upper = node.upper.clone();
                for &i in &binaries {
                    let v = if relax.x[i] >= 0.5 { 1.0 } else { 0.0 };
                    fix(&mut lower, &mut upper, i, v);
                }
                let snapped = prepared.solve(&lower, &upper, Some(&relax.x), opts)?;
                let candidate = if snapped.is_optimal() { snapped } else { relax };
                if improves(candidate.objective, incumbent.as_ref().map(|r| r.objective)) {
                    incumbent = Some(candidate);
                }
            }
        }
    }

    Ok(match incumbent {
        Some(mut best) => {
            best.iterations = nodes;
            if incomplete {
                best.status = SolveStatus::IterationLimit;
            }
            best
        }
        None => SolveResult {
            status: if incomplete {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Infeasible
            },
            objective: f64::INFINITY,
            x: base
                .lower
                .iter()
                .zip(&base.upper)
                .map(|(l, u)| crate::math::clamp(0.0, *l, *u))
                .collect(),
            iterations: nodes,
            kkt_residual: f64::INFINITY,
        },
    })
}

/// Enumerates every binary assignment (at most 16 binaries) and solves the
/// continuous QP for each.
///
/// Assignments are visited in lexicographic order with the smallest binary
/// index as the most significant digit; a later assignment replaces the best
/// one only when strictly better by a relative margin of 1e-12.
pub fn brute_force_miqp(
    miqp: &MixedIntegerQP,
    opts: &SolveOptions,
) -> Result<SolveResult, OptError> {
    let binaries = checked_binaries(miqp, BRUTE_FORCE_CAP)?;
    let base = &miqp.base;
    let prepared = Prepared::new(base)?;
    let nb = binaries.len();
    let mut best: Option<SolveResult> = None;
    let mut visited = 0usize;
    for mask in 0u32..(1u32 << nb) {
        let mut lower = base.lower.clone();
        let mut upper = base.upper.clone();
        let mut crossed = false;
        for (j, &i) in binaries.iter().enumerate() {
            let v = f64::from((mask >> (nb - 1 - j)) & 1);
            fix(&mut lower, &mut upper, i, v);
            crossed |= lower[i] > upper[i];
        }
        if crossed {
            continue;
        }
        visited += 1;
        let res = prepared.solve(&lower, &upper, None, opts)?;
        if res.is_optimal() && improves(res.objective, best.as_ref().map(|r| r.objective)) {
            best = Some(res);
        }
    }
    Ok(match best {
        Some(mut r) => {
            r.iterations = visited;
            r
        }
        None => SolveResult {
            status: SolveStatus::Infeasible,
            objective: f64::INFINITY,
            x: base
                .lower
                .iter()
                .zip(&base.upper)
                .map(|(l, u)| crate::math::clamp(0.0, *l, *u))
                .collect(),
            iterations: visited,
            kkt_residual: f64::INFINITY,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opt::QuadraticProgram;

    #[test]
    fn small_binary_quadratic() {
        // min (x - 0.3)^2 + (y - 0.8)^2, binaries x, y -> (0, 1)
        let mut qp = QuadraticProgram::new(2);
        qp.add_squared_affine(&[(0, 1.0)], -0.3, 1.0);
        qp.add_squared_affine(&[(1, 1.0)], -0.8, 1.0);
        qp.set_bounds(0, 0.0, 1.0);
        qp.set_bounds(1, 0.0, 1.0);
        let miqp = MixedIntegerQP {
            base: qp,
            binary_indices: alloc::vec![0, 1],
        };
        let res = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.x, alloc::vec![0.0, 1.0]);
        assert!((res.objective - 0.13).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_binaries() {
        let mut qp = QuadraticProgram::new(2);
        qp.set_bounds(0, 0.0, 2.0);
        let miqp = MixedIntegerQP {
            base: qp.clone(),
            binary_indices: alloc::vec![0],
        };
        assert!(matches!(
            solve_miqp(&miqp, &SolveOptions::default()),
            Err(OptError::BinaryBounds(0))
        ));
        let miqp = MixedIntegerQP {
            base: qp,
            binary_indices: alloc::vec![5],
        };
        assert!(matches!(
            solve_miqp(&miqp, &SolveOptions::default()),
            Err(OptError::BinaryIndexOutOfRange(5))
        ));
    }

    #[test]
    fn binary_cap() {
        let mut qp = QuadraticProgram::new(40);
        for i in 0..40 {
            qp.set_bounds(i, 0.0, 1.0);
        }
        let miqp = MixedIntegerQP {
            base: qp,
            binary_indices: (0..40).collect(),
        };
        assert!(matches!(
            solve_miqp(&miqp, &SolveOptions::default()),
            Err(OptError::TooManyBinaries { got: 40, cap: 32 })
        ));
        assert!(matches!(
            brute_force_miqp(&miqp, &SolveOptions::default()),
            Err(OptError::TooManyBinaries { got: 40, cap: 16 })
        ));
    }

    #[test]
    fn infeasible_assignment() {
        // x binary with x >= 0.4 and x <= 0.6: no integral point.
        let mut qp = QuadraticProgram::new(1);
        qp.set_bounds(0, 0.0, 1.0);
        qp.add_ineq(&[-1.0], -0.4);
        qp.add_ineq(&[1.0], 0.6);
        let miqp = MixedIntegerQP {
            base: qp,
            binary_indices: alloc::vec![0],
        };
        let res = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }
}
