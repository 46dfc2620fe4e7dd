//! Big-M encodings of logical constructs as linear rows.
//!
//! Every row has the form `delta·δ + aux·y <= f_coef·f + constant`, where δ
//! is a binary, `y` an auxiliary continuous variable and `f` an affine
//! expression whose bounds are declared by the caller.

use alloc::vec::Vec;

use thiserror::Error;

use crate::opt::QuadraticProgram;

/// Fraction of the declared range added on each side of the bounds.
pub const BIG_M_MARGIN: f64 = 0.1;
/// Default strict-inequality slack, relative to `big_m - big_m_lo`.
pub const EPS_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MldRow {
    pub delta: f64,
    pub aux: f64,
    pub f_coef: f64,
    pub constant: f64,
}

impl MldRow {
    fn lhs_minus_rhs(&self, delta: f64, y: f64, f: f64) -> f64 {
        self.delta * delta + self.aux * y - self.f_coef * f - self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MldRows {
    pub rows: Vec<MldRow>,
    pub big_m: f64,
    pub big_m_lo: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MldError {
    #[error("sign of f is fixed on [{0}, {1}]; fix the indicator instead")]
    DegenerateSign(f64, f64),
    #[error("bounds [{0}, {1}] must be finite and ordered")]
    InvalidBounds(f64, f64),
    #[error("duration {0} h outside (0, 1]")]
    InvalidDuration(f64),
    #[error("eps {0} must be positive and at most 1e-6 of the big-M range")]
    InvalidEps(f64),
}

/// Widened bounds `(m, M)` used as big-M constants.
pub fn big_m_bounds(f_bounds: [f64; 2]) -> Result<(f64, f64), MldError> {
    let [lo, hi] = f_bounds;
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(MldError::InvalidBounds(lo, hi));
    }
    let mut margin = BIG_M_MARGIN * (hi - lo);
    if margin == 0.0 {
        margin = BIG_M_MARGIN * lo.abs().max(1.0);
    }
    Ok((lo - margin, hi + margin))
}

fn resolve_eps(eps: Option<f64>, m: f64, big: f64) -> Result<f64, MldError> {
    let cap = EPS_FRACTION * (big - m);
    match eps {
        None => Ok(cap),
        Some(e) if e > 0.0 && e <= cap * (1.0 + 1e-12) => Ok(e),
        Some(e) => Err(MldError::InvalidEps(e)),
    }
}

/// `[f >= 0] <-> [δ = 1]`.
///
/// δ = 1 requires `f >= 0`; δ = 0 requires `f <= eps`. On `[0, eps]` both
/// values are admissible and the objective chooses.
pub fn bind_sign_indicator(f_bounds: [f64; 2], eps: Option<f64>) -> Result<MldRows, MldError> {
    let [lo, hi] = f_bounds;
    let (m, big) = big_m_bounds(f_bounds)?;
    if !(lo < 0.0 && 0.0 < hi) {
        return Err(MldError::DegenerateSign(lo, hi));
    }
    let eps = resolve_eps(eps, m, big)?;
    Ok(MldRows {
        rows: alloc::vec![
            // f <= eps + (M - eps) δ
            MldRow {
                delta: -(big - eps),
                aux: 0.0,
                f_coef: -1.0,
                constant: eps,
            },
            // f >= m (1 - δ)
            MldRow {
                delta: -m,
                aux: 0.0,
                f_coef: 1.0,
                constant: -m,
            },
        ],
        big_m: big,
        big_m_lo: m,
        eps,
    })
}

/// `y = δ·f`.
pub fn bind_product(f_bounds: [f64; 2], eps: Option<f64>) -> Result<MldRows, MldError> {
    let (m, big) = big_m_bounds(f_bounds)?;
    let eps = resolve_eps(eps, m, big)?;
    Ok(MldRows {
        rows: alloc::vec![
            // y <= M δ
            MldRow {
                delta: -big,
                aux: 1.0,
                f_coef: 0.0,
                constant: 0.0,
            },
            // y >= m δ
            MldRow {
                delta: m,
                aux: -1.0,
                f_coef: 0.0,
                constant: 0.0,
            },
            // y <= f - m (1 - δ)
            MldRow {
                delta: -m,
                aux: 1.0,
                f_coef: 1.0,
                constant: -m,
            },
            // y >= f - M (1 - δ)
            MldRow {
                delta: big,
                aux: -1.0,
                f_coef: -1.0,
                constant: big,
            },
        ],
        big_m: big,
        big_m_lo: m,
        eps,
    })
}

/// `y = c1·f·T` if δ = 1, else `y = c2·f·T`.
pub fn bind_switched_cost(
    c1: f64,
    c2: f64,
    duration: f64,
    f_bounds: [f64; 2],
    eps: Option<f64>,
) -> Result<MldRows, MldError> {
    if !(duration > 0.0 && duration <= 1.0) {
        return Err(MldError::InvalidDuration(duration));
    }
    let (m, big) = big_m_bounds(f_bounds)?;
    let eps = resolve_eps(eps, m, big)?;
    let a1 = c1 * duration;
    let a2 = c2 * duration;
    // Range of h = (a1 - a2) f over [m, M].
    let (h_lo, h_hi) = {
        let (p, q) = ((a1 - a2) * m, (a1 - a2) * big);
        (p.min(q), p.max(q))
    };
    Ok(MldRows {
        rows: alloc::vec![
            // y - a2 f <= h_hi δ
            MldRow {
                delta: -h_hi,
                aux: 1.0,
                f_coef: a2,
                constant: 0.0,
            },
            // y - a2 f >= h_lo δ
            MldRow {
                delta: h_lo,
                aux: -1.0,
                f_coef: -a2,
                constant: 0.0,
            },
            // y - a2 f <= h - h_lo (1 - δ)
            MldRow {
                delta: -h_lo,
                aux: 1.0,
                f_coef: a1,
                constant: -h_lo,
            },
            // y - a2 f >= h - h_hi (1 - δ)
            MldRow {
                delta: h_hi,
                aux: -1.0,
                f_coef: -a1,
                constant: h_hi,
            },
        ],
        big_m: big,
        big_m_lo: m,
        eps,
    })
}

impl MldRows {
    /// True when every row holds at `(δ, y, f)` within `tol`.
    pub fn satisfied(&self, delta: f64, y: f64, f: f64, tol: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.lhs_minus_rhs(delta, y, f) <= tol)
    }

    /// Feasible interval of `y` for fixed `(δ, f)`, or `None` if empty.
    pub fn aux_interval(&self, delta: f64, f: f64) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for r in &self.rows {
            let rest = r.f_coef * f + r.constant - r.delta * delta;
            if r.aux > 0.0 {
                hi = hi.min(rest / r.aux);
            } else if r.aux < 0.0 {
                lo = lo.max(rest / r.aux);
            } else if rest < 0.0 {
                return None;
            }
        }
        // The rows are evaluated in floating point, so a single point can come
        // out as an interval inverted by a few ulps.
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        (lo <= hi + slack).then_some((lo.min(hi), hi.max(lo)))
    }

    /// Appends the rows to `qp` with `f = Σ coef·x + f_offset`.
    pub fn append_to(
        &self,
        qp: &mut QuadraticProgram,
        delta: usize,
        aux: Option<usize>,
        f_terms: &[(usize, f64)],
        f_offset: f64,
    ) {
        for r in &self.rows {
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(f_terms.len() + 2);
            if r.delta != 0.0 {
                terms.push((delta, r.delta));
            }
            if let Some(y) = aux {
                if r.aux != 0.0 {
                    terms.push((y, r.aux));
                }
            }
            if r.f_coef != 0.0 {
                for &(i, a) in f_terms {
                    terms.push((i, -r.f_coef * a));
                }
            }
            qp.add_ineq_sparse(&terms, r.constant + r.f_coef * f_offset);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_indicator_examples() {
        let rows = bind_sign_indicator([-1000.0, 1000.0], None).unwrap();
        assert!(rows.satisfied(1.0, 0.0, 100.0, 0.0));
        assert!(!rows.satisfied(0.0, 0.0, 100.0, 0.0));
        assert!(rows.satisfied(0.0, 0.0, -50.0, 0.0));
        assert!(!rows.satisfied(1.0, 0.0, -50.0, 0.0));
        assert!(rows.satisfied(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn sign_indicator_rejects_constant_sign() {
        assert!(matches!(
            bind_sign_indicator([0.0, 10.0], None),
            Err(MldError::DegenerateSign(..))
        ));
        assert!(matches!(
            bind_sign_indicator([-10.0, -1.0], None),
            Err(MldError::DegenerateSign(..))
        ));
    }

    #[test]
    fn product_examples() {
        let rows = bind_product([-500.0, 500.0], None).unwrap();
        assert_eq!(rows.aux_interval(1.0, 400.0), Some((400.0, 400.0)));
        assert_eq!(rows.aux_interval(0.0, -400.0), Some((0.0, 0.0)));
    }

    #[test]
    fn switched_cost_examples() {
        let rows = bind_switched_cost(10.0, 0.0, 0.25, [-10.0, 10.0], None).unwrap();
        let (lo, hi) = rows.aux_interval(1.0, 2.0).unwrap();
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 5.0).abs() < 1e-12);
        let rows = bind_switched_cost(0.0, 5.0, 1.0, [-10.0, 10.0], None).unwrap();
        let (lo, hi) = rows.aux_interval(0.0, -2.0).unwrap();
        assert!((lo + 10.0).abs() < 1e-12 && (hi + 10.0).abs() < 1e-12);
    }

    #[test]
    fn big_m_has_margin_and_eps_is_small() {
        let rows = bind_product([-100.0, 300.0], None).unwrap();
        assert_eq!(rows.big_m, 340.0);
        assert_eq!(rows.big_m_lo, -140.0);
        assert!(rows.eps > 0.0 && rows.eps <= 1e-6 * 480.0);
    }

    #[test]
    fn rejects_bad_duration() {
        assert!(bind_switched_cost(1.0, 2.0, 0.0, [-1.0, 1.0], None).is_err());
        assert!(bind_switched_cost(1.0, 2.0, 1.5, [-1.0, 1.0], None).is_err());
    }
}
