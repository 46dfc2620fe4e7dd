//! Microgrid-level controllers: the day-ahead planning optimizer (MPO) and
//! the 15-minute microgrid MPC (MMPC) with a shrinking first block.
//!
//! Costs are expressed in cents: power in W times duration in h gives W·h,
//! divided by [`WH_PER_KWH`] to meet tariffs in cents/kWh. The smoothing
//! term (W²) is divided by the same constant so that the whole objective is
//! the raw W-based objective scaled by 1/1000.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::mld::{bind_product, bind_sign_indicator, bind_switched_cost, MldError};
use crate::opt::{solve_miqp, MixedIntegerQP, OptError, QuadraticProgram, SolveOptions, SolveStatus};

pub const WH_PER_KWH: f64 = 1000.0;

/// Per-block tariff in cents/kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tariff {
    pub buy: f64,
    pub sell: f64,
}

/// Per-block forecast of load and renewable power (W).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Disturbance {
    pub load: f64,
    pub res: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridParams {
    pub eta_c: f64,
    pub eta_d: f64,
    /// Imbalance penalty, cents/kWh.
    pub pen: f64,
    pub pg_min: f64,
    pub pg_max: f64,
    pub pb_min: f64,
    pub pb_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub w_c: f64,
    pub w_r: f64,
    pub w_p: f64,
    pub w_co: f64,
    pub w_ro: f64,
    pub n_m: usize,
    pub n_mpo: usize,
}

impl MicrogridParams {
    /// Controller-side values for a 13.5 kWh battery at `soc_ini`, with the
    /// usable window 7.5 points below and 4.5 points above it.
    pub fn standard(soc_ini: f64) -> Self {
        let capacity = 13_500.0;
        Self {
            eta_c: 0.65,
            eta_d: 0.65,
            pen: 10.0,
            pg_min: -50_000.0,
            pg_max: 50_000.0,
            pb_min: -500.0,
            pb_max: 500.0,
            e_min: (soc_ini - 0.075) * capacity,
            e_max: (soc_ini + 0.045) * capacity,
            w_c: 1.0,
            w_r: 0.03,
            w_p: 1.0,
            w_co: 1.0,
            w_ro: 0.03,
            n_m: 3,
            n_mpo: 9,
        }
    }

    pub fn validate(&self) -> Result<(), MicrogridError> {
        let eta_ok = |e: f64| e > 0.0 && e <= 1.0;
        if !eta_ok(self.eta_c) || !eta_ok(self.eta_d) {
            return Err(MicrogridError::InvalidParams("efficiencies must lie in (0, 1]"));
        }
        if !(self.pb_min < 0.0 && 0.0 < self.pb_max) {
            return Err(MicrogridError::InvalidParams("pb_min < 0 < pb_max required"));
        }
        if !(self.e_min < self.e_max) || !(self.pg_min < self.pg_max) {
            return Err(MicrogridError::InvalidParams("energy and grid bounds must be ordered"));
        }
        if [self.w_c, self.w_r, self.w_p, self.w_co, self.w_ro, self.pen]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return Err(MicrogridError::InvalidParams("weights and penalty must be non-negative"));
        }
        if self.n_m == 0 || self.n_mpo == 0 {
            return Err(MicrogridError::InvalidParams("horizons must be at least one block"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmpcInput {
    pub step_k: usize,
    /// Current stored energy, Wh.
    pub e_b: f64,
    /// Last applied ESS power, W.
    pub pb_prev: f64,
    /// Remaining fraction of the current hour, h.
    pub t_s_first: f64,
    pub p_ref: Vec<f64>,
    pub p_exe: Vec<f64>,
    pub tariffs: Vec<Tariff>,
    pub d1: Vec<Disturbance>,
}

/// Variable positions of one block in the MMPC decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmpcIndex {
    pub pb: usize,
    pub z: usize,
    pub c_c: usize,
    pub r_p: usize,
    pub delta_b: usize,
    pub delta_c: usize,
    pub delta_p: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmpcProgram {
    pub miqp: MixedIntegerQP,
    pub index_map: Vec<MmpcIndex>,
    /// Maps the decision vector to predicted PCC power.
    pub s_f: Matrix,
    /// Maps stacked `(load, res)` forecasts to predicted PCC power.
    pub s_fd: Matrix,
    pub pg_sp: Vec<f64>,
    pub durations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmpcPlan {
    pub pb: Vec<f64>,
    pub pg_plan: Vec<f64>,
    pub pg_sp: Vec<f64>,
    pub request: Vec<f64>,
    /// Predicted stored energy after each block, Wh.
    pub energy: Vec<f64>,
    /// Trading cost term (cents).
    pub trading: f64,
    /// Tracking penalty term (cents).
    pub penalty: f64,
    pub objective: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MicrogridError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("block duration {0} h outside (0, 1]")]
    InvalidDuration(f64),
    #[error("stored energy {e_b} Wh outside [{e_min}, {e_max}]")]
    InfeasibleBounds { e_b: f64, e_min: f64, e_max: f64 },
    #[error("solver returned {0:?}")]
    Status(SolveStatus),
    #[error(transparent)]
    Solver(#[from] OptError),
    #[error(transparent)]
    Mld(#[from] MldError),
}

fn check_duration(t_s: f64) -> Result<(), MicrogridError> {
    if t_s > 0.0 && t_s <= 1.0 {
        Ok(())
    } else {
        Err(MicrogridError::InvalidDuration(t_s))
    }
}

/// Average PCC power needed over the rest of the block so that the whole
/// block averages `p_ref`.
pub fn compute_pcc_setpoint(p_ref: f64, p_exe: f64, t_s: f64) -> Result<f64, MicrogridError> {
    check_duration(t_s)?;
    Ok((p_ref - p_exe * (1.0 - t_s)) / t_s)
}

/// Average power change asked from the buildings over the rest of the block.
pub fn compute_request(
    p_ref: f64,
    p_exe: f64,
    t_s: f64,
    pg_plan: f64,
) -> Result<f64, MicrogridError> {
    check_duration(t_s)?;
    Ok((p_ref - p_exe * (1.0 - t_s) - pg_plan * t_s) / t_s)
}

/// Stored energy after applying `pb` for `t_s` hours.
pub fn predict_ess_energy(e_b: f64, pb: f64, t_s: f64, params: &MicrogridParams) -> f64 {
    if pb >= 0.0 {
        e_b + params.eta_c * pb * t_s
    } else {
        e_b + pb * t_s / params.eta_d
    }
}

/// Positions used by the shared block builder; `None` for terms the MPO omits.
#[derive(Debug, Clone, Copy)]
struct BlockVars {
    pb: usize,
    z: usize,
    c_c: usize,
    r_p: Option<usize>,
    delta_b: usize,
    delta_c: usize,
    delta_p: Option<usize>,
}

struct BlockProblem<'a> {
    e_b: f64,
    pb_prev: f64,
    durations: &'a [f64],
    tariffs: &'a [Tariff],
    d1: &'a [Disturbance],
    /// PCC setpoints; enables the tracking penalty.
    pg_sp: Option<&'a [f64]>,
    w_c: f64,
    w_r: f64,
    w_p: f64,
}

/// Adds a sign indicator on `f = pb + offset`, fixing δ when the sign of `f`
/// cannot change over the ESS power range.
fn attach_sign(
    qp: &mut QuadraticProgram,
    bounds: [f64; 2],
    delta: usize,
    pb: usize,
    offset: f64,
) -> Result<(), MicrogridError> {
    match bind_sign_indicator(bounds, None) {
        Ok(rows) => {
            rows.append_to(qp, delta, None, &[(pb, 1.0)], offset);
            Ok(())
        }
        Err(MldError::DegenerateSign(lo, _)) => {
            let v = if lo >= 0.0 { 1.0 } else { 0.0 };
            qp.set_bounds(delta, v, v);
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn build_blocks(
    bp: &BlockProblem,
    params: &MicrogridParams,
) -> Result<(MixedIntegerQP, Vec<BlockVars>), MicrogridError> {
    params.validate()?;
    let n = bp.durations.len();
    if bp.tariffs.len() != n || bp.d1.len() != n || bp.pg_sp.is_some_and(|s| s.len() != n) {
        return Err(MicrogridError::InvalidInput("per-block vectors must share the horizon length"));
    }
    for t in bp.tariffs {
        if !(t.buy > t.sell) {
            return Err(MicrogridError::InvalidInput("buy tariff must exceed sell tariff"));
        }
    }
    for &t in bp.durations {
        check_duration(t)?;
    }
    let tol = 1e-6 * (params.e_max - params.e_min);
    if bp.e_b < params.e_min - tol || bp.e_b > params.e_max + tol {
        return Err(MicrogridError::InfeasibleBounds {
            e_b: bp.e_b,
            e_min: params.e_min,
            e_max: params.e_max,
        });
    }

    let tracking = bp.pg_sp.is_some();
    let width = if tracking { 7 } else { 5 };
    let vars: Vec<BlockVars> = (0..n)
        .map(|i| {
            let o = width * i;
            if tracking {
                BlockVars {
                    pb: o,
                    z: o + 1,
                    c_c: o + 2,
                    r_p: Some(o + 3),
                    delta_b: o + 4,
                    delta_c: o + 5,
                    delta_p: Some(o + 6),
                }
            } else {
                BlockVars {
                    pb: o,
                    z: o + 1,
                    c_c: o + 2,
                    r_p: None,
                    delta_b: o + 3,
                    delta_c: o + 4,
                    delta_p: None,
                }
            }
        })
        .collect();

    let mut qp = QuadraticProgram::new(width * n);
    let mut binaries = Vec::new();
    let pb_bounds = [params.pb_min, params.pb_max];
    let k_loss = params.eta_c - 1.0 / params.eta_d;
    let mut energy_terms: Vec<(usize, f64)> = Vec::new();

    for (i, v) in vars.iter().enumerate() {
        let t = bp.durations[i];
        let d = bp.d1[i];
        qp.set_bounds(v.pb, params.pb_min, params.pb_max);
        for delta in [Some(v.delta_b), Some(v.delta_c), v.delta_p].into_iter().flatten() {
            qp.set_bounds(delta, 0.0, 1.0);
            binaries.push(delta);
        }

        // ESS: δ^b = [pb >= 0], z = δ^b·pb.
        attach_sign(&mut qp, pb_bounds, v.delta_b, v.pb, 0.0)?;
        bind_product(pb_bounds, None)?.append_to(&mut qp, v.delta_b, Some(v.z), &[(v.pb, 1.0)], 0.0);

        // Cumulative stored energy after block i stays within bounds.
        energy_terms.push((v.z, k_loss * t));
        energy_terms.push((v.pb, t / params.eta_d));
        qp.add_ineq_sparse(&energy_terms, params.e_max - bp.e_b);
        let neg: Vec<(usize, f64)> = energy_terms.iter().map(|&(j, a)| (j, -a)).collect();
        qp.add_ineq_sparse(&neg, bp.e_b - params.e_min);

        // Grid exchange through the power balance.
        let pg_offset = d.load - d.res;
        if params.pg_max.is_finite() {
            qp.add_ineq_sparse(&[(v.pb, 1.0)], params.pg_max - pg_offset);
        }
        if params.pg_min.is_finite() {
            qp.add_ineq_sparse(&[(v.pb, -1.0)], pg_offset - params.pg_min);
        }

        // Trading cost on f = pb - P^R.
        let f_bounds = [params.pb_min - d.res, params.pb_max - d.res];
        attach_sign(&mut qp, f_bounds, v.delta_c, v.pb, -d.res)?;
        bind_switched_cost(
            bp.tariffs[i].buy / WH_PER_KWH,
            bp.tariffs[i].sell / WH_PER_KWH,
            t,
            f_bounds,
            None,
        )?
        .append_to(&mut qp, v.delta_c, Some(v.c_c), &[(v.pb, 1.0)], -d.res);
        qp.linear[v.c_c] += bp.w_c;

        // Tracking penalty on f = pb - P^R + P^l - P^{g,sp}.
        if let (Some(sp), Some(r_p), Some(delta_p)) = (bp.pg_sp, v.r_p, v.delta_p) {
            let off = pg_offset - sp[i];
            let f_bounds = [params.pb_min + off, params.pb_max + off];
            attach_sign(&mut qp, f_bounds, delta_p, v.pb, off)?;
            let pen = params.pen / WH_PER_KWH;
            bind_switched_cost(pen, -pen, t, f_bounds, None)?.append_to(
                &mut qp,
                delta_p,
                Some(r_p),
                &[(v.pb, 1.0)],
                off,
            );
            qp.linear[r_p] += bp.w_p;
        }

        // Smoothing of consecutive ESS powers.
        let w = bp.w_r / WH_PER_KWH;
        if w > 0.0 {
            if i == 0 {
                qp.add_squared_affine(&[(v.pb, 1.0)], -bp.pb_prev, w);
            } else {
                qp.add_squared_affine(&[(v.pb, 1.0), (vars[i - 1].pb, -1.0)], 0.0, w);
            }
        }
    }

    Ok((
        MixedIntegerQP {
            base: qp,
            binary_indices: binaries,
        },
        vars,
    ))
}

fn validate_input(input: &MmpcInput, params: &MicrogridParams) -> Result<(), MicrogridError> {
    let n = params.n_m;
    if input.p_ref.len() != n
        || input.p_exe.len() != n
        || input.tariffs.len() != n
        || input.d1.len() != n
    {
        return Err(MicrogridError::InvalidInput("MMPC vectors must have n_m entries"));
    }
    if ![0.25, 0.5, 0.75, 1.0].contains(&input.t_s_first) {
        return Err(MicrogridError::InvalidDuration(input.t_s_first));
    }
    if input.p_exe.iter().skip(1).any(|&p| p != 0.0) {
        return Err(MicrogridError::InvalidInput("executed power is only defined for the first block"));
    }
    Ok(())
}

fn block_durations(t_s_first: f64, n: usize) -> Vec<f64> {
    let mut d = vec![1.0; n];
    if let Some(first) = d.first_mut() {
        *first = t_s_first;
    }
    d
}

/// Builds the MMPC mixed-integer program over 7 variables per hour block.
pub fn build_mmpc(input: &MmpcInput, params: &MicrogridParams) -> Result<MmpcProgram, MicrogridError> {
    validate_input(input, params)?;
    let n = params.n_m;
    let durations = block_durations(input.t_s_first, n);
    let pg_sp = (0..n)
        .map(|i| compute_pcc_setpoint(input.p_ref[i], input.p_exe[i], durations[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let bp = BlockProblem {
        e_b: input.e_b,
        pb_prev: input.pb_prev,
        durations: &durations,
        tariffs: &input.tariffs,
        d1: &input.d1,
        pg_sp: Some(&pg_sp),
        w_c: params.w_c,
        w_r: params.w_r,
        w_p: params.w_p,
    };
    let (miqp, vars) = build_blocks(&bp, params)?;
    let index_map: Vec<MmpcIndex> = vars
        .iter()
        .map(|v| MmpcIndex {
            pb: v.pb,
            z: v.z,
            c_c: v.c_c,
            r_p: v.r_p.unwrap_or(usize::MAX),
            delta_b: v.delta_b,
            delta_c: v.delta_c,
            delta_p: v.delta_p.unwrap_or(usize::MAX),
        })
        .collect();
    let mut s_f = Matrix::zeros(n, 7 * n);
    let mut s_fd = Matrix::zeros(n, 2 * n);
    for (i, idx) in index_map.iter().enumerate() {
        s_f[(i, idx.pb)] = 1.0;
        s_fd[(i, 2 * i)] = 1.0;
        s_fd[(i, 2 * i + 1)] = -1.0;
    }
    Ok(MmpcProgram {
        miqp,
        index_map,
        s_f,
        s_fd,
        pg_sp,
        durations,
    })
}

impl MmpcProgram {
    /// Predicted PCC power per block for decision vector `u`.
    pub fn predict_pcc(&self, u: &[f64], d1: &[Disturbance]) -> Vec<f64> {
        let flat: Vec<f64> = d1.iter().flat_map(|d| [d.load, d.res]).collect();
        let a = self.s_f.mul_vec(u);
        let b = self.s_fd.mul_vec(&flat);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }
}

fn solve_blocks(miqp: &MixedIntegerQP) -> Result<crate::opt::SolveResult, MicrogridError> {
    let res = solve_miqp(miqp, &SolveOptions::default())?;
    if res.status != SolveStatus::Optimal {
        return Err(MicrogridError::Status(res.status));
    }
    Ok(res)
}

fn energy_trajectory(e_b: f64, pb: &[f64], durations: &[f64], params: &MicrogridParams) -> Vec<f64> {
    let mut e = e_b;
    pb.iter()
        .zip(durations)
        .map(|(&p, &t)| {
            e = predict_ess_energy(e, p, t, params);
            e
        })
        .collect()
}

/// Solves the MMPC and derives the PCC plan, setpoints and requests.
pub fn run_mmpc(input: &MmpcInput, params: &MicrogridParams) -> Result<MmpcPlan, MicrogridError> {
    let program = build_mmpc(input, params)?;
    let res = solve_blocks(&program.miqp)?;
    let pb: Vec<f64> = program.index_map.iter().map(|m| res.x[m.pb]).collect();
    let pg_plan = program.predict_pcc(&res.x, &input.d1);
    let request = (0..params.n_m)
        .map(|i| compute_request(input.p_ref[i], input.p_exe[i], program.durations[i], pg_plan[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let trading = program.index_map.iter().map(|m| res.x[m.c_c]).sum();
    let penalty = program.index_map.iter().map(|m| res.x[m.r_p]).sum();
    Ok(MmpcPlan {
        energy: energy_trajectory(input.e_b, &pb, &program.durations, params),
        pb,
        pg_plan,
        pg_sp: program.pg_sp,
        request,
        trading,
        penalty,
        objective: res.objective,
        nodes: res.iterations,
    })
}

/// Day-ahead hourly PCC reference from trading cost and ESS smoothing.
pub fn run_mpo(
    day_forecasts: &[Disturbance],
    tariffs: &[Tariff],
    params: &MicrogridParams,
    e_b0: f64,
) -> Result<Vec<f64>, MicrogridError> {
    if day_forecasts.len() != params.n_mpo || tariffs.len() != params.n_mpo {
        return Err(MicrogridError::InvalidInput("MPO vectors must have n_mpo entries"));
    }
    let durations = vec![1.0; params.n_mpo];
    let bp = BlockProblem {
        e_b: e_b0,
        pb_prev: 0.0,
        durations: &durations,
        tariffs,
        d1: day_forecasts,
        pg_sp: None,
        w_c: params.w_co,
        w_r: params.w_ro,
        w_p: 0.0,
    };
    let (miqp, vars) = build_blocks(&bp, params)?;
    let res = solve_blocks(&miqp)?;
    Ok(vars
        .iter()
        .zip(day_forecasts)
        .map(|(v, d)| res.x[v.pb] - d.res + d.load)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setpoint_examples() {
        assert_eq!(compute_pcc_setpoint(500.0, 600.0, 0.25).unwrap(), 200.0);
        assert_eq!(compute_pcc_setpoint(321.5, 999.0, 1.0).unwrap(), 321.5);
        assert_eq!(compute_pcc_setpoint(0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(compute_pcc_setpoint(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn request_examples() {
        assert_eq!(compute_request(500.0, 600.0, 0.25, 100.0).unwrap(), 100.0);
        let sp = compute_pcc_setpoint(500.0, 600.0, 0.25).unwrap();
        assert_eq!(compute_request(500.0, 600.0, 0.25, sp).unwrap(), 0.0);
        assert!(compute_request(1.0, 1.0, -0.5, 0.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let p = MicrogridParams::standard(0.5);
        assert!((predict_ess_energy(1000.0, 400.0, 0.25, &p) - 1065.0).abs() < 1e-9);
        assert!((predict_ess_energy(1000.0, -400.0, 0.25, &p) - 846.153_846_153_846).abs() < 1e-9);
    }

    fn quiet_input(n: usize) -> MmpcInput {
        MmpcInput {
            step_k: 0,
            e_b: 6750.0,
            pb_prev: 0.0,
            t_s_first: 1.0,
            p_ref: vec![0.0; n],
            p_exe: vec![0.0; n],
            tariffs: vec![Tariff { buy: 30.0, sell: 10.0 }; n],
            d1: vec![Disturbance::default(); n],
        }
    }

    #[test]
    fn layout_has_seven_variables_per_block() {
        let p = MicrogridParams::standard(0.5);
        let prog = build_mmpc(&quiet_input(3), &p).unwrap();
        assert_eq!(prog.miqp.base.num_vars(), 21);
        assert_eq!(prog.miqp.binary_indices.len(), 9);
        let mut seen = [false; 21];
        for (i, m) in prog.index_map.iter().enumerate() {
            let ids = [m.pb, m.z, m.c_c, m.r_p, m.delta_b, m.delta_c, m.delta_p];
            assert_eq!(ids, core::array::from_fn(|k| 7 * i + k));
            for id in ids {
                seen[id] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn pure_smoothing_holds_previous_power() {
        let mut p = MicrogridParams::standard(0.5);
        p.w_c = 0.0;
        p.w_p = 0.0;
        let mut input = quiet_input(3);
        input.pb_prev = 120.0;
        let plan = run_mmpc(&input, &p).unwrap();
        for pb in plan.pb {
            assert!((pb - 120.0).abs() < 1e-6, "{pb}");
        }
    }

    #[test]
    fn rejects_energy_outside_bounds() {
        let p = MicrogridParams::standard(0.5);
        let mut input = quiet_input(3);
        input.e_b = p.e_max + 10.0;
        assert!(matches!(
            build_mmpc(&input, &p),
            Err(MicrogridError::InfeasibleBounds { .. })
        ));
    }

    #[test]
    fn rejects_executed_power_beyond_first_block() {
        let p = MicrogridParams::standard(0.5);
        let mut input = quiet_input(3);
        input.p_exe[1] = 5.0;
        assert!(build_mmpc(&input, &p).is_err());
        input.p_exe[1] = 0.0;
        input.t_s_first = 0.3;
        assert!(build_mmpc(&input, &p).is_err());
    }

    #[test]
    fn idle_day_gives_zero_reference() {
        let mut p = MicrogridParams::standard(0.5);
        p.n_mpo = 4;
        // Stored energy carries no terminal value, so any positive sell price
        // would make discharging profitable.
        let flat = vec![Tariff { buy: 20.0, sell: 0.0 }; 4];
        let p_ref = run_mpo(&[Disturbance::default(); 4], &flat, &p, 6750.0).unwrap();
        for r in p_ref {
            assert!(r.abs() < 1e-6, "{r}");
        }
    }
}
