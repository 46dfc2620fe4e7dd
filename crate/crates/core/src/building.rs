//! Building MPC: first-order thermal model, shrinking horizon, comfort-only
//! initial plans and the local QP solved during negotiation.
//!
//! The local QP works in kW so that tariff terms come out in cents and the
//! temperature term in °C²; results are reported in W.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::opt::{solve_qp_from, OptError, QuadraticProgram, SolveOptions, SolveStatus};

/// Temperature of the linearisation point, °C (at zero heating power).
pub const T_EQUILIBRIUM: f64 = 12.0;
/// BMPC sampling time, s.
pub const STEP_SECONDS: f64 = 900.0;
/// BMPC sampling time, h.
pub const STEP_HOURS: f64 = 0.25;
pub const STEPS_PER_HOUR: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildingError {
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("minute {0} is not on the 15-minute grid")]
    InvalidMinute(u32),
    #[error("vector lengths do not match the horizon")]
    Dimension,
    #[error("local problem is infeasible")]
    Infeasible,
    #[error("solver returned {0:?}")]
    Status(SolveStatus),
    #[error(transparent)]
    Solver(#[from] OptError),
}

/// Discrete-time coefficients `(a_d, b_d)` of the zero-order-hold
/// discretisation of `gain_k / (1 + tau s)` with step `dt` seconds.
pub fn discretize_model(gain_k: f64, tau: f64, dt: f64) -> Result<(f64, f64), BuildingError> {
    if !(tau > 0.0) || !(dt > 0.0) || !gain_k.is_finite() {
        return Err(BuildingError::InvalidModel("tau and dt must be positive"));
    }
    let a = math::exp(-dt / tau);
    Ok((a, gain_k * (1.0 - a)))
}

/// Thermal model family used by the bundled scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    G1,
    G2,
    G3,
}

impl ModelId {
    /// `(gain °C/kW, time constant s)`.
    pub fn parameters(self) -> (f64, f64) {
        match self {
            ModelId::G1 => (4.0, 24_500.0),
            ModelId::G2 => (5.0, 25_200.0),
            ModelId::G3 => (6.0, 25_200.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::G1 => "G1",
            ModelId::G2 => "G2",
            ModelId::G3 => "G3",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "G1" => Some(ModelId::G1),
            "G2" => Some(ModelId::G2),
            "G3" => Some(ModelId::G3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildingModel {
    pub gain_k: f64,
    pub tau: f64,
    pub a_d: f64,
    pub b_d: f64,
    /// Sampling time the coefficients were derived for, s.
    pub dt: f64,
}

impl BuildingModel {
    pub fn new(gain_k: f64, tau: f64, dt: f64) -> Result<Self, BuildingError> {
        let (a_d, b_d) = discretize_model(gain_k, tau, dt)?;
        Ok(Self {
            gain_k,
            tau,
            a_d,
            b_d,
            dt,
        })
    }

    pub fn from_id(id: ModelId) -> Self {
        let (k, tau) = id.parameters();
        Self::new(k, tau, STEP_SECONDS).expect("bundled models are valid")
    }

    /// Temperature after one step with `pu_w` watts applied.
    pub fn step(&self, t_now: f64, pu_w: f64) -> f64 {
        T_EQUILIBRIUM + self.a_d * (t_now - T_EQUILIBRIUM) + self.b_d * (pu_w / 1000.0)
    }

    /// Temperatures after each step of `pu_w`.
    pub fn predict(&self, t_now: f64, pu_w: &[f64]) -> Vec<f64> {
        let mut t = t_now;
        pu_w.iter()
            .map(|&p| {
                t = self.step(t, p);
                t
            })
            .collect()
    }

    /// Steady heating power (W) holding `temp`.
    pub fn steady_power(&self, temp: f64) -> f64 {
        1000.0 * (temp - T_EQUILIBRIUM) / self.gain_k
    }

    /// `T_i = offset_i + Σ_l coef[i][l]·Pu_l[kW]` for i = 1..n.
    fn affine_temperatures(&self, t_now: f64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut coefs = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        let mut free = t_now - T_EQUILIBRIUM;
        for i in 0..n {
            free *= self.a_d;
            offsets.push(T_EQUILIBRIUM + free);
            let mut row = vec![0.0; n];
            let mut w = self.b_d;
            for l in (0..=i).rev() {
                row[l] = w;
                w *= self.a_d;
            }
            coefs.push(row);
        }
        (coefs, offsets)
    }
}

/// Temperature-tracking weight presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightClass {
    Benefit3,
    Benefit6,
    Comfort48,
    Comfort96,
}

impl WeightClass {
    pub fn w_t(self) -> f64 {
        match self {
            WeightClass::Benefit3 => 3.0,
            WeightClass::Benefit6 => 6.0,
            WeightClass::Comfort48 => 48.0,
            WeightClass::Comfort96 => 96.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightClass::Benefit3 => "benefit3",
            WeightClass::Benefit6 => "benefit6",
            WeightClass::Comfort48 => "comfort48",
            WeightClass::Comfort96 => "comfort96",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "benefit3" => Some(WeightClass::Benefit3),
            "benefit6" => Some(WeightClass::Benefit6),
            "comfort48" => Some(WeightClass::Comfort48),
            "comfort96" => Some(WeightClass::Comfort96),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingParams {
    pub w_t: f64,
    pub w_m: f64,
    pub w_b: f64,
    /// Constant temperature setpoint, °C.
    pub t_set: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Heating power bounds, W.
    pub pu_min: f64,
    pub pu_max: f64,
    /// Incentive for changing the plan, cents/kWh.
    pub incentive: f64,
    /// Sampling time, h.
    pub ts_b: f64,
    /// Back-off from the comfort limits kept by negotiated plans, °C.
    pub margin: f64,
}

impl BuildingParams {
    /// Band of ±1 °C around `t_set`, 3 kW heater, unit economic weights.
    pub fn preset(class: WeightClass, t_set: f64) -> Self {
        Self {
            w_t: class.w_t(),
            w_m: 1.0,
            w_b: 1.0,
            t_set,
            t_min: t_set - 1.0,
            t_max: t_set + 1.0,
            pu_min: 0.0,
            pu_max: 3000.0,
            incentive: 5.0,
            ts_b: STEP_HOURS,
            margin: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), BuildingError> {
        if !(self.t_min < self.t_set && self.t_set < self.t_max) {
            return Err(BuildingError::InvalidParams("t_min < t_set < t_max required"));
        }
        if !(self.pu_min == 0.0 && self.pu_min <= self.pu_max) {
            return Err(BuildingError::InvalidParams("power bounds must satisfy 0 = pu_min <= pu_max"));
        }
        if [self.w_t, self.w_m, self.w_b, self.incentive].iter().any(|w| !(*w >= 0.0)) {
            return Err(BuildingError::InvalidParams("weights must be non-negative"));
        }
        if !(self.ts_b > 0.0) {
            return Err(BuildingError::InvalidParams("sampling time must be positive"));
        }
        if !(self.margin >= 0.0 && self.t_min + self.margin < self.t_set && self.t_set < self.t_max - self.margin) {
            return Err(BuildingError::InvalidParams("margin must leave the setpoint inside the band"));
        }
        Ok(())
    }
}

/// Steps left in the BMPC horizon at `minute_in_hour`.
pub fn horizon_length(minute_in_hour: u32, n_m: usize) -> Result<usize, BuildingError> {
    if !minute_in_hour.is_multiple_of(15) || minute_in_hour >= 60 {
        return Err(BuildingError::InvalidMinute(minute_in_hour));
    }
    Ok(STEPS_PER_HOUR * n_m - (minute_in_hour / 15) as usize)
}

/// What a building knows at the start of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingState {
    /// Measured temperature, °C.
    pub temp: f64,
    /// Planned consumption per step, W.
    pub plan: Vec<f64>,
    /// Purchase tariff per step, cents/kWh.
    pub buy_tariff: Vec<f64>,
}

/// Coordinator setpoints for the coupled variables, W.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoints {
    pub dp: Vec<f64>,
    pub dp_others: Vec<f64>,
}

/// Consensus weight `c_t`, applied to deviations measured in units of `unit_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub c_t: f64,
    pub unit_w: f64,
}

impl Penalty {
    pub const NONE: Penalty = Penalty {
        c_t: 0.0,
        unit_w: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmpcSolution {
    pub pu: Vec<f64>,
    pub dp: Vec<f64>,
    pub dp_others: Vec<f64>,
    pub temps: Vec<f64>,
    pub objective: f64,
}

/// Local QP with per-step variables `(P^u, dP, dP_-)` in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalQp {
    pub qp: QuadraticProgram,
    pub horizon: usize,
}

impl LocalQp {
    pub fn pu(i: usize) -> usize {
        3 * i
    }
    pub fn dp(i: usize) -> usize {
        3 * i + 1
    }
    pub fn dp_others(i: usize) -> usize {
        3 * i + 2
    }
}

/// `[min(0, r), max(0, r)]`.
pub fn request_box(r: f64) -> (f64, f64) {
    (r.min(0.0), r.max(0.0))
}

/// Temperature band per step. With a plan, the band is narrowed by the
/// margin and widened where the plan already leaves it, so keeping the plan
/// stays feasible.
fn temperature_band(params: &BuildingParams, plan_temps: Option<&[f64]>, n: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = (params.t_min + params.margin, params.t_max - params.margin);
    (0..n)
        .map(|i| match plan_temps {
            Some(t) => (lo.min(t[i]), hi.max(t[i])),
            None => (params.t_min, params.t_max),
        })
        .collect()
}

fn add_temperature_terms(
    qp: &mut QuadraticProgram,
    model: &BuildingModel,
    params: &BuildingParams,
    t_now: f64,
    band: &[(f64, f64)],
    weight: f64,
    pu_index: impl Fn(usize) -> usize,
) {
    let n = band.len();
    let (coefs, offsets) = model.affine_temperatures(t_now, n);
    for i in 0..n {
        let terms: Vec<(usize, f64)> = (0..=i).map(|l| (pu_index(l), coefs[i][l])).collect();
        if params.w_t > 0.0 {
            qp.add_squared_affine(&terms, offsets[i] - params.t_set, weight * params.w_t);
        }
        qp.add_ineq_sparse(&terms, band[i].1 - offsets[i]);
        let neg: Vec<(usize, f64)> = terms.iter().map(|&(j, a)| (j, -a)).collect();
        qp.add_ineq_sparse(&neg, offsets[i] - band[i].0);
    }
}

/// Adds one user's objective (scaled by `weight`) and private constraints
/// over `P^u` and `dP` (kW) at the given indices.
pub(crate) fn add_user_terms(
    qp: &mut QuadraticProgram,
    model: &BuildingModel,
    params: &BuildingParams,
    state: &BuildingState,
    request: &[f64],
    weight: f64,
    pu_index: impl Fn(usize) -> usize,
    dp_index: impl Fn(usize) -> usize,
) {
    let n = state.plan.len();
    let plan_temps = model.predict(state.temp, &state.plan);
    let band = temperature_band(params, Some(&plan_temps), n);
    add_temperature_terms(qp, model, params, state.temp, &band, weight, &pu_index);
    for i in 0..n {
        let (pu, dp) = (pu_index(i), dp_index(i));
        let (lo, hi) = request_box(request[i]);
        qp.set_bounds(pu, params.pu_min / 1000.0, params.pu_max / 1000.0);
        qp.set_bounds(dp, lo / 1000.0, hi / 1000.0);
        qp.add_eq_sparse(&[(pu, 1.0), (dp, -1.0)], state.plan[i] / 1000.0);
        qp.linear[pu] += weight * params.w_m * state.buy_tariff[i] * params.ts_b;
        qp.linear[dp] -= weight * params.w_b * params.incentive * math::sign(request[i]) * params.ts_b;
    }
}

pub(crate) fn check_local_dims(state: &BuildingState, request: &[f64]) -> Result<(), BuildingError> {
    let n = state.plan.len();
    if request.len() != n || state.buy_tariff.len() != n {
        return Err(BuildingError::Dimension);
    }
    Ok(())
}

/// Comfort-only plan (W) over `n` steps from temperature `t_now`.
pub fn build_initial_plan(
    model: &BuildingModel,
    params: &BuildingParams,
    t_now: f64,
    n: usize,
) -> Result<Vec<f64>, BuildingError> {
    params.validate()?;
    let mut qp = QuadraticProgram::new(n);
    for i in 0..n {
        qp.set_bounds(i, params.pu_min / 1000.0, params.pu_max / 1000.0);
    }
    let tracking = BuildingParams {
        w_t: params.w_t.max(1.0),
        ..params.clone()
    };
    add_temperature_terms(&mut qp, model, &tracking, t_now, &temperature_band(params, None, n), 1.0, |l| l);
    let steady = (model.steady_power(params.t_set) / 1000.0).clamp(params.pu_min / 1000.0, params.pu_max / 1000.0);
    let start = vec![steady; n];
    let res = solve_qp_from(&qp, &SolveOptions::default(), Some(&start))?;
    match res.status {
        SolveStatus::Optimal => Ok(res.x.iter().map(|kw| kw * 1000.0).collect()),
        SolveStatus::Infeasible => Err(BuildingError::Infeasible),
        s => Err(BuildingError::Status(s)),
    }
}

/// Builds the local negotiation QP. `setpoints = None` with `Penalty::NONE`
/// gives the user's original problem.
pub fn build_local_qp(
    model: &BuildingModel,
    params: &BuildingParams,
    state: &BuildingState,
    request: &[f64],
    setpoints: Option<&Setpoints>,
    penalty: Penalty,
) -> Result<LocalQp, BuildingError> {
    params.validate()?;
    check_local_dims(state, request)?;
    let n = state.plan.len();
    if let Some(sp) = setpoints {
        if sp.dp.len() != n || sp.dp_others.len() != n {
            return Err(BuildingError::Dimension);
        }
    }
    if !(penalty.c_t >= 0.0) || !(penalty.unit_w > 0.0) {
        return Err(BuildingError::InvalidParams("penalty must be non-negative with a positive unit"));
    }

    let mut qp = QuadraticProgram::new(3 * n);
    add_user_terms(&mut qp, model, params, state, request, 1.0, LocalQp::pu, LocalQp::dp);
    let consensus = if setpoints.is_some() { penalty.c_t } else { 0.0 };
    let scale = 1000.0 / penalty.unit_w;
    for i in 0..n {
        let (dp, dpm) = (LocalQp::dp(i), LocalQp::dp_others(i));
        let (lo, hi) = request_box(request[i]);
        // dP_- is bounded only through dP + dP_-, which keeps it in [lo - hi, hi - lo].
        qp.set_bounds(dpm, (lo - hi) / 1000.0, (hi - lo) / 1000.0);
        if request[i] != 0.0 {
            qp.add_ineq_sparse(&[(dp, 1.0), (dpm, 1.0)], hi / 1000.0);
            qp.add_ineq_sparse(&[(dp, -1.0), (dpm, -1.0)], -lo / 1000.0);
        }
        if let (Some(sp), true) = (setpoints, consensus > 0.0) {
            qp.add_squared_affine(&[(dp, scale)], -sp.dp[i] / penalty.unit_w, consensus);
            qp.add_squared_affine(&[(dpm, scale)], -sp.dp_others[i] / penalty.unit_w, consensus);
        }
    }
    Ok(LocalQp { qp, horizon: n })
}

/// Solves the local QP, optionally warm-starting from an earlier solution.
pub fn solve_local(
    model: &BuildingModel,
    params: &BuildingParams,
    state: &BuildingState,
    request: &[f64],
    setpoints: Option<&Setpoints>,
    penalty: Penalty,
    warm: Option<&BmpcSolution>,
) -> Result<BmpcSolution, BuildingError> {
    let local = build_local_qp(model, params, state, request, setpoints, penalty)?;
    let n = local.horizon;
    let start: Option<Vec<f64>> = warm.filter(|w| w.pu.len() == n).map(|w| {
        (0..n)
            .flat_map(|i| [w.pu[i] / 1000.0, w.dp[i] / 1000.0, w.dp_others[i] / 1000.0])
            .collect()
    });
    let res = solve_qp_from(&local.qp, &SolveOptions::default(), start.as_deref())?;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(BuildingError::Infeasible),
        s => return Err(BuildingError::Status(s)),
    }
    let x = &res.x;
    let dp: Vec<f64> = (0..n).map(|i| 1000.0 * x[LocalQp::dp(i)]).collect();
    // Recover P^u from the equality so that it holds to rounding.
    let pu: Vec<f64> = (0..n).map(|i| state.plan[i] + dp[i]).collect();
    Ok(BmpcSolution {
        temps: model.predict(state.temp, &pu),
        dp_others: (0..n).map(|i| 1000.0 * x[LocalQp::dp_others(i)]).collect(),
        pu,
        dp,
        objective: res.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretisation_constants() {
        let (a, b) = discretize_model(4.0, 24_500.0, 900.0).unwrap();
        assert!((a - 0.963_932).abs() < 1e-6);
        assert!((b - 0.144_272).abs() < 1e-6);
        let (a, b) = discretize_model(4.0, 24_500.0, 1e-3).unwrap();
        assert!((1.0 - a).abs() < 1e-7 && b.abs() < 1e-6);
        assert!(discretize_model(4.0, 0.0, 900.0).is_err());
    }

    #[test]
    fn steady_state_gain() {
        let m = BuildingModel::from_id(ModelId::G1);
        let mut t = 12.0;
        for _ in 0..2000 {
            t = m.step(t, 2250.0);
        }
        assert!((t - 21.0).abs() < 1e-9);
        assert_eq!(m.steady_power(21.0), 2250.0);
    }

    #[test]
    fn horizon_lengths() {
        assert_eq!(horizon_length(0, 3).unwrap(), 12);
        assert_eq!(horizon_length(30, 3).unwrap(), 10);
        assert_eq!(horizon_length(45, 3).unwrap(), 9);
        assert!(horizon_length(20, 3).is_err());
        assert!(horizon_length(60, 3).is_err());
    }

    #[test]
    fn initial_plan_at_setpoint_is_steady() {
        let m = BuildingModel::from_id(ModelId::G1);
        let p = BuildingParams::preset(WeightClass::Comfort48, 21.0);
        let plan = build_initial_plan(&m, &p, 21.0, 12).unwrap();
        for v in plan {
            assert!((v - 2250.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn zero_request_keeps_plan() {
        let m = BuildingModel::from_id(ModelId::G2);
        let p = BuildingParams::preset(WeightClass::Benefit3, 21.0);
        let state = BuildingState {
            temp: 21.0,
            plan: vec![1800.0; 6],
            buy_tariff: vec![30.0; 6],
        };
        let sol = solve_local(&m, &p, &state, &[0.0; 6], None, Penalty::NONE, None).unwrap();
        assert_eq!(sol.dp, vec![0.0; 6]);
        assert_eq!(sol.pu, state.plan);
    }
}
