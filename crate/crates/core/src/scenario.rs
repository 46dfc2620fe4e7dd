//! Closed-loop run: day-ahead reference, then per 15-minute step the
//! microgrid MPC, user negotiation, plan roll-over and plant actuation.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::building::{
    build_initial_plan, horizon_length, BuildingError, BuildingModel, BuildingParams, BuildingState, ModelId,
    WeightClass, STEPS_PER_HOUR, STEP_HOURS, STEP_SECONDS,
};
use crate::math;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::microgrid::{run_mmpc, run_mpo, Disturbance, MicrogridError, MicrogridParams, MmpcInput, Tariff};
use crate::negotiation::{run_negotiation, solve_centralized, ConsensusConfig, Executor, LocalUser, NegotiationError};
use crate::plant::{applied_power, draw_load_noise, persistent_predict, step_building, step_ess, ForecastSeries, PlantError, SimulatedEss};

pub const STEP_MINUTES: u32 = 15;
/// RES samples per day at the 15-minute step.
pub const SEASON_PERIOD: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Negotiated load flexibility.
    Flex,
    /// Loads follow their comfort plans; requests are ignored.
    Fix,
    /// One centralized QP replaces the negotiation.
    Cen,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Flex => "flex",
            Mode::Fix => "fix",
            Mode::Cen => "cen",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "flex" => Some(Mode::Flex),
            "fix" => Some(Mode::Fix),
            "cen" => Some(Mode::Cen),
            _ => None,
        }
    }
}

/// How the already elapsed part of the current hour enters the PCC setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PccFeedback {
    /// Average of the measured PCC power.
    Closed,
    /// Average of the PCC power the controllers expected.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingSpec {
    pub model: ModelId,
    pub class: WeightClass,
    pub t_set: f64,
    /// Initial temperature; the setpoint when `None`.
    pub t_init: Option<f64>,
    /// Comfort band margin, °C; the preset value when `None`.
    pub margin: Option<f64>,
}

/// Simulated storage, deliberately different from the controller's model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub capacity: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// Load noise standard deviation as a fraction of each heater's maximum.
    pub noise_fraction: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            capacity: 13_500.0,
            eta_c: 0.55,
            eta_d: 0.55,
            noise_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Run length, minutes.
    pub duration: u32,
    /// Step, minutes (only 15 is supported).
    pub step: u32,
    /// Start of the run, minutes after the first RES sample.
    pub start: u32,
    pub buildings: Vec<BuildingSpec>,
    pub soc_ini: f64,
    pub microgrid: MicrogridParams,
    pub plant: PlantParams,
    pub consensus: ConsensusConfig,
    /// Incentive for changing planned consumption, cents/kWh.
    pub incentive: f64,
    /// Tariff for each hour of the day.
    pub tariffs: Vec<Tariff>,
    /// Measured RES power (W), one sample per step from the trace origin.
    pub res: Vec<f64>,
    /// Weight of the persistent forecast against the measured values, in [0, 1].
    pub res_forecast_mix: f64,
    pub pcc_feedback: PccFeedback,
    pub seed: u64,
    pub load_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("hour {hour}: purchase tariff {buy} must exceed sale tariff {sell}")]
    TariffOrderViolation { hour: usize, buy: f64, sell: f64 },
    #[error("{0} minutes is not on the 15-minute grid")]
    GridMisalignment(u32),
    #[error("RES trace has {have} samples, needs {need}")]
    ShortTrace { have: usize, need: usize },
    #[error("step {step}: {source}")]
    Microgrid { step: usize, source: MicrogridError },
    #[error("step {step}: {source}")]
    Negotiation { step: usize, source: NegotiationError },
    #[error("step {step}: {source}")]
    Building { step: usize, source: BuildingError },
    #[error(transparent)]
    Plant(#[from] PlantError),
}

impl ScenarioConfig {
    pub fn n_steps(&self) -> usize {
        (self.duration / self.step) as usize
    }

    pub fn start_step(&self) -> usize {
        (self.start / self.step) as usize
    }

    /// RES samples needed: one day of history, the run, and the longest
    /// forecast horizon reaching past it.
    pub fn required_res_samples(&self) -> usize {
        let start = self.start_step();
        let run_end = start + self.n_steps() + STEPS_PER_HOUR * self.microgrid.n_m;
        let mpo_end = self.hour_start_step(start) + STEPS_PER_HOUR * self.microgrid.n_mpo;
        run_end.max(mpo_end)
    }

    fn hour_start_step(&self, step: usize) -> usize {
        step - step % STEPS_PER_HOUR
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.step != STEP_MINUTES {
            return Err(ScenarioError::Invalid("only 15-minute steps are supported"));
        }
        for m in [self.duration, self.start] {
            if m % self.step != 0 {
                return Err(ScenarioError::GridMisalignment(m));
            }
        }
        if self.duration == 0 {
            return Err(ScenarioError::Invalid("duration must be positive"));
        }
        if self.buildings.is_empty() {
            return Err(ScenarioError::Invalid("at least one building"));
        }
        if self.tariffs.len() != 24 {
            return Err(ScenarioError::Invalid("one tariff per hour of the day"));
        }
        for (hour, t) in self.tariffs.iter().enumerate() {
            if !(t.buy > t.sell) {
                return Err(ScenarioError::TariffOrderViolation {
                    hour,
                    buy: t.buy,
                    sell: t.sell,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.res_forecast_mix) {
            return Err(ScenarioError::Invalid("res_forecast_mix must lie in [0, 1]"));
        }
        if !(self.incentive >= 0.0) || !(self.load_scale > 0.0) || !(self.plant.noise_fraction >= 0.0) {
            return Err(ScenarioError::Invalid("incentive, load scale and noise must be non-negative"));
        }
        if self.start_step() < SEASON_PERIOD {
            return Err(ScenarioError::Invalid("the run must start after one day of RES history"));
        }
        let need = self.required_res_samples();
        if self.res.len() < need {
            return Err(ScenarioError::ShortTrace {
                have: self.res.len(),
                need,
            });
        }
        if self.res.iter().any(|v| !(*v >= 0.0)) {
            return Err(ScenarioError::Invalid("RES samples must be non-negative"));
        }
        self.microgrid
            .validate()
            .map_err(|source| ScenarioError::Microgrid { step: 0, source })?;
        self.consensus
            .validate(self.buildings.len())
            .map_err(|source| ScenarioError::Negotiation { step: 0, source })?;
        for b in &self.buildings {
            self.building_params(b)
                .validate()
                .map_err(|source| ScenarioError::Building { step: 0, source })?;
        }
        SimulatedEss::new(self.plant.capacity, self.soc_ini, self.plant.eta_c, self.plant.eta_d, self.soc_min(), self.soc_max())?;
        Ok(())
    }

    pub fn building_params(&self, b: &BuildingSpec) -> BuildingParams {
        let preset = BuildingParams::preset(b.class, b.t_set);
        BuildingParams {
            incentive: self.incentive,
            margin: b.margin.unwrap_or(preset.margin),
            ..preset
        }
    }

    pub fn soc_min(&self) -> f64 {
        self.microgrid.e_min / self.plant.capacity
    }

    pub fn soc_max(&self) -> f64 {
        self.microgrid.e_max / self.plant.capacity
    }

    pub fn tariff_at_step(&self, step: usize) -> Tariff {
        self.tariffs[(step / STEPS_PER_HOUR) % 24]
    }

    /// RES forecast for `len` steps starting at `step`, from data up to `step - 1`.
    pub fn res_forecast(&self, step: usize, len: usize) -> Result<Vec<f64>, PlantError> {
        let series = ForecastSeries::new(self.res[..step].to_vec(), SEASON_PERIOD)?;
        let persistent = persistent_predict(&series, len)?;
        let mix = self.res_forecast_mix;
        Ok((0..len)
            .map(|i| (1.0 - mix) * self.res[step + i] + mix * persistent[i])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingTrace {
    /// Temperature at the end of the step, °C.
    pub temp: f64,
    pub pu_plan: f64,
    pub pu_applied: f64,
    /// Executed change against the slot's comfort plan, W.
    pub dp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Minutes after the first RES sample.
    pub minute: u32,
    pub p_g: f64,
    pub p_b_cmd: f64,
    pub p_b_act: f64,
    pub p_r: f64,
    pub buildings: Vec<BuildingTrace>,
    pub p_ref: f64,
    pub p_g_sp: f64,
    pub request: f64,
    pub iterations: usize,
    pub soc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: MetricsReport,
    /// Steps where the negotiation stopped at its iteration limit.
    pub non_converged: Vec<usize>,
    /// Day-ahead PCC reference per hour from the run's first hour.
    pub p_ref: Vec<f64>,
    /// Largest distance, W, of the summed agreed changes from the
    /// `[0, request]` interval over every step and horizon slot.
    pub request_violation: f64,
}

/// Distance of `total` from the interval between 0 and `request`.
pub fn request_box_violation(total: f64, request: f64) -> f64 {
    let (lo, hi) = if request >= 0.0 { (0.0, request) } else { (request, 0.0) };
    math::max(positive(lo - total), positive(total - hi))
}

/// One building's controller and plant state.
struct Site {
    model: BuildingModel,
    params: BuildingParams,
    temp: f64,
    plan: Vec<f64>,
    /// Comfort plan each slot started from.
    base: Vec<f64>,
}

/// Mean of `v` over consecutive blocks of the given lengths.
fn block_means(v: &[f64], lens: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(lens.len());
    let mut at = 0;
    for &l in lens {
        let s: f64 = v[at..at + l].iter().sum();
        out.push(s / l as f64);
        at += l;
    }
    out
}

/// Hourly PCC reference committed before the run from the persistent RES
/// forecast and the comfort plans.
fn day_ahead_reference(cfg: &ScenarioConfig, sites: &[Site], first_step: usize) -> Result<Vec<f64>, ScenarioError> {
    let n_mpo = cfg.microgrid.n_mpo;
    let len = n_mpo * STEPS_PER_HOUR;
    let mut load = vec![0.0; len];
    for s in sites {
        let plan = build_initial_plan(&s.model, &s.params, s.temp, len)
            .map_err(|source| ScenarioError::Building { step: 0, source })?;
        for (l, p) in load.iter_mut().zip(&plan) {
            *l += p;
        }
    }
    let series = ForecastSeries::new(cfg.res[..first_step].to_vec(), SEASON_PERIOD)?;
    let res = persistent_predict(&series, len)?;
    let lens = vec![STEPS_PER_HOUR; n_mpo];
    let load_h = block_means(&load, &lens);
    let res_h = block_means(&res, &lens);
    let d: Vec<Disturbance> = (0..n_mpo)
        .map(|h| Disturbance {
            load: load_h[h],
            res: res_h[h],
        })
        .collect();
    let tariffs: Vec<Tariff> = (0..n_mpo)
        .map(|h| cfg.tariff_at_step(first_step + h * STEPS_PER_HOUR))
        .collect();
    run_mpo(&d, &tariffs, &cfg.microgrid, cfg.soc_ini * cfg.plant.capacity)
        .map_err(|source| ScenarioError::Microgrid { step: 0, source })
}

/// Runs the closed loop described by `cfg`.
pub fn run_scenario<E: Executor>(cfg: &ScenarioConfig, executor: &E) -> Result<ScenarioOutput, ScenarioError> {
    cfg.validate()?;
    let n_m = cfg.microgrid.n_m;
    let start = cfg.start_step();
    let first_hour_step = cfg.hour_start_step(start);
    let mut ess = SimulatedEss::new(cfg.plant.capacity, cfg.soc_ini, cfg.plant.eta_c, cfg.plant.eta_d, cfg.soc_min(), cfg.soc_max())?;

    let mut sites: Vec<Site> = cfg
        .buildings
        .iter()
        .map(|b| Site {
            model: BuildingModel::from_id(b.model),
            params: cfg.building_params(b),
            temp: b.t_init.unwrap_or(b.t_set),
            plan: Vec::new(),
            base: Vec::new(),
        })
        .collect();

    let p_ref_hours = day_ahead_reference(cfg, &sites, first_hour_step)?;

    let minute_of = |step: usize| ((step % STEPS_PER_HOUR) as u32) * STEP_MINUTES;
    let n0 = horizon_length(minute_of(start), n_m).map_err(|source| ScenarioError::Building { step: 0, source })?;
    for s in sites.iter_mut() {
        s.plan = build_initial_plan(&s.model, &s.params, s.temp, n0).map_err(|source| ScenarioError::Building { step: 0, source })?;
        s.base = s.plan.clone();
    }

    let mut trace = Vec::with_capacity(cfg.n_steps());
    let mut non_converged = Vec::new();
    let mut request_violation: f64 = 0.0;
    let mut pb_prev = 0.0;
    // PCC power of the elapsed steps of the current hour: measured, expected.
    let mut hour_pcc: Vec<(f64, f64)> = Vec::new();

    for k in 0..cfg.n_steps() {
        let step = start + k;
        let minute = minute_of(step);
        if minute == 0 {
            hour_pcc.clear();
        }
        let n_b = horizon_length(minute, n_m).map_err(|source| ScenarioError::Building { step: k, source })?;
        debug_assert!(sites.iter().all(|s| s.plan.len() == n_b));
        let first_len = n_b - STEPS_PER_HOUR * (n_m - 1);
        let mut lens = vec![STEPS_PER_HOUR; n_m];
        lens[0] = first_len;
        let t_s_first = first_len as f64 * STEP_HOURS;
        let hour_idx = (step - first_hour_step) / STEPS_PER_HOUR;

        let res_fc = cfg.res_forecast(step, n_b)?;
        let load_fc: Vec<f64> = (0..n_b).map(|i| sites.iter().map(|s| s.plan[i]).sum()).collect();
        let load_b = block_means(&load_fc, &lens);
        let res_b = block_means(&res_fc, &lens);
        let mut p_exe = vec![0.0; n_m];
        if !hour_pcc.is_empty() {
            let pick = |(m, e): &(f64, f64)| match cfg.pcc_feedback {
                PccFeedback::Closed => *m,
                PccFeedback::Open => *e,
            };
            p_exe[0] = hour_pcc.iter().map(pick).sum::<f64>() / hour_pcc.len() as f64;
        }
        let input = MmpcInput {
            step_k: k,
            e_b: ess.energy(),
            pb_prev,
            t_s_first,
            p_ref: (0..n_m).map(|b| p_ref_hours[hour_idx + b]).collect(),
            p_exe,
            tariffs: (0..n_m).map(|b| cfg.tariff_at_step(step + b * STEPS_PER_HOUR)).collect(),
            d1: (0..n_m)
                .map(|b| Disturbance {
                    load: load_b[b],
                    res: res_b[b],
                })
                .collect(),
        };
        let mmpc = run_mmpc(&input, &cfg.microgrid).map_err(|source| ScenarioError::Microgrid { step: k, source })?;
        let request: Vec<f64> = (0..n_b)
            .map(|i| {
                let block = if i < first_len { 0 } else { 1 + (i - first_len) / STEPS_PER_HOUR };
                mmpc.request[block]
            })
            .collect();

        let buy: Vec<f64> = (0..n_b).map(|i| cfg.tariff_at_step(step + i).buy).collect();
        let users = || -> Vec<LocalUser> {
            sites
                .iter()
                .map(|s| LocalUser {
                    model: s.model,
                    params: s.params.clone(),
                    state: BuildingState {
                        temp: s.temp,
                        plan: s.plan.clone(),
                        buy_tariff: buy.clone(),
                    },
                })
                .collect()
        };
        let (dp, iterations) = match cfg.mode {
            Mode::Fix => (vec![vec![0.0; n_b]; sites.len()], 0),
            Mode::Flex => {
                let out = run_negotiation(&users(), &request, &cfg.consensus, executor)
                    .map_err(|source| ScenarioError::Negotiation { step: k, source })?;
                if !out.converged {
                    non_converged.push(k);
                }
                (out.dp, out.iterations)
            }
            Mode::Cen => {
                let q: Vec<f64> = (0..sites.len()).map(|j| cfg.consensus.q_star(j)).collect();
                match solve_centralized(&users(), &request, &q) {
                    Ok(dp) => (dp, 1),
                    Err(NegotiationError::Building(BuildingError::Infeasible)) => (vec![vec![0.0; n_b]; sites.len()], 1),
                    Err(source) => return Err(ScenarioError::Negotiation { step: k, source }),
                }
            }
        };

        for (i, r) in request.iter().enumerate() {
            let total: f64 = dp.iter().map(|d| d[i]).sum();
            request_violation = math::max(request_violation, request_box_violation(total, *r));
        }

        let pb_cmd = mmpc.pb[0];
        let (pb_act, soc) = step_ess(&mut ess, pb_cmd, STEP_HOURS);
        let p_r = cfg.res[step];
        let mut buildings = Vec::with_capacity(sites.len());
        let mut load = 0.0;
        let mut planned_load = 0.0;
        for (j, s) in sites.iter_mut().enumerate() {
            for (p, d) in s.plan.iter_mut().zip(&dp[j]) {
                *p += d;
            }
            let sigma = cfg.plant.noise_fraction * s.params.pu_max;
            let noise = draw_load_noise(cfg.seed, j as u64, step as u64, sigma);
            let applied = applied_power(s.plan[0], noise, s.params.pu_max);
            s.temp = step_building(&s.model, s.temp, applied, STEP_SECONDS)?;
            buildings.push(BuildingTrace {
                temp: s.temp,
                pu_plan: s.plan[0],
                pu_applied: applied,
                dp: s.plan[0] - s.base[0],
            });
            load += applied;
            planned_load += s.plan[0];
        }
        let p_g = pb_act - p_r + load;
        hour_pcc.push((p_g, pb_cmd - res_fc[0] + planned_load));
        pb_prev = pb_act;

        trace.push(TraceRecord {
            minute: step as u32 * STEP_MINUTES,
            p_g,
            p_b_cmd: pb_cmd,
            p_b_act: pb_act,
            p_r,
            buildings,
            p_ref: p_ref_hours[hour_idx],
            p_g_sp: mmpc.pg_sp[0],
            request: mmpc.request[0],
            iterations,
            soc,
        });

        let next_minute = minute_of(step + 1);
        for s in sites.iter_mut() {
            s.plan.remove(0);
            s.base.remove(0);
            if next_minute == 0 {
                let t_end = s.model.predict(s.temp, &s.plan).last().copied().unwrap_or(s.temp);
                let tail = build_initial_plan(&s.model, &s.params, t_end, STEPS_PER_HOUR)
                    .map_err(|source| ScenarioError::Building { step: k, source })?;
                s.plan.extend_from_slice(&tail);
                s.base.extend_from_slice(&tail);
            }
        }
    }

    let metrics = compute_metrics(&trace, cfg);
    Ok(ScenarioOutput {
        trace,
        metrics,
        non_converged,
        p_ref: p_ref_hours,
        request_violation,
    })
}

/// `max(0, x)`.
pub(crate) fn positive(x: f64) -> f64 {
    math::max(x, 0.0)
}
