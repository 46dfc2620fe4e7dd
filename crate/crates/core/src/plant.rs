//! Simulated plant: storage with its own efficiencies, buildings, seeded load
//! noise and the day-differenced persistent forecaster.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::building::BuildingModel;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid storage parameters: {0}")]
    InvalidEss(&'static str),
    #[error("step {dt} s does not match the model's {model_dt} s")]
    DtMismatch { dt: f64, model_dt: f64 },
    #[error("need {need} samples of history, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("invalid forecast series: {0}")]
    InvalidSeries(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEss {
    /// Wh.
    pub capacity: f64,
    /// Stored energy, Wh.
    energy: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl SimulatedEss {
    pub fn new(capacity: f64, soc: f64, eta_c: f64, eta_d: f64, soc_min: f64, soc_max: f64) -> Result<Self, PlantError> {
        if !(capacity > 0.0) {
            return Err(PlantError::InvalidEss("capacity must be positive"));
        }
        if !(eta_c > 0.0 && eta_c <= 1.0 && eta_d > 0.0 && eta_d <= 1.0) {
            return Err(PlantError::InvalidEss("efficiencies must lie in (0, 1]"));
        }
        if !(0.0 <= soc_min && soc_min <= soc && soc <= soc_max && soc_max <= 1.0) {
            return Err(PlantError::InvalidEss("need 0 <= soc_min <= soc <= soc_max <= 1"));
        }
        Ok(Self {
            capacity,
            energy: soc * capacity,
            eta_c,
            eta_d,
            soc_min,
            soc_max,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn soc(&self) -> f64 {
        self.energy / self.capacity
    }

    pub fn e_min(&self) -> f64 {
        self.soc_min * self.capacity
    }

    pub fn e_max(&self) -> f64 {
        self.soc_max * self.capacity
    }
}

/// Applies `commanded` W for `dt` h. Power that would cross a state-of-charge
/// bound is reduced so the energy lands exactly on it; the applied power is
/// returned with the new state of charge.
pub fn step_ess(ess: &mut SimulatedEss, commanded: f64, dt: f64) -> (f64, f64) {
    debug_assert!(dt > 0.0);
    let (e_min, e_max) = (ess.e_min(), ess.e_max());
    let actual = if commanded >= 0.0 {
        let next = ess.energy + ess.eta_c * commanded * dt;
        if next > e_max {
            let p = math::max((e_max - ess.energy) / (ess.eta_c * dt), 0.0);
            ess.energy = e_max.max(ess.energy);
            p
        } else {
            ess.energy = next;
            commanded
        }
    } else {
        let next = ess.energy + commanded * dt / ess.eta_d;
        if next < e_min {
            let p = math::min((e_min - ess.energy) * ess.eta_d / dt, 0.0);
            ess.energy = e_min.min(ess.energy);
            p
        } else {
            ess.energy = next;
            commanded
        }
    };
    (actual, ess.soc())
}

/// Advances a building by one sample of `dt` seconds.
pub fn step_building(model: &BuildingModel, t_now: f64, applied_pu: f64, dt: f64) -> Result<f64, PlantError> {
    if (dt - model.dt).abs() > 1e-9 * model.dt {
        return Err(PlantError::DtMismatch { dt, model_dt: model.dt });
    }
    Ok(model.step(t_now, applied_pu))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Zero-mean Gaussian sample with standard deviation `sigma`, determined by
/// `(seed, building, step)` alone.
pub fn draw_load_noise(seed: u64, building: u64, step: u64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let key = splitmix64(splitmix64(splitmix64(seed) ^ building) ^ step);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let z: f64 = StandardNormal.sample(&mut rng);
    sigma * z
}

/// Consumed power after noise, kept within the heater's range.
pub fn applied_power(plan: f64, noise: f64, pu_max: f64) -> f64 {
    math::clamp(plan + noise, 0.0, pu_max)
}

/// Uniformly sampled power history.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    /// W, oldest first.
    pub history: Vec<f64>,
    /// Samples per day.
    pub season_period: usize,
}

impl ForecastSeries {
    pub fn new(history: Vec<f64>, season_period: usize) -> Result<Self, PlantError> {
        if season_period == 0 {
            return Err(PlantError::InvalidSeries("season period must be positive"));
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::InvalidSeries("samples must be finite"));
        }
        Ok(Self {
            history,
            season_period,
        })
    }
}

/// `P̂_{k+i} = P_{k+i-period} + (P_k - P_{k-period})`, floored at 0.
pub fn persistent_predict(series: &ForecastSeries, horizon: usize) -> Result<Vec<f64>, PlantError> {
    let period = series.season_period;
    let h = &series.history;
    if h.len() < period + 1 {
        return Err(PlantError::InsufficientHistory {
            have: h.len(),
            need: period + 1,
        });
    }
    let k = h.len() - 1;
    let d = h[k] - h[k - period];
    // Past one period the differenced series stays at `d`, so forecasts build
    // on earlier unclipped forecasts.
    let mut raw: Vec<f64> = Vec::with_capacity(horizon);
    for i in 1..=horizon {
        let base = if i <= period { h[k + i - period] } else { raw[i - period - 1] };
        raw.push(base + d);
    }
    Ok(raw.into_iter().map(|v| math::max(v, 0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ess_charge_example() {
        let mut ess = SimulatedEss::new(13_500.0, 0.5, 0.55, 0.55, 0.425, 0.545).unwrap();
        let (actual, soc) = step_ess(&mut ess, 400.0, 0.25);
        assert_eq!(actual, 400.0);
        assert!((ess.energy() - 6805.0).abs() < 1e-9);
        assert!((soc - 0.504_074).abs() < 1e-6);
    }

    #[test]
    fn ess_idle_and_saturated() {
        let mut ess = SimulatedEss::new(13_500.0, 0.5, 0.55, 0.55, 0.425, 0.5).unwrap();
        assert_eq!(step_ess(&mut ess, 0.0, 0.25), (0.0, 0.5));
        let (actual, soc) = step_ess(&mut ess, 300.0, 0.25);
        assert_eq!(actual, 0.0);
        assert_eq!(soc, 0.5);
    }

    #[test]
    fn ess_clips_onto_lower_bound() {
        let mut ess = SimulatedEss::new(1000.0, 0.5, 0.55, 0.55, 0.45, 0.6).unwrap();
        let (actual, _) = step_ess(&mut ess, -1000.0, 0.25);
        assert_eq!(ess.energy(), 450.0);
        assert!((actual - (-50.0 * 0.55 / 0.25)).abs() < 1e-12);
    }

    #[test]
    fn noise_is_reproducible() {
        assert_eq!(draw_load_noise(1, 2, 3, 0.0), 0.0);
        assert_eq!(draw_load_noise(1, 2, 3, 30.0), draw_load_noise(1, 2, 3, 30.0));
        assert_ne!(draw_load_noise(1, 2, 3, 30.0), draw_load_noise(1, 2, 4, 30.0));
        assert_eq!(applied_power(2990.0, 50.0, 3000.0), 3000.0);
        assert_eq!(applied_power(10.0, -50.0, 3000.0), 0.0);
    }

    #[test]
    fn forecaster_needs_a_period() {
        let s = ForecastSeries::new(vec![1.0; 4], 4).unwrap();
        assert!(matches!(persistent_predict(&s, 2), Err(PlantError::InsufficientHistory { have: 4, need: 5 })));
    }
}
