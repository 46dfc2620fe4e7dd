//! Energy, forecast and money indicators of a finished run. Positive money
//! values are earnings.

use alloc::vec;
use alloc::vec::Vec;

use crate::building::{horizon_length, STEP_HOURS};
use crate::math;
use crate::microgrid::WH_PER_KWH;
use crate::scenario::{positive, ScenarioConfig, TraceRecord, STEP_MINUTES};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// Generated RES energy, Wh.
    pub e_res: f64,
    /// RES forecast error, % of the largest measured RES power.
    pub er_res: f64,
    /// Scaled consumed energy, Wh.
    pub e_l_scaled: f64,
    /// Net storage energy, Wh, positive when charging.
    pub e_b: f64,
    /// Imbalance charge, cents.
    pub i_mg: f64,
    /// Earnings of the microgrid operator, cents: grid trading, user payments,
    /// imbalance charge, incentives and the mutual fund.
    pub c_mg: f64,
    /// Net cash exchanged with the main grid including the imbalance charge,
    /// cents. Equals `c_mg` plus all user bills plus the fund residual.
    pub grid_cash_flow: f64,
    pub export_revenue: f64,
    pub import_cost: f64,
    /// Paid by users for their consumption, cents.
    pub user_payments: f64,
    /// Incentive paid to each user, cents.
    pub incentives: Vec<f64>,
    /// Net earnings of each user, cents.
    pub user_bills: Vec<f64>,
    pub mutual_fund: f64,
    pub fund_shares: Vec<f64>,
    /// Part of the fund not handed out, cents.
    pub fund_residual: f64,
    /// Sum over complete hours of |hourly mean PCC power - reference|, W.
    pub tracking_error: f64,
    pub iterations: Vec<usize>,
}

/// Mean |hourly PCC power - reference| for each complete hour, W.
pub fn hourly_deviations(trace: &[TraceRecord]) -> Vec<f64> {
    let per_hour = (60 / STEP_MINUTES) as usize;
    let mut out = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        let hour = trace[i].minute / 60;
        let mut j = i;
        while j < trace.len() && trace[j].minute / 60 == hour {
            j += 1;
        }
        if j - i == per_hour {
            let avg = trace[i..j].iter().map(|r| r.p_g).sum::<f64>() / per_hour as f64;
            out.push(math::abs(avg - trace[i].p_ref));
        }
        i = j;
    }
    out
}

/// Imbalance charge, cents, for hourly deviations in W.
pub fn imbalance_charge(deviations: &[f64], pen: f64) -> f64 {
    -pen * deviations.iter().sum::<f64>() / WH_PER_KWH
}

/// Splits `fund` in proportion to `scores`; equally when all scores are zero.
pub fn split_fund(fund: f64, scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if scores.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![fund / scores.len() as f64; scores.len()];
    }
    scores.iter().map(|s| fund * s / total).collect()
}

/// Fund from the tariff spread on internally served consumption, and each
/// user's share by the magnitude of their executed changes.
pub fn distribute_fund(trace: &[TraceRecord], cfg: &ScenarioConfig) -> (f64, Vec<f64>) {
    let m = cfg.buildings.len();
    let mut fund = 0.0;
    let mut scores = vec![0.0; m];
    for r in trace {
        let tariff = cfg.tariff_at_step((r.minute / STEP_MINUTES) as usize);
        let load: f64 = r.buildings.iter().map(|b| b.pu_applied).sum();
        let internal = positive(load - positive(r.p_g)) * STEP_HOURS;
        fund += (tariff.buy - tariff.sell) * internal / WH_PER_KWH;
        for (s, b) in scores.iter_mut().zip(&r.buildings) {
            *s += math::abs(b.dp) * STEP_HOURS;
        }
    }
    (fund, split_fund(fund, &scores))
}

/// Mean over steps of the horizon RMSE of the RES forecast, % of the largest
/// measured RES power.
pub fn forecast_error(trace: &[TraceRecord], cfg: &ScenarioConfig) -> f64 {
    let peak = trace.iter().map(|r| r.p_r).fold(0.0, math::max);
    if trace.is_empty() || peak <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for r in trace {
        let step = (r.minute / STEP_MINUTES) as usize;
        let minute = r.minute % 60;
        let n_b = match horizon_length(minute, cfg.microgrid.n_m) {
            Ok(n) => n,
            Err(_) => return f64::NAN,
        };
        let fc = match cfg.res_forecast(step, n_b) {
            Ok(f) => f,
            Err(_) => return f64::NAN,
        };
        let mse = fc
            .iter()
            .zip(&cfg.res[step..step + n_b])
            .map(|(f, t)| (f - t) * (f - t))
            .sum::<f64>()
            / n_b as f64;
        sum += math::sqrt(mse);
    }
    100.0 * sum / (trace.len() as f64 * peak)
}

pub fn compute_metrics(trace: &[TraceRecord], cfg: &ScenarioConfig) -> MetricsReport {
    let m = cfg.buildings.len();
    let mut rep = MetricsReport {
        incentives: vec![0.0; m],
        user_bills: vec![0.0; m],
        ..Default::default()
    };
    for r in trace {
        let tariff = cfg.tariff_at_step((r.minute / STEP_MINUTES) as usize);
        rep.e_res += r.p_r * STEP_HOURS;
        rep.e_b += r.p_b_act * STEP_HOURS;
        let energy_kwh = r.p_g * STEP_HOURS / WH_PER_KWH;
        if energy_kwh >= 0.0 {
            rep.import_cost += tariff.buy * energy_kwh;
        } else {
            rep.export_revenue -= tariff.sell * energy_kwh;
        }
        for (j, b) in r.buildings.iter().enumerate() {
            rep.e_l_scaled += cfg.load_scale * b.pu_applied * STEP_HOURS;
            let pay = tariff.buy * b.pu_applied * STEP_HOURS / WH_PER_KWH;
            rep.user_payments += pay;
            rep.user_bills[j] -= pay;
            rep.incentives[j] += cfg.incentive * math::abs(b.dp) * STEP_HOURS / WH_PER_KWH;
        }
        rep.iterations.push(r.iterations);
    }
    let deviations = hourly_deviations(trace);
    rep.tracking_error = deviations.iter().sum();
    rep.i_mg = imbalance_charge(&deviations, cfg.microgrid.pen);
    rep.grid_cash_flow = rep.export_revenue - rep.import_cost + rep.i_mg;

    let (fund, shares) = distribute_fund(trace, cfg);
    rep.mutual_fund = fund;
    rep.fund_residual = fund - shares.iter().sum::<f64>();
    for j in 0..m {
        rep.user_bills[j] += rep.incentives[j] + shares[j];
    }
    rep.fund_shares = shares;
    let paid: f64 = rep.incentives.iter().sum();
    rep.c_mg = rep.grid_cash_flow + rep.user_payments - paid - fund;
    rep.er_res = forecast_error(trace, cfg);
    rep
}
