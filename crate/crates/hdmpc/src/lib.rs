//! File formats, a parallel executor and the command-line front end for the
//! hierarchical microgrid/building controller in `hdmpc-core`.

pub mod qp_text;
pub mod res_csv;
pub mod scenario_file;
pub mod trace_csv;

use std::fmt::Write as _;
use std::sync::Arc;

use hdmpc_core::metrics::MetricsReport;
use hdmpc_core::negotiation::Executor;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Runs local building solves on a rayon pool; the global pool when `pool`
/// is `None`. Results keep the building order.
#[derive(Debug, Clone, Default)]
pub struct Parallel {
    pool: Option<Arc<ThreadPool>>,
}

impl Parallel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_threads(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool: Some(Arc::new(pool)) })
    }
}

impl Executor for Parallel {
    fn fan_out<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(&f).collect();
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// `key = value` lines; money in cents, energy in Wh, power in W.
pub fn format_metrics(m: &MetricsReport, non_converged: usize) -> String {
    let mut s = String::new();
    for (k, v) in [
        ("e_res_wh", m.e_res),
        ("er_res_percent", m.er_res),
        ("e_l_scaled_wh", m.e_l_scaled),
        ("e_b_wh", m.e_b),
        ("i_mg_cents", m.i_mg),
        ("c_mg_cents", m.c_mg),
        ("grid_cash_flow_cents", m.grid_cash_flow),
        ("export_revenue_cents", m.export_revenue),
        ("import_cost_cents", m.import_cost),
        ("user_payments_cents", m.user_payments),
        ("mutual_fund_cents", m.mutual_fund),
        ("fund_residual_cents", m.fund_residual),
        ("tracking_error_w", m.tracking_error),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "incentives_cents = {}", join(&m.incentives));
    let _ = writeln!(s, "fund_shares_cents = {}", join(&m.fund_shares));
    let _ = writeln!(s, "user_bills_cents = {}", join(&m.user_bills));
    let iters = &m.iterations;
    let mean = if iters.is_empty() {
        0.0
    } else {
        iters.iter().sum::<usize>() as f64 / iters.len() as f64
    };
    let _ = writeln!(s, "iterations_mean = {mean}");
    let _ = writeln!(s, "iterations_max = {}", iters.iter().max().copied().unwrap_or(0));
    let _ = writeln!(s, "non_converged_steps = {non_converged}");
    s
}
