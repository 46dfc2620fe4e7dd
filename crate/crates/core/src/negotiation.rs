//! Load coordinator: proximal consensus between building controllers and the
//! centralized reference solve.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::building::{
    add_user_terms, check_local_dims, request_box, solve_local, BmpcSolution, BuildingError,
    BuildingModel, BuildingParams, BuildingState, Penalty, Setpoints,
};
use crate::linalg::{cholesky, cholesky_solve, Matrix};
use crate::math;
use crate::opt::{solve_qp, QuadraticProgram, SolveOptions, SolveStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NegotiationError {
    #[error("invalid consensus config: {0}")]
    InvalidConfig(&'static str),
    #[error("per-user vectors have inconsistent lengths")]
    Dimension,
    #[error("coordinator system is singular")]
    SingularSystem,
    #[error("no users")]
    NoUsers,
    #[error("centralized solve returned {0:?}")]
    Status(SolveStatus),
    #[error(transparent)]
    Building(#[from] BuildingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusConfig {
    /// Penalty slope, `c_t = alpha·t`.
    pub alpha: f64,
    pub max_iters: usize,
    /// Residual threshold as a fraction of `|request|`.
    pub eps_fraction: f64,
    /// Threshold floor, W.
    pub eps_floor: f64,
    /// Coordinator weights per user; empty means 1 for everyone.
    pub q_weights: Vec<f64>,
    /// Centralized objective weights per user; empty means 1 for everyone.
    pub q_star: Vec<f64>,
    /// Consensus deviations are measured in multiples of this power, W
    /// (1000 puts them in kW, the unit of the tariff terms).
    pub unit_w: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            max_iters: 2000,
            eps_fraction: 1e-4,
            eps_floor: 1e-3,
            q_weights: Vec::new(),
            q_star: Vec::new(),
            unit_w: 1000.0,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self, m: usize) -> Result<(), NegotiationError> {
        if !(self.alpha > 0.0) {
            return Err(NegotiationError::InvalidConfig("alpha must be positive"));
        }
        if self.max_iters == 0 {
            return Err(NegotiationError::InvalidConfig("max_iters must be at least 1"));
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction < 1.0) || !(self.eps_floor > 0.0) {
            return Err(NegotiationError::InvalidConfig("epsilon fraction in (0,1) and positive floor"));
        }
        if !(self.unit_w > 0.0) {
            return Err(NegotiationError::InvalidConfig("unit_w must be positive"));
        }
        for w in [&self.q_weights, &self.q_star] {
            if !w.is_empty() && w.len() != m {
                return Err(NegotiationError::InvalidConfig("one weight per user"));
            }
            if w.iter().any(|q| !(*q > 0.0)) {
                return Err(NegotiationError::InvalidConfig("weights must be positive"));
            }
        }
        Ok(())
    }

    pub fn q(&self, j: usize) -> f64 {
        self.q_weights.get(j).copied().unwrap_or(1.0)
    }

    pub fn q_star(&self, j: usize) -> f64 {
        self.q_star.get(j).copied().unwrap_or(1.0)
    }

    pub fn epsilon(&self, request: &[f64]) -> Vec<f64> {
        request
            .iter()
            .map(|r| math::max(self.eps_fraction * math::abs(*r), self.eps_floor))
            .collect()
    }
}

/// `c_t = alpha·t`.
pub fn penalty_schedule(t: usize, alpha: f64) -> f64 {
    alpha * t as f64
}

/// Runs `f(0..n)` and returns the results in index order.
pub trait Executor {
    fn fan_out<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn fan_out<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// A building controller as seen by the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUser {
    pub model: BuildingModel,
    pub params: BuildingParams,
    pub state: BuildingState,
}

/// Factored coordinator normal equations for fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinator {
    q: Vec<f64>,
    chol: Matrix,
}

impl Coordinator {
    pub fn new(q: &[f64]) -> Result<Self, NegotiationError> {
        let m = q.len();
        if m == 0 {
            return Err(NegotiationError::NoUsers);
        }
        if q.iter().any(|w| !(*w > 0.0)) {
            return Err(NegotiationError::SingularSystem);
        }
        let total: f64 = q.iter().sum();
        let mut a = Matrix::zeros(m, m);
        for k in 0..m {
            for l in 0..m {
                a[(k, l)] = if k == l { total } else { total - q[k] - q[l] };
            }
        }
        let chol = cholesky(&a).ok_or(NegotiationError::SingularSystem)?;
        Ok(Self { q: q.to_vec(), chol })
    }

    /// Minimizes `Σ_j Q_j‖x̄_j − a_j‖² + Σ_j Q_j‖Σ_{h≠j} x̄_h − b_j‖²` per
    /// time index.
    pub fn update(&self, x_c: &[Vec<f64>], x_cminus: &[Vec<f64>]) -> Result<Vec<Setpoints>, NegotiationError> {
        let m = self.q.len();
        if x_c.len() != m || x_cminus.len() != m {
            return Err(NegotiationError::Dimension);
        }
        let n = x_c[0].len();
        if x_c.iter().chain(x_cminus).any(|v| v.len() != n) {
            return Err(NegotiationError::Dimension);
        }
        let mut dp = vec![vec![0.0; n]; m];
        let mut rhs = vec![0.0; m];
        for t in 0..n {
            let b_total: f64 = (0..m).map(|j| self.q[j] * x_cminus[j][t]).sum();
            for k in 0..m {
                rhs[k] = self.q[k] * x_c[k][t] + (b_total - self.q[k] * x_cminus[k][t]);
            }
            let sol = cholesky_solve(&self.chol, &rhs);
            for k in 0..m {
                dp[k][t] = sol[k];
            }
        }
        Ok(setpoints_from(&dp))
    }
}

/// Setpoints with `dp_others[j] = Σ_{h≠j} dp[h]`, summed in index order.
pub fn setpoints_from(dp: &[Vec<f64>]) -> Vec<Setpoints> {
    let m = dp.len();
    (0..m)
        .map(|j| {
            let n = dp[j].len();
            let others = (0..n)
                .map(|t| {
                    let mut s = 0.0;
                    for (h, v) in dp.iter().enumerate() {
                        if h != j {
                            s += v[t];
                        }
                    }
                    s
                })
                .collect();
            Setpoints {
                dp: dp[j].clone(),
                dp_others: others,
            }
        })
        .collect()
}

pub fn coordinator_update(
    x_c: &[Vec<f64>],
    x_cminus: &[Vec<f64>],
    q_weights: &[f64],
) -> Result<Vec<Setpoints>, NegotiationError> {
    Coordinator::new(q_weights)?.update(x_c, x_cminus)
}

/// Largest residual between local solutions and the previous setpoints,
/// measured relative to `eps` (converged when it is below 1).
fn residual_ratio(x_c: &[Vec<f64>], x_cminus: &[Vec<f64>], prev: &[Setpoints], eps: &[f64]) -> (f64, f64) {
    let mut ratio: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for j in 0..x_c.len() {
        for t in 0..eps.len() {
            for r in [x_c[j][t] - prev[j].dp[t], x_cminus[j][t] - prev[j].dp_others[t]] {
                let r = math::abs(r);
                worst = worst.max(r);
                ratio = ratio.max(r / eps[t]);
            }
        }
    }
    (ratio, worst)
}

/// True when every coupled and others-sum residual is below `eps`.
pub fn check_convergence(x_c: &[Vec<f64>], x_cminus: &[Vec<f64>], prev: &[Setpoints], eps: &[f64]) -> bool {
    residual_ratio(x_c, x_cminus, prev, eps).0 < 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationState {
    pub t: usize,
    pub x_c: Vec<Vec<f64>>,
    pub x_cminus: Vec<Vec<f64>>,
    pub setpoints: Vec<Setpoints>,
    pub c_t: f64,
    pub converged: bool,
    /// Largest residual (W) at each checked iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationOutcome {
    /// Agreed change per user, W.
    pub dp: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    /// Users whose local problem was infeasible at some iteration and who
    /// reported no change instead.
    pub fallbacks: Vec<usize>,
}

/// Clips each user's change into the request box, then scales the total
/// back into it.
pub fn clip_to_request(dp: &mut [Vec<f64>], request: &[f64]) {
    for (t, &r) in request.iter().enumerate() {
        let (lo, hi) = request_box(r);
        let mut total = 0.0;
        for v in dp.iter_mut() {
            v[t] = math::clamp(v[t], lo, hi);
            total += v[t];
        }
        let scale = if total > hi && total > 0.0 {
            hi / total
        } else if total < lo && total < 0.0 {
            lo / total
        } else {
            1.0
        };
        if scale != 1.0 {
            for v in dp.iter_mut() {
                v[t] *= scale;
            }
        }
    }
}

fn local_or_fallback(
    user: &LocalUser,
    request: &[f64],
    setpoints: Option<&Setpoints>,
    penalty: Penalty,
    warm: Option<&BmpcSolution>,
) -> Result<(BmpcSolution, bool), NegotiationError> {
    match solve_local(&user.model, &user.params, &user.state, request, setpoints, penalty, warm) {
        Ok(s) => Ok((s, false)),
        Err(BuildingError::Infeasible) => {
            let n = request.len();
            let dp_others = setpoints.map_or_else(|| vec![0.0; n], |s| s.dp_others.clone());
            Ok((
                BmpcSolution {
                    pu: user.state.plan.clone(),
                    dp: vec![0.0; n],
                    dp_others,
                    temps: user.model.predict(user.state.temp, &user.state.plan),
                    objective: f64::NAN,
                },
                true,
            ))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the consensus loop for one control step.
pub fn run_negotiation<E: Executor>(
    users: &[LocalUser],
    request: &[f64],
    config: &ConsensusConfig,
    executor: &E,
) -> Result<NegotiationOutcome, NegotiationError> {
    let m = users.len();
    if m == 0 {
        return Err(NegotiationError::NoUsers);
    }
    config.validate(m)?;
    for u in users {
        check_local_dims(&u.state, request)?;
    }
    let q: Vec<f64> = (0..m).map(|j| config.q(j)).collect();
    let coordinator = Coordinator::new(&q)?;
    let eps = config.epsilon(request);
    let mut fallbacks = Vec::new();

    let first = executor.fan_out(m, |j| local_or_fallback(&users[j], request, None, Penalty::NONE, None));
    let mut solutions = Vec::with_capacity(m);
    for (j, r) in first.into_iter().enumerate() {
        let (s, fell_back) = r?;
        if fell_back {
            fallbacks.push(j);
        }
        solutions.push(s);
    }
    let x_c: Vec<Vec<f64>> = solutions.iter().map(|s| s.dp.clone()).collect();
    let mut state = NegotiationState {
        t: 0,
        setpoints: setpoints_from(&x_c),
        x_cminus: solutions.iter().map(|s| s.dp_others.clone()).collect(),
        x_c,
        c_t: 0.0,
        converged: false,
        history: Vec::new(),
    };

    while state.t < config.max_iters {
        state.t += 1;
        state.c_t = penalty_schedule(state.t, config.alpha);
        let penalty = Penalty {
            c_t: state.c_t,
            unit_w: config.unit_w,
        };
        let sp = &state.setpoints;
        let prev = &solutions;
        let results = executor.fan_out(m, |j| local_or_fallback(&users[j], request, Some(&sp[j]), penalty, Some(&prev[j])));
        let mut next = Vec::with_capacity(m);
        for (j, r) in results.into_iter().enumerate() {
            let (s, fell_back) = r?;
            if fell_back && !fallbacks.contains(&j) {
                fallbacks.push(j);
            }
            next.push(s);
        }
        solutions = next;
        state.x_c = solutions.iter().map(|s| s.dp.clone()).collect();
        state.x_cminus = solutions.iter().map(|s| s.dp_others.clone()).collect();
        let (ratio, worst) = residual_ratio(&state.x_c, &state.x_cminus, &state.setpoints, &eps);
        state.history.push(worst);
        if ratio < 1.0 {
            state.converged = true;
            break;
        }
        state.setpoints = coordinator.update(&state.x_c, &state.x_cminus)?;
    }

    let mut dp: Vec<Vec<f64>> = state.setpoints.iter().map(|s| s.dp.clone()).collect();
    clip_to_request(&mut dp, request);
    fallbacks.sort_unstable();
    Ok(NegotiationOutcome {
        dp,
        iterations: state.t,
        converged: state.converged,
        history: state.history,
        fallbacks,
    })
}

/// Single QP over all users' `(P^u, dP)` with the shared request limits.
pub fn build_centralized_qp(
    users: &[LocalUser],
    request: &[f64],
    q_star: &[f64],
) -> Result<QuadraticProgram, NegotiationError> {
    let m = users.len();
    if m == 0 {
        return Err(NegotiationError::NoUsers);
    }
    if q_star.len() != m {
        return Err(NegotiationError::Dimension);
    }
    let n = request.len();
    for u in users {
        u.params.validate()?;
        check_local_dims(&u.state, request)?;
    }
    let idx = |j: usize, t: usize, k: usize| 2 * (j * n + t) + k;
    let mut qp = QuadraticProgram::new(2 * n * m);
    for (j, u) in users.iter().enumerate() {
        add_user_terms(&mut qp, &u.model, &u.params, &u.state, request, q_star[j], |t| idx(j, t, 0), |t| idx(j, t, 1));
    }
    for (t, &r) in request.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let (lo, hi) = request_box(r);
        let terms: Vec<(usize, f64)> = (0..m).map(|j| (idx(j, t, 1), 1.0)).collect();
        let neg: Vec<(usize, f64)> = terms.iter().map(|&(i, _)| (i, -1.0)).collect();
        qp.add_ineq_sparse(&terms, hi / 1000.0);
        qp.add_ineq_sparse(&neg, -lo / 1000.0);
    }
    Ok(qp)
}

/// Reference allocation from one centralized QP, W per user and step.
pub fn solve_centralized(
    users: &[LocalUser],
    request: &[f64],
    q_star: &[f64],
) -> Result<Vec<Vec<f64>>, NegotiationError> {
    let qp = build_centralized_qp(users, request, q_star)?;
    let res = solve_qp(&qp, &SolveOptions::default()).map_err(BuildingError::from)?;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(BuildingError::Infeasible.into()),
        s => return Err(NegotiationError::Status(s)),
    }
    let n = request.len();
    Ok((0..users.len())
        .map(|j| (0..n).map(|t| 1000.0 * res.x[2 * (j * n + t) + 1]).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_linear() {
        assert_eq!(penalty_schedule(0, 0.1), 0.0);
        assert_eq!(penalty_schedule(1, 0.1), 0.1);
        assert!(penalty_schedule(5, 0.1) > penalty_schedule(4, 0.1));
    }

    #[test]
    fn two_user_coordinator_example() {
        let sp = coordinator_update(&[vec![10.0], vec![20.0]], &[vec![30.0], vec![0.0]], &[1.0, 1.0]).unwrap();
        assert!((sp[0].dp[0] - 5.0).abs() < 1e-12);
        assert!((sp[1].dp[0] - 25.0).abs() < 1e-12);
        assert_eq!(sp[0].dp_others[0], sp[1].dp[0]);
    }

    #[test]
    fn consistent_inputs_are_fixed_points() {
        let a = vec![vec![1.0, -2.0], vec![3.0, 0.5], vec![-4.0, 2.0]];
        let b: Vec<Vec<f64>> = setpoints_from(&a).into_iter().map(|s| s.dp_others).collect();
        let sp = coordinator_update(&a, &b, &[1.0, 2.0, 0.5]).unwrap();
        for j in 0..3 {
            for t in 0..2 {
                assert!((sp[j].dp[t] - a[j][t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convergence_threshold() {
        let prev = setpoints_from(&[vec![100.0], vec![50.0]]);
        let eps = ConsensusConfig::default().epsilon(&[0.0]);
        assert_eq!(eps, vec![1e-3]);
        assert!(check_convergence(&[vec![100.0], vec![50.0]], &[vec![50.0], vec![100.0]], &prev, &eps));
        assert!(!check_convergence(&[vec![100.0], vec![50.002]], &[vec![50.0], vec![100.0]], &prev, &eps));
    }

    #[test]
    fn clipping_respects_shared_limit() {
        let mut dp = vec![vec![300.0, -10.0], vec![500.0, 5.0]];
        clip_to_request(&mut dp, &[400.0, -100.0]);
        assert!((dp[0][0] + dp[1][0] - 400.0).abs() < 1e-9);
        assert!((dp[0][0] / dp[1][0] - 0.75).abs() < 1e-12);
        assert_eq!(dp[0][1], -10.0);
        assert_eq!(dp[1][1], 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = ConsensusConfig::default();
        assert!(c.validate(2).is_ok());
        c.alpha = 0.0;
        assert!(c.validate(2).is_err());
        let c = ConsensusConfig {
            q_weights: vec![1.0, -1.0],
            ..Default::default()
        };
        assert!(c.validate(2).is_err());
    }
}
