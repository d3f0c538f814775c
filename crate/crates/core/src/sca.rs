//! Inner SCA loop: repeatedly solve the convex restriction around the current
//! iterate until the objective stalls.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::conic::{check_solution, ConicProgram, ConicSolver, ConicStatus};
use crate::eval::{
    achieved_rates, evaluate_sinrs, phase_kernels, relay_rates, stream_rates, Design, EvalError,
};
use crate::linalg::{dominant_direction, norm_sqr, scaled};
use crate::model::{ChannelSet, Solution, SolveDiagnostics, SystemConfig};
use crate::subproblem::{RsmaRestriction, ScaState, RHO_FLOOR};
use crate::taylor::TaylorError;

/// Feasibility tolerance for accepting a non-optimal solver point and for
/// the warm-start check.
pub const ACCEPT_TOL: f64 = 1e-6;
/// Tolerance used to certify that a starting point is feasible.
pub const START_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaError {
    #[error("every channel vector is zero")]
    ZeroChannels,
    #[error("no feasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("conic solver returned {status:?} at iteration {iteration}")]
    Solver { iteration: usize, status: ConicStatus },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Taylor(#[from] TaylorError),
}

/// A family of convex restrictions indexed by the SCA iterate.
pub trait Restriction {
    fn build(&self, state: &ScaState) -> Result<ConicProgram, ScaError>;
    /// A point of `build(state)` at which every linearization is tight.
    fn tangent_point(&self, state: &ScaState) -> Vec<f64>;
    fn state_from(&self, x: &[f64], iteration: usize) -> ScaState;
}

impl Restriction for RsmaRestriction<'_> {
    fn build(&self, state: &ScaState) -> Result<ConicProgram, ScaError> {
        Ok(RsmaRestriction::build(self, state)?)
    }

    fn tangent_point(&self, state: &ScaState) -> Vec<f64> {
        RsmaRestriction::tangent_point(self, state)
    }

    fn state_from(&self, x: &[f64], iteration: usize) -> ScaState {
        RsmaRestriction::state_from(self, x, iteration)
    }
}

/// Result of [`run_sca`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    /// Best accepted subproblem solution.
    pub x: Vec<f64>,
    pub state: ScaState,
    /// `t^[1], t^[2], ...`
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub hit_iteration_cap: bool,
    pub max_warm_start_violation: f64,
    pub note: Option<String>,
}

/// Runs the SCA iterations from `init` until `|t^[n] − t^[n−1]| < tol` or
/// `max_iterations` subproblems have been solved.
///
/// A rejected subproblem at the first iteration is an error; later
/// rejections stop the loop and keep the best iterate.
pub fn run_sca<R: Restriction + ?Sized, S: ConicSolver + ?Sized>(
    restriction: &R,
    solver: &S,
    init: ScaState,
    tol: f64,
    max_iterations: usize,
) -> Result<LoopOutcome, ScaError> {
    let mut state = init;
    let mut trace = Vec::new();
    let mut prev_x: Option<Vec<f64>> = None;
    let mut best: Option<(f64, Vec<f64>, ScaState)> = None;
    let mut max_violation: f64 = 0.0;
    let mut converged = false;
    let mut note = None;

    for n in 1..=max_iterations.max(1) {
        let program = restriction.build(&state)?;
        if let Some(x) = &prev_x {
            max_violation = max_violation.max(check_solution(&program, x, ACCEPT_TOL).worst);
        }
        let sol = solver.solve(&program);
        let accepted = sol.x.len() == program.num_vars()
            && sol.x.iter().all(|v| v.is_finite())
            && (sol.status == ConicStatus::Optimal
                || check_solution(&program, &sol.x, ACCEPT_TOL).passed());
        if !accepted {
            if best.is_none() {
                return Err(ScaError::Solver { iteration: n, status: sol.status });
            }
            note = Some(format!("stopped at iteration {n}: solver returned {:?}", sol.status));
            break;
        }
        let t = sol.x[0];
        trace.push(t);
        state = restriction.state_from(&sol.x, n);
        if best.as_ref().map_or(true, |(bt, _, _)| t >= *bt) {
            best = Some((t, sol.x.clone(), state.clone()));
        }
        if n >= 2 && libm::fabs(t - trace[n - 2]) < tol {
            converged = true;
            break;
        }
        prev_x = Some(sol.x);
    }

    let iterations = trace.len();
    let (_, x, state) = best.expect("at least one accepted iterate");
    Ok(LoopOutcome {
        x,
        state,
        trace,
        iterations,
        converged,
        hit_iteration_cap: !converged && note.is_none(),
        max_warm_start_violation: max_violation,
        note,
    })
}

/// Direction used for the common stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonDirection {
    /// Dominant left singular vector of all channels.
    Dominant,
    /// Normalized sum of the normalized channels, which never leaves a user
    /// orthogonal unless the channels cancel.
    Balanced,
}

/// MRT/SVD starting precoders with `common_fraction · P_t` on the common
/// stream and the rest split equally across groups. SINR bounds are the exact
/// SINRs of these precoders, floored at [`RHO_FLOOR`].
pub fn initialize_precoders(
    channels: &ChannelSet,
    config: &SystemConfig,
    common: bool,
    common_fraction: f64,
    direction: CommonDirection,
) -> Result<ScaState, ScaError> {
    let n = config.n_tx;
    let m = config.num_groups();
    let all: Vec<&[Complex64]> = channels.downlink.iter().map(Vec::as_slice).collect();
    let u = match direction {
        CommonDirection::Dominant => dominant_direction(&all).ok_or(ScaError::ZeroChannels)?,
        CommonDirection::Balanced => balanced_direction(&all).ok_or(ScaError::ZeroChannels)?,
    };
    let q_c = if common { common_fraction * config.p_tx } else { 0.0 };
    let q_m = (config.p_tx - q_c) / m as f64;
    let mut precoders = vec![scaled(&u, libm::sqrt(q_c))];
    for group in &config.groups {
        let cols: Vec<&[Complex64]> = group.iter().map(|&k| channels.downlink[k].as_slice()).collect();
        let v = dominant_direction(&cols).unwrap_or_else(|| u.clone());
        precoders.push(scaled(&v, libm::sqrt(q_m)));
    }
    debug_assert!(precoders.iter().all(|p| p.len() == n));
    let sinr = evaluate_sinrs(channels, &precoders, config)?;
    Ok(ScaState {
        iteration: 0,
        precoders,
        rho_c: if common { sinr.common.iter().map(|&g| g.max(RHO_FLOOR)).collect() } else { Vec::new() },
        rho_p: sinr.private.iter().map(|&g| g.max(RHO_FLOOR)).collect(),
        objective: 0.0,
    })
}

fn balanced_direction(columns: &[&[Complex64]]) -> Option<Vec<Complex64>> {
    let n = columns.first()?.len();
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    for col in columns {
        let nrm = libm::sqrt(norm_sqr(col));
        if nrm > 0.0 {
            for (s, z) in sum.iter_mut().zip(col.iter()) {
                *s += z / nrm;
            }
        }
    }
    let nrm = libm::sqrt(norm_sqr(&sum));
    (nrm > 0.0).then(|| scaled(&sum, 1.0 / nrm))
}

/// Common-power fractions tried, in order, until the tangent point of the
/// first restriction is feasible.
pub const COMMON_FRACTIONS: [f64; 5] = [0.5, 0.7, 0.85, 0.95, 0.99];

/// Starting state whose tangent point is feasible for `restriction`.
///
/// Without a common stream the MRT/SVD start is always used. With one, the
/// common power is escalated and then the direction switched until every
/// user can decode a nonnegative common rate.
pub fn feasible_start(
    restriction: &RsmaRestriction<'_>,
) -> Result<ScaState, ScaError> {
    let channels = restriction.channels;
    let config = restriction.config;
    let common = restriction.layout.common;
    let fractions: &[f64] = if common { &COMMON_FRACTIONS } else { &[0.0] };
    let mut worst = f64::INFINITY;
    for direction in [CommonDirection::Dominant, CommonDirection::Balanced] {
        for &fraction in fractions {
            let state = initialize_precoders(channels, config, common, fraction, direction)?;
            let program = restriction.build(&state)?;
            let report = check_solution(&program, &restriction.tangent_point(&state), START_TOL);
            if report.passed() {
                return Ok(state);
            }
            worst = worst.min(report.worst);
        }
        if !common {
            break;
        }
    }
    Err(ScaError::InfeasibleStart(format!("smallest start violation {worst:.3e}")))
}

/// Runs the SCA for fixed `(l_d, l_c)` from `init` and evaluates the result.
///
/// The returned precoders are scaled into the power budget if the solver
/// overshoots it, and the common split is scaled down if it exceeds the
/// decodable common rate.
#[allow(clippy::too_many_arguments)]
pub fn sca_solve<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    l_d: u32,
    l_c: u32,
    init: ScaState,
    common: bool,
    solver: &S,
) -> Result<Solution, ScaError> {
    let restriction = restriction_for(channels, config, l_d, l_c, common)?;
    solve_with(&restriction, init, solver)
}

/// Restriction with the cooperative-phase rates filled in.
pub fn restriction_for<'a>(
    channels: &'a ChannelSet,
    config: &'a SystemConfig,
    l_d: u32,
    l_c: u32,
    common: bool,
) -> Result<RsmaRestriction<'a>, ScaError> {
    let (_, relay) = phase_kernels(config, l_d, l_c)?;
    let rates = match relay {
        Some(kernel) => relay_rates(channels, config, &kernel)?,
        None => vec![0.0; config.num_users()],
    };
    Ok(RsmaRestriction::new(channels, config, l_d, l_c, rates, common)?)
}

pub(crate) fn solve_with<S: ConicSolver + ?Sized>(
    restriction: &RsmaRestriction<'_>,
    init: ScaState,
    solver: &S,
) -> Result<Solution, ScaError> {
    let config = restriction.config;
    let outcome = run_sca(restriction, solver, init, config.sca_tolerance, config.max_iterations)?;
    let lay = &restriction.layout;
    let mut precoders = lay.precoders(&outcome.x);
    fit_power(&mut precoders, config.p_tx);
    let (common_rate, _, _) =
        stream_rates(restriction.channels, &precoders, restriction.l_d, restriction.l_c, config)?;
    let mut split = lay.common_split(&outcome.x);
    let allocated: f64 = split.iter().sum();
    if allocated > common_rate {
        let factor = if common_rate > 0.0 { common_rate / allocated } else { 0.0 };
        split.iter_mut().for_each(|c| *c *= factor);
    }
    let rates = achieved_rates(
        restriction.channels,
        Design { precoders: &precoders, common_split: &split, l_d: restriction.l_d, l_c: restriction.l_c },
        config,
    )?;
    Ok(Solution {
        precoders,
        common_split: split,
        l_d: restriction.l_d,
        l_c: restriction.l_c,
        theta: restriction.theta,
        group_rates: rates.group,
        mmf: rates.mmf,
        iterations: outcome.iterations,
        diagnostics: SolveDiagnostics {
            t_star: outcome.x[0],
            converged: outcome.converged,
            hit_iteration_cap: outcome.hit_iteration_cap,
            max_warm_start_violation: outcome.max_warm_start_violation,
            common_stream: lay.common,
            decoding_order: None,
            note: outcome.note,
        },
        objective_trace: outcome.trace,
    })
}

/// Scales `precoders` down to the budget when they exceed it.
pub(crate) fn fit_power(precoders: &mut [Vec<Complex64>], budget: f64) {
    let used: f64 = precoders.iter().map(|p| norm_sqr(p)).sum();
    if used > budget {
        let factor = if used > 0.0 { libm::sqrt(budget / used) } else { 0.0 };
        for z in precoders.iter_mut().flatten() {
            *z *= factor;
        }
    }
}
