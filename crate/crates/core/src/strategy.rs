//! Strategy drivers: non-cooperative RSMA, SDMA and NOMA, cooperative RSMA
//! with the search over the cooperative blocklength, and re-evaluation of
//! infinite-blocklength designs under finite blocklength.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::ConicSolver;
use crate::eval::{achieved_rates, phase_kernels, stream_rates, water_fill, Design, EvalError};
use crate::fbl::BlocklengthMode;
use crate::model::{
    ChannelError, ChannelSet, Solution, SolveDiagnostics, Strategy, SystemConfig, ValidationErrors,
};
use crate::noma::{self, noma_rates};
use crate::sca::{feasible_start, restriction_for, solve_with, ScaError};

/// How a reported design was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RunMode {
    /// Optimized and evaluated with finite-blocklength penalties.
    #[serde(rename = "fin")]
    Fin,
    /// Optimized and evaluated with Shannon rates.
    #[serde(rename = "inf")]
    Inf,
    /// Optimized with Shannon rates, evaluated with penalties.
    #[serde(rename = "inf-fin")]
    InfFin,
}

impl RunMode {
    pub const ALL: [RunMode; 3] = [RunMode::Fin, RunMode::Inf, RunMode::InfFin];

    pub fn tag(self) -> &'static str {
        match self {
            RunMode::Fin => "fin",
            RunMode::Inf => "inf",
            RunMode::InfFin => "inf-fin",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag().eq_ignore_ascii_case(tag))
    }
}

impl From<BlocklengthMode> for RunMode {
    fn from(mode: BlocklengthMode) -> Self {
        match mode {
            BlocklengthMode::Finite => RunMode::Fin,
            BlocklengthMode::Infinite => RunMode::Inf,
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One point of the cooperative blocklength search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub l_c: u32,
    pub l_d: u32,
    /// Optimal value of the last subproblem; `None` if the candidate failed.
    pub t_star: Option<f64>,
    pub mmf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub mode: RunMode,
    pub solution: Solution,
    /// Cooperative search trace, ascending in `l_c`; empty otherwise.
    #[serde(default)]
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ValidationErrors),
    #[error(transparent)]
    Channels(#[from] ChannelError),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no blocklength split l_c with both phases at least {min} fits l_total={l_total}")]
    NoCandidates { l_total: u32, min: u32 },
    #[error("every cooperative candidate failed; first error: {0}")]
    AllCandidatesFailed(String),
    #[error("{strategy} expects {expected} groups, solution has {found}")]
    Dimensions { strategy: Strategy, expected: usize, found: usize },
}

/// Validates the inputs and runs the configured strategy.
pub fn solve<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<StrategyRun, StrategyError> {
    config.validate()?;
    channels.check(config)?;
    match config.strategy {
        Strategy::Rsma => solve_rsma(channels, config, solver),
        Strategy::Sdma => solve_sdma(channels, config, solver),
        Strategy::Noma => solve_noma(channels, config, solver),
        Strategy::CooperativeRsma => solve_crsma(channels, config, solver),
    }
}

fn run(config: &SystemConfig, strategy: Strategy, solution: Solution) -> StrategyRun {
    StrategyRun { strategy, mode: config.blocklength_mode.into(), solution, candidates: Vec::new() }
}

/// Design with every precoder at zero, evaluated at `(l_d, l_c)`.
fn silent(
    channels: &ChannelSet,
    config: &SystemConfig,
    l_d: u32,
    l_c: u32,
    note: &str,
) -> Result<Solution, StrategyError> {
    let m = config.num_groups();
    let precoders = vec![vec![Complex64::new(0.0, 0.0); config.n_tx]; m + 1];
    let split = vec![0.0; m];
    let rates = achieved_rates(channels, Design { precoders: &precoders, common_split: &split, l_d, l_c }, config)?;
    Ok(Solution {
        precoders,
        common_split: split,
        l_d,
        l_c,
        theta: f64::from(l_d) / f64::from(config.l_total),
        group_rates: rates.group,
        mmf: rates.mmf,
        iterations: 0,
        objective_trace: Vec::new(),
        diagnostics: SolveDiagnostics { converged: true, note: Some(note.to_string()), ..Default::default() },
    })
}

fn solve_fixed<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    l_d: u32,
    l_c: u32,
    common: bool,
    solver: &S,
) -> Result<Solution, ScaError> {
    let restriction = restriction_for(channels, config, l_d, l_c, common)?;
    let init = feasible_start(&restriction)?;
    solve_with(&restriction, init, solver)
}

/// Non-cooperative RSMA (`θ = 1`).
///
/// Two SCA runs are made, one with a common stream and one without, and the
/// better evaluated design is returned (the common-stream run on ties). The
/// restriction forces a nonnegative common rate at every user, so on its own
/// it cannot reach designs that switch the common stream off.
pub fn solve_rsma<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<StrategyRun, StrategyError> {
    let l = config.l_total;
    if config.p_tx == 0.0 {
        return Ok(run(config, Strategy::Rsma, silent(channels, config, l, 0, "zero power budget")?));
    }
    let with_common = solve_fixed(channels, config, l, 0, true, solver);
    let without = solve_fixed(channels, config, l, 0, false, solver);
    let solution = match (with_common, without) {
        (Ok(a), Ok(b)) => {
            if b.mmf > a.mmf {
                b
            } else {
                a
            }
        }
        (Ok(a), Err(_)) => a,
        (Err(_), Ok(b)) => b,
        (Err(e), Err(_)) => return Err(e.into()),
    };
    Ok(run(config, Strategy::Rsma, solution))
}

/// SDMA: private streams only.
pub fn solve_sdma<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<StrategyRun, StrategyError> {
    let l = config.l_total;
    let solution = if config.p_tx == 0.0 {
        silent(channels, config, l, 0, "zero power budget")?
    } else {
        solve_fixed(channels, config, l, 0, false, solver)?
    };
    Ok(run(config, Strategy::Sdma, solution))
}

/// NOMA with SIC in descending channel-gain order; singleton groups only.
pub fn solve_noma<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<StrategyRun, StrategyError> {
    let solution = if config.p_tx == 0.0 {
        let mut s = silent(channels, config, config.l_total, 0, "zero power budget")?;
        s.diagnostics.decoding_order = Some(noma::decoding_order(channels, config));
        s
    } else {
        noma::solve(channels, config, solver)?
    };
    Ok(run(config, Strategy::Noma, solution))
}

/// Cooperative RSMA: one SCA per cooperative blocklength on the grid, keeping
/// the largest subproblem optimum (the smaller `l_c` on ties).
pub fn solve_crsma<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<StrategyRun, StrategyError> {
    let grid = config.lc_grid.candidates(config.l_total);
    if grid.is_empty() {
        return Err(StrategyError::NoCandidates { l_total: config.l_total, min: config.lc_grid.start });
    }
    let mut candidates = Vec::with_capacity(grid.len());
    let mut best: Option<Solution> = None;
    let mut first_error = None;
    for l_c in grid {
        let l_d = config.l_total - l_c;
        let outcome = if config.p_tx == 0.0 {
            silent(channels, config, l_d, l_c, "zero power budget").map_err(|e| e.to_string())
        } else {
            solve_fixed(channels, config, l_d, l_c, true, solver).map_err(|e| e.to_string())
        };
        match outcome {
            Ok(solution) => {
                let t = solution.diagnostics.t_star;
                candidates.push(CandidateRecord { l_c, l_d, t_star: Some(t), mmf: Some(solution.mmf), error: None });
                if best.as_ref().map_or(true, |b| t > b.diagnostics.t_star) {
                    best = Some(solution);
                }
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.clone());
                candidates.push(CandidateRecord { l_c, l_d, t_star: None, mmf: None, error: Some(e) });
            }
        }
    }
    let solution = best.ok_or_else(|| StrategyError::AllCandidatesFailed(first_error.unwrap_or_default()))?;
    Ok(StrategyRun { strategy: Strategy::CooperativeRsma, mode: config.blocklength_mode.into(), solution, candidates })
}

/// Re-evaluates an infinite-blocklength design under `config` (normally the
/// finite mode of the same setup). Precoders and `(l_d, l_c)` are kept; the
/// common split is re-chosen by the exact max-min water-fill over the
/// decodable common rate.
pub fn evaluate_inf_fin(
    channels: &ChannelSet,
    config: &SystemConfig,
    inf_solution: &Solution,
) -> Result<StrategyRun, StrategyError> {
    let m = config.num_groups();
    if inf_solution.common_split.len() != m || inf_solution.precoders.len() != m + 1 {
        return Err(StrategyError::Dimensions {
            strategy: config.strategy,
            expected: m,
            found: inf_solution.common_split.len(),
        });
    }
    let (l_d, l_c) = (inf_solution.l_d, inf_solution.l_c);
    let precoders = &inf_solution.precoders;
    let (group_rates, split) = match (config.strategy, &inf_solution.diagnostics.decoding_order) {
        (Strategy::Noma, Some(order)) => {
            let (kernel, _) = phase_kernels(config, l_d, l_c)?;
            (noma_rates(channels, config, precoders, order, &kernel), vec![0.0; m])
        }
        _ => {
            let (common, _, private) = stream_rates(channels, precoders, l_d, l_c, config)?;
            let split = water_fill(&private, common.max(0.0));
            let group = private.iter().zip(&split).map(|(p, c)| p + c).collect();
            (group, split)
        }
    };
    let mmf = group_rates.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let solution = Solution {
        precoders: precoders.clone(),
        common_split: split,
        l_d,
        l_c,
        theta: f64::from(l_d) / f64::from(config.l_total),
        group_rates,
        mmf,
        iterations: inf_solution.iterations,
        objective_trace: inf_solution.objective_trace.clone(),
        diagnostics: SolveDiagnostics {
            note: Some(format!("re-evaluated at epsilon {}", config.epsilon())),
            ..inf_solution.diagnostics.clone()
        },
    };
    Ok(StrategyRun { strategy: config.strategy, mode: RunMode::InfFin, solution, candidates: Vec::new() })
}

/// Group rates recomputed from a solution's design.
pub fn reevaluate(
    channels: &ChannelSet,
    config: &SystemConfig,
    solution: &Solution,
) -> Result<Vec<f64>, StrategyError> {
    if let (Strategy::Noma, Some(order)) = (config.strategy, &solution.diagnostics.decoding_order) {
        let (kernel, _) = phase_kernels(config, solution.l_d, solution.l_c)?;
        return Ok(noma_rates(channels, config, &solution.precoders, order, &kernel));
    }
    let design = Design {
        precoders: &solution.precoders,
        common_split: &solution.common_split,
        l_d: solution.l_d,
        l_c: solution.l_c,
    };
    Ok(achieved_rates(channels, design, config)?.group)
}
