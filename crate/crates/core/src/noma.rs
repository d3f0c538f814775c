//! Power-domain NOMA baseline with successive interference cancellation.
//!
//! Users are ordered by descending `‖h_k‖²` (ties by index). The decoder at
//! position `i` decodes the messages at positions `K−1, …, i` in turn, so the
//! message at position `j` sees interference from positions `0..j` only and
//! must be decodable by every decoder at positions `0..=j`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::conic::{AffineExpr, Cone, ConicProgram, ConicSolver, ProgramBuilder};
use crate::eval::{phase_kernels, EvalError};
use crate::fbl::{shannon, RateKernel};
use crate::linalg::{inner, norm_sqr, scaled};
use crate::model::{ChannelSet, Solution, SolveDiagnostics, SystemConfig};
use crate::sca::{fit_power, run_sca, Restriction, ScaError};
use crate::subproblem::{push_rate_cone, push_sinr_cone, ScaState, StreamCoords, RHO_FLOOR};

/// Group indices sorted by descending channel gain of their (single) user.
pub fn decoding_order(channels: &ChannelSet, config: &SystemConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..config.num_groups()).collect();
    let gain = |m: usize| norm_sqr(&channels.downlink[config.groups[m][0]]);
    order.sort_by(|&a, &b| gain(b).total_cmp(&gain(a)).then(config.groups[a][0].cmp(&config.groups[b][0])));
    order
}

/// `(decoder position, message position)` pairs with `decoder ≤ message`,
/// message-major.
fn pairs(users: usize) -> Vec<(usize, usize)> {
    (0..users).flat_map(|j| (0..=j).map(move |i| (i, j))).collect()
}

/// SINR of the message at position `j` at the decoder at position `i`.
fn pair_sinr(h: &[Complex64], precoders: &[Vec<Complex64>], order: &[usize], j: usize) -> f64 {
    let stream = |pos: usize| &precoders[1 + order[pos]];
    let interference: f64 = (0..j).map(|q| inner(h, stream(q)).norm_sqr()).sum();
    inner(h, stream(j)).norm_sqr() / (interference + 1.0)
}

/// Per-group rates of a NOMA design: each message rate is the worst of its
/// decoders, clamped at zero.
pub fn noma_rates(
    channels: &ChannelSet,
    config: &SystemConfig,
    precoders: &[Vec<Complex64>],
    order: &[usize],
    kernel: &RateKernel,
) -> Vec<f64> {
    let mut rates = vec![f64::INFINITY; config.num_groups()];
    for (i, j) in pairs(order.len()) {
        let h = &channels.downlink[config.groups[order[i]][0]];
        let r = kernel.rate(pair_sinr(h, precoders, order, j)).max(0.0);
        let m = order[j];
        rates[m] = rates[m].min(r);
    }
    rates
}

/// Convex restriction for the NOMA max-min problem.
///
/// Variables: `t`, the `K` lifted precoders (group order), then one SINR
/// bound per decoder/message pair.
pub struct NomaRestriction<'a> {
    channels: &'a ChannelSet,
    config: &'a SystemConfig,
    order: Vec<usize>,
    kernel: RateKernel,
    pairs: Vec<(usize, usize)>,
}

impl<'a> NomaRestriction<'a> {
    pub fn new(channels: &'a ChannelSet, config: &'a SystemConfig) -> Result<Self, EvalError> {
        let (kernel, _) = phase_kernels(config, config.l_total, 0)?;
        let order = decoding_order(channels, config);
        let pairs = pairs(order.len());
        Ok(Self { channels, config, order, kernel, pairs })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn p_re(&self, group: usize, antenna: usize) -> usize {
        1 + 2 * (group * self.config.n_tx + antenna)
    }

    fn coords(&self, group: usize) -> StreamCoords {
        (0..self.config.n_tx).map(|a| (self.p_re(group, a), self.p_re(group, a) + 1)).collect()
    }

    fn rho(&self, pair: usize) -> usize {
        1 + 2 * self.config.num_groups() * self.config.n_tx + pair
    }

    pub fn n_vars(&self) -> usize {
        self.rho(self.pairs.len())
    }

    fn exact_rho(&self, precoders: &[Vec<Complex64>]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| {
                let h = &self.channels.downlink[self.config.groups[self.order[i]][0]];
                pair_sinr(h, precoders, &self.order, j).max(RHO_FLOOR)
            })
            .collect()
    }

    /// Equal-power MRT start.
    pub fn initial_state(&self) -> ScaState {
        let m = self.config.num_groups();
        let q = self.config.p_tx / m as f64;
        let mut precoders = vec![vec![Complex64::new(0.0, 0.0); self.config.n_tx]];
        for g in &self.config.groups {
            let h = &self.channels.downlink[g[0]];
            let nrm = libm::sqrt(norm_sqr(h));
            let dir = if nrm > 0.0 { scaled(h, 1.0 / nrm) } else { h.clone() };
            precoders.push(scaled(&dir, libm::sqrt(q)));
        }
        let rho_p = self.exact_rho(&precoders);
        ScaState { iteration: 0, precoders, rho_c: Vec::new(), rho_p, objective: 0.0 }
    }
}

impl Restriction for NomaRestriction<'_> {
    fn build(&self, state: &ScaState) -> Result<ConicProgram, ScaError> {
        let n = self.config.n_tx;
        let m = self.config.num_groups();
        let mut b = ProgramBuilder::new();
        b.add_var("t");
        for g in 0..m {
            for a in 0..n {
                b.add_var(format!("p_{g}[{a}].re"));
                b.add_var(format!("p_{g}[{a}].im"));
            }
        }
        for &(i, j) in &self.pairs {
            b.add_var(format!("rho[{},{}]", self.order[i], self.order[j]));
        }
        b.set_objective(0, -1.0);
        let inv_theta = 1.0 / self.kernel.time_fraction;
        for (idx, &(i, j)) in self.pairs.iter().enumerate() {
            let rho = self.rho(idx);
            b.nonneg(AffineExpr::var(rho).plus(-RHO_FLOOR));
            push_rate_cone(&mut b, AffineExpr::var(0).scale(inv_theta), rho, state.rho_p[idx], self.kernel.scale)?;
            let h = &self.channels.downlink[self.config.groups[self.order[i]][0]];
            let target = self.order[j];
            let others: Vec<StreamCoords> = (0..j).map(|q| self.coords(self.order[q])).collect();
            let rho_n = state.rho_p[idx];
            push_sinr_cone(&mut b, h, &state.precoders[1 + target], &self.coords(target), &others, rho, rho_n)?;
        }
        let mut power = vec![AffineExpr::constant(libm::sqrt(self.config.p_tx))];
        power.extend((1..1 + 2 * m * n).map(AffineExpr::var));
        b.add_block(Cone::SecondOrder(power.len()), &power);
        Ok(b.build())
    }

    fn tangent_point(&self, state: &ScaState) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        for g in 0..self.config.num_groups() {
            for a in 0..self.config.n_tx {
                x[self.p_re(g, a)] = state.precoders[1 + g][a].re;
                x[self.p_re(g, a) + 1] = state.precoders[1 + g][a].im;
            }
        }
        let mut t = f64::INFINITY;
        for (idx, &rho) in state.rho_p.iter().enumerate() {
            x[self.rho(idx)] = rho;
            t = t.min(self.kernel.time_fraction * (shannon(rho) - self.kernel.penalty(rho)));
        }
        x[0] = t;
        x
    }

    fn state_from(&self, x: &[f64], iteration: usize) -> ScaState {
        let n = self.config.n_tx;
        let mut precoders = vec![vec![Complex64::new(0.0, 0.0); n]];
        for g in 0..self.config.num_groups() {
            precoders.push((0..n).map(|a| Complex64::new(x[self.p_re(g, a)], x[self.p_re(g, a) + 1])).collect());
        }
        ScaState {
            iteration,
            precoders,
            rho_c: Vec::new(),
            rho_p: (0..self.pairs.len()).map(|idx| x[self.rho(idx)].max(RHO_FLOOR)).collect(),
            objective: x[0],
        }
    }
}

/// Max-min NOMA design for singleton groups.
pub fn solve<S: ConicSolver + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    solver: &S,
) -> Result<Solution, ScaError> {
    let restriction = NomaRestriction::new(channels, config)?;
    let init = restriction.initial_state();
    let outcome = run_sca(&restriction, solver, init, config.sca_tolerance, config.max_iterations)?;
    let mut precoders = outcome.state.precoders.clone();
    fit_power(&mut precoders, config.p_tx);
    let group_rates = noma_rates(channels, config, &precoders, restriction.order(), &restriction.kernel);
    let mmf = group_rates.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    Ok(Solution {
        precoders,
        common_split: vec![0.0; config.num_groups()],
        l_d: config.l_total,
        l_c: 0,
        theta: 1.0,
        group_rates,
        mmf,
        iterations: outcome.iterations,
        objective_trace: outcome.trace,
        diagnostics: SolveDiagnostics {
            t_star: outcome.x[0],
            converged: outcome.converged,
            hit_iteration_cap: outcome.hit_iteration_cap,
            max_warm_start_violation: outcome.max_warm_start_violation,
            common_stream: false,
            decoding_order: Some(restriction.order),
            note: outcome.note,
        },
    })
}
