//! Convex restriction of the RSMA max-min problem around an SCA iterate.
//!
//! Precoders are lifted to real coordinates (`re`, `im` per antenna), so
//! `hᴴp` becomes two linear forms. Variables, in order:
//!
//! `t`, the `M + 1` precoders (common first, omitted without a common
//! stream), `C_m`, `α_c,k`, `α_p,m`, `ρ_c,k`, `ρ_p,k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use num_complex::Complex64;

use crate::conic::{AffineExpr, Cone, ConicProgram, ProgramBuilder};
use crate::eval::{phase_kernels, EvalError};
use crate::fbl::{shannon, RateKernel};
use crate::model::{ChannelSet, SystemConfig};
use crate::taylor::{linearize_qol, taylor_sqrt_dispersion, TaylorError};

/// Lower bound kept on every SINR auxiliary.
pub const RHO_FLOOR: f64 = 1e-6;

/// Variable offsets of the RSMA subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsmaLayout {
    pub n_tx: usize,
    pub groups: usize,
    pub users: usize,
    pub common: bool,
    precoder_base: usize,
    split_base: usize,
    alpha_c_base: usize,
    alpha_p_base: usize,
    rho_c_base: usize,
    rho_p_base: usize,
    n_vars: usize,
}

impl RsmaLayout {
    pub fn new(n_tx: usize, groups: usize, users: usize, common: bool) -> Self {
        let streams = groups + usize::from(common);
        let precoder_base = 1;
        let split_base = precoder_base + 2 * n_tx * streams;
        let (alpha_c_base, alpha_p_base) = if common {
            (split_base + groups, split_base + groups + users)
        } else {
            (split_base, split_base)
        };
        let rho_c_base = alpha_p_base + groups;
        let rho_p_base = rho_c_base + if common { users } else { 0 };
        let n_vars = rho_p_base + users;
        Self {
            n_tx,
            groups,
            users,
            common,
            precoder_base,
            split_base,
            alpha_c_base,
            alpha_p_base,
            rho_c_base,
            rho_p_base,
            n_vars,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub const fn t(&self) -> usize {
        0
    }

    /// Real coordinate of stream `j` (0 = common, `1 + m` = group `m`).
    pub fn p_re(&self, stream: usize, antenna: usize) -> usize {
        let slot = if self.common {
            stream
        } else {
            debug_assert!(stream >= 1, "no common stream in this layout");
            stream - 1
        };
        self.precoder_base + 2 * (slot * self.n_tx + antenna)
    }

    pub fn p_im(&self, stream: usize, antenna: usize) -> usize {
        self.p_re(stream, antenna) + 1
    }

    pub fn first_stream(&self) -> usize {
        usize::from(!self.common)
    }

    pub fn split(&self, m: usize) -> Option<usize> {
        self.common.then_some(self.split_base + m)
    }

    pub fn alpha_c(&self, k: usize) -> Option<usize> {
        self.common.then_some(self.alpha_c_base + k)
    }

    pub fn alpha_p(&self, m: usize) -> usize {
        self.alpha_p_base + m
    }

    pub fn rho_c(&self, k: usize) -> Option<usize> {
        self.common.then_some(self.rho_c_base + k)
    }

    pub fn rho_p(&self, k: usize) -> usize {
        self.rho_p_base + k
    }

    fn power_coords(&self) -> core::ops::Range<usize> {
        self.precoder_base..self.split_base
    }

    /// Precoders `[p_c, p_1, …, p_M]`; the common one is zero without a
    /// common stream.
    pub fn precoders(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        (0..=self.groups)
            .map(|j| {
                (0..self.n_tx)
                    .map(|a| {
                        if j == 0 && !self.common {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(x[self.p_re(j, a)], x[self.p_im(j, a)])
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn common_split(&self, x: &[f64]) -> Vec<f64> {
        (0..self.groups).map(|m| self.split(m).map_or(0.0, |i| x[i].max(0.0))).collect()
    }

    fn write_precoders(&self, x: &mut [f64], precoders: &[Vec<Complex64>]) {
        for j in self.first_stream()..=self.groups {
            for a in 0..self.n_tx {
                x[self.p_re(j, a)] = precoders[j][a].re;
                x[self.p_im(j, a)] = precoders[j][a].im;
            }
        }
    }

    fn names(&self) -> Vec<alloc::string::String> {
        let mut names = vec![alloc::string::String::new(); self.n_vars];
        names[0] = "t".into();
        for j in self.first_stream()..=self.groups {
            let tag = if j == 0 { alloc::string::String::from("c") } else { format!("{}", j - 1) };
            for a in 0..self.n_tx {
                names[self.p_re(j, a)] = format!("p_{tag}[{a}].re");
                names[self.p_im(j, a)] = format!("p_{tag}[{a}].im");
            }
        }
        for m in 0..self.groups {
            if let Some(i) = self.split(m) {
                names[i] = format!("c[{m}]");
            }
            names[self.alpha_p(m)] = format!("alpha_p[{m}]");
        }
        for k in 0..self.users {
            if let Some(i) = self.alpha_c(k) {
                names[i] = format!("alpha_c[{k}]");
            }
            if let Some(i) = self.rho_c(k) {
                names[i] = format!("rho_c[{k}]");
            }
            names[self.rho_p(k)] = format!("rho_p[{k}]");
        }
        names
    }
}

/// SCA iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub iteration: usize,
    /// `[p_c, p_1, …, p_M]`.
    pub precoders: Vec<Vec<Complex64>>,
    /// Common-stream SINR bounds (empty without a common stream).
    pub rho_c: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub objective: f64,
}

/// Lifted coordinates `(re, im)` of one precoder, per antenna.
pub(crate) type StreamCoords = Vec<(usize, usize)>;

/// `ℜ{hᴴ p}` and `ℑ{hᴴ p}` as linear forms in the lifted variables.
pub(crate) fn inner_exprs(h: &[Complex64], coords: &[(usize, usize)]) -> (AffineExpr, AffineExpr) {
    let mut re = AffineExpr::default();
    let mut im = AffineExpr::default();
    for (z, &(x, y)) in h.iter().zip(coords) {
        // conj(h)(x + iy) = (hr x + hi y) + i(hr y − hi x)
        re = re.term(x, z.re).term(y, z.im);
        im = im.term(y, z.re).term(x, -z.im);
    }
    (re, im)
}

/// Adds `log2(1 + ρ) − (a + bρ) ≥ rhs` as `(ln2·(rhs + a + bρ), 1, 1 + ρ) ∈ K_exp`.
pub(crate) fn push_rate_cone(
    builder: &mut ProgramBuilder,
    rhs: AffineExpr,
    rho: usize,
    rho_n: f64,
    scale: f64,
) -> Result<(), TaylorError> {
    let tangent = taylor_sqrt_dispersion(rho_n, scale)?;
    let first = rhs.plus(tangent.intercept).term(rho, tangent.slope).scale(LN_2);
    builder.add_block(
        Cone::Exponential,
        &[first, AffineExpr::constant(1.0), AffineExpr::var(rho).plus(1.0)],
    );
    Ok(())
}

/// Adds `Σ_interferers |hᴴp_j|² + 1 ≤ minorant(|hᴴp_d|²/ρ)` as a rotated cone
/// `(minorant − 1, 1/2, ℜ/ℑ of each interferer)`.
pub(crate) fn push_sinr_cone(
    builder: &mut ProgramBuilder,
    h: &[Complex64],
    desired_now: &[Complex64],
    desired: &[(usize, usize)],
    interferers: &[StreamCoords],
    rho: usize,
    rho_n: f64,
) -> Result<(), TaylorError> {
    let minorant = linearize_qol(h, desired_now, rho_n)?;
    let mut head = AffineExpr::constant(minorant.constant - 1.0).term(rho, minorant.rho_coeff);
    for (d, &(x, y)) in minorant.direction.iter().zip(desired) {
        // ℜ{conj(d)(x + iy)} = d.re x + d.im y
        head = head.term(x, d.re).term(y, d.im);
    }
    let mut exprs = vec![head, AffineExpr::constant(0.5)];
    for coords in interferers {
        let (re, im) = inner_exprs(h, coords);
        exprs.push(re);
        exprs.push(im);
    }
    builder.add_block(Cone::RotatedSecondOrder(exprs.len()), &exprs);
    Ok(())
}

/// Everything that stays fixed across the SCA iterations of one solve.
#[derive(Debug, Clone)]
pub struct RsmaRestriction<'a> {
    pub channels: &'a ChannelSet,
    pub config: &'a SystemConfig,
    pub layout: RsmaLayout,
    pub l_d: u32,
    pub l_c: u32,
    pub theta: f64,
    pub direct: RateKernel,
    /// Constant cooperative-phase rates per user (zero outside the receivers).
    pub relay_rates: Vec<f64>,
    lookup: Vec<usize>,
    /// Users whose common rate is bounded by the direct phase alone.
    direct_users: Vec<usize>,
    /// Users that combine both phases.
    combining_users: Vec<usize>,
}

impl<'a> RsmaRestriction<'a> {
    pub fn new(
        channels: &'a ChannelSet,
        config: &'a SystemConfig,
        l_d: u32,
        l_c: u32,
        relay_rates: Vec<f64>,
        common: bool,
    ) -> Result<Self, EvalError> {
        let (direct, _) = phase_kernels(config, l_d, l_c)?;
        let layout = RsmaLayout::new(config.n_tx, config.num_groups(), config.num_users(), common);
        let (direct_users, combining_users) = if l_c > 0 {
            (config.relay_users(), config.cooperative_receivers())
        } else {
            ((0..config.num_users()).collect(), Vec::new())
        };
        Ok(Self {
            channels,
            config,
            layout,
            l_d,
            l_c,
            theta: f64::from(l_d) / f64::from(config.l_total),
            direct,
            relay_rates,
            lookup: config.group_lookup(),
            direct_users,
            combining_users,
        })
    }

    /// Assembles the convex restriction around `state`.
    pub fn build(&self, state: &ScaState) -> Result<ConicProgram, TaylorError> {
        let lay = &self.layout;
        let mut b = ProgramBuilder::new();
        for name in lay.names() {
            b.add_var(name);
        }
        b.set_objective(lay.t(), -1.0);

        let total_split = |coeff: f64| -> AffineExpr {
            (0..lay.groups)
                .filter_map(|m| lay.split(m))
                .fold(AffineExpr::default(), |e, i| e.term(i, coeff))
        };

        // C_m + θ α_p,m ≥ t
        for m in 0..lay.groups {
            let mut e = AffineExpr::var(lay.alpha_p(m)).scale(self.theta).term(lay.t(), -1.0);
            if let Some(c) = lay.split(m) {
                e = e.term(c, 1.0);
            }
            b.nonneg(e);
        }
        if lay.common {
            // θ α_c,k ≥ Σ C_j
            for &k in &self.direct_users {
                let alpha = lay.alpha_c(k).expect("common layout");
                b.nonneg(total_split(-1.0).term(alpha, self.theta));
            }
            // θ α_c,k + R_c,k^[2] ≥ Σ C_j
            for &k in &self.combining_users {
                let alpha = lay.alpha_c(k).expect("common layout");
                b.nonneg(total_split(-1.0).term(alpha, self.theta).plus(self.relay_rates[k]));
            }
            for m in 0..lay.groups {
                b.nonneg(AffineExpr::var(lay.split(m).expect("common layout")));
            }
        }
        for k in 0..lay.users {
            if let Some(rho) = lay.rho_c(k) {
                b.nonneg(AffineExpr::var(rho).plus(-RHO_FLOOR));
            }
            b.nonneg(AffineExpr::var(lay.rho_p(k)).plus(-RHO_FLOOR));
        }

        let scale = self.direct.scale;
        let streams: Vec<StreamCoords> = (0..=lay.groups)
            .map(|j| {
                if j < lay.first_stream() {
                    Vec::new()
                } else {
                    (0..lay.n_tx).map(|a| (lay.p_re(j, a), lay.p_im(j, a))).collect()
                }
            })
            .collect();
        for k in 0..lay.users {
            let h = &self.channels.downlink[k];
            let own = 1 + self.lookup[k];
            if lay.common {
                let rho = lay.rho_c(k).expect("common layout");
                let alpha = lay.alpha_c(k).expect("common layout");
                push_rate_cone(&mut b, AffineExpr::var(alpha), rho, state.rho_c[k], scale)?;
                let rho_n = state.rho_c[k];
                push_sinr_cone(&mut b, h, &state.precoders[0], &streams[0], &streams[1..], rho, rho_n)?;
            }
            let rho = lay.rho_p(k);
            let rho_n = state.rho_p[k];
            push_rate_cone(&mut b, AffineExpr::var(lay.alpha_p(own - 1)), rho, rho_n, scale)?;
            let others: Vec<StreamCoords> =
                (1..=lay.groups).filter(|&j| j != own).map(|j| streams[j].clone()).collect();
            push_sinr_cone(&mut b, h, &state.precoders[own], &streams[own], &others, rho, rho_n)?;
        }

        // tr(P Pᴴ) ≤ P_t
        let mut power = vec![AffineExpr::constant(libm::sqrt(self.config.p_tx))];
        power.extend(lay.power_coords().map(AffineExpr::var));
        b.add_block(Cone::SecondOrder(power.len()), &power);
        Ok(b.build())
    }

    /// The point of the restriction at which both linearizations are tight:
    /// precoders and SINR bounds from `state`, rate auxiliaries at their exact
    /// values, zero common split.
    pub fn tangent_point(&self, state: &ScaState) -> Vec<f64> {
        let lay = &self.layout;
        let mut x = vec![0.0; lay.n_vars()];
        lay.write_precoders(&mut x, &state.precoders);
        let exact = |rho: f64| shannon(rho) - self.direct.penalty(rho);
        let mut alpha_p = vec![f64::INFINITY; lay.groups];
        for k in 0..lay.users {
            x[lay.rho_p(k)] = state.rho_p[k];
            let m = self.lookup[k];
            alpha_p[m] = alpha_p[m].min(exact(state.rho_p[k]));
            if let (Some(rho), Some(alpha)) = (lay.rho_c(k), lay.alpha_c(k)) {
                x[rho] = state.rho_c[k];
                x[alpha] = exact(state.rho_c[k]);
            }
        }
        let mut t = f64::INFINITY;
        for (m, a) in alpha_p.iter().enumerate() {
            x[lay.alpha_p(m)] = *a;
            t = t.min(self.theta * a);
        }
        x[lay.t()] = t;
        x
    }

    /// Next iterate from a subproblem solution; SINR bounds are floored.
    pub fn state_from(&self, x: &[f64], iteration: usize) -> ScaState {
        let lay = &self.layout;
        ScaState {
            iteration,
            precoders: lay.precoders(x),
            rho_c: (0..lay.users)
                .filter_map(|k| lay.rho_c(k))
                .map(|i| x[i].max(RHO_FLOOR))
                .collect(),
            rho_p: (0..lay.users).map(|k| x[lay.rho_p(k)].max(RHO_FLOOR)).collect(),
            objective: x[lay.t()],
        }
    }
}

/// Assembles the subproblem for one iterate; see [`RsmaRestriction`].
pub fn build_subproblem(
    channels: &ChannelSet,
    config: &SystemConfig,
    state: &ScaState,
    l_d: u32,
    l_c: u32,
    relay_rates: &[f64],
    common: bool,
) -> Result<ConicProgram, crate::sca::ScaError> {
    let restriction = RsmaRestriction::new(channels, config, l_d, l_c, relay_rates.to_vec(), common)?;
    Ok(restriction.build(state)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;

    #[test]
    fn layout_counts() {
        // K = 2, M = 2, N_t = 4
        let lay = RsmaLayout::new(4, 2, 2, true);
        assert_eq!(lay.n_vars(), 1 + 24 + 2 + 2 + 2 + 2 + 2);
        let sdma = RsmaLayout::new(4, 2, 2, false);
        assert_eq!(sdma.n_vars(), 1 + 16 + 2 + 2);
        assert_eq!(sdma.split(0), None);
        assert_eq!(sdma.p_re(1, 0), 1);
        assert_eq!(lay.p_re(1, 0), 9);
    }

    #[test]
    fn precoder_round_trip() {
        let lay = RsmaLayout::new(2, 1, 1, true);
        let p = vec![
            vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)],
            vec![Complex64::new(5.0, 6.0), Complex64::new(7.0, 8.0)],
        ];
        let mut x = vec![0.0; lay.n_vars()];
        lay.write_precoders(&mut x, &p);
        assert_eq!(lay.precoders(&x), p);
    }

    #[test]
    fn inner_product_lifting() {
        let h = [Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5)];
        let p = [Complex64::new(-0.7, 0.4), Complex64::new(1.1, -0.9)];
        let x = [p[0].re, p[0].im, p[1].re, p[1].im];
        let (re, im) = inner_exprs(&h, &[(0, 1), (2, 3)]);
        let exact = crate::linalg::inner(&h, &p);
        assert!((re.eval(&x) - exact.re).abs() < 1e-15);
        assert!((im.eval(&x) - exact.im).abs() < 1e-15);
    }

    #[test]
    fn non_cooperative_has_no_combining_rows() {
        let cfg = crate::model::SystemConfig::unicast(2, vec![1.0, 1.0], 10.0, 300, Strategy::Rsma);
        let ch = crate::channel::sample_channels(&cfg, 3);
        let r = RsmaRestriction::new(&ch, &cfg, 300, 0, vec![0.0; 2], true).unwrap();
        assert_eq!(r.direct_users, vec![0, 1]);
        assert!(r.combining_users.is_empty());
        assert_eq!(r.theta, 1.0);
    }
}
