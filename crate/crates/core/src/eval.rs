//! SINR and achievable-rate evaluation for a given precoder design.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbl::{FblError, FblParams, RateKernel};
use crate::linalg::{inner, norm_sqr};
use crate::model::{ChannelSet, SystemConfig};

/// Relative slack on the power budget.
pub const POWER_SLACK: f64 = 1e-8;
/// Absolute slack on `Σ C_m ≤ R_c`.
pub const COMMON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expected {expected} precoders of length {n_tx}")]
    Precoders { expected: usize, n_tx: usize },
    #[error("expected {expected} common-rate entries, found {found}")]
    Split { expected: usize, found: usize },
    #[error("channel set does not match the configuration")]
    Channels,
    #[error("transmit power {used} exceeds budget {budget}")]
    Power { used: f64, budget: f64 },
    #[error("common-rate split must be nonnegative")]
    NegativeSplit,
    #[error("common split {allocated} exceeds the decodable common rate {rate}")]
    CommonOverallocated { allocated: f64, rate: f64 },
    #[error("blocklengths l_d={l_d}, l_c={l_c} do not add up to {l_total}")]
    Blocklengths { l_d: u32, l_c: u32, l_total: u32 },
    #[error("cooperative phase requested without relay channels")]
    MissingRelay,
    #[error(transparent)]
    Fbl(#[from] FblError),
}

/// Per-user SINRs of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrTable {
    /// Common stream in the direct phase, `γ_c,k^[1]`.
    pub common: Vec<f64>,
    /// Own-group private stream after removing the common stream, `γ_p,k^[1]`.
    pub private: Vec<f64>,
    /// Relayed common stream `γ_c,k^[2]` for cooperative receivers.
    pub relay_common: Vec<Option<f64>>,
}

/// SINRs of the common and private streams, and of the relayed common
/// stream when the channel set carries a relay table.
///
/// `precoders[0]` is the common precoder, `precoders[1 + m]` serves group `m`.
pub fn evaluate_sinrs(
    channels: &ChannelSet,
    precoders: &[Vec<Complex64>],
    config: &SystemConfig,
) -> Result<SinrTable, EvalError> {
    let m = config.num_groups();
    if precoders.len() != m + 1 || precoders.iter().any(|p| p.len() != config.n_tx) {
        return Err(EvalError::Precoders { expected: m + 1, n_tx: config.n_tx });
    }
    if channels.num_users() != config.num_users()
        || channels.downlink.iter().any(|h| h.len() != config.n_tx)
    {
        return Err(EvalError::Channels);
    }
    let lookup = config.group_lookup();
    let k_users = config.num_users();
    let mut common = vec![0.0; k_users];
    let mut private = vec![0.0; k_users];
    for (k, h) in channels.downlink.iter().enumerate() {
        let gains: Vec<f64> = precoders.iter().map(|p| inner(h, p).norm_sqr()).collect();
        let all_private: f64 = gains[1..].iter().sum();
        common[k] = gains[0] / (all_private + 1.0);
        let own = gains[1 + lookup[k]];
        private[k] = own / (all_private - own + 1.0);
    }
    let mut relay_common = vec![None; k_users];
    if let Some(relay) = &channels.relay {
        for (r, &k) in relay.receivers.iter().enumerate() {
            let gain: f64 = (0..relay.relays.len()).map(|j| relay.gain(r, j).norm_sqr()).sum();
            relay_common[k] = Some(config.p_relay * gain);
        }
    }
    Ok(SinrTable { common, private, relay_common })
}

/// Direct-phase and (optional) cooperative-phase rate kernels for a split
/// `l_d + l_c = l_total`.
pub fn phase_kernels(
    config: &SystemConfig,
    l_d: u32,
    l_c: u32,
) -> Result<(RateKernel, Option<RateKernel>), EvalError> {
    if l_d.checked_add(l_c) != Some(config.l_total) {
        return Err(EvalError::Blocklengths { l_d, l_c, l_total: config.l_total });
    }
    let eps = config.epsilon();
    let mode = config.blocklength_mode;
    let total = f64::from(config.l_total);
    let direct = FblParams::new(eps, l_d, f64::from(l_d) / total, mode)?.kernel()?;
    let relay = if l_c > 0 {
        Some(FblParams::new(eps, l_c, f64::from(l_c) / total, mode)?.kernel()?)
    } else {
        None
    };
    Ok((direct, relay))
}

/// Constant cooperative-phase rates `R_c,k^[2]` (clamped at zero) for every
/// user; zero for users outside the receiver set.
pub fn relay_rates(
    channels: &ChannelSet,
    config: &SystemConfig,
    kernel: &RateKernel,
) -> Result<Vec<f64>, EvalError> {
    let relay = channels.relay.as_ref().ok_or(EvalError::MissingRelay)?;
    let mut out = vec![0.0; config.num_users()];
    for (r, &k) in relay.receivers.iter().enumerate() {
        let gain: f64 = (0..relay.relays.len()).map(|j| relay.gain(r, j).norm_sqr()).sum();
        out[k] = kernel.rate(config.p_relay * gain).max(0.0);
    }
    Ok(out)
}

/// Borrowed view of a candidate design.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub precoders: &'a [Vec<Complex64>],
    pub common_split: &'a [f64],
    pub l_d: u32,
    pub l_c: u32,
}

/// Rates achieved by a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievedRates {
    /// Decodable common rate `R_c`.
    pub common: f64,
    /// Per-user (clamped) direct-phase common rate.
    pub common_direct: Vec<f64>,
    /// Per-group worst private rate.
    pub private_min: Vec<f64>,
    /// `R_m = C_m + min_k R_p,k`.
    pub group: Vec<f64>,
    /// `max(min_m R_m, 0)`.
    pub mmf: f64,
}

/// Decodable common rate and per-group private rates, without checking a
/// common split.
pub fn stream_rates(
    channels: &ChannelSet,
    precoders: &[Vec<Complex64>],
    l_d: u32,
    l_c: u32,
    config: &SystemConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>), EvalError> {
    let used: f64 = precoders.iter().map(|p| norm_sqr(p)).sum();
    if used > config.p_tx * (1.0 + POWER_SLACK) + f64::MIN_POSITIVE {
        return Err(EvalError::Power { used, budget: config.p_tx });
    }
    let sinr = evaluate_sinrs(channels, precoders, config)?;
    let (direct, relay) = phase_kernels(config, l_d, l_c)?;
    let common_direct: Vec<f64> = sinr.common.iter().map(|&g| direct.rate(g).max(0.0)).collect();
    let common = match relay {
        None => common_direct.iter().copied().fold(f64::INFINITY, f64::min),
        Some(kernel) => {
            let second = relay_rates(channels, config, &kernel)?;
            let relays = config.relay_users();
            let receivers = config.cooperative_receivers();
            let first_phase =
                relays.iter().map(|&k| common_direct[k]).fold(f64::INFINITY, f64::min);
            let combined = receivers
                .iter()
                .map(|&k| common_direct[k] + second[k])
                .fold(f64::INFINITY, f64::min);
            first_phase.min(combined)
        }
    };
    let private_min = config
        .groups
        .iter()
        .map(|g| g.iter().map(|&k| direct.rate(sinr.private[k]).max(0.0)).fold(f64::INFINITY, f64::min))
        .collect();
    Ok((common, common_direct, private_min))
}

/// Rates of a design, with per-stream rates clamped at zero before the
/// common and group rates are combined.
pub fn achieved_rates(
    channels: &ChannelSet,
    design: Design<'_>,
    config: &SystemConfig,
) -> Result<AchievedRates, EvalError> {
    let m = config.num_groups();
    if design.common_split.len() != m {
        return Err(EvalError::Split { expected: m, found: design.common_split.len() });
    }
    if design.common_split.iter().any(|&c| !(c >= 0.0)) {
        return Err(EvalError::NegativeSplit);
    }
    let (common, common_direct, private_min) =
        stream_rates(channels, design.precoders, design.l_d, design.l_c, config)?;
    let allocated: f64 = design.common_split.iter().sum();
    if allocated > common + COMMON_SLACK {
        return Err(EvalError::CommonOverallocated { allocated, rate: common });
    }
    let group: Vec<f64> =
        design.common_split.iter().zip(&private_min).map(|(c, p)| c + p).collect();
    let mmf = group.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    Ok(AchievedRates { common, common_direct, private_min, group, mmf })
}

/// Optimal common split for max-min fairness: raise the weakest groups to a
/// common water level with total budget `budget` (exact LP solution).
pub fn water_fill(private: &[f64], budget: f64) -> Vec<f64> {
    let n = private.len();
    if n == 0 || !(budget > 0.0) {
        return vec![0.0; n];
    }
    let mut sorted: Vec<f64> = private.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Find the level L with Σ max(0, L − r_m) = budget.
    let mut level = sorted[n - 1] + budget / n as f64;
    let mut prefix = 0.0;
    for i in 0..n {
        prefix += sorted[i];
        let candidate = (budget + prefix) / (i + 1) as f64;
        if i + 1 == n || candidate <= sorted[i + 1] {
            level = candidate;
            break;
        }
    }
    private.iter().map(|&r| (level - r).max(0.0)).collect()
}
