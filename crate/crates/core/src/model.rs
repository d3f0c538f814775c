//! Domain types shared across the crate.
//!
//! Users and groups are indexed from zero. Powers are linear and normalized
//! to a unit receiver noise power, so `p_tx = 100` is an SNR of 20 dB.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::fbl::BlocklengthMode;

/// Converts an SNR in dB to a linear transmit power (unit noise).
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Multiple-access strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Non-cooperative rate splitting (direct phase only).
    #[serde(rename = "RSMA")]
    Rsma,
    /// Rate splitting with the relay group forwarding the common stream.
    #[serde(rename = "C-RSMA")]
    CooperativeRsma,
    /// Private streams only.
    #[serde(rename = "SDMA")]
    Sdma,
    /// Power-domain superposition with successive interference cancellation.
    #[serde(rename = "NOMA")]
    Noma,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Rsma, Strategy::CooperativeRsma, Strategy::Sdma, Strategy::Noma];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Rsma => "RSMA",
            Strategy::CooperativeRsma => "C-RSMA",
            Strategy::Sdma => "SDMA",
            Strategy::Noma => "NOMA",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.tag().eq_ignore_ascii_case(tag))
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, Strategy::CooperativeRsma)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Target block error rate per strategy. C-RSMA uses the RSMA value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bler {
    pub rsma: f64,
    pub sdma: f64,
    pub noma: f64,
}

impl Default for Bler {
    fn default() -> Self {
        Self { rsma: 5e-6, sdma: 1e-5, noma: 5e-6 }
    }
}

impl Bler {
    pub fn for_strategy(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::Rsma | Strategy::CooperativeRsma => self.rsma,
            Strategy::Sdma => self.sdma,
            Strategy::Noma => self.noma,
        }
    }

    /// Same error target for every strategy.
    pub fn uniform(epsilon: f64) -> Self {
        Self { rsma: epsilon, sdma: epsilon, noma: epsilon }
    }
}

/// Candidate grid for the cooperative-phase blocklength `l_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcGrid {
    pub start: u32,
    pub step: u32,
}

impl Default for LcGrid {
    fn default() -> Self {
        Self { start: 100, step: 10 }
    }
}

impl LcGrid {
    /// All `l_c` candidates with `l_d = l_total − l_c ≥ start`, ascending.
    pub fn candidates(&self, l_total: u32) -> Vec<u32> {
        let mut out = Vec::new();
        if self.step == 0 {
            return out;
        }
        let mut lc = self.start;
        while lc <= l_total && l_total - lc >= self.start {
            out.push(lc);
            lc += self.step;
        }
        out
    }
}

fn default_relay_variance() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-3
}
fn default_max_iterations() -> usize {
    200
}

/// System and solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Transmit antennas at the base station.
    pub n_tx: usize,
    /// Disjoint user groups covering `0..K`; group `m` receives message `m`.
    pub groups: Vec<Vec<usize>>,
    /// Per-user channel variance `φ_k²` (linear); `K` is its length.
    pub channel_variances: Vec<f64>,
    /// Variance of the user-to-user relay channels (linear).
    #[serde(default = "default_relay_variance")]
    pub relay_variance: f64,
    /// Base-station power budget, linear, noise-normalized.
    pub p_tx: f64,
    /// Per-relay transmit power, linear, noise-normalized.
    #[serde(default)]
    pub p_relay: f64,
    #[serde(default)]
    pub bler: Bler,
    /// Total blocklength `l_n` in channel uses.
    pub l_total: u32,
    pub strategy: Strategy,
    pub blocklength_mode: BlocklengthMode,
    /// SCA stopping tolerance on the objective (bits/channel use).
    #[serde(default = "default_tolerance")]
    pub sca_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub lc_grid: LcGrid,
    /// Index of the group whose users relay the common stream.
    #[serde(default)]
    pub relay_group: usize,
}

impl SystemConfig {
    /// Singleton groups `{0}, {1}, ...` with the given channel variances.
    pub fn unicast(
        n_tx: usize,
        channel_variances: Vec<f64>,
        p_tx: f64,
        l_total: u32,
        strategy: Strategy,
    ) -> Self {
        let groups = (0..channel_variances.len()).map(|k| vec![k]).collect();
        Self::multicast(n_tx, groups, channel_variances, p_tx, l_total, strategy)
    }

    pub fn multicast(
        n_tx: usize,
        groups: Vec<Vec<usize>>,
        channel_variances: Vec<f64>,
        p_tx: f64,
        l_total: u32,
        strategy: Strategy,
    ) -> Self {
        Self {
            n_tx,
            groups,
            channel_variances,
            relay_variance: default_relay_variance(),
            p_tx,
            p_relay: 0.0,
            bler: Bler::default(),
            l_total,
            strategy,
            blocklength_mode: BlocklengthMode::Finite,
            sca_tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            lc_grid: LcGrid::default(),
            relay_group: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.channel_variances.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.bler.for_strategy(self.strategy)
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn with_mode(&self, mode: BlocklengthMode) -> Self {
        Self { blocklength_mode: mode, ..self.clone() }
    }

    pub fn with_blocklength(&self, l_total: u32) -> Self {
        Self { l_total, ..self.clone() }
    }

    /// Users of the relay group, ascending.
    pub fn relay_users(&self) -> Vec<usize> {
        let mut users = self.groups.get(self.relay_group).cloned().unwrap_or_default();
        users.sort_unstable();
        users
    }

    /// Users outside the relay group, ascending.
    pub fn cooperative_receivers(&self) -> Vec<usize> {
        let relays = self.relay_users();
        (0..self.num_users()).filter(|k| !relays.contains(k)).collect()
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut issues = Vec::new();
        let k = self.num_users();
        if self.n_tx == 0 {
            issues.push(ConfigError::NoAntennas);
        }
        if k == 0 {
            issues.push(ConfigError::NoUsers);
        }
        if self.groups.is_empty() {
            issues.push(ConfigError::NoGroups);
        }
        let mut owner: Vec<Option<usize>> = vec![None; k];
        for (m, group) in self.groups.iter().enumerate() {
            if group.is_empty() {
                issues.push(ConfigError::EmptyGroup(m));
            }
            for &user in group {
                match owner.get_mut(user) {
                    None => issues.push(ConfigError::UserOutOfRange { user, users: k }),
                    Some(slot @ None) => *slot = Some(m),
                    Some(Some(first)) => {
                        issues.push(ConfigError::Overlap { user, first: *first, second: m })
                    }
                }
            }
        }
        for (user, slot) in owner.iter().enumerate() {
            if slot.is_none() {
                issues.push(ConfigError::Unassigned(user));
            }
        }
        for (user, &v) in self.channel_variances.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                issues.push(ConfigError::Variance { user, value: v });
            }
        }
        if !(self.relay_variance > 0.0 && self.relay_variance.is_finite()) {
            issues.push(ConfigError::RelayVariance(self.relay_variance));
        }
        if !(self.p_tx >= 0.0 && self.p_tx.is_finite()) {
            issues.push(ConfigError::TransmitPower(self.p_tx));
        }
        if !(self.p_relay >= 0.0 && self.p_relay.is_finite()) {
            issues.push(ConfigError::RelayPower(self.p_relay));
        }
        for (name, eps) in [("RSMA", self.bler.rsma), ("SDMA", self.bler.sdma), ("NOMA", self.bler.noma)]
        {
            if !(eps > 0.0 && eps < 0.5) {
                issues.push(ConfigError::Bler { strategy: name, value: eps });
            }
        }
        if self.l_total == 0 {
            issues.push(ConfigError::Blocklength);
        }
        if !(self.sca_tolerance > 0.0 && self.sca_tolerance.is_finite()) {
            issues.push(ConfigError::Tolerance(self.sca_tolerance));
        }
        if self.max_iterations == 0 {
            issues.push(ConfigError::IterationCap);
        }
        if self.lc_grid.step == 0 || self.lc_grid.start == 0 {
            issues.push(ConfigError::Grid);
        }
        if self.strategy.is_cooperative() {
            if self.groups.len() < 2 {
                issues.push(ConfigError::CooperativeGroups(self.groups.len()));
            }
            if self.relay_group >= self.groups.len() {
                issues.push(ConfigError::RelayGroup(self.relay_group));
            }
            let required = 2 * u64::from(self.lc_grid.start);
            if u64::from(self.l_total) < required {
                issues.push(ConfigError::CooperativeBudget { l_total: self.l_total, required });
            }
        }
        if self.strategy == Strategy::Noma && self.groups.iter().any(|g| g.len() != 1) {
            issues.push(ConfigError::NomaGroups);
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(issues))
        }
    }

    /// Group index `m` that contains user `k`.
    pub fn group_of(&self, user: usize) -> Result<usize, ConfigError> {
        self.groups
            .iter()
            .position(|g| g.contains(&user))
            .ok_or(ConfigError::UserOutOfRange { user, users: self.num_users() })
    }

    /// Group index for every user; assumes a valid configuration.
    pub fn group_lookup(&self) -> Vec<usize> {
        let mut lookup = vec![usize::MAX; self.num_users()];
        for (m, group) in self.groups.iter().enumerate() {
            for &k in group {
                if let Some(slot) = lookup.get_mut(k) {
                    *slot = m;
                }
            }
        }
        lookup
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("at least one transmit antenna is required")]
    NoAntennas,
    #[error("no users configured")]
    NoUsers,
    #[error("no groups configured")]
    NoGroups,
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("user {user} is out of range for {users} users")]
    UserOutOfRange { user: usize, users: usize },
    #[error("user {user} appears in groups {first} and {second}")]
    Overlap { user: usize, first: usize, second: usize },
    #[error("user {0} is not assigned to any group")]
    Unassigned(usize),
    #[error("channel variance of user {user} must be positive, got {value}")]
    Variance { user: usize, value: f64 },
    #[error("relay channel variance must be positive, got {0}")]
    RelayVariance(f64),
    #[error("transmit power must be finite and nonnegative, got {0}")]
    TransmitPower(f64),
    #[error("relay power must be finite and nonnegative, got {0}")]
    RelayPower(f64),
    #[error("{strategy} block error rate must lie in (0, 0.5), got {value}")]
    Bler { strategy: &'static str, value: f64 },
    #[error("total blocklength must be positive")]
    Blocklength,
    #[error("SCA tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("iteration cap must be positive")]
    IterationCap,
    #[error("blocklength grid needs positive start and step")]
    Grid,
    #[error("cooperative transmission needs at least two groups, got {0}")]
    CooperativeGroups(usize),
    #[error("relay group {0} does not exist")]
    RelayGroup(usize),
    #[error("cooperative budget l_total={l_total} is below {required} (both phases need one grid point)")]
    CooperativeBudget { l_total: u32, required: u64 },
    #[error("NOMA requires singleton groups")]
    NomaGroups,
}

/// Every violated invariant of a configuration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {}", summarize(.0))]
pub struct ValidationErrors(pub Vec<ConfigError>);

fn summarize(issues: &[ConfigError]) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for (i, issue) in issues.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "{issue}");
    }
    out
}

/// User-to-user channels used in the cooperative phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayChannels {
    /// Relaying users (the relay group), ascending.
    pub relays: Vec<usize>,
    /// Receiving users (all other users), ascending.
    pub receivers: Vec<usize>,
    /// Row-major `receivers × relays` table of `h_{k,j}`.
    pub gains: Vec<Complex64>,
}

impl RelayChannels {
    pub fn gain(&self, receiver_pos: usize, relay_pos: usize) -> Complex64 {
        self.gains[receiver_pos * self.relays.len() + relay_pos]
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// `h_k`, one length-`n_tx` vector per user.
    pub downlink: Vec<Vec<Complex64>>,
    pub relay: Option<RelayChannels>,
    pub seed: u64,
    /// Variance each user's entries were drawn with.
    pub variances: Vec<f64>,
    pub relay_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("expected {expected} users, channel set has {found}")]
    Users { expected: usize, found: usize },
    #[error("user {user}: expected {expected} antennas, found {found}")]
    Antennas { user: usize, expected: usize, found: usize },
    #[error("non-finite channel entry for user {0}")]
    NonFinite(usize),
    #[error("cooperative strategy needs relay channels")]
    MissingRelay,
    #[error("relay table does not match the configured relay group")]
    RelayShape,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.downlink.len()
    }

    /// Dimension and finiteness check against a configuration. A relay
    /// table is required for C-RSMA and ignored otherwise.
    pub fn check(&self, config: &SystemConfig) -> Result<(), ChannelError> {
        if self.downlink.len() != config.num_users() {
            return Err(ChannelError::Users {
                expected: config.num_users(),
                found: self.downlink.len(),
            });
        }
        for (user, h) in self.downlink.iter().enumerate() {
            if h.len() != config.n_tx {
                return Err(ChannelError::Antennas { user, expected: config.n_tx, found: h.len() });
            }
            if h.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(ChannelError::NonFinite(user));
            }
        }
        if config.strategy.is_cooperative() {
            let relay = self.relay.as_ref().ok_or(ChannelError::MissingRelay)?;
            if relay.relays != config.relay_users()
                || relay.receivers != config.cooperative_receivers()
                || relay.gains.len() != relay.relays.len() * relay.receivers.len()
                || relay.gains.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))
            {
                return Err(ChannelError::RelayShape);
            }
        }
        Ok(())
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Optimal value of the last accepted convex subproblem.
    pub t_star: f64,
    pub converged: bool,
    pub hit_iteration_cap: bool,
    /// Worst violation of the previous iterate in the next subproblem.
    pub max_warm_start_violation: f64,
    /// Whether the returned precoder uses a common stream.
    pub common_stream: bool,
    /// NOMA decoding order (group indices, strongest first).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A precoder design and its evaluated rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// `[p_c, p_1, ..., p_M]`, each of length `n_tx`.
    pub precoders: Vec<Vec<Complex64>>,
    /// Common-rate portion `C_m` carried for each group.
    pub common_split: Vec<f64>,
    pub l_d: u32,
    pub l_c: u32,
    /// `l_d / l_total`.
    pub theta: f64,
    /// `R_m` in bits per channel use.
    pub group_rates: Vec<f64>,
    /// `max(min_m R_m, 0)`.
    pub mmf: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl Solution {
    /// Total transmit power `tr(P Pᴴ)`.
    pub fn total_power(&self) -> f64 {
        self.precoders.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn common_power(&self) -> f64 {
        self.precoders.first().map_or(0.0, |p| p.iter().map(|z| z.norm_sqr()).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SystemConfig {
        SystemConfig::unicast(4, vec![1.0, 0.09], 100.0, 500, Strategy::Rsma)
    }

    #[test]
    fn fig2a_config_is_valid() {
        assert!(base().validate().is_ok());
    }

    #[test]
    fn overlap_is_reported() {
        let mut c = base();
        c.groups = vec![vec![0, 1], vec![1]];
        let err = c.validate().unwrap_err();
        assert!(err.0.contains(&ConfigError::Overlap { user: 1, first: 0, second: 1 }));
    }

    #[test]
    fn all_violations_listed() {
        let mut c = base();
        c.groups = vec![vec![0, 0]];
        c.bler.sdma = 0.7;
        c.n_tx = 0;
        let err = c.validate().unwrap_err();
        assert!(err.0.len() >= 4, "{err}");
        assert!(err.0.contains(&ConfigError::NoAntennas));
        assert!(err.0.contains(&ConfigError::Unassigned(1)));
    }

    #[test]
    fn no_users() {
        let c = SystemConfig::unicast(2, vec![], 1.0, 100, Strategy::Sdma);
        assert!(c.validate().unwrap_err().0.contains(&ConfigError::NoUsers));
    }

    #[test]
    fn cooperative_budget() {
        let mut c = base().with_strategy(Strategy::CooperativeRsma);
        c.l_total = 150;
        let err = c.validate().unwrap_err();
        assert_eq!(err.0, vec![ConfigError::CooperativeBudget { l_total: 150, required: 200 }]);
        c.l_total = 200;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bler_range() {
        let mut c = base();
        c.bler.rsma = 0.5;
        assert!(c.validate().is_err());
        c.bler.rsma = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn group_lookup_examples() {
        let c = SystemConfig::multicast(
            2,
            vec![vec![0], vec![1, 2]],
            vec![1.0; 3],
            1.0,
            100,
            Strategy::Rsma,
        );
        assert_eq!(c.group_of(2), Ok(1));
        assert_eq!(c.group_of(0), Ok(0));
        assert_eq!(c.group_of(8), Err(ConfigError::UserOutOfRange { user: 8, users: 3 }));
        assert_eq!(c.group_lookup(), vec![0, 1, 1]);
    }

    #[test]
    fn grid_candidates() {
        let g = LcGrid::default();
        assert_eq!(g.candidates(300), (0..=10).map(|i| 100 + 10 * i).collect::<Vec<_>>());
        assert_eq!(g.candidates(200), vec![100]);
        assert!(g.candidates(199).is_empty());
    }

    #[test]
    fn strategy_tags_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_tag(s.tag()), Some(s));
        }
        assert_eq!(Strategy::from_tag("c-rsma"), Some(Strategy::CooperativeRsma));
        assert_eq!(Strategy::from_tag("OMA"), None);
    }

    #[test]
    fn snr_conversion() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
    }
}
