//! Deterministic Rayleigh channel sampling.
//!
//! Generator: ChaCha20 keyed with four splitmix64 outputs of the seed
//! (little-endian). Uniforms take the top 53 bits of a 64-bit draw, shifted
//! into `(0, 1]`. Gaussians come in pairs from the Box–Muller transform with
//! `libm` elementary functions, so draws are bit-identical on every platform.
//!
//! Fill order: downlink users ascending, antennas ascending, one complex entry
//! per Box–Muller pair (real part from the cosine branch). Relay gains follow,
//! receivers ascending then relays ascending.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{Rng, SeedableRng};

use crate::model::{ChannelSet, RelayChannels, SystemConfig};

/// Identifier stored alongside persisted channels.
pub const GENERATOR_ID: &str = "chacha20-splitmix64-boxmuller-v1";

/// One step of the splitmix64 sequence.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `index` in an ensemble rooted at `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut state = base ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut state)
}

/// Circularly-symmetric complex Gaussian source.
pub struct GaussianSource {
    rng: ChaCha20Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { rng: ChaCha20Rng::from_seed(key) }
    }

    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A `CN(0, variance)` draw.
    pub fn complex(&mut self, variance: f64) -> Complex64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * PI * u2;
        let s = libm::sqrt(0.5 * variance);
        Complex64::new(s * r * libm::cos(angle), s * r * libm::sin(angle))
    }
}

/// Draws one realization. Relay channels are generated when
/// `with_relay` is set (or the strategy is cooperative); downlink draws are
/// identical either way.
pub fn sample_channels_with(config: &SystemConfig, seed: u64, with_relay: bool) -> ChannelSet {
    let mut src = GaussianSource::new(seed);
    let downlink: Vec<Vec<Complex64>> = config
        .channel_variances
        .iter()
        .map(|&var| (0..config.n_tx).map(|_| src.complex(var)).collect())
        .collect();
    let relay = (with_relay || config.strategy.is_cooperative()).then(|| {
        let relays = config.relay_users();
        let receivers = config.cooperative_receivers();
        let gains = (0..relays.len() * receivers.len())
            .map(|_| src.complex(config.relay_variance))
            .collect();
        RelayChannels { relays, receivers, gains }
    });
    ChannelSet {
        downlink,
        relay,
        seed,
        variances: config.channel_variances.clone(),
        relay_variance: config.relay_variance,
    }
}

/// Draws one realization, with relay channels iff the strategy is cooperative.
pub fn sample_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    sample_channels_with(config, seed, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use alloc::vec;

    fn config(vars: Vec<f64>, n_tx: usize) -> SystemConfig {
        SystemConfig::unicast(n_tx, vars, 100.0, 500, Strategy::Rsma)
    }

    #[test]
    fn same_seed_same_draws() {
        let c = config(vec![1.0, 0.09], 4);
        assert_eq!(sample_channels(&c, 42), sample_channels(&c, 42));
        assert_ne!(sample_channels(&c, 42).downlink, sample_channels(&c, 43).downlink);
    }

    #[test]
    fn relay_table_does_not_disturb_downlink() {
        let c = config(vec![1.0, 0.09, 0.01], 2);
        let plain = sample_channels(&c, 7);
        let coop = sample_channels(&c.with_strategy(Strategy::CooperativeRsma), 7);
        assert_eq!(plain.downlink, coop.downlink);
        assert!(plain.relay.is_none());
        let r = coop.relay.unwrap();
        assert_eq!(r.relays, vec![0]);
        assert_eq!(r.receivers, vec![1, 2]);
        assert_eq!(r.gains.len(), 2);
    }

    #[test]
    fn empirical_variance() {
        // 10^4 entries per user.
        let c = config(vec![1.0, 0.09], 10_000);
        let set = sample_channels(&c, 1);
        for (k, target) in [(0, 1.0), (1, 0.09)] {
            let h = &set.downlink[k];
            let mean = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
            assert!((mean - target).abs() < 0.05 * target, "user {k}: {mean}");
            let re_var = h.iter().map(|z| z.re * z.re).sum::<f64>() / h.len() as f64;
            assert!((re_var - target / 2.0).abs() < 0.05 * target);
        }
    }

    #[test]
    fn uniforms_stay_in_unit_interval() {
        let mut src = GaussianSource::new(0);
        for _ in 0..10_000 {
            let u = src.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|i| derive_seed(9, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }
}
