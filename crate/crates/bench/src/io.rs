//! File formats: configuration and solution JSON, channel ensembles (binary
//! and JSON) and conic program dumps.
//!
//! # Channel ensemble binary layout (little-endian)
//!
//! ```text
//! magic        8 bytes  "RSMACHN\0"
//! version      u32      1
//! generator    u32 length + UTF-8 bytes
//! fingerprint  32 bytes SHA-256 of the channel-relevant configuration
//! base_seed    u64
//! count        u32      realizations
//! K, N_t, M    u32 × 3
//! groups       M × (u32 size, size × u32 user)
//! variances    K × f64
//! relay_var    f64
//! relay_group  u32
//! has_relay    u8
//! realization  count × (seed u64, K·N_t × (re f64, im f64),
//!                       [|relays|·|receivers| × (re f64, im f64)])
//! ```
//!
//! Relay gains are stored receiver-major, as in [`RelayChannels`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rsma_core::channel::{derive_seed, sample_channels_with, GENERATOR_ID};
use rsma_core::conic::{ConicProgram, ConicSolution};
use rsma_core::model::RelayChannels;
use rsma_core::{ChannelSet, Complex64, ConicSolver, SystemConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"RSMACHN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("malformed channel file: {0}")]
    Malformed(String),
    #[error("channel file dimensions K={k}, N_t={n_tx}, M={m} do not match the configuration (K={ck}, N_t={cn}, M={cm})")]
    Dimensions { k: usize, n_tx: usize, m: usize, ck: usize, cn: usize, cm: usize },
    #[error("channel file fingerprint {found} does not match {expected}")]
    Fingerprint { expected: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json { path: path.display().to_string(), source }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_config(path: &Path) -> Result<SystemConfig, IoError> {
    read_json(path)
}

/// Hex SHA-256 over the fields that determine channel draws.
pub fn fingerprint(config: &SystemConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"rsma-channels/v1");
    h.update((config.n_tx as u64).to_le_bytes());
    h.update((config.groups.len() as u64).to_le_bytes());
    for g in &config.groups {
        h.update((g.len() as u64).to_le_bytes());
        for &k in g {
            h.update((k as u64).to_le_bytes());
        }
    }
    h.update((config.channel_variances.len() as u64).to_le_bytes());
    for v in &config.channel_variances {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(config.relay_variance.to_bits().to_le_bytes());
    h.update((config.relay_group as u64).to_le_bytes());
    hex::encode(h.finalize())
}

/// Channel realizations drawn from one base seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEnsemble {
    pub generator: String,
    pub fingerprint: String,
    pub base_seed: u64,
    pub n_tx: usize,
    pub groups: Vec<Vec<usize>>,
    pub channel_variances: Vec<f64>,
    pub relay_variance: f64,
    pub relay_group: usize,
    pub realizations: Vec<ChannelSet>,
}

impl ChannelEnsemble {
    /// Realization `i` uses seed `derive_seed(base_seed, i)`.
    pub fn sample(config: &SystemConfig, base_seed: u64, count: usize, with_relay: bool) -> Self {
        let realizations = (0..count as u64)
            .map(|i| sample_channels_with(config, derive_seed(base_seed, i), with_relay))
            .collect();
        Self {
            generator: GENERATOR_ID.to_string(),
            fingerprint: fingerprint(config),
            base_seed,
            n_tx: config.n_tx,
            groups: config.groups.clone(),
            channel_variances: config.channel_variances.clone(),
            relay_variance: config.relay_variance,
            relay_group: config.relay_group,
            realizations,
        }
    }

    /// Configuration skeleton carrying the ensemble's channel parameters.
    fn header_config(&self) -> SystemConfig {
        let mut c = SystemConfig::multicast(
            self.n_tx,
            self.groups.clone(),
            self.channel_variances.clone(),
            1.0,
            200,
            rsma_core::Strategy::Rsma,
        );
        c.relay_variance = self.relay_variance;
        c.relay_group = self.relay_group;
        c
    }

    /// Checks internal consistency: stored fingerprint, generator, shapes.
    pub fn verify(&self) -> Result<(), IoError> {
        let expected = fingerprint(&self.header_config());
        if self.fingerprint != expected {
            return Err(IoError::Fingerprint { expected, found: self.fingerprint.clone() });
        }
        if self.generator != GENERATOR_ID {
            return Err(IoError::Malformed(format!("unknown generator {:?}", self.generator)));
        }
        let k = self.channel_variances.len();
        for (i, set) in self.realizations.iter().enumerate() {
            if set.downlink.len() != k || set.downlink.iter().any(|h| h.len() != self.n_tx) {
                return Err(IoError::Malformed(format!("realization {i} has the wrong shape")));
            }
        }
        Ok(())
    }

    /// Checks that the ensemble was drawn for `config`'s dimensions and
    /// channel statistics.
    pub fn check_against(&self, config: &SystemConfig) -> Result<(), IoError> {
        let (k, m) = (self.channel_variances.len(), self.groups.len());
        if k != config.num_users() || self.n_tx != config.n_tx || m != config.num_groups() {
            return Err(IoError::Dimensions {
                k,
                n_tx: self.n_tx,
                m,
                ck: config.num_users(),
                cn: config.n_tx,
                cm: config.num_groups(),
            });
        }
        let expected = fingerprint(config);
        if self.fingerprint != expected {
            return Err(IoError::Fingerprint { expected, found: self.fingerprint.clone() });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, self.generator.len());
        out.extend_from_slice(self.generator.as_bytes());
        let digest = hex::decode(&self.fingerprint).ok().filter(|d| d.len() == 32);
        out.extend_from_slice(&digest.unwrap_or_else(|| vec![0; 32]));
        out.extend_from_slice(&self.base_seed.to_le_bytes());
        put_u32(&mut out, self.realizations.len());
        put_u32(&mut out, self.channel_variances.len());
        put_u32(&mut out, self.n_tx);
        put_u32(&mut out, self.groups.len());
        for g in &self.groups {
            put_u32(&mut out, g.len());
            for &k in g {
                put_u32(&mut out, k);
            }
        }
        for v in &self.channel_variances {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.relay_variance.to_le_bytes());
        put_u32(&mut out, self.relay_group);
        let has_relay = self.realizations.first().is_some_and(|r| r.relay.is_some());
        out.push(u8::from(has_relay));
        for set in &self.realizations {
            out.extend_from_slice(&set.seed.to_le_bytes());
            for z in set.downlink.iter().flatten() {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
            if has_relay {
                for z in set.relay.as_ref().map_or(&[][..], |r| &r.gains[..]) {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(IoError::Malformed("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IoError::Malformed(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let generator = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| IoError::Malformed("generator id is not UTF-8".into()))?;
        let fingerprint = hex::encode(r.take(32)?);
        let base_seed = r.u64()?;
        let count = r.u32()? as usize;
        let k = r.u32()? as usize;
        let n_tx = r.u32()? as usize;
        let m = r.u32()? as usize;
        let mut groups = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let size = r.u32()? as usize;
            groups.push((0..size).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?);
        }
        let channel_variances = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let relay_variance = r.f64()?;
        let relay_group = r.u32()? as usize;
        let has_relay = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(IoError::Malformed(format!("bad relay flag {other}"))),
        };
        let mut ensemble = Self {
            generator,
            fingerprint,
            base_seed,
            n_tx,
            groups,
            channel_variances,
            relay_variance,
            relay_group,
            realizations: Vec::new(),
        };
        let skeleton = ensemble.header_config();
        let (relays, receivers) = (skeleton.relay_users(), skeleton.cooperative_receivers());
        for _ in 0..count {
            let seed = r.u64()?;
            let mut downlink = Vec::with_capacity(k);
            for _ in 0..k {
                downlink.push((0..n_tx).map(|_| r.complex()).collect::<Result<Vec<_>, _>>()?);
            }
            let relay = if has_relay {
                let gains =
                    (0..relays.len() * receivers.len()).map(|_| r.complex()).collect::<Result<Vec<_>, _>>()?;
                Some(RelayChannels { relays: relays.clone(), receivers: receivers.clone(), gains })
            } else {
                None
            };
            ensemble.realizations.push(ChannelSet {
                downlink,
                relay,
                seed,
                variances: ensemble.channel_variances.clone(),
                relay_variance,
            });
        }
        if r.pos != bytes.len() {
            return Err(IoError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ensemble)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("count fits u32").to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IoError::Malformed(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn complex(&mut self) -> Result<Complex64, IoError> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
}

/// On-disk encoding of a channel ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelFormat {
    Binary,
    Json,
}

impl ChannelFormat {
    /// JSON for `.json` paths, binary otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ChannelFormat::Json,
            _ => ChannelFormat::Binary,
        }
    }
}

pub fn save_ensemble(path: &Path, ensemble: &ChannelEnsemble, format: ChannelFormat) -> Result<(), IoError> {
    match format {
        ChannelFormat::Json => write_json(path, ensemble),
        ChannelFormat::Binary => {
            let mut f = fs::File::create(path).map_err(io_err(path))?;
            f.write_all(&ensemble.to_bytes()).map_err(io_err(path))
        }
    }
}

/// Loads and self-verifies an ensemble; the format is sniffed from the
/// magic bytes.
pub fn load_ensemble(path: &Path) -> Result<ChannelEnsemble, IoError> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let ensemble = if bytes.starts_with(MAGIC) {
        ChannelEnsemble::from_bytes(&bytes)?
    } else {
        serde_json::from_slice(&bytes).map_err(json_err(path))?
    };
    ensemble.verify()?;
    Ok(ensemble)
}

/// Solver wrapper that writes every program it sees as
/// `<dir>/program-<n>.txt` before delegating.
pub struct DumpingSolver<'a, S: ConicSolver + ?Sized> {
    inner: &'a S,
    dir: std::path::PathBuf,
    counter: std::sync::atomic::AtomicUsize,
}

impl<'a, S: ConicSolver + ?Sized> DumpingSolver<'a, S> {
    pub fn new(inner: &'a S, dir: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { inner, dir: dir.to_path_buf(), counter: Default::default() })
    }

    pub fn dumped(&self) -> usize {
        self.counter.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl<S: ConicSolver + ?Sized> ConicSolver for DumpingSolver<'_, S> {
    fn solve(&self, program: &ConicProgram) -> ConicSolution {
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        let path = self.dir.join(format!("program-{n:04}.txt"));
        if let Err(e) = fs::write(&path, program.to_text()) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
        self.inner.solve(program)
    }
}
