//! Monte-Carlo experiments: presets mirroring the figure configurations,
//! the sweep runner, aggregation and CSV/JSON output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rsma_core::channel::{derive_seed, sample_channels_with, GENERATOR_ID};
use rsma_core::metrics::{common_power_fraction, relative_gain};
use rsma_core::model::db_to_linear;
use rsma_core::strategy::{self, evaluate_inf_fin};
use rsma_core::{BlocklengthMode, ChannelSet, ConicSolver, RunMode, Strategy, SystemConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_json, IoError};

/// Header of the long-form record CSV.
pub const RECORD_HEADER: &str = "seed,strategy,mode,l_n,mmf,theta,common_power_fraction,iters,wall_ms";
pub const AGGREGATE_HEADER: &str = "strategy,mode,l_n,count,failed,mean_mmf,se_mmf,mean_theta,mean_common_power_fraction";
pub const GAIN_HEADER: &str = "strategy,baseline,mode,l_n,relative_gain";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Topology and solver settings; `strategy`, `l_total`, `blocklength_mode`
    /// and the powers are set per cell.
    pub base: SystemConfig,
    pub strategies: Vec<Strategy>,
    pub modes: Vec<RunMode>,
    pub blocklengths: Vec<u32>,
    pub seeds: u32,
    pub base_seed: u64,
    /// Transmit SNR; noise power is 1, so `P_t = 10^(snr_db/10)`.
    pub snr_db: f64,
    /// Relay SNR; `None` disables relaying power (`P_r = 0`).
    #[serde(default)]
    pub relay_snr_db: Option<f64>,
    /// Strategy used as denominator of the relative-gain rows.
    #[serde(default)]
    pub baseline: Option<Strategy>,
    /// Record wall-clock times; off by default so outputs are reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub desk: bool,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("blocklength sweep is empty")]
    NoBlocklengths,
    #[error("strategy list is empty")]
    NoStrategies,
    #[error("mode list is empty")]
    NoModes,
    #[error("seed count must be at least 1")]
    NoSeeds,
    #[error("unknown preset {0:?}; expected one of {1}")]
    UnknownPreset(String, String),
    #[error("cell {strategy} l_n={l_total}: {reason}")]
    Cell { strategy: Strategy, l_total: u32, reason: String },
}

impl ExperimentSpec {
    pub fn p_tx(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    pub fn p_relay(&self) -> f64 {
        self.relay_snr_db.map_or(0.0, db_to_linear)
    }

    /// Configuration of one cell.
    pub fn cell_config(&self, strategy: Strategy, l_total: u32, mode: BlocklengthMode) -> SystemConfig {
        let mut c = self.base.clone();
        c.strategy = strategy;
        c.l_total = l_total;
        c.blocklength_mode = mode;
        c.p_tx = self.p_tx();
        c.p_relay = self.p_relay();
        c
    }

    /// Checks the sweep itself and every cell configuration.
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.blocklengths.is_empty() {
            return Err(SpecError::NoBlocklengths);
        }
        if self.strategies.is_empty() {
            return Err(SpecError::NoStrategies);
        }
        if self.modes.is_empty() {
            return Err(SpecError::NoModes);
        }
        if self.seeds == 0 {
            return Err(SpecError::NoSeeds);
        }
        for &s in &self.strategies {
            for &l in &self.blocklengths {
                for mode in [BlocklengthMode::Finite, BlocklengthMode::Infinite] {
                    self.cell_config(s, l, mode).validate().map_err(|e| SpecError::Cell {
                        strategy: s,
                        l_total: l,
                        reason: e.to_string(),
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..u64::from(self.seeds)).map(|i| derive_seed(self.base_seed, i)).collect()
    }

    fn needs_relay(&self) -> bool {
        self.strategies.iter().any(|s| s.is_cooperative())
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 6] = ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig5"];

/// Figure configurations. Desk scale uses 10 seeds and 2–4 blocklengths;
/// full scale uses 100 seeds and a denser sweep.
pub fn preset(name: &str, full: bool) -> Result<ExperimentSpec, SpecError> {
    let seeds = if full { 100 } else { 10 };
    let fin_inf = vec![RunMode::Fin, RunMode::Inf];
    let non_coop = vec![Strategy::Rsma, Strategy::Sdma, Strategy::Noma];
    let coop_model = |n_tx| SystemConfig::unicast(n_tx, vec![1.0, 0.09, 0.01], 1.0, 500, Strategy::Rsma);
    let (base, strategies, modes, desk_l, full_l, relay): (_, _, _, Vec<u32>, Vec<u32>, bool) = match name {
        "fig2a" => (
            SystemConfig::unicast(4, vec![1.0, 0.09], 1.0, 500, Strategy::Rsma),
            non_coop,
            fin_inf,
            vec![200, 500, 1000],
            (2..=20).map(|i| i * 100).collect(),
            false,
        ),
        "fig2b" => (
            SystemConfig::unicast(4, (0..8).map(|i| 1.0 - 0.125 * f64::from(i)).collect(), 1.0, 500, Strategy::Rsma),
            non_coop,
            fin_inf,
            vec![200, 500, 1000],
            (2..=20).map(|i| i * 100).collect(),
            false,
        ),
        "fig2c" => (
            SystemConfig::multicast(2, vec![vec![0, 1], vec![2, 3]], vec![1.0; 4], 1.0, 500, Strategy::Rsma),
            vec![Strategy::Rsma, Strategy::Sdma],
            fin_inf,
            vec![200, 500, 1000],
            (2..=20).map(|i| i * 100).collect(),
            false,
        ),
        "fig3a" | "fig3b" => (
            coop_model(if name == "fig3a" { 4 } else { 2 }),
            vec![Strategy::CooperativeRsma, Strategy::Rsma, Strategy::Sdma],
            fin_inf,
            vec![300, 500, 2000],
            (3..=20).map(|i| i * 100).collect(),
            true,
        ),
        "fig5" => (
            coop_model(4),
            vec![Strategy::CooperativeRsma],
            vec![RunMode::Fin, RunMode::InfFin],
            vec![300, 500],
            (3..=20).map(|i| i * 100).collect(),
            true,
        ),
        other => return Err(SpecError::UnknownPreset(other.to_string(), PRESETS.join(", "))),
    };
    Ok(ExperimentSpec {
        name: name.to_string(),
        base,
        strategies,
        modes,
        blocklengths: if full { full_l } else { desk_l },
        seeds,
        base_seed: 20240101,
        snr_db: 20.0,
        relay_snr_db: relay.then_some(20.0),
        baseline: Some(Strategy::Sdma),
        record_timing: false,
        desk: !full,
    })
}

/// One `(seed, strategy, mode, l_n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seed: u64,
    pub strategy: Strategy,
    pub mode: RunMode,
    pub l_n: u32,
    /// `None` when the cell failed.
    pub mmf: Option<f64>,
    pub theta: Option<f64>,
    pub common_power_fraction: Option<f64>,
    pub iters: usize,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Record {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub strategy: Strategy,
    pub mode: RunMode,
    pub l_n: u32,
    /// Successful records.
    pub count: usize,
    pub failed: usize,
    pub mean_mmf: f64,
    /// Sample standard deviation over `sqrt(count)`; zero for one record.
    pub se_mmf: f64,
    pub mean_theta: f64,
    pub mean_common_power_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub strategy: Strategy,
    pub baseline: Strategy,
    pub mode: RunMode,
    pub l_n: u32,
    pub relative_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub gains: Vec<GainRow>,
}

#[derive(Debug, Error)]
pub enum GainError {
    #[error("no aggregate for {0} {1} l_n={2}")]
    Missing(Strategy, RunMode, u32),
    #[error(transparent)]
    Metric(#[from] rsma_core::metrics::MetricError),
}

impl ExperimentResult {
    pub fn aggregate(&self, strategy: Strategy, mode: RunMode, l_n: u32) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy && a.mode == mode && a.l_n == l_n)
    }

    /// `(mean A − mean B) / mean B` for one blocklength and mode.
    pub fn relative_gain(&self, a: Strategy, b: Strategy, mode: RunMode, l_n: u32) -> Result<f64, GainError> {
        let ma = self.aggregate(a, mode, l_n).ok_or(GainError::Missing(a, mode, l_n))?;
        let mb = self.aggregate(b, mode, l_n).ok_or(GainError::Missing(b, mode, l_n))?;
        Ok(relative_gain(ma.mean_mmf, mb.mean_mmf)?)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

/// Mean and standard error, summed in record order.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-cell aggregates, ordered by strategy, mode and blocklength as listed
/// in the spec.
pub fn aggregate(spec: &ExperimentSpec, records: &[Record]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &strategy in &spec.strategies {
        for &mode in &spec.modes {
            for &l_n in &spec.blocklengths {
                let cell: Vec<&Record> = records
                    .iter()
                    .filter(|r| r.strategy == strategy && r.mode == mode && r.l_n == l_n)
                    .collect();
                let ok: Vec<&Record> = cell.iter().copied().filter(|r| !r.failed()).collect();
                let mmf: Vec<f64> = ok.iter().filter_map(|r| r.mmf).collect();
                let theta: Vec<f64> = ok.iter().filter_map(|r| r.theta).collect();
                let cpf: Vec<f64> = ok.iter().filter_map(|r| r.common_power_fraction).collect();
                let (mean_mmf, se_mmf) = mean_se(&mmf);
                out.push(Aggregate {
                    strategy,
                    mode,
                    l_n,
                    count: ok.len(),
                    failed: cell.len() - ok.len(),
                    mean_mmf,
                    se_mmf,
                    mean_theta: mean_se(&theta).0,
                    mean_common_power_fraction: mean_se(&cpf).0,
                });
            }
        }
    }
    out
}

fn gains(spec: &ExperimentSpec, aggregates: &[Aggregate]) -> Vec<GainRow> {
    let Some(baseline) = spec.baseline else { return Vec::new() };
    let find = |s, m, l| aggregates.iter().find(|a: &&Aggregate| a.strategy == s && a.mode == m && a.l_n == l);
    let mut out = Vec::new();
    for &strategy in spec.strategies.iter().filter(|&&s| s != baseline) {
        for &mode in &spec.modes {
            for &l_n in &spec.blocklengths {
                if let (Some(a), Some(b)) = (find(strategy, mode, l_n), find(baseline, mode, l_n)) {
                    if let Ok(g) = relative_gain(a.mean_mmf, b.mean_mmf) {
                        out.push(GainRow { strategy, baseline, mode, l_n, relative_gain: g });
                    }
                }
            }
        }
    }
    out
}

/// Runs every cell of `spec`. Channels are drawn once per seed and shared by
/// all strategies; a failing cell is recorded and the sweep continues.
///
/// With `jobs > 1`, seeds are distributed over scoped worker threads and
/// the records are merged back in seed order.
pub fn run_experiment<S: ConicSolver + Sync + ?Sized>(
    spec: &ExperimentSpec,
    solver: &S,
    jobs: usize,
) -> Result<ExperimentResult, SpecError> {
    spec.validate()?;
    let seeds = spec.seed_list();
    let jobs = jobs.clamp(1, seeds.len());
    let per_seed: Vec<Vec<Record>> = if jobs == 1 {
        seeds.iter().map(|&s| run_seed(spec, solver, s)).collect()
    } else {
        let mut slots: Vec<Option<Vec<Record>>> = vec![None; seeds.len()];
        std::thread::scope(|scope| {
            let chunks: Vec<_> = slots.chunks_mut(seeds.len().div_ceil(jobs)).collect();
            let mut start = 0;
            for chunk in chunks {
                let idx = start;
                start += chunk.len();
                let seeds = &seeds;
                scope.spawn(move || {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_seed(spec, solver, seeds[idx + i]));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("worker filled its slots")).collect()
    };
    let records: Vec<Record> = per_seed.into_iter().flatten().collect();
    let aggregates = aggregate(spec, &records);
    let gains = gains(spec, &aggregates);
    Ok(ExperimentResult { spec: spec.clone(), records, aggregates, gains })
}

fn run_seed<S: ConicSolver + ?Sized>(spec: &ExperimentSpec, solver: &S, seed: u64) -> Vec<Record> {
    let channels = sample_channels_with(&spec.base, seed, spec.needs_relay());
    let mut out = Vec::new();
    for &strategy in &spec.strategies {
        for &l_n in &spec.blocklengths {
            out.extend(run_cell(spec, solver, &channels, seed, strategy, l_n));
        }
    }
    out
}

fn run_cell<S: ConicSolver + ?Sized>(
    spec: &ExperimentSpec,
    solver: &S,
    channels: &ChannelSet,
    seed: u64,
    strategy: Strategy,
    l_n: u32,
) -> Vec<Record> {
    let fin_cfg = spec.cell_config(strategy, l_n, BlocklengthMode::Finite);
    let inf_cfg = spec.cell_config(strategy, l_n, BlocklengthMode::Infinite);
    let timed = |cfg: &SystemConfig| {
        let start = Instant::now();
        let run = strategy::solve(channels, cfg, solver);
        (run, start.elapsed().as_secs_f64() * 1e3)
    };
    let wants = |m| spec.modes.contains(&m);
    let fin = wants(RunMode::Fin).then(|| timed(&fin_cfg));
    let inf = (wants(RunMode::Inf) || wants(RunMode::InfFin)).then(|| timed(&inf_cfg));

    let record = |mode, run: Result<&rsma_core::strategy::StrategyRun, String>, wall_ms: f64| {
        let wall_ms = if spec.record_timing { wall_ms } else { 0.0 };
        match run {
            Ok(r) => Record {
                seed,
                strategy,
                mode,
                l_n,
                mmf: Some(r.solution.mmf),
                theta: Some(r.solution.theta),
                common_power_fraction: common_power_fraction(&r.solution).ok(),
                iters: r.solution.iterations,
                wall_ms,
                error: None,
            },
            Err(e) => Record {
                seed,
                strategy,
                mode,
                l_n,
                mmf: None,
                theta: None,
                common_power_fraction: None,
                iters: 0,
                wall_ms,
                error: Some(e),
            },
        }
    };

    let mut out = Vec::new();
    for &mode in &spec.modes {
        let rec = match mode {
            RunMode::Fin => {
                let (run, ms) = fin.as_ref().expect("fin requested");
                record(mode, run.as_ref().map_err(|e| e.to_string()), *ms)
            }
            RunMode::Inf => {
                let (run, ms) = inf.as_ref().expect("inf requested");
                record(mode, run.as_ref().map_err(|e| e.to_string()), *ms)
            }
            RunMode::InfFin => {
                let (run, ms) = inf.as_ref().expect("inf requested");
                let start = Instant::now();
                let evaluated = run
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|r| evaluate_inf_fin(channels, &fin_cfg, &r.solution).map_err(|e| e.to_string()));
                let ms = ms + start.elapsed().as_secs_f64() * 1e3;
                record(mode, evaluated.as_ref().map_err(Clone::clone), ms)
            }
        };
        out.push(rec);
    }
    out
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{x:?}"))
}

pub fn records_csv(records: &[Record]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:?}",
            r.seed,
            r.strategy.tag(),
            r.mode.tag(),
            r.l_n,
            num(r.mmf),
            num(r.theta),
            num(r.common_power_fraction),
            r.iters,
            r.wall_ms
        );
    }
    out
}

pub fn aggregates_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:?},{:?},{:?},{:?}",
            a.strategy.tag(),
            a.mode.tag(),
            a.l_n,
            a.count,
            a.failed,
            a.mean_mmf,
            a.se_mmf,
            a.mean_theta,
            a.mean_common_power_fraction
        );
    }
    out
}

pub fn gains_csv(gains: &[GainRow]) -> String {
    let mut out = String::from(GAIN_HEADER);
    out.push('\n');
    for g in gains {
        let _ = writeln!(out, "{},{},{},{},{:?}", g.strategy.tag(), g.baseline.tag(), g.mode.tag(), g.l_n, g.relative_gain);
    }
    out
}

/// Provenance written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub generator: String,
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub records: usize,
    pub failures: usize,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

/// Writes `records.csv`, `aggregates.csv`, `gains.csv`, `result.json` (as
/// requested) and `manifest.json` into `dir`.
pub fn emit(result: &ExperimentResult, dir: &Path, format: OutputFormat) -> Result<Manifest, IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.display().to_string(), source })?;
    let mut files = BTreeMap::new();
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| IoError::Io { path: path.display().to_string(), source })
    };
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        write("records.csv", records_csv(&result.records))?;
        write("aggregates.csv", aggregates_csv(&result.aggregates))?;
        write("gains.csv", gains_csv(&result.gains))?;
        files.insert("records".into(), "records.csv".into());
        files.insert("aggregates".into(), "aggregates.csv".into());
        files.insert("gains".into(), "gains.csv".into());
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        write_json(&dir.join("result.json"), result)?;
        files.insert("result".into(), "result.json".into());
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        generator: GENERATOR_ID.to_string(),
        spec: result.spec.clone(),
        seeds: result.spec.seed_list(),
        records: result.records.len(),
        failures: result.failures(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            for full in [false, true] {
                let p = preset(name, full).unwrap();
                p.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
        assert!(matches!(preset("fig9", false), Err(SpecError::UnknownPreset(..))));
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn fig2a_caption() {
        let p = preset("fig2a", false).unwrap();
        assert_eq!(p.base.n_tx, 4);
        assert_eq!(p.base.channel_variances, vec![1.0, 0.09]);
        assert!((p.p_tx() - 100.0).abs() < 1e-12);
        assert_eq!(p.blocklengths, vec![200, 500, 1000]);
        assert_eq!(p.seeds, 10);
    }
}
