//! Experiment sweeps: algorithms x parameter values x seeded rounds.
//!
//! Independent runs execute on a worker pool; aggregation is a deterministic
//! fold ordered by (algorithm, value, round), so rerunning a sweep yields
//! byte-identical CSVs regardless of scheduling. The round index alone picks
//! the seed (`seed_base + round`), which pairs every algorithm and parameter
//! value on common random numbers.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Algorithm, ConfigError, RunConfig};
use crate::engine::{run, EngineError};
use crate::metrics::{format_opt, metrics_csv_row, RunMetrics, METRICS_CSV_COLUMNS};
use crate::radio::BandId;
use crate::Real;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Invalid(String),
    #[error("cannot read sweep spec {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse sweep spec {path}: {message}")]
    Parse { path: String, message: String },
    #[error("run failed for algorithm={algorithm} value={value} seed={seed}: {source}")]
    RunFailed {
        algorithm: String,
        value: String,
        seed: u64,
        source: EngineError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error writing results: {0}")]
    Output(#[from] io::Error),
}

/// Which scenario knob the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SimTimeCheckpoints,
    NumPus,
    NumSus,
    PuConcentrationBand,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepParameter::SimTimeCheckpoints => "sim_time_checkpoints",
            SweepParameter::NumPus => "num_pus",
            SweepParameter::NumSus => "num_sus",
            SweepParameter::PuConcentrationBand => "pu_concentration_band",
        };
        f.write_str(s)
    }
}

/// An algorithm plus an optional single-band restriction, e.g. `BARD`,
/// `DDSAAR`, `BARD:TV`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmVariant {
    pub algorithm: Algorithm,
    pub band_restriction: Option<BandId>,
}

impl fmt::Display for AlgorithmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.band_restriction {
            Some(b) => write!(f, "{}:{}", self.algorithm, b),
            None => write!(f, "{}", self.algorithm),
        }
    }
}

impl FromStr for AlgorithmVariant {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (alg, band) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let algorithm = alg
            .parse::<Algorithm>()
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        let band_restriction = band
            .map(|b| b.parse::<BandId>())
            .transpose()
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        Ok(Self {
            algorithm,
            band_restriction,
        })
    }
}

/// One parameter value of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Count(usize),
    Seconds(Real),
    Band(BandId),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Count(n) => write!(f, "{n}"),
            ParamValue::Seconds(s) => write!(f, "{s}"),
            ParamValue::Band(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub varied_parameter: SweepParameter,
    pub values: Vec<serde_json::Value>,
    /// Algorithm variants as strings (`"BARD"`, `"DDSAAR"`, `"BARD:TV"`, ...).
    pub algorithms: Vec<String>,
    pub rounds: u64,
    pub seed_base: u64,
    pub base_config: RunConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            varied_parameter: SweepParameter::NumPus,
            values: vec![0.into(), 50.into(), 100.into(), 150.into()],
            algorithms: vec!["BARD".into(), "DDSAAR".into()],
            rounds: 20,
            seed_base: 1,
            base_config: RunConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: SweepSpec = if text.trim().is_empty() {
            SweepSpec::default()
        } else {
            serde_json::from_str(&text).map_err(|e| SweepError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::Invalid("values must be non-empty".into()));
        }
        if self.rounds == 0 {
            return Err(SweepError::Invalid("rounds must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(SweepError::Invalid("algorithms must be non-empty".into()));
        }
        self.parsed_algorithms()?;
        self.parsed_values()?;
        self.base_config.validate()?;
        Ok(())
    }

    pub fn parsed_algorithms(&self) -> Result<Vec<AlgorithmVariant>, SweepError> {
        self.algorithms.iter().map(|s| s.parse()).collect()
    }

    pub fn parsed_values(&self) -> Result<Vec<ParamValue>, SweepError> {
        self.values
            .iter()
            .map(|v| parse_value(self.varied_parameter, v))
            .collect()
    }

    /// Hash of the canonical spec JSON, echoed in sweep outputs.
    pub fn spec_hash(&self) -> String {
        let mut c = self.base_config.clone();
        c.engine.seed = 0; // seeds come from (seed_base, round)
        let canonical = serde_json::json!({
            "varied_parameter": self.varied_parameter,
            "values": self.values,
            "algorithms": self.algorithms,
            "rounds": self.rounds,
            "seed_base": self.seed_base,
            "base_config_hash": c.config_hash(),
        });
        format!("{:016x}", fnv1a(canonical.to_string().as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn parse_value(param: SweepParameter, v: &serde_json::Value) -> Result<ParamValue, SweepError> {
    match param {
        SweepParameter::NumPus | SweepParameter::NumSus => v
            .as_u64()
            .map(|n| ParamValue::Count(n as usize))
            .ok_or_else(|| SweepError::Invalid(format!("{param} values must be counts, got {v}"))),
        SweepParameter::SimTimeCheckpoints => v
            .as_f64()
            .filter(|&x| x > 0.0)
            .map(ParamValue::Seconds)
            .ok_or_else(|| {
                SweepError::Invalid(format!("{param} values must be positive seconds, got {v}"))
            }),
        SweepParameter::PuConcentrationBand => v
            .as_str()
            .ok_or_else(|| SweepError::Invalid(format!("{param} values must be band names, got {v}")))
            .and_then(|s| {
                s.parse::<BandId>()
                    .map(ParamValue::Band)
                    .map_err(|e| SweepError::Invalid(e.to_string()))
            }),
    }
}

/// Derives the concrete config of one run of the sweep grid.
pub fn derive_config(
    base: &RunConfig,
    variant: AlgorithmVariant,
    param: SweepParameter,
    value: ParamValue,
    seed: u64,
) -> Result<RunConfig, SweepError> {
    let mut config = base.clone();
    config.engine.algorithm = variant.algorithm;
    config.engine.band_restriction = variant.band_restriction;
    config.engine.seed = seed;
    match (param, value) {
        (SweepParameter::NumPus, ParamValue::Count(n)) => config.topology.num_pus = n,
        (SweepParameter::NumSus, ParamValue::Count(n)) => config.topology.num_sus = n,
        (SweepParameter::SimTimeCheckpoints, ParamValue::Seconds(s)) => config.engine.horizon_s = s,
        (SweepParameter::PuConcentrationBand, ParamValue::Band(b)) => {
            config.pu.concentration_band = Some(b)
        }
        _ => return Err(SweepError::Invalid("value kind does not match parameter".into())),
    }
    config.validate()?;
    Ok(config)
}

/// Identity of one run within a sweep.
#[derive(Debug, Clone)]
pub struct RunKey {
    pub algorithm: String,
    pub value: String,
    pub round: u64,
    pub seed: u64,
    pub config_hash: String,
    pub band_restriction: Option<BandId>,
}

/// Mean and sample standard deviation over rounds for one grid cell.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub algorithm: String,
    pub value: String,
    pub rounds: u64,
    pub mdr_mean: Option<Real>,
    pub mdr_std: Option<Real>,
    pub latency_mean: Option<Real>,
    pub latency_std: Option<Real>,
    /// Mean usage share per band, fixed TV/ISM/LTE/CBRS order.
    pub usage_mean: [Real; 4],
}

pub struct SweepOutput {
    pub per_run: Vec<(RunKey, RunMetrics)>,
    pub aggregates: Vec<AggregateRow>,
}

/// Sample mean and standard deviation (n-1 denominator; 0 when n = 1).
pub fn mean_std(values: &[Real]) -> Option<(Real, Real)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as Real;
    let mean = values.iter().sum::<Real>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<Real>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Executes the whole grid and aggregates. Runs execute in parallel; any
/// failure aborts the sweep naming the offending (algorithm, value, seed).
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput, SweepError> {
    spec.validate()?;
    let variants = spec.parsed_algorithms()?;
    let values = spec.parsed_values()?;

    let mut jobs = Vec::new();
    for (ai, &variant) in variants.iter().enumerate() {
        for (vi, &value) in values.iter().enumerate() {
            for round in 0..spec.rounds {
                let seed = spec.seed_base + round;
                let config =
                    derive_config(&spec.base_config, variant, spec.varied_parameter, value, seed)?;
                jobs.push((ai, vi, round, variant, value, config));
            }
        }
    }

    let mut results: Vec<((usize, usize, u64), Result<(RunKey, RunMetrics), SweepError>)> = jobs
        .into_par_iter()
        .map(|(ai, vi, round, variant, value, config)| {
            let key = RunKey {
                algorithm: variant.to_string(),
                value: value.to_string(),
                round,
                seed: config.engine.seed,
                config_hash: config.config_hash(),
                band_restriction: variant.band_restriction,
            };
            let outcome = run(&config)
                .map(|out| (key.clone(), out.metrics))
                .map_err(|source| SweepError::RunFailed {
                    algorithm: key.algorithm.clone(),
                    value: key.value.clone(),
                    seed: key.seed,
                    source,
                });
            ((ai, vi, round), outcome)
        })
        .collect();
    // Deterministic fold order regardless of worker scheduling.
    results.sort_by_key(|(k, _)| *k);

    let mut per_run = Vec::with_capacity(results.len());
    for (_, outcome) in results {
        per_run.push(outcome?);
    }

    let mut aggregates = Vec::new();
    for variant in &variants {
        for value in &values {
            let cell: Vec<&RunMetrics> = per_run
                .iter()
                .filter(|(k, _)| {
                    k.algorithm == variant.to_string() && k.value == value.to_string()
                })
                .map(|(_, m)| m)
                .collect();
            let mdrs: Vec<Real> = cell.iter().filter_map(|m| m.mdr).collect();
            let lats: Vec<Real> = cell.iter().filter_map(|m| m.mean_latency_s).collect();
            let (mdr_mean, mdr_std) = match mean_std(&mdrs) {
                Some((m, s)) => (Some(m), Some(s)),
                None => (None, None),
            };
            let (latency_mean, latency_std) = match mean_std(&lats) {
                Some((m, s)) => (Some(m), Some(s)),
                None => (None, None),
            };
            let mut usage_mean = [0.0; 4];
            if !cell.is_empty() {
                for (k, band) in BandId::ALL.iter().enumerate() {
                    usage_mean[k] = cell.iter().map(|m| m.usage_share(*band)).sum::<Real>()
                        / cell.len() as Real;
                }
            }
            aggregates.push(AggregateRow {
                algorithm: variant.to_string(),
                value: value.to_string(),
                rounds: cell.len() as u64,
                mdr_mean,
                mdr_std,
                latency_mean,
                latency_std,
                usage_mean,
            });
        }
    }

    Ok(SweepOutput { per_run, aggregates })
}

/// Writes runs.csv, aggregate.csv and the plain-text band-usage table.
pub fn write_sweep_outputs(
    spec: &SweepSpec,
    output: &SweepOutput,
    out_dir: &Path,
) -> Result<(), SweepError> {
    std::fs::create_dir_all(out_dir).map_err(SweepError::Output)?;
    let spec_hash = spec.spec_hash();

    let mut runs = Vec::new();
    writeln!(runs, "# ddsa-sim v{}", env!("CARGO_PKG_VERSION"))?;
    writeln!(runs, "# sweep_hash={spec_hash} parameter={}", spec.varied_parameter)?;
    writeln!(runs, "parameter,value,round,{METRICS_CSV_COLUMNS}")?;
    for (key, m) in &output.per_run {
        writeln!(
            runs,
            "{},{},{},{}",
            spec.varied_parameter,
            key.value,
            key.round,
            metrics_csv_row(
                &key.config_hash,
                key.seed,
                &key.algorithm,
                key.band_restriction,
                m
            )
        )?;
    }
    std::fs::write(out_dir.join("runs.csv"), runs).map_err(SweepError::Output)?;

    let mut agg = Vec::new();
    writeln!(agg, "# ddsa-sim v{}", env!("CARGO_PKG_VERSION"))?;
    writeln!(agg, "# sweep_hash={spec_hash} parameter={}", spec.varied_parameter)?;
    writeln!(
        agg,
        "parameter,value,algorithm,rounds,mdr_mean,mdr_std,latency_mean_s,latency_std_s,\
usage_TV,usage_ISM,usage_LTE,usage_CBRS"
    )?;
    for row in &output.aggregates {
        writeln!(
            agg,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            spec.varied_parameter,
            row.value,
            row.algorithm,
            row.rounds,
            format_opt(row.mdr_mean),
            format_opt(row.mdr_std),
            format_opt(row.latency_mean),
            format_opt(row.latency_std),
            row.usage_mean[0],
            row.usage_mean[1],
            row.usage_mean[2],
            row.usage_mean[3],
        )?;
    }
    std::fs::write(out_dir.join("aggregate.csv"), agg).map_err(SweepError::Output)?;

    std::fs::write(out_dir.join("band_usage.txt"), band_usage_table(output))
        .map_err(SweepError::Output)?;
    Ok(())
}

/// Plain-text band-usage summary: one row per (algorithm, value), usage
/// percentages per band.
pub fn band_usage_table(output: &SweepOutput) -> String {
    let mut s = String::new();
    s.push_str("Band usage (% of successful transmissions, mean over rounds)\n");
    s.push_str(&format!(
        "{:<12} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
        "algorithm", "value", "TV", "ISM", "LTE", "CBRS"
    ));
    for row in &output.aggregates {
        s.push_str(&format!(
            "{:<12} {:>10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            row.algorithm,
            row.value,
            100.0 * row.usage_mean[0],
            100.0 * row.usage_mean[1],
            100.0 * row.usage_mean[2],
            100.0 * row.usage_mean[3],
        ));
    }
    s
}
