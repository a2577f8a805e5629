//! Run configuration: JSON loading, defaults and validation.
//!
//! Every field has a default, so an empty file (or `{}`) resolves to the
//! stock scenario: a 2000 m x 2000 m area, 30 secondary nodes (3 sources,
//! 3 destinations, 24 relays), 150 primary users, four bands with 6 channels
//! each, a 480 s horizon and the stock learning parameters. Unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{BandCatalog, BandId, BandProfile, RadioError};
use crate::scalar::cast;
use crate::topology::DeploySpec;
use crate::traffic::TrafficParams;
use crate::{RadioParams, RlParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<RadioError> for ConfigError {
    fn from(e: RadioError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Forwarding algorithm executed by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "BARD")]
    Bard,
    #[serde(rename = "DDSAAR")]
    Ddsaar,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Bard => f.write_str("BARD"),
            Algorithm::Ddsaar => f.write_str("DDSAAR"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BARD" => Ok(Algorithm::Bard),
            "DDSAAR" => Ok(Algorithm::Ddsaar),
            other => Err(ConfigError::Invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// When the per-node exploration rate is multiplied by its decay factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayCadence {
    /// Once per packet decision.
    Decision,
    /// Once per engine timestep.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub path_loss_exponent: f64,
    pub rx_power_threshold_dbm: f64,
    pub noise_floor_dbm: f64,
    pub reference_distance_m: f64,
    pub speed_of_light_m_s: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.8,
            rx_power_threshold_dbm: -95.0,
            noise_floor_dbm: -100.0,
            reference_distance_m: 1.0,
            speed_of_light_m_s: 299_792_458.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub band: BandId,
    pub carrier_freq_hz: f64,
    pub channel_bandwidth_hz: f64,
    pub transmit_power_w: f64,
    pub num_channels: usize,
}

fn default_bands() -> Vec<BandSection> {
    vec![
        BandSection {
            band: BandId::Tv,
            carrier_freq_hz: 600e6,
            channel_bandwidth_hz: 6e6,
            transmit_power_w: 4.0,
            num_channels: 6,
        },
        BandSection {
            band: BandId::Ism,
            carrier_freq_hz: 2.4e9,
            channel_bandwidth_hz: 20e6,
            transmit_power_w: 1.0,
            num_channels: 6,
        },
        BandSection {
            band: BandId::Lte,
            carrier_freq_hz: 1.9e9,
            channel_bandwidth_hz: 20e6,
            transmit_power_w: 4.0,
            num_channels: 6,
        },
        BandSection {
            band: BandId::Cbrs,
            carrier_freq_hz: 3.5e9,
            channel_bandwidth_hz: 40e6,
            transmit_power_w: 10.0,
            num_channels: 6,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub num_sus: usize,
    pub num_sources: usize,
    pub num_destinations: usize,
    pub num_pus: usize,
    pub queue_capacity: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            area_width_m: 2000.0,
            area_height_m: 2000.0,
            num_sus: 30,
            num_sources: 3,
            num_destinations: 3,
            num_pus: 150,
            queue_capacity: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub burst_mean_interarrival_s: f64,
    pub burst_size_min: u32,
    pub burst_size_max: u32,
    pub message_sizes_mbit: Vec<u32>,
    pub packet_size_mbit: u32,
    pub ttl_s: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            burst_mean_interarrival_s: 15.0,
            burst_size_min: 5,
            burst_size_max: 15,
            message_sizes_mbit: vec![5, 20, 40, 60],
            packet_size_mbit: 5,
            ttl_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PuSection {
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    /// Forces all PUs into one band ("all PUs in one band" scenarios).
    pub concentration_band: Option<BandId>,
}

impl Default for PuSection {
    fn default() -> Self {
        Self {
            duration_min_s: 1.0,
            duration_max_s: 4.0,
            concentration_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub delta: f64,
    pub mu: f64,
    pub rho: f64,
    pub epsilon_decay_cadence: DecayCadence,
}

impl Default for RlSection {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            gamma: 0.6,
            epsilon0: 1.0,
            epsilon_decay: 0.95,
            epsilon_min: 0.1,
            eta1: 2.0,
            eta2: 2.0,
            eta3: 2.0,
            delta: 10.0,
            mu: 2.5,
            rho: 1.0,
            epsilon_decay_cadence: DecayCadence::Decision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub horizon_s: f64,
    pub tau_delta_s: f64,
    pub algorithm: Algorithm,
    pub band_restriction: Option<BandId>,
    pub seed: u64,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            horizon_s: 480.0,
            tau_delta_s: 1.0,
            algorithm: Algorithm::Bard,
            band_restriction: None,
            seed: 1,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub radio: RadioSection,
    pub bands: Vec<BandSection>,
    pub topology: TopologySection,
    pub traffic: TrafficSection,
    pub pu: PuSection,
    pub rl: RlSection,
    pub engine: EngineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            radio: RadioSection::default(),
            bands: default_bands(),
            topology: TopologySection::default(),
            traffic: TrafficSection::default(),
            pu: PuSection::default(),
            rl: RlSection::default(),
            engine: EngineSection::default(),
        }
    }
}

impl RunConfig {
    /// Loads and validates a configuration file. An empty file means "all
    /// defaults".
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse {
                path: origin.to_string(),
                message: e.to_string(),
            })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.radio_params().validate()?;
        if self.bands.is_empty() {
            return Err(ConfigError::Invalid("at least one band is required".into()));
        }
        for (k, b) in self.bands.iter().enumerate() {
            if self.bands[..k].iter().any(|o| o.band == b.band) {
                return Err(ConfigError::Invalid(format!("band {} listed twice", b.band)));
            }
        }
        if let Some(b) = self.engine.band_restriction {
            if !self.bands.iter().any(|s| s.band == b) {
                return Err(ConfigError::Invalid(format!(
                    "band_restriction {b} is not a configured band"
                )));
            }
        }
        if let Some(b) = self.pu.concentration_band {
            if !self.effective_band_sections().iter().any(|s| s.band == b) {
                return Err(ConfigError::Invalid(format!(
                    "concentration_band {b} is not in the active catalog"
                )));
            }
        }
        let t = &self.topology;
        if t.num_sources + t.num_destinations > t.num_sus {
            return Err(ConfigError::Invalid(format!(
                "{} sources + {} destinations exceed {} nodes",
                t.num_sources, t.num_destinations, t.num_sus
            )));
        }
        if t.num_destinations == 0 {
            return Err(ConfigError::Invalid(
                "at least one destination node is required".into(),
            ));
        }
        if t.queue_capacity == 0 {
            return Err(ConfigError::Invalid("queue_capacity must be >= 1".into()));
        }
        if t.area_width_m <= 0.0 || t.area_height_m <= 0.0 {
            return Err(ConfigError::Invalid("deployment area must be positive".into()));
        }
        self.traffic_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.pu.duration_min_s > 0.0 && self.pu.duration_min_s <= self.pu.duration_max_s) {
            return Err(ConfigError::Invalid(format!(
                "PU duration bounds [{}, {}] must satisfy 0 < min <= max",
                self.pu.duration_min_s, self.pu.duration_max_s
            )));
        }
        self.rl_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.engine;
        if e.horizon_s <= 0.0 || e.tau_delta_s <= 0.0 {
            return Err(ConfigError::Invalid(
                "horizon and tau_delta must be positive".into(),
            ));
        }
        let steps = e.horizon_s / e.tau_delta_s;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "horizon ({} s) must be an integer multiple of tau_delta ({} s)",
                e.horizon_s, e.tau_delta_s
            )));
        }
        Ok(())
    }

    /// Band sections after applying any single-band restriction.
    pub fn effective_band_sections(&self) -> Vec<BandSection> {
        match self.engine.band_restriction {
            Some(b) => self.bands.iter().filter(|s| s.band == b).cloned().collect(),
            None => self.bands.clone(),
        }
    }

    /// Derives the active catalog (ranges and bit rates included).
    pub fn build_catalog(&self) -> Result<BandCatalog, ConfigError> {
        let params = self.radio_params();
        let profiles = self
            .effective_band_sections()
            .iter()
            .map(|s| {
                BandProfile::derive(
                    s.band,
                    s.carrier_freq_hz,
                    s.channel_bandwidth_hz,
                    s.transmit_power_w,
                    s.num_channels,
                    &params,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BandCatalog::new(profiles)?)
    }

    pub fn radio_params(&self) -> RadioParams {
        RadioParams {
            path_loss_exponent: self.radio.path_loss_exponent,
            rx_power_threshold_dbm: self.radio.rx_power_threshold_dbm,
            noise_floor_dbm: self.radio.noise_floor_dbm,
            reference_distance_m: self.radio.reference_distance_m,
            speed_of_light: self.radio.speed_of_light_m_s,
        }
    }

    pub fn rl_params(&self) -> RlParams {
        RlParams {
            alpha: cast(self.rl.alpha),
            gamma: cast(self.rl.gamma),
            epsilon0: cast(self.rl.epsilon0),
            epsilon_decay: cast(self.rl.epsilon_decay),
            epsilon_min: cast(self.rl.epsilon_min),
            eta1: cast(self.rl.eta1),
            eta2: cast(self.rl.eta2),
            eta3: cast(self.rl.eta3),
            delta: cast(self.rl.delta),
            mu: cast(self.rl.mu),
            rho: cast(self.rl.rho),
        }
    }

    pub fn traffic_params(&self) -> TrafficParams {
        TrafficParams {
            burst_mean_interarrival_s: self.traffic.burst_mean_interarrival_s,
            burst_size_range: (self.traffic.burst_size_min, self.traffic.burst_size_max),
            message_sizes_mbit: self.traffic.message_sizes_mbit.clone(),
            packet_size_mbit: self.traffic.packet_size_mbit,
            ttl_s: self.traffic.ttl_s,
        }
    }

    pub fn deploy_spec(&self) -> DeploySpec {
        DeploySpec {
            area_width_m: self.topology.area_width_m,
            area_height_m: self.topology.area_height_m,
            num_sus: self.topology.num_sus,
            num_sources: self.topology.num_sources,
            num_destinations: self.topology.num_destinations,
            num_pus: self.topology.num_pus,
            queue_capacity: self.topology.queue_capacity,
            pu_concentration: self.pu.concentration_band,
        }
    }

    /// Restricts the run to a single band; action spaces, the state encoding
    /// and the baseline graph are all rebuilt from the reduced catalog.
    pub fn restrict_to_band(&self, band: BandId) -> Result<RunConfig, ConfigError> {
        if !self.bands.iter().any(|s| s.band == band) {
            return Err(ConfigError::Invalid(format!(
                "cannot restrict to {band}: not a configured band"
            )));
        }
        let mut restricted = self.clone();
        restricted.engine.band_restriction = Some(band);
        restricted.validate()?;
        Ok(restricted)
    }

    pub fn num_steps(&self) -> usize {
        (self.engine.horizon_s / self.engine.tau_delta_s).round() as usize
    }

    /// Stable FNV-1a hash of the canonical JSON form, for output provenance.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
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
