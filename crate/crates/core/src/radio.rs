//! Band catalog and per-band electromagnetics.
//!
//! Every spectrum band is described by its carrier frequency, channel
//! bandwidth, transmit power and channel count. Two quantities are derived
//! from those and the global [`RadioParams`]:
//!
//! * **communication range** — the distance at which the received power under
//!   the close-in free-space reference-distance path-loss model falls to the
//!   receiver sensitivity threshold ([`compute_range`]);
//! * **effective bit rate** — the Shannon-Hartley capacity of one channel at
//!   the SNR implied by the sensitivity threshold and the noise floor
//!   ([`compute_bit_rate`]).
//!
//! Both are deterministic functions of their inputs; a profile can always be
//! re-derived and compared against its stored values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, Scalar};
use crate::{NodeId, Point, Real};

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("invalid radio parameter: {0}")]
    InvalidParameter(String),
    #[error("link budget produced a non-finite {0}")]
    NonFinite(&'static str),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("band {0} is not in the active catalog")]
    UnknownBand(BandId),
}

/// Spectrum band identifier.
///
/// The ISM entry is unlicensed; its "primary users" are access points that
/// occupy channels exactly like licensed incumbents do, so the contention
/// mechanics are identical across all four bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BandId {
    Tv,
    Ism,
    Lte,
    Cbrs,
}

impl BandId {
    pub const ALL: [BandId; 4] = [BandId::Tv, BandId::Ism, BandId::Lte, BandId::Cbrs];

    pub fn label(&self) -> &'static str {
        match self {
            BandId::Tv => "TV",
            BandId::Ism => "ISM",
            BandId::Lte => "LTE",
            BandId::Cbrs => "CBRS",
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BandId {
    type Err = RadioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TV" => Ok(BandId::Tv),
            "ISM" => Ok(BandId::Ism),
            "LTE" => Ok(BandId::Lte),
            "CBRS" => Ok(BandId::Cbrs),
            other => Err(RadioError::InvalidParameter(format!("unknown band {other:?}"))),
        }
    }
}

/// Global link-budget parameters shared by all bands.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams<F = Real> {
    /// Path-loss exponent of the close-in model.
    pub path_loss_exponent: F,
    /// Receiver sensitivity threshold in dBm.
    pub rx_power_threshold_dbm: F,
    /// Noise floor in dBm.
    pub noise_floor_dbm: F,
    /// Close-in reference distance in meters.
    pub reference_distance_m: F,
    /// Propagation speed in m/s.
    pub speed_of_light: F,
}

impl<F: Scalar> Default for RadioParams<F> {
    fn default() -> Self {
        Self {
            path_loss_exponent: cast(2.8),
            rx_power_threshold_dbm: cast(-95.0),
            noise_floor_dbm: cast(-100.0),
            reference_distance_m: cast(1.0),
            speed_of_light: cast(299_792_458.0),
        }
    }
}

impl<F: Scalar> RadioParams<F> {
    pub fn validate(&self) -> Result<(), RadioError> {
        if self.path_loss_exponent < cast(2.0) {
            return Err(RadioError::InvalidParameter(format!(
                "path_loss_exponent must be >= 2, got {}",
                self.path_loss_exponent
            )));
        }
        if self.rx_power_threshold_dbm <= self.noise_floor_dbm {
            return Err(RadioError::InvalidParameter(format!(
                "rx_power_threshold ({} dBm) must exceed the noise floor ({} dBm)",
                self.rx_power_threshold_dbm, self.noise_floor_dbm
            )));
        }
        if self.reference_distance_m <= F::zero() || self.speed_of_light <= F::zero() {
            return Err(RadioError::InvalidParameter(
                "reference distance and propagation speed must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One band with its configured and derived characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct BandProfile<F = Real> {
    pub band: BandId,
    pub carrier_freq_hz: F,
    pub channel_bandwidth_hz: F,
    pub transmit_power_w: F,
    pub num_channels: usize,
    /// Derived communication range in meters.
    pub range_m: F,
    /// Derived effective bit rate in bits/s.
    pub bit_rate_bps: F,
}

impl<F: Scalar> BandProfile<F> {
    /// Builds a profile, deriving range and bit rate from the raw fields.
    pub fn derive(
        band: BandId,
        carrier_freq_hz: F,
        channel_bandwidth_hz: F,
        transmit_power_w: F,
        num_channels: usize,
        params: &RadioParams<F>,
    ) -> Result<Self, RadioError> {
        if carrier_freq_hz <= F::zero()
            || channel_bandwidth_hz <= F::zero()
            || transmit_power_w <= F::zero()
        {
            return Err(RadioError::InvalidParameter(format!(
                "band {band}: frequency, bandwidth and power must be positive"
            )));
        }
        if num_channels == 0 {
            return Err(RadioError::InvalidParameter(format!(
                "band {band}: num_channels must be >= 1"
            )));
        }
        let range_m = compute_range(carrier_freq_hz, transmit_power_w, params)?;
        let bit_rate_bps = compute_bit_rate(channel_bandwidth_hz, params)?;
        Ok(Self {
            band,
            carrier_freq_hz,
            channel_bandwidth_hz,
            transmit_power_w,
            num_channels,
            range_m,
            bit_rate_bps,
        })
    }

    /// Recomputes the derived fields; must reproduce the stored values.
    pub fn rederive(&self, params: &RadioParams<F>) -> Result<(F, F), RadioError> {
        Ok((
            compute_range(self.carrier_freq_hz, self.transmit_power_w, params)?,
            compute_bit_rate(self.channel_bandwidth_hz, params)?,
        ))
    }
}

/// Free-space path loss in dB at `distance_m` for `freq_hz`.
pub fn free_space_path_loss_db<F: Scalar>(distance_m: F, freq_hz: F, speed_of_light: F) -> F {
    let four_pi: F = cast(4.0 * std::f64::consts::PI);
    cast::<F>(20.0) * (four_pi * distance_m * freq_hz / speed_of_light).log10()
}

/// Distance at which the link budget is exhausted.
///
/// Solves `P_tx_dBm - [FSPL(d0, f) + 10 n log10(d/d0)] = threshold` for `d`.
pub fn compute_range<F: Scalar>(
    carrier_freq_hz: F,
    transmit_power_w: F,
    params: &RadioParams<F>,
) -> Result<F, RadioError> {
    let d0 = params.reference_distance_m;
    let tx_dbm = cast::<F>(10.0) * (transmit_power_w * cast(1000.0)).log10();
    let fspl = free_space_path_loss_db(d0, carrier_freq_hz, params.speed_of_light);
    let exponent = (tx_dbm - fspl - params.rx_power_threshold_dbm)
        / (cast::<F>(10.0) * params.path_loss_exponent);
    let range = d0 * cast::<F>(10.0).powf(exponent);
    if !range.is_finite() || range <= F::zero() {
        return Err(RadioError::NonFinite("range"));
    }
    Ok(range)
}

/// Shannon-Hartley capacity of one channel at the worst-case SNR.
///
/// The SNR is taken at the sensitivity threshold
/// (`threshold_dBm - noise_floor_dBm`), constant per band.
pub fn compute_bit_rate<F: Scalar>(
    channel_bandwidth_hz: F,
    params: &RadioParams<F>,
) -> Result<F, RadioError> {
    let snr_db = params.rx_power_threshold_dbm - params.noise_floor_dbm;
    let snr_linear = cast::<F>(10.0).powf(snr_db / cast(10.0));
    let rate = channel_bandwidth_hz * (F::one() + snr_linear).log2();
    if !rate.is_finite() || rate <= F::zero() {
        return Err(RadioError::NonFinite("bit rate"));
    }
    Ok(rate)
}

/// True iff nodes `i` and `j` are within the communication range of `band`.
///
/// Channel availability is a separate, time-dependent check performed at
/// transmission time by the spectrum module.
pub fn link_exists(
    i: NodeId,
    j: NodeId,
    band: BandId,
    positions: &[Point],
    catalog: &BandCatalog<Real>,
) -> Result<bool, RadioError> {
    let pi = positions.get(i).ok_or(RadioError::UnknownNode(i))?;
    let pj = positions.get(j).ok_or(RadioError::UnknownNode(j))?;
    let profile = catalog.get(band).ok_or(RadioError::UnknownBand(band))?;
    Ok(pi.distance(pj) <= profile.range_m)
}

/// The active set of band profiles for one run.
#[derive(Debug, Clone)]
pub struct BandCatalog<F = Real> {
    profiles: Vec<BandProfile<F>>,
}

impl<F: Scalar> BandCatalog<F> {
    pub fn new(profiles: Vec<BandProfile<F>>) -> Result<Self, RadioError> {
        if profiles.is_empty() {
            return Err(RadioError::InvalidParameter("empty band catalog".into()));
        }
        for (k, p) in profiles.iter().enumerate() {
            if profiles[..k].iter().any(|q| q.band == p.band) {
                return Err(RadioError::InvalidParameter(format!(
                    "band {} listed twice",
                    p.band
                )));
            }
        }
        Ok(Self { profiles })
    }

    pub fn profiles(&self) -> &[BandProfile<F>] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, band: BandId) -> Option<&BandProfile<F>> {
        self.profiles.iter().find(|p| p.band == band)
    }

    /// Position of `band` in the catalog; doubles as its sensing-mask bit.
    pub fn index_of(&self, band: BandId) -> Option<usize> {
        self.profiles.iter().position(|p| p.band == band)
    }

    /// Minimum effective bit rate across the catalog (`R_min`).
    pub fn min_bit_rate(&self) -> F {
        self.profiles
            .iter()
            .map(|p| p.bit_rate_bps)
            .fold(F::infinity(), F::min)
    }

    /// Catalog reduced to a single band.
    pub fn restrict(&self, band: BandId) -> Result<Self, RadioError> {
        let profile = self.get(band).ok_or(RadioError::UnknownBand(band))?.clone();
        Ok(Self {
            profiles: vec![profile],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> RadioParams<f64> {
        RadioParams::default()
    }

    fn default_profile(band: BandId) -> BandProfile<f64> {
        let (f, bw, p) = match band {
            BandId::Tv => (600e6, 6e6, 4.0),
            BandId::Ism => (2.4e9, 20e6, 1.0),
            BandId::Lte => (1.9e9, 20e6, 4.0),
            BandId::Cbrs => (3.5e9, 40e6, 10.0),
        };
        BandProfile::derive(band, f, bw, p, 6, &defaults()).unwrap()
    }

    // Frozen from an independent evaluation of the close-in link budget
    // (tx_dBm - FSPL(1 m, f) - 10 n log10(d) = -95, n = 2.8, c = 299792458).
    #[test]
    fn range_matches_link_budget_oracle() {
        let cases = [
            (BandId::Tv, 4774.426),
            (BandId::Lte, 2095.791),
            (BandId::Ism, 1081.078),
            (BandId::Cbrs, 1879.140),
        ];
        for (band, expected) in cases {
            let p = default_profile(band);
            assert!(
                (p.range_m - expected).abs() < 1.0,
                "{band}: got {} expected {expected}",
                p.range_m
            );
        }
    }

    #[test]
    fn range_at_reference_distance_when_budget_exhausted() {
        // Threshold equal to the received power at d0 leaves no budget.
        let mut params = defaults();
        params.path_loss_exponent = 2.0;
        let f = 600e6;
        let tx_dbm = 10.0 * (4.0f64 * 1000.0).log10();
        params.rx_power_threshold_dbm =
            tx_dbm - free_space_path_loss_db(1.0, f, params.speed_of_light);
        let d = compute_range(f, 4.0, &params).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn range_rejects_zero_frequency() {
        assert!(compute_range(0.0, 4.0, &defaults()).is_err());
    }

    #[test]
    fn range_round_trip_residual_below_microdecibel() {
        for band in BandId::ALL {
            let p = default_profile(band);
            let params = defaults();
            let tx_dbm = 10.0 * (p.transmit_power_w * 1000.0).log10();
            let pl = free_space_path_loss_db(1.0, p.carrier_freq_hz, params.speed_of_light)
                + 10.0 * params.path_loss_exponent * (p.range_m / 1.0).log10();
            assert!((tx_dbm - pl - params.rx_power_threshold_dbm).abs() < 1e-6);
        }
    }

    #[test]
    fn range_monotone_in_power_and_frequency() {
        let params = defaults();
        let base = compute_range(1.9e9, 4.0, &params).unwrap();
        assert!(compute_range(1.9e9, 8.0, &params).unwrap() > base);
        assert!(compute_range(2.9e9, 4.0, &params).unwrap() < base);
    }

    // Frozen from B * log2(1 + 10^0.5): 5 dB SNR multiplier 2.057373208606795.
    #[test]
    fn bit_rate_matches_shannon_oracle() {
        let cases = [
            (BandId::Tv, 12.344_239e6),
            (BandId::Lte, 41.147_464e6),
            (BandId::Ism, 41.147_464e6),
            (BandId::Cbrs, 82.294_928e6),
        ];
        for (band, expected) in cases {
            let p = default_profile(band);
            assert!(
                (p.bit_rate_bps - expected).abs() < 1e3,
                "{band}: got {} expected {expected}",
                p.bit_rate_bps
            );
        }
    }

    #[test]
    fn bit_rate_is_bandwidth_at_unit_snr() {
        // threshold == noise floor gives snr_linear = 1, log2(2) = 1.
        let mut params = defaults();
        params.rx_power_threshold_dbm = -100.0;
        let rate = compute_bit_rate(7.5e6, &params).unwrap();
        assert!((rate - 7.5e6).abs() < 1e-9);
    }

    #[test]
    fn bit_rate_linear_in_bandwidth() {
        let params = defaults();
        let r1 = compute_bit_rate(1e6, &params).unwrap();
        for k in [2.0, 5.0, 17.5] {
            let rk = compute_bit_rate(k * 1e6, &params).unwrap();
            assert!((rk - k * r1).abs() < 1e-6 * rk.abs());
        }
    }

    #[test]
    fn link_exists_uses_band_range_and_is_symmetric() {
        let catalog = BandCatalog::new(BandId::ALL.map(default_profile).to_vec()).unwrap();
        let positions = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(2000.0, 0.0),
        ];
        // Co-located distinct nodes: every band connects.
        for band in BandId::ALL {
            assert!(link_exists(0, 1, band, &positions, &catalog).unwrap());
        }
        // 2000 m: beyond ISM (~1081 m), within TV (~4774 m).
        assert!(!link_exists(0, 2, BandId::Ism, &positions, &catalog).unwrap());
        assert!(link_exists(0, 2, BandId::Tv, &positions, &catalog).unwrap());
        for band in BandId::ALL {
            assert_eq!(
                link_exists(0, 2, band, &positions, &catalog).unwrap(),
                link_exists(2, 0, band, &positions, &catalog).unwrap()
            );
        }
        assert!(link_exists(0, 7, BandId::Tv, &positions, &catalog).is_err());
    }

    #[test]
    fn rederive_reproduces_stored_values() {
        for band in BandId::ALL {
            let p = default_profile(band);
            let (r, b) = p.rederive(&defaults()).unwrap();
            assert_eq!(r, p.range_m);
            assert_eq!(b, p.bit_rate_bps);
        }
    }

    #[test]
    fn catalog_rejects_duplicates_and_supports_restriction() {
        let profiles = BandId::ALL.map(default_profile).to_vec();
        let catalog = BandCatalog::new(profiles.clone()).unwrap();
        assert_eq!(catalog.len(), 4);
        assert_eq!(catalog.index_of(BandId::Cbrs), Some(3));
        let tv_only = catalog.restrict(BandId::Tv).unwrap();
        assert_eq!(tv_only.len(), 1);
        assert!((catalog.min_bit_rate() - 12.344_239e6).abs() < 1e3);

        let mut dup = profiles;
        dup.push(default_profile(BandId::Tv));
        assert!(BandCatalog::new(dup).is_err());
    }
}
