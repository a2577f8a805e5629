//! Primary-user activity and channel availability.
//!
//! Each primary user (PU) occupies one channel of one band and alternates
//! between ON and OFF according to a continuous-time renewal process with
//! uniformly drawn sojourn times. Secondary transmissions are tracked in a
//! registry so that concurrent secondaries within range contend for channels
//! as well. [`Spectrum::find_common_channel`] answers the listen-before-talk
//! query both forwarding algorithms rely on.
//!
//! Every PU owns an independent, seeded random stream, so its ON/OFF timeline
//! is a pure function of (scenario, seed). The world records each timeline as
//! it unfolds and answers state queries at arbitrary instants; within one
//! engine step the per-node transmission sub-timelines overlap, so queries do
//! not arrive in time order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{BandCatalog, BandId};
use crate::{NodeId, Point, Real};

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("time moved backwards: advanced to {now} after {last}")]
    TimeReversal { last: Real, now: Real },
    #[error("duplicate registration of an identical transmission")]
    DuplicateTransmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PuState {
    On,
    Off,
}

impl PuState {
    fn flipped(self) -> Self {
        match self {
            PuState::On => PuState::Off,
            PuState::Off => PuState::On,
        }
    }
}

/// One primary user's location, channel assignment and renewal state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuProcess {
    pub pu_id: usize,
    pub position: Point,
    pub band: BandId,
    pub channel: usize,
    pub state: PuState,
    pub next_transition: Real,
    pub duration_bounds: (Real, Real),
    last_advanced: Real,
}

impl PuProcess {
    /// Draws the initial state and first transition from `rng`.
    pub fn init(
        pu_id: usize,
        position: Point,
        band: BandId,
        channel: usize,
        duration_bounds: (Real, Real),
        rng: &mut impl Rng,
    ) -> Self {
        let state = if rng.gen::<bool>() { PuState::On } else { PuState::Off };
        let (lo, hi) = duration_bounds;
        let next_transition = rng.gen_range(lo..=hi);
        Self {
            pu_id,
            position,
            band,
            channel,
            state,
            next_transition,
            duration_bounds,
            last_advanced: 0.0,
        }
    }
}

/// Advances the renewal process to time `t`, applying every transition in
/// `(last, t]` in order. Sojourns are drawn only from the supplied stream.
pub fn advance_pu(
    process: &mut PuProcess,
    t: Real,
    rng: &mut impl Rng,
) -> Result<(), SpectrumError> {
    if t < process.last_advanced {
        return Err(SpectrumError::TimeReversal {
            last: process.last_advanced,
            now: t,
        });
    }
    let (lo, hi) = process.duration_bounds;
    while process.next_transition <= t {
        process.state = process.state.flipped();
        process.next_transition += rng.gen_range(lo..=hi);
    }
    process.last_advanced = t;
    Ok(())
}

/// A renewal process plus the recorded prefix of its timeline, so the state
/// can be queried at any instant already covered (or lazily extended).
#[derive(Debug)]
struct PuTrack {
    process: PuProcess,
    rng: ChaCha8Rng,
    initial: PuState,
    /// Transition instants recorded so far, strictly increasing.
    transitions: Vec<Real>,
}

impl PuTrack {
    fn new(process: PuProcess, rng: ChaCha8Rng) -> Self {
        let initial = process.state;
        Self {
            process,
            rng,
            initial,
            transitions: Vec::new(),
        }
    }

    /// Extends the recorded timeline to cover `t`. Sojourns are at least the
    /// lower duration bound apart, so each advance applies one flip.
    fn extend_to(&mut self, t: Real) {
        while self.process.next_transition <= t {
            let at = self.process.next_transition;
            advance_pu(&mut self.process, at, &mut self.rng).expect("monotone frontier");
            self.transitions.push(at);
        }
    }

    /// State at `t`; a transition exactly at `t` has already taken effect.
    fn state_at(&mut self, t: Real) -> PuState {
        self.extend_to(t);
        let flips = self.transitions.partition_point(|&x| x <= t);
        if flips % 2 == 0 {
            self.initial
        } else {
            self.initial.flipped()
        }
    }
}

/// An ongoing (or completed) secondary transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct SuTransmission {
    pub transmitter: NodeId,
    pub band: BandId,
    pub channel: usize,
    pub start: Real,
    pub end: Real,
    pub origin: Point,
}

impl SuTransmission {
    fn active_at(&self, t: Real) -> bool {
        self.start <= t && t < self.end
    }
}

/// World occupancy state: all PU timelines plus the live SU registry.
///
/// Owned by a single run; the engine serializes all queries and mutations on
/// its logical timeline.
#[derive(Debug)]
pub struct Spectrum {
    tracks: Vec<PuTrack>,
    /// PU indices grouped by (catalog band index, channel).
    by_channel: Vec<Vec<Vec<usize>>>,
    /// Distance from each PU to each secondary node, in meters.
    pu_node_dist: Vec<Vec<Real>>,
    node_positions: Vec<Point>,
    active: Vec<SuTransmission>,
}

impl Spectrum {
    pub fn new(
        pus: Vec<PuProcess>,
        pu_rngs: Vec<ChaCha8Rng>,
        catalog: &BandCatalog,
        node_positions: &[Point],
    ) -> Self {
        assert_eq!(pus.len(), pu_rngs.len());
        let mut by_channel: Vec<Vec<Vec<usize>>> = catalog
            .profiles()
            .iter()
            .map(|p| vec![Vec::new(); p.num_channels])
            .collect();
        for (k, pu) in pus.iter().enumerate() {
            if let Some(b) = catalog.index_of(pu.band) {
                if pu.channel < by_channel[b].len() {
                    by_channel[b][pu.channel].push(k);
                }
            }
        }
        let pu_node_dist = pus
            .iter()
            .map(|pu| node_positions.iter().map(|p| pu.position.distance(p)).collect())
            .collect();
        let tracks = pus
            .into_iter()
            .zip(pu_rngs)
            .map(|(p, rng)| PuTrack::new(p, rng))
            .collect();
        Self {
            tracks,
            by_channel,
            pu_node_dist,
            node_positions: node_positions.to_vec(),
            active: Vec::new(),
        }
    }

    pub fn num_pus(&self) -> usize {
        self.tracks.len()
    }

    pub fn active_transmissions(&self) -> &[SuTransmission] {
        &self.active
    }

    /// PU state at an arbitrary instant (timeline extended on demand).
    pub fn pu_state_at(&mut self, pu_idx: usize, t: Real) -> PuState {
        self.tracks[pu_idx].state_at(t)
    }

    /// Step housekeeping: registrations that ended by `t` can never block a
    /// future query, so they are dropped.
    pub fn advance_all(&mut self, t: Real) {
        self.active.retain(|tx| tx.end > t);
    }

    /// Lowest-indexed channel of `band` that is free for the link (i, j) at
    /// time `t`, or `None` if every channel is occupied.
    ///
    /// A channel is occupied if an assigned PU is ON within `range_m` of
    /// either endpoint, or if a registered secondary transmission overlapping
    /// `t` originates within `range_m` of either endpoint.
    pub fn find_common_channel(
        &mut self,
        i: NodeId,
        j: NodeId,
        band_idx: usize,
        band: BandId,
        range_m: Real,
        t: Real,
    ) -> Option<usize> {
        let num_channels = self.by_channel[band_idx].len();
        'channels: for c in 0..num_channels {
            for k in 0..self.by_channel[band_idx][c].len() {
                let pu_idx = self.by_channel[band_idx][c][k];
                let in_range = self.pu_node_dist[pu_idx][i] <= range_m
                    || self.pu_node_dist[pu_idx][j] <= range_m;
                if in_range && self.tracks[pu_idx].state_at(t) == PuState::On {
                    continue 'channels;
                }
            }
            for tx in &self.active {
                if tx.band == band && tx.channel == c && tx.active_at(t) {
                    // Origin distance to either endpoint gates contention.
                    let d_i = self.node_positions[i].distance(&tx.origin);
                    let d_j = self.node_positions[j].distance(&tx.origin);
                    if d_i <= range_m || d_j <= range_m {
                        continue 'channels;
                    }
                }
            }
            return Some(c);
        }
        None
    }

    /// Registers a transmission returned free by `find_common_channel`.
    pub fn register_transmission(&mut self, tx: SuTransmission) -> Result<(), SpectrumError> {
        if self.active.contains(&tx) {
            return Err(SpectrumError::DuplicateTransmission);
        }
        self.active.push(tx);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{BandProfile, RadioParams};
    use rand::SeedableRng;

    fn catalog() -> BandCatalog {
        let params = RadioParams::default();
        let profiles = vec![
            BandProfile::derive(BandId::Tv, 600e6, 6e6, 4.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Ism, 2.4e9, 20e6, 1.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Lte, 1.9e9, 20e6, 4.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Cbrs, 3.5e9, 40e6, 10.0, 6, &params).unwrap(),
        ];
        BandCatalog::new(profiles).unwrap()
    }

    fn pu_at(pu_id: usize, channel: usize, state: PuState, next_transition: Real) -> PuProcess {
        PuProcess {
            pu_id,
            position: Point::new(100.0, 100.0),
            band: BandId::Tv,
            channel,
            state,
            next_transition,
            duration_bounds: (2.0, 2.0),
            last_advanced: 0.0,
        }
    }

    fn spectrum_with(pus: Vec<PuProcess>) -> Spectrum {
        let rngs = (0..pus.len())
            .map(|k| ChaCha8Rng::seed_from_u64(k as u64))
            .collect();
        let nodes = vec![Point::new(0.0, 0.0), Point::new(200.0, 0.0)];
        Spectrum::new(pus, rngs, &catalog(), &nodes)
    }

    #[test]
    fn advance_before_transition_keeps_state() {
        let mut pu = pu_at(0, 0, PuState::Off, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        advance_pu(&mut pu, 5.0, &mut rng).unwrap();
        assert_eq!(pu.state, PuState::Off);
        assert_eq!(pu.next_transition, 10.0);
    }

    #[test]
    fn advance_applies_single_renewal_step() {
        // Degenerate bounds (2, 2) pin the drawn sojourn to exactly 2 s.
        let mut pu = pu_at(0, 0, PuState::Off, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        advance_pu(&mut pu, 10.5, &mut rng).unwrap();
        assert_eq!(pu.state, PuState::On);
        assert_eq!(pu.next_transition, 12.0);
    }

    #[test]
    fn advance_rejects_time_reversal() {
        let mut pu = pu_at(0, 0, PuState::Off, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        advance_pu(&mut pu, 5.0, &mut rng).unwrap();
        assert!(matches!(
            advance_pu(&mut pu, 4.0, &mut rng),
            Err(SpectrumError::TimeReversal { .. })
        ));
    }

    #[test]
    fn sojourn_mean_matches_uniform_1_4() {
        // Advancing exactly to each transition applies one renewal per call,
        // so the drift of next_transition sums the drawn sojourns.
        let mut pu = pu_at(0, 0, PuState::Off, 1.0);
        pu.duration_bounds = (1.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let first = pu.next_transition;
        let n = 100_000;
        for _ in 0..n {
            let next = pu.next_transition;
            advance_pu(&mut pu, next, &mut rng).unwrap();
        }
        let mean = (pu.next_transition - first) / n as Real;
        assert!((2.45..=2.55).contains(&mean), "mean sojourn {mean}");
    }

    #[test]
    fn on_fraction_approaches_half() {
        let mut pu = pu_at(0, 0, PuState::Off, 2.0);
        pu.duration_bounds = (1.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut on_time = 0.0;
        let dt = 0.25;
        let horizon = 200_000.0;
        let mut t = 0.0;
        while t < horizon {
            t += dt;
            advance_pu(&mut pu, t, &mut rng).unwrap();
            if pu.state == PuState::On {
                on_time += dt;
            }
        }
        let fraction = on_time / horizon;
        assert!((fraction - 0.5).abs() < 0.02, "ON fraction {fraction}");
    }

    #[test]
    fn track_answers_out_of_order_queries_consistently() {
        let pu = pu_at(0, 0, PuState::Off, 10.0);
        let mut sp = spectrum_with(vec![pu]);
        // Forward then backward: 10 <= t < 12 is ON, before 10 is OFF.
        assert_eq!(sp.pu_state_at(0, 11.0), PuState::On);
        assert_eq!(sp.pu_state_at(0, 5.0), PuState::Off);
        assert_eq!(sp.pu_state_at(0, 10.0), PuState::On);
        assert_eq!(sp.pu_state_at(0, 9.999), PuState::Off);
        assert_eq!(sp.pu_state_at(0, 12.0), PuState::Off);
    }

    #[test]
    fn empty_occupancy_returns_channel_zero() {
        let mut sp = spectrum_with(vec![]);
        let range = catalog().get(BandId::Tv).unwrap().range_m;
        let c = sp.find_common_channel(0, 1, 0, BandId::Tv, range, 1.0);
        assert_eq!(c, Some(0));
    }

    #[test]
    fn full_occupancy_returns_none() {
        let pus = (0..6)
            .map(|c| pu_at(c, c, PuState::On, 1e9))
            .collect::<Vec<_>>();
        let mut sp = spectrum_with(pus);
        let range = catalog().get(BandId::Tv).unwrap().range_m;
        let c = sp.find_common_channel(0, 1, 0, BandId::Tv, range, 1.0);
        assert_eq!(c, None);
    }

    #[test]
    fn lowest_free_channel_wins() {
        // ON PUs on channels 0, 1, 3 leave channel 2 as the lowest free one.
        let pus = [0usize, 1, 3]
            .iter()
            .map(|&c| pu_at(c, c, PuState::On, 1e9))
            .collect::<Vec<_>>();
        let mut sp = spectrum_with(pus);
        let range = catalog().get(BandId::Tv).unwrap().range_m;
        let c = sp.find_common_channel(0, 1, 0, BandId::Tv, range, 1.0);
        assert_eq!(c, Some(2));
    }

    #[test]
    fn out_of_range_pu_does_not_block() {
        let mut pu = pu_at(0, 0, PuState::On, 1e9);
        pu.band = BandId::Ism;
        pu.position = Point::new(5000.0, 5000.0);
        let mut sp = spectrum_with(vec![pu]);
        let range = catalog().get(BandId::Ism).unwrap().range_m;
        let c = sp.find_common_channel(0, 1, 1, BandId::Ism, range, 1.0);
        assert_eq!(c, Some(0));
    }

    #[test]
    fn registry_blocks_then_expires() {
        let mut sp = spectrum_with(vec![]);
        let range = catalog().get(BandId::Cbrs).unwrap().range_m;
        let tx = SuTransmission {
            transmitter: 0,
            band: BandId::Cbrs,
            channel: 0,
            start: 10.0,
            end: 10.5,
            origin: Point::new(0.0, 0.0),
        };
        sp.register_transmission(tx.clone()).unwrap();
        assert!(matches!(
            sp.register_transmission(tx),
            Err(SpectrumError::DuplicateTransmission)
        ));
        let busy = sp.find_common_channel(0, 1, 3, BandId::Cbrs, range, 10.1);
        assert_eq!(busy, Some(1), "channel 0 occupied, next free is 1");
        let free = sp.find_common_channel(0, 1, 3, BandId::Cbrs, range, 10.6);
        assert_eq!(free, Some(0));
    }

    #[test]
    fn disjoint_registrations_leave_third_channel_free() {
        let mut sp = spectrum_with(vec![]);
        let range = catalog().get(BandId::Cbrs).unwrap().range_m;
        for c in 0..2 {
            sp.register_transmission(SuTransmission {
                transmitter: 0,
                band: BandId::Cbrs,
                channel: c,
                start: 0.0,
                end: 100.0,
                origin: Point::new(0.0, 0.0),
            })
            .unwrap();
        }
        let c = sp.find_common_channel(0, 1, 3, BandId::Cbrs, range, 1.0);
        assert_eq!(c, Some(2));
    }

    #[test]
    fn distant_transmitter_allows_spatial_reuse() {
        let mut sp = spectrum_with(vec![]);
        let range = catalog().get(BandId::Ism).unwrap().range_m;
        sp.register_transmission(SuTransmission {
            transmitter: 0,
            band: BandId::Ism,
            channel: 0,
            start: 0.0,
            end: 100.0,
            origin: Point::new(50_000.0, 0.0),
        })
        .unwrap();
        let c = sp.find_common_channel(0, 1, 1, BandId::Ism, range, 1.0);
        assert_eq!(c, Some(0));
    }

    #[test]
    fn availability_is_monotone_under_added_occupancy() {
        // Adding an in-range ON PU can only remove channels, never free them.
        let range = catalog().get(BandId::Tv).unwrap().range_m;
        for busy_set in [vec![], vec![0usize], vec![0, 1], vec![0, 2, 4]] {
            let base_pus: Vec<_> = busy_set
                .iter()
                .map(|&c| pu_at(c, c, PuState::On, 1e9))
                .collect();
            let mut with_one_more = base_pus.clone();
            with_one_more.push(pu_at(99, 5, PuState::On, 1e9));
            let before =
                spectrum_with(base_pus).find_common_channel(0, 1, 0, BandId::Tv, range, 1.0);
            let after =
                spectrum_with(with_one_more).find_common_channel(0, 1, 0, BandId::Tv, range, 1.0);
            match (before, after) {
                (None, other) => assert_eq!(other, None),
                (Some(b), Some(a)) => assert!(a >= b),
                (Some(_), None) => {}
            }
        }
    }
}
