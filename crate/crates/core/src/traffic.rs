//! Bursty heterogeneous message traffic and packetization.
//!
//! Sources emit bursts whose inter-arrival times are exponential and whose
//! sizes are uniform over a small integer range. Every message draws its size
//! from a fixed set of bins and is split into equal packets at creation; a
//! message counts as delivered only when all of its packets arrive.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::BandId;
use crate::{NodeId, Real};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid traffic parameter: {0}")]
    InvalidParameter(String),
}

/// Traffic model parameters (resolved from the run configuration).
#[derive(Debug, Clone)]
pub struct TrafficParams {
    /// Mean burst inter-arrival time in seconds.
    pub burst_mean_interarrival_s: Real,
    /// Inclusive bounds on the number of messages per burst.
    pub burst_size_range: (u32, u32),
    /// Message size bins in Mbit, in bin order.
    pub message_sizes_mbit: Vec<u32>,
    /// Packet size in Mbit; every size bin must be divisible by it.
    pub packet_size_mbit: u32,
    /// Per-packet time-to-live in seconds.
    pub ttl_s: Real,
}

impl TrafficParams {
    pub fn packet_size_bits(&self) -> Real {
        self.packet_size_mbit as Real * 1e6
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.burst_mean_interarrival_s <= 0.0 {
            return Err(TrafficError::InvalidParameter(
                "burst inter-arrival mean must be positive".into(),
            ));
        }
        let (lo, hi) = self.burst_size_range;
        if lo == 0 || lo > hi {
            return Err(TrafficError::InvalidParameter(format!(
                "burst size range [{lo}, {hi}] must satisfy 1 <= min <= max"
            )));
        }
        if self.message_sizes_mbit.is_empty() {
            return Err(TrafficError::InvalidParameter("no message size bins".into()));
        }
        if self.packet_size_mbit == 0 {
            return Err(TrafficError::InvalidParameter("packet size must be positive".into()));
        }
        for &s in &self.message_sizes_mbit {
            if s == 0 || s % self.packet_size_mbit != 0 {
                return Err(TrafficError::InvalidParameter(format!(
                    "message size {s} Mbit is not a positive multiple of the {} Mbit packet size",
                    self.packet_size_mbit
                )));
            }
        }
        if self.ttl_s <= 0.0 {
            return Err(TrafficError::InvalidParameter("ttl must be positive".into()));
        }
        Ok(())
    }
}

/// One generated message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub id: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub size_mbit: u32,
    /// Index of the size in the configured bin list.
    pub size_bin: usize,
    pub num_packets: usize,
    pub created_at: Real,
}

/// One hop taken by a packet: the receiving node, the band used and the
/// arrival time.
#[derive(Debug, Clone, Copy)]
pub struct HopRecord {
    pub node: NodeId,
    pub band: BandId,
    pub time: Real,
}

/// A fixed-size fragment of a message.
#[derive(Debug, Clone)]
pub struct Packet {
    pub id: usize,
    pub message_id: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub size_bin: usize,
    pub created_at: Real,
    pub ttl_deadline: Real,
    pub hop_trace: Vec<HopRecord>,
}

impl Packet {
    pub fn expired(&self, t: Real) -> bool {
        t > self.ttl_deadline
    }

    /// Hops completed so far.
    pub fn hops_taken(&self) -> usize {
        self.hop_trace.len()
    }
}

/// Generates all bursts of one source over `[0, horizon)`.
///
/// Burst arrival times accumulate exponential increments, burst lengths and
/// message sizes are uniform, and each message's destination is drawn
/// uniformly from `destinations`. Message ids are assigned later, once the
/// streams of all sources are merged.
pub fn generate_traffic(
    source: NodeId,
    destinations: &[NodeId],
    horizon: Real,
    params: &TrafficParams,
    rng: &mut impl Rng,
) -> Result<Vec<Message>, TrafficError> {
    if horizon <= 0.0 {
        return Err(TrafficError::InvalidParameter("horizon must be positive".into()));
    }
    params.validate()?;
    if destinations.is_empty() {
        return Err(TrafficError::InvalidParameter("no destination nodes".into()));
    }
    let exp = Exp::new(1.0 / params.burst_mean_interarrival_s)
        .map_err(|e| TrafficError::InvalidParameter(e.to_string()))?;
    let (lo, hi) = params.burst_size_range;
    let mut messages = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= horizon {
            break;
        }
        let burst_len = rng.gen_range(lo..=hi);
        for _ in 0..burst_len {
            let bin = rng.gen_range(0..params.message_sizes_mbit.len());
            let destination = destinations[rng.gen_range(0..destinations.len())];
            let size_mbit = params.message_sizes_mbit[bin];
            messages.push(Message {
                id: 0,
                source,
                destination,
                size_mbit,
                size_bin: bin,
                num_packets: (size_mbit / params.packet_size_mbit) as usize,
                created_at: t,
            });
        }
    }
    Ok(messages)
}

/// Merges per-source streams into one timeline and assigns global ids.
pub fn merge_and_number(streams: Vec<Vec<Message>>) -> Vec<Message> {
    let mut all: Vec<Message> = streams.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        a.created_at
            .partial_cmp(&b.created_at)
            .unwrap()
            .then(a.source.cmp(&b.source))
    });
    for (id, m) in all.iter_mut().enumerate() {
        m.id = id;
    }
    all
}

/// Splits a message into its packets; ids continue from `next_packet_id`.
pub fn packetize(message: &Message, params: &TrafficParams, next_packet_id: &mut usize) -> Vec<Packet> {
    (0..message.num_packets)
        .map(|_| {
            let id = *next_packet_id;
            *next_packet_id += 1;
            Packet {
                id,
                message_id: message.id,
                source: message.source,
                destination: message.destination,
                size_bin: message.size_bin,
                created_at: message.created_at,
                ttl_deadline: message.created_at + params.ttl_s,
                hop_trace: Vec::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> TrafficParams {
        TrafficParams {
            burst_mean_interarrival_s: 15.0,
            burst_size_range: (5, 15),
            message_sizes_mbit: vec![5, 20, 40, 60],
            packet_size_mbit: 5,
            ttl_s: 60.0,
        }
    }

    #[test]
    fn packet_counts_follow_size_bins() {
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let msgs = generate_traffic(0, &[3, 4, 5], 10_000.0, &params, &mut rng).unwrap();
        assert!(!msgs.is_empty());
        for m in &msgs {
            let expected = match m.size_mbit {
                5 => 1,
                20 => 4,
                40 => 8,
                60 => 12,
                other => panic!("unexpected size {other}"),
            };
            assert_eq!(m.num_packets, expected);
            assert!(m.created_at < 10_000.0);
            assert!([3, 4, 5].contains(&m.destination));
        }
    }

    #[test]
    fn burst_statistics_match_the_model() {
        // Mean inter-arrival ~ Exp(15 s), mean burst length ~ Uniform{5..15}.
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let msgs = generate_traffic(0, &[9], 2_000_000.0, &params, &mut rng).unwrap();
        let mut burst_times: Vec<Real> = Vec::new();
        let mut burst_sizes: Vec<usize> = Vec::new();
        for m in &msgs {
            if burst_times.last() != Some(&m.created_at) {
                burst_times.push(m.created_at);
                burst_sizes.push(0);
            }
            *burst_sizes.last_mut().unwrap() += 1;
        }
        assert!(burst_times.len() > 10_000);
        let mean_gap = burst_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .sum::<Real>()
            / (burst_times.len() - 1) as Real;
        let mean_size =
            burst_sizes.iter().sum::<usize>() as Real / burst_sizes.len() as Real;
        assert!((14.5..=15.5).contains(&mean_gap), "mean inter-arrival {mean_gap}");
        assert!((9.8..=10.2).contains(&mean_size), "mean burst size {mean_size}");
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let params = params();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            generate_traffic(1, &[2, 3], 5_000.0, &params, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.created_at, y.created_at);
            assert_eq!(x.size_mbit, y.size_mbit);
            assert_eq!(x.destination, y.destination);
        }
    }

    #[test]
    fn merge_assigns_ids_in_time_order() {
        let mk = |source, created_at| Message {
            id: 0,
            source,
            destination: 9,
            size_mbit: 5,
            size_bin: 0,
            num_packets: 1,
            created_at,
        };
        let merged = merge_and_number(vec![
            vec![mk(0, 3.0), mk(0, 11.0)],
            vec![mk(1, 3.0), mk(1, 5.0)],
        ]);
        let order: Vec<(NodeId, Real)> = merged.iter().map(|m| (m.source, m.created_at)).collect();
        assert_eq!(order, vec![(0, 3.0), (1, 3.0), (1, 5.0), (0, 11.0)]);
        assert_eq!(merged.iter().map(|m| m.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn packetize_sets_ttl_and_ids() {
        let params = params();
        let msg = Message {
            id: 4,
            source: 0,
            destination: 5,
            size_mbit: 20,
            size_bin: 1,
            num_packets: 4,
            created_at: 12.5,
        };
        let mut next_id = 100;
        let packets = packetize(&msg, &params, &mut next_id);
        assert_eq!(packets.len(), 4);
        assert_eq!(next_id, 104);
        for (k, p) in packets.iter().enumerate() {
            assert_eq!(p.id, 100 + k);
            assert_eq!(p.message_id, 4);
            assert_eq!(p.ttl_deadline, 72.5);
            assert!(!p.expired(72.5));
            assert!(p.expired(72.500001));
        }
    }

    #[test]
    fn validation_rejects_indivisible_sizes() {
        let mut p = params();
        p.message_sizes_mbit = vec![5, 21];
        assert!(p.validate().is_err());
    }
}
