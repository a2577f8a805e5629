//! Aggregated per-run outputs: delivery ratio, latency, band usage.

use std::io::{self, Write};

use crate::events::{EventKind, EventLog, RunHeader};
use crate::radio::{BandCatalog, BandId};
use crate::traffic::Message;
use crate::Real;

/// Cumulative metrics up to one time checkpoint (60 s buckets by default).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMetrics {
    pub time: Real,
    pub messages_generated: usize,
    pub messages_delivered: usize,
    pub mdr: Option<Real>,
    pub mean_latency_s: Option<Real>,
}

/// Aggregated outputs of one completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub messages_generated: usize,
    pub messages_delivered: usize,
    /// Delivered / generated; `None` for a run without traffic.
    pub mdr: Option<Real>,
    /// Mean creation-to-last-packet delay over delivered messages only.
    pub mean_latency_s: Option<Real>,
    /// Share of successful transmissions per band, in catalog order.
    pub band_usage: Vec<(BandId, Real)>,
    pub packets_generated: usize,
    pub packets_delivered: usize,
    pub packets_dropped_ttl: usize,
    pub packets_dropped_full: usize,
    /// Queued or airborne packets when the horizon was reached.
    pub packets_in_flight_end: usize,
    pub tx_attempts: usize,
    pub tx_successes: usize,
    pub no_channel_events: usize,
    pub checkpoints: Vec<CheckpointMetrics>,
}

impl RunMetrics {
    /// Packet conservation: generated = delivered + dropped + in flight.
    pub fn conservation_holds(&self) -> bool {
        self.packets_generated
            == self.packets_delivered
                + self.packets_dropped_ttl
                + self.packets_dropped_full
                + self.packets_in_flight_end
    }

    /// Usage share of one band (0 when the band is not in the catalog).
    pub fn usage_share(&self, band: BandId) -> Real {
        self.band_usage
            .iter()
            .find(|(b, _)| *b == band)
            .map(|(_, s)| *s)
            .unwrap_or(0.0)
    }
}

/// Derives [`RunMetrics`] from a finalized event log and the generated
/// traffic. `packets_in_flight_end` is the engine's observed end-state count;
/// keeping it observed (not derived) is what makes the conservation audit a
/// real check.
pub fn compute_metrics(
    log: &EventLog,
    traffic: &[Message],
    catalog: &BandCatalog,
    horizon_s: Real,
    bucket_s: Real,
    packets_in_flight_end: usize,
) -> RunMetrics {
    let num_messages = traffic.len();
    let mut delivered_packets = vec![0usize; num_messages];
    let mut last_delivery = vec![0.0 as Real; num_messages];

    let mut packets_delivered = 0;
    let mut packets_dropped_ttl = 0;
    let mut packets_dropped_full = 0;
    let mut tx_attempts = 0;
    let mut tx_successes = 0;
    let mut no_channel_events = 0;
    let mut band_counts = vec![0usize; catalog.len()];

    for e in log.events() {
        match e.kind {
            EventKind::TxAttempt => tx_attempts += 1,
            EventKind::TxSuccess => {
                tx_successes += 1;
                if let Some(idx) = e.band.and_then(|b| catalog.index_of(b)) {
                    band_counts[idx] += 1;
                }
            }
            EventKind::Delivery => {
                packets_delivered += 1;
                let m = e.message_id;
                delivered_packets[m] += 1;
                if e.time > last_delivery[m] {
                    last_delivery[m] = e.time;
                }
            }
            EventKind::DropTtl => packets_dropped_ttl += 1,
            EventKind::DropFull => packets_dropped_full += 1,
            EventKind::NoChannel => no_channel_events += 1,
        }
    }

    // A message is delivered only when all of its packets arrived.
    let mut messages_delivered = 0;
    let mut latency_sum = 0.0;
    let mut completion: Vec<Option<Real>> = vec![None; num_messages];
    for (m, msg) in traffic.iter().enumerate() {
        if msg.num_packets > 0 && delivered_packets[m] == msg.num_packets {
            messages_delivered += 1;
            latency_sum += last_delivery[m] - msg.created_at;
            completion[m] = Some(last_delivery[m]);
        }
    }

    let band_usage = catalog
        .profiles()
        .iter()
        .zip(&band_counts)
        .map(|(p, &c)| {
            let share = if tx_successes > 0 {
                c as Real / tx_successes as Real
            } else {
                0.0
            };
            (p.band, share)
        })
        .collect();

    let mut checkpoints = Vec::new();
    let mut cp = bucket_s;
    while cp <= horizon_s + 1e-9 {
        let mut generated = 0;
        let mut delivered = 0;
        let mut lat_sum = 0.0;
        for (m, msg) in traffic.iter().enumerate() {
            if msg.created_at <= cp {
                generated += 1;
                if let Some(done) = completion[m] {
                    if done <= cp {
                        delivered += 1;
                        lat_sum += done - msg.created_at;
                    }
                }
            }
        }
        checkpoints.push(CheckpointMetrics {
            time: cp,
            messages_generated: generated,
            messages_delivered: delivered,
            mdr: (generated > 0).then(|| delivered as Real / generated as Real),
            mean_latency_s: (delivered > 0).then(|| lat_sum / delivered as Real),
        });
        cp += bucket_s;
    }

    RunMetrics {
        messages_generated: num_messages,
        messages_delivered,
        mdr: (num_messages > 0).then(|| messages_delivered as Real / num_messages as Real),
        mean_latency_s: (messages_delivered > 0)
            .then(|| latency_sum / messages_delivered as Real),
        band_usage,
        packets_generated: traffic.iter().map(|m| m.num_packets).sum(),
        packets_delivered,
        packets_dropped_ttl,
        packets_dropped_full,
        packets_in_flight_end,
        tx_attempts,
        tx_successes,
        no_channel_events,
        checkpoints,
    }
}

pub const METRICS_CSV_COLUMNS: &str = "config_hash,seed,algorithm,band_restriction,\
messages_generated,messages_delivered,mdr,mean_latency_s,\
usage_TV,usage_ISM,usage_LTE,usage_CBRS,\
packets_generated,packets_delivered,packets_dropped_ttl,packets_dropped_full,\
packets_in_flight_end,tx_attempts,tx_successes,no_channel_events";

pub fn format_opt(v: Option<Real>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One fixed-schema CSV row; band-usage columns always cover all four known
/// bands so restricted runs stay column-compatible.
pub fn metrics_csv_row(
    config_hash: &str,
    seed: u64,
    algorithm: &str,
    band_restriction: Option<BandId>,
    m: &RunMetrics,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        config_hash,
        seed,
        algorithm,
        band_restriction.map(|b| b.label().to_string()).unwrap_or_default(),
        m.messages_generated,
        m.messages_delivered,
        format_opt(m.mdr),
        format_opt(m.mean_latency_s),
        m.usage_share(BandId::Tv),
        m.usage_share(BandId::Ism),
        m.usage_share(BandId::Lte),
        m.usage_share(BandId::Cbrs),
        m.packets_generated,
        m.packets_delivered,
        m.packets_dropped_ttl,
        m.packets_dropped_full,
        m.packets_in_flight_end,
        m.tx_attempts,
        m.tx_successes,
        m.no_channel_events,
    )
}

/// Writes the one-row metrics CSV for a single run.
pub fn write_metrics_csv<W: Write>(
    w: &mut W,
    header: &RunHeader,
    algorithm: &str,
    band_restriction: Option<BandId>,
    m: &RunMetrics,
) -> io::Result<()> {
    header.write(w)?;
    writeln!(w, "{METRICS_CSV_COLUMNS}")?;
    writeln!(
        w,
        "{}",
        metrics_csv_row(&header.config_hash, header.seed, algorithm, band_restriction, m)
    )
}

/// Writes the per-checkpoint cumulative series of one run.
pub fn write_timeseries_csv<W: Write>(
    w: &mut W,
    header: &RunHeader,
    m: &RunMetrics,
) -> io::Result<()> {
    header.write(w)?;
    writeln!(w, "time,messages_generated,messages_delivered,mdr,mean_latency_s")?;
    for c in &m.checkpoints {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.time,
            c.messages_generated,
            c.messages_delivered,
            format_opt(c.mdr),
            format_opt(c.mean_latency_s),
        )?;
    }
    Ok(())
}
