//! Append-only transmission audit log with a fixed CSV schema.
//!
//! Columns: `time,event_type,node_from,node_to,band,channel,packet_id,
//! message_id,reason`. Each output file starts with `#`-prefixed provenance
//! lines (version, config hash, seed, derived per-band range and bit rate)
//! so any CSV can be traced back to the exact run that produced it.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::radio::{BandCatalog, BandId};
use crate::{NodeId, Real};

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed event log line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TxAttempt,
    TxSuccess,
    Delivery,
    DropTtl,
    DropFull,
    NoChannel,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::TxAttempt => "tx_attempt",
            EventKind::TxSuccess => "tx_success",
            EventKind::Delivery => "delivery",
            EventKind::DropTtl => "drop_ttl",
            EventKind::DropFull => "drop_full",
            EventKind::NoChannel => "no_channel",
        }
    }

    /// Reason column contents; drops and blocked attempts carry one.
    pub fn reason(&self) -> &'static str {
        match self {
            EventKind::DropTtl => "ttl_exceeded",
            EventKind::DropFull => "queue_full",
            EventKind::NoChannel => "no_common_channel",
            _ => "",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tx_attempt" => EventKind::TxAttempt,
            "tx_success" => EventKind::TxSuccess,
            "delivery" => EventKind::Delivery,
            "drop_ttl" => EventKind::DropTtl,
            "drop_full" => EventKind::DropFull,
            "no_channel" => EventKind::NoChannel,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Real,
    pub kind: EventKind,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub band: Option<BandId>,
    pub channel: Option<usize>,
    pub packet_id: usize,
    pub message_id: usize,
}

/// Append-only event record; timestamps are made non-decreasing by a stable
/// sort at finalization (events are emitted as decisions happen, but some,
/// like deliveries, carry times later in the step than the emission point).
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Stable sort by timestamp; insertion order breaks ties, so the result
    /// is deterministic for a deterministic run.
    pub fn finalize(&mut self) {
        self.events
            .sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite event times"));
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, header: &RunHeader) -> io::Result<()> {
        header.write(w)?;
        writeln!(
            w,
            "time,event_type,node_from,node_to,band,channel,packet_id,message_id,reason"
        )?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                e.time,
                e.kind.label(),
                opt(e.from),
                opt(e.to),
                e.band.map(|b| b.label()).unwrap_or(""),
                opt(e.channel),
                e.packet_id,
                e.message_id,
                e.kind.reason(),
            )?;
        }
        Ok(())
    }

    /// Parses a CSV previously produced by [`EventLog::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, EventLogError> {
        let mut events = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("time,") {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 9 {
                return Err(EventLogError::Malformed {
                    line: lineno + 1,
                    message: format!("expected 9 fields, got {}", fields.len()),
                });
            }
            let bad = |message: String| EventLogError::Malformed {
                line: lineno + 1,
                message,
            };
            let time: Real = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad time {:?}", fields[0])))?;
            let kind = EventKind::parse(fields[1])
                .ok_or_else(|| bad(format!("bad event type {:?}", fields[1])))?;
            let parse_opt = |s: &str, what: &str| -> Result<Option<usize>, EventLogError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| bad(format!("bad {what} {s:?}")))
                }
            };
            let band = if fields[4].is_empty() {
                None
            } else {
                Some(
                    fields[4]
                        .parse::<BandId>()
                        .map_err(|e| bad(e.to_string()))?,
                )
            };
            events.push(Event {
                time,
                kind,
                from: parse_opt(fields[2], "node_from")?,
                to: parse_opt(fields[3], "node_to")?,
                band,
                channel: parse_opt(fields[5], "channel")?,
                packet_id: fields[6]
                    .parse()
                    .map_err(|_| bad(format!("bad packet_id {:?}", fields[6])))?,
                message_id: fields[7]
                    .parse()
                    .map_err(|_| bad(format!("bad message_id {:?}", fields[7])))?,
            });
        }
        Ok(Self { events })
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Provenance block prepended to every output CSV.
#[derive(Debug, Clone)]
pub struct RunHeader {
    pub config_hash: String,
    pub seed: u64,
    /// Derived (band, range_m, bit_rate_bps) rows of the active catalog.
    pub bands: Vec<(BandId, Real, Real)>,
}

impl RunHeader {
    pub fn new(config_hash: String, seed: u64, catalog: &BandCatalog) -> Self {
        let bands = catalog
            .profiles()
            .iter()
            .map(|p| (p.band, p.range_m, p.bit_rate_bps))
            .collect();
        Self {
            config_hash,
            seed,
            bands,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# ddsa-sim v{}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# config_hash={} seed={}", self.config_hash, self.seed)?;
        for (band, range, rate) in &self.bands {
            writeln!(w, "# band {band} range_m={range} bit_rate_bps={rate}")?;
        }
        Ok(())
    }
}
