//! Post-hoc audits over a completed run's event log.
//!
//! The scenario (node placement, PU placement, per-PU ON/OFF timelines,
//! traffic) is a pure function of (config, seed), so an event log can be
//! checked long after the run: the audit rebuilds the world, replays every
//! PU timeline and verifies that
//!
//! * no successful transmission started while an in-range PU was ON on the
//!   same (band, channel) — the non-interference guarantee;
//! * packet conservation holds: every generated packet is delivered, dropped
//!   or still in flight, and no packet terminates twice;
//! * no message was delivered later than its TTL allows;
//! * per-node, per-step transmission time stays within the step budget.

use std::collections::HashMap;

use crate::engine::{build_world, stream_rng, EngineError, World, STREAM_PU, STREAM_TRAFFIC};
use crate::events::{EventKind, EventLog};
use crate::config::RunConfig;
use crate::spectrum::{advance_pu, PuProcess, PuState};
use crate::traffic::{generate_traffic, merge_and_number, Message};
use crate::Real;

/// Replayable ON/OFF timeline of one PU.
pub struct PuTimeline {
    initial: PuState,
    /// Strictly increasing transition instants; state flips at each.
    transitions: Vec<Real>,
}

impl PuTimeline {
    /// State at time `t`; a transition exactly at `t` has already happened,
    /// matching the live renewal semantics.
    pub fn state_at(&self, t: Real) -> PuState {
        let flips = self.transitions.partition_point(|&x| x <= t);
        if flips % 2 == 0 {
            self.initial
        } else {
            match self.initial {
                PuState::On => PuState::Off,
                PuState::Off => PuState::On,
            }
        }
    }
}

/// Regenerates every PU timeline over `[0, horizon]` from (config, seed).
pub fn pu_timelines(config: &RunConfig, world: &World, horizon: Real) -> Vec<PuTimeline> {
    world
        .pu_sites
        .iter()
        .enumerate()
        .map(|(k, site)| {
            let mut rng = stream_rng(config.engine.seed, STREAM_PU + k as u64);
            let mut pu = PuProcess::init(
                k,
                site.position,
                site.band,
                site.channel,
                (config.pu.duration_min_s, config.pu.duration_max_s),
                &mut rng,
            );
            let initial = pu.state;
            let mut transitions = Vec::new();
            while pu.next_transition <= horizon {
                let t = pu.next_transition;
                advance_pu(&mut pu, t, &mut rng).expect("monotone replay");
                transitions.push(t);
            }
            PuTimeline {
                initial,
                transitions,
            }
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct AuditReport {
    pub tx_successes_checked: usize,
    pub interference_violations: Vec<String>,
    pub conservation_violations: Vec<String>,
    pub latency_violations: Vec<String>,
    pub budget_violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.interference_violations.is_empty()
            && self.conservation_violations.is_empty()
            && self.latency_violations.is_empty()
            && self.budget_violations.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.interference_violations.len()
            + self.conservation_violations.len()
            + self.latency_violations.len()
            + self.budget_violations.len()
    }
}

fn push_capped(list: &mut Vec<String>, message: String) {
    if list.len() < 32 {
        list.push(message);
    } else if list.len() == 32 {
        list.push("... further violations elided".into());
    }
}

/// Regenerates the traffic exactly as the engine did.
pub fn regenerate_traffic(config: &RunConfig, world: &World) -> Result<Vec<Message>, EngineError> {
    let params = config.traffic_params();
    let gen_horizon = config.engine.horizon_s - config.engine.tau_delta_s;
    let mut streams = Vec::new();
    for &s in &world.sources {
        if gen_horizon > 0.0 {
            let mut rng = stream_rng(config.engine.seed, STREAM_TRAFFIC + s as u64);
            streams.push(generate_traffic(
                s,
                &world.destinations,
                gen_horizon,
                &params,
                &mut rng,
            )?);
        }
    }
    Ok(merge_and_number(streams))
}

/// Full audit of an event log against its reconstructed scenario.
pub fn audit_event_log(config: &RunConfig, log: &EventLog) -> Result<AuditReport, EngineError> {
    let world = build_world(config)?;
    let horizon = config.engine.horizon_s;
    let tau = config.engine.tau_delta_s;
    let timelines = pu_timelines(config, &world, horizon + 2.0 * tau);
    let traffic = regenerate_traffic(config, &world)?;
    let params = config.traffic_params();

    let mut report = AuditReport::default();

    // --- non-interference -------------------------------------------------
    // Index PUs by (band, channel) once.
    let mut pus_on_channel: HashMap<(crate::radio::BandId, usize), Vec<usize>> = HashMap::new();
    for (k, site) in world.pu_sites.iter().enumerate() {
        pus_on_channel.entry((site.band, site.channel)).or_default().push(k);
    }
    for e in log.events() {
        if e.kind != EventKind::TxSuccess {
            continue;
        }
        report.tx_successes_checked += 1;
        let (Some(band), Some(channel), Some(from), Some(to)) = (e.band, e.channel, e.from, e.to)
        else {
            push_capped(
                &mut report.interference_violations,
                format!("tx_success at {} lacks band/channel/endpoints", e.time),
            );
            continue;
        };
        let Some(profile) = world.catalog.get(band) else {
            push_capped(
                &mut report.interference_violations,
                format!("tx_success on {band} outside the active catalog at {}", e.time),
            );
            continue;
        };
        for &k in pus_on_channel.get(&(band, channel)).map_or(&[][..], |v| v) {
            let site = &world.pu_sites[k];
            let in_range = site.position.distance(&world.positions[from]) <= profile.range_m
                || site.position.distance(&world.positions[to]) <= profile.range_m;
            if in_range && timelines[k].state_at(e.time) == PuState::On {
                push_capped(
                    &mut report.interference_violations,
                    format!(
                        "t={} {}->{} on {band} ch{channel}: PU {k} was ON in range",
                        e.time, from, to
                    ),
                );
            }
        }
    }

    // --- conservation and per-packet sanity --------------------------------
    let packets_generated: usize = traffic.iter().map(|m| m.num_packets).sum();
    let mut terminal: HashMap<usize, (&'static str, Real)> = HashMap::new();
    let mut delivered = 0usize;
    let mut dropped_ttl = 0usize;
    let mut dropped_full = 0usize;
    for e in log.events() {
        let label = match e.kind {
            EventKind::Delivery => "delivered",
            EventKind::DropTtl => "dropped_ttl",
            EventKind::DropFull => "dropped_full",
            _ => continue,
        };
        match e.kind {
            EventKind::Delivery => delivered += 1,
            EventKind::DropTtl => dropped_ttl += 1,
            EventKind::DropFull => dropped_full += 1,
            _ => {}
        }
        if let Some((prior, at)) = terminal.insert(e.packet_id, (label, e.time)) {
            push_capped(
                &mut report.conservation_violations,
                format!(
                    "packet {} terminated twice: {prior} at {at}, then {label} at {}",
                    e.packet_id, e.time
                ),
            );
        }
        if e.packet_id >= packets_generated {
            push_capped(
                &mut report.conservation_violations,
                format!("packet {} was never generated", e.packet_id),
            );
        }
    }
    let terminated = delivered + dropped_ttl + dropped_full;
    if terminated > packets_generated {
        push_capped(
            &mut report.conservation_violations,
            format!("{terminated} terminal events exceed {packets_generated} generated packets"),
        );
    }

    // --- delivery deadline -------------------------------------------------
    let mut created_at = HashMap::new();
    for m in &traffic {
        created_at.insert(m.id, m.created_at);
    }
    for e in log.events() {
        if e.kind != EventKind::Delivery {
            continue;
        }
        if let Some(&created) = created_at.get(&e.message_id) {
            if e.time - created > params.ttl_s + 1e-9 {
                push_capped(
                    &mut report.latency_violations,
                    format!(
                        "packet {} delivered {} s after creation (ttl {})",
                        e.packet_id,
                        e.time - created,
                        params.ttl_s
                    ),
                );
            }
        }
    }

    // --- per-step time budget ----------------------------------------------
    let mut used: HashMap<(usize, u64), Real> = HashMap::new();
    let packet_bits = params.packet_size_bits();
    for e in log.events() {
        if e.kind != EventKind::TxSuccess {
            continue;
        }
        let (Some(from), Some(band)) = (e.from, e.band) else {
            continue;
        };
        let Some(profile) = world.catalog.get(band) else {
            continue;
        };
        let step = (e.time / tau).floor() as u64;
        *used.entry((from, step)).or_insert(0.0) += packet_bits / profile.bit_rate_bps;
    }
    for ((node, step), total) in used {
        if total > tau + 1e-9 {
            push_capped(
                &mut report.budget_violations,
                format!("node {node} used {total} s of airtime in step {step} (budget {tau})"),
            );
        }
    }

    Ok(report)
}

/// Conservation statement over final run metrics (the in-flight term is the
/// engine's observed end state, so this is not a tautology).
pub fn conservation_line(m: &crate::metrics::RunMetrics) -> String {
    format!(
        "generated={} delivered={} dropped_ttl={} dropped_full={} in_flight_end={} => {}",
        m.packets_generated,
        m.packets_delivered,
        m.packets_dropped_ttl,
        m.packets_dropped_full,
        m.packets_in_flight_end,
        if m.conservation_holds() { "balanced" } else { "VIOLATED" }
    )
}
