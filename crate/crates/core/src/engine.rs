//! Timestepped simulation engine.
//!
//! A run advances the clock in `tau_delta` steps. Each step: primary users
//! advance along their renewal timelines, due traffic bursts enter their
//! source queues, stale packets expire, and every node works through its
//! queue in a fixed order with a per-step transmission-time budget. Under
//! BARD each queued packet triggers one ε-greedy decision, a
//! listen-before-talk channel probe, a reward and a Q-update; under dDSAaR
//! the packet follows its precomputed hop or waits. Identical (config, seed)
//! pairs produce bit-identical event logs.
//!
//! PU states are sampled at the exact (fractional) transmission-attempt
//! instants on the continuous renewal timeline; nothing about PU activity is
//! discretized to the step grid. A transmission, once started on a sensed
//! idle channel, runs to completion.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{
    compute_reward, select_action, Action, AgentError, RewardContext, StateSpace,
};
use crate::baseline::{build_stb_static, RouteTable};
use crate::config::{Algorithm, ConfigError, DecayCadence, RunConfig};
use crate::events::{Event, EventKind, EventLog, RunHeader};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::radio::RadioError;
use crate::spectrum::{PuProcess, Spectrum, SpectrumError, SuTransmission};
use crate::topology::{deploy, distance_matrix, Enqueue, Node, NodeRole, PuSite, TopologyError};
use crate::traffic::{generate_traffic, merge_and_number, packetize, Message, Packet, TrafficError};
use crate::{BandCatalog, NodeId, Point, QTable, RadioParams, Real, RlParams};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

// Independent ChaCha streams per concern, all derived from the run seed.
// Public so the audit can rebuild scenarios from (config, seed) alone.
pub const STREAM_DEPLOY: u64 = 1;
pub const STREAM_TRAFFIC: u64 = 1_000;
pub const STREAM_PU: u64 = 10_000;
pub const STREAM_AGENT: u64 = 100_000;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Static scenario facts, exported for scenario dumps and audits.
#[derive(Debug, Clone)]
pub struct WorldSummary {
    pub node_positions: Vec<Point>,
    pub node_roles: Vec<NodeRole>,
    pub pu_sites: Vec<PuSite>,
}

/// Fully assembled immutable-topology world for one run.
pub struct World {
    pub catalog: BandCatalog,
    pub radio: RadioParams,
    pub nodes: Vec<Node>,
    pub sources: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    pub positions: Vec<Point>,
    pub su_dist: Vec<Vec<Real>>,
    pub spectrum: Spectrum,
    pub action_spaces: Vec<Vec<Action>>,
    /// Reachable neighbors per node and catalog band, ascending.
    pub neighbors_by_band: Vec<Vec<Vec<NodeId>>>,
    pub pu_sites: Vec<PuSite>,
}

impl World {
    pub fn summary(&self) -> WorldSummary {
        WorldSummary {
            node_positions: self.positions.clone(),
            node_roles: self.nodes.iter().map(|n| n.role).collect(),
            pu_sites: self.pu_sites.clone(),
        }
    }
}

/// Deploys nodes and PUs and derives every static structure of a run.
/// Reconstructing the world from (config, seed) is exact, which is what the
/// post-hoc audit relies on.
pub fn build_world(config: &RunConfig) -> Result<World, EngineError> {
    config.validate()?;
    let seed = config.engine.seed;
    let catalog = config.build_catalog()?;
    let radio = config.radio_params();

    let mut deploy_rng = stream_rng(seed, STREAM_DEPLOY);
    let topo = deploy(&config.deploy_spec(), &catalog, &mut deploy_rng)?;
    let positions: Vec<Point> = topo.nodes.iter().map(|n| n.position).collect();
    let su_dist = distance_matrix(&positions);

    let action_spaces: Vec<Vec<Action>> = (0..positions.len())
        .map(|i| crate::topology::build_action_space(i, &positions, &catalog))
        .collect();
    let neighbors_by_band = action_spaces
        .iter()
        .map(|actions| {
            catalog
                .profiles()
                .iter()
                .map(|p| {
                    actions
                        .iter()
                        .filter(|a| a.band == p.band)
                        .map(|a| a.next_node)
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut pus = Vec::with_capacity(topo.pu_sites.len());
    let mut pu_rngs = Vec::with_capacity(topo.pu_sites.len());
    for (k, site) in topo.pu_sites.iter().enumerate() {
        let mut rng = stream_rng(seed, STREAM_PU + k as u64);
        pus.push(PuProcess::init(
            k,
            site.position,
            site.band,
            site.channel,
            (config.pu.duration_min_s, config.pu.duration_max_s),
            &mut rng,
        ));
        pu_rngs.push(rng);
    }
    let spectrum = Spectrum::new(pus, pu_rngs, &catalog, &positions);

    Ok(World {
        catalog,
        radio,
        nodes: topo.nodes,
        sources: topo.sources,
        destinations: topo.destinations,
        positions,
        su_dist,
        spectrum,
        action_spaces,
        neighbors_by_band,
        pu_sites: topo.pu_sites,
    })
}

/// Everything a finished run hands back.
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: EventLog,
    pub traffic: Vec<Message>,
    pub summary: WorldSummary,
    pub qtables: Option<Vec<QTable>>,
    pub routes: Option<RouteTable>,
    pub header: RunHeader,
}

struct AgentState {
    qtable: QTable,
    epsilon: Real,
    rng: ChaCha8Rng,
}

/// A packet on the air, waiting to be received.
struct InFlight {
    arrive: Real,
    seq: u64,
    from: NodeId,
    to: NodeId,
    band: crate::radio::BandId,
    channel: usize,
    packet: Packet,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for InFlight {}
impl Ord for InFlight {
    // Reversed so the BinaryHeap pops the earliest arrival first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .arrive
            .partial_cmp(&self.arrive)
            .unwrap_or(Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Executes one full run.
pub fn run(config: &RunConfig) -> Result<RunOutput, EngineError> {
    let mut world = build_world(config)?;
    let seed = config.engine.seed;
    let tau = config.engine.tau_delta_s;
    let horizon = config.engine.horizon_s;
    let num_steps = config.num_steps();
    let traffic_params = config.traffic_params();
    let rl = config.rl_params();
    let packet_bits = traffic_params.packet_size_bits();
    let min_rate = world.catalog.min_bit_rate();

    // Traffic is generated up to the last step time so every burst lands on
    // a step; the streams are per-source and independent of the algorithm,
    // which is what makes BARD/baseline runs on one seed strictly paired.
    let gen_horizon = horizon - tau;
    let mut streams = Vec::new();
    for &s in &world.sources {
        if gen_horizon > 0.0 {
            let mut rng = stream_rng(seed, STREAM_TRAFFIC + s as u64);
            streams.push(generate_traffic(
                s,
                &world.destinations,
                gen_horizon,
                &traffic_params,
                &mut rng,
            )?);
        }
    }
    let messages = merge_and_number(streams);

    let state_space = StateSpace {
        num_destinations: world.destinations.len(),
        num_size_bins: traffic_params.message_sizes_mbit.len(),
        num_bands: world.catalog.len(),
    };
    let mut agents: Option<Vec<AgentState>> = None;
    let mut routes: Option<RouteTable> = None;
    match config.engine.algorithm {
        Algorithm::Bard => {
            agents = Some(
                (0..world.nodes.len())
                    .map(|i| AgentState {
                        qtable: QTable::new(state_space.num_states(), world.action_spaces[i].len()),
                        epsilon: rl.epsilon0,
                        rng: stream_rng(seed, STREAM_AGENT + i as u64),
                    })
                    .collect(),
            );
        }
        Algorithm::Ddsaar => {
            let graph = build_stb_static(&world.positions, &world.catalog, packet_bits, &world.radio);
            routes = Some(RouteTable::build(
                &graph,
                &world.sources,
                &world.destinations,
                &world.catalog,
            ));
        }
    }

    let mut log = EventLog::new();
    let mut in_flight: BinaryHeap<InFlight> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut next_msg = 0usize;
    let mut next_packet_id = 0usize;

    for k in 0..num_steps {
        let t = k as Real * tau;
        world.spectrum.advance_all(t);

        // Receive everything that arrived up to now.
        while in_flight.peek().map_or(false, |f| f.arrive <= t) {
            let f = in_flight.pop().expect("peeked");
            receive(&mut world.nodes, f, &mut log);
        }

        // Inject due bursts into their source queues.
        while next_msg < messages.len() && messages[next_msg].created_at <= t {
            let m = &messages[next_msg];
            for packet in packetize(m, &traffic_params, &mut next_packet_id) {
                let (pid, mid) = (packet.id, packet.message_id);
                match world.nodes[m.source].enqueue(packet) {
                    Enqueue::Accepted => {}
                    Enqueue::DroppedFull(_) => log.push(Event {
                        time: t,
                        kind: EventKind::DropFull,
                        from: Some(m.source),
                        to: None,
                        band: None,
                        channel: None,
                        packet_id: pid,
                        message_id: mid,
                    }),
                }
            }
            next_msg += 1;
        }

        // Expire stale packets before any node dequeues.
        for i in 0..world.nodes.len() {
            for p in world.nodes[i].expire(t) {
                log.push(Event {
                    time: t,
                    kind: EventKind::DropTtl,
                    from: Some(i),
                    to: None,
                    band: None,
                    channel: None,
                    packet_id: p.id,
                    message_id: p.message_id,
                });
            }
        }

        // Fixed ascending order keeps runs reproducible.
        for i in 0..world.nodes.len() {
            match config.engine.algorithm {
                Algorithm::Bard => step_node_bard(
                    &mut world,
                    agents.as_mut().expect("BARD agents"),
                    i,
                    t,
                    tau,
                    packet_bits,
                    min_rate,
                    &state_space,
                    &rl,
                    config.rl.epsilon_decay_cadence,
                    &mut log,
                    &mut in_flight,
                    &mut seq,
                )?,
                Algorithm::Ddsaar => step_node_baseline(
                    &mut world,
                    routes.as_ref().expect("baseline routes"),
                    i,
                    t,
                    tau,
                    packet_bits,
                    &mut log,
                    &mut in_flight,
                    &mut seq,
                )?,
            }
        }

        if config.rl.epsilon_decay_cadence == DecayCadence::Step {
            if let Some(agents) = agents.as_mut() {
                for a in agents.iter_mut() {
                    a.epsilon *= rl.epsilon_decay;
                }
            }
        }
    }

    let in_flight_end =
        in_flight.len() + world.nodes.iter().map(|n| n.queue.len()).sum::<usize>();
    log.finalize();
    let metrics = compute_metrics(&log, &messages, &world.catalog, horizon, 60.0, in_flight_end);
    let header = RunHeader::new(config.config_hash(), seed, &world.catalog);

    Ok(RunOutput {
        metrics,
        log,
        traffic: messages,
        summary: world.summary(),
        qtables: agents.map(|a| a.into_iter().map(|s| s.qtable).collect()),
        routes,
        header,
    })
}

/// Delivery, TTL-drop or enqueue of one received packet.
fn receive(nodes: &mut [Node], f: InFlight, log: &mut EventLog) {
    let (pid, mid) = (f.packet.id, f.packet.message_id);
    if f.arrive > f.packet.ttl_deadline {
        log.push(Event {
            time: f.arrive,
            kind: EventKind::DropTtl,
            from: Some(f.to),
            to: None,
            band: None,
            channel: None,
            packet_id: pid,
            message_id: mid,
        });
        return;
    }
    if f.to == f.packet.destination {
        log.push(Event {
            time: f.arrive,
            kind: EventKind::Delivery,
            from: Some(f.from),
            to: Some(f.to),
            band: Some(f.band),
            channel: Some(f.channel),
            packet_id: pid,
            message_id: mid,
        });
        return;
    }
    match nodes[f.to].enqueue(f.packet) {
        Enqueue::Accepted => {}
        Enqueue::DroppedFull(_) => log.push(Event {
            time: f.arrive,
            kind: EventKind::DropFull,
            from: Some(f.to),
            to: None,
            band: None,
            channel: None,
            packet_id: pid,
            message_id: mid,
        }),
    }
}

/// Sensing snapshot for the state key: bit b is set when at least one
/// neighbor reachable over band b has a free common channel right now.
fn sensing_mask(
    spectrum: &mut Spectrum,
    neighbors_by_band: &[Vec<NodeId>],
    catalog: &BandCatalog,
    i: NodeId,
    now: Real,
) -> u32 {
    let mut mask = 0u32;
    for (b_idx, profile) in catalog.profiles().iter().enumerate() {
        for &j in &neighbors_by_band[b_idx] {
            if spectrum
                .find_common_channel(i, j, b_idx, profile.band, profile.range_m, now)
                .is_some()
            {
                mask |= 1 << b_idx;
                break;
            }
        }
    }
    mask
}


/// Removes the packet from node `i`'s queue, registers the transmission and
/// puts the packet on the air. Returns nothing; the arrival is handled by
/// [`receive`] on a later step.
#[allow(clippy::too_many_arguments)]
fn transmit_packet(
    world: &mut World,
    i: NodeId,
    j: NodeId,
    band: crate::radio::BandId,
    channel: usize,
    queue_pos: usize,
    now: Real,
    tx_delay: Real,
    log: &mut EventLog,
    in_flight: &mut BinaryHeap<InFlight>,
    seq: &mut u64,
) -> Result<(), EngineError> {
    world.spectrum.register_transmission(SuTransmission {
        transmitter: i,
        band,
        channel,
        start: now,
        end: now + tx_delay,
        origin: world.positions[i],
    })?;
    let mut packet = world.nodes[i]
        .queue
        .remove(queue_pos)
        .expect("packet at validated position");
    log.push(Event {
        time: now,
        kind: EventKind::TxSuccess,
        from: Some(i),
        to: Some(j),
        band: Some(band),
        channel: Some(channel),
        packet_id: packet.id,
        message_id: packet.message_id,
    });
    let arrive = now + tx_delay + world.su_dist[i][j] / world.radio.speed_of_light;
    packet.hop_trace.push(crate::traffic::HopRecord {
        node: j,
        band,
        time: arrive,
    });
    in_flight.push(InFlight {
        arrive,
        seq: *seq,
        from: i,
        to: j,
        band,
        channel,
        packet,
    });
    *seq += 1;
    Ok(())
}

/// One BARD step of node `i`: every queued packet gets one ε-greedy decision,
/// a reward and a Q-update. The step budget gates only the transmission
/// itself — a slow-band choice that no longer fits is not sent (and is
/// penalized through the reward), while a later packet picking a faster band
/// may still go out in the remaining time.
#[allow(clippy::too_many_arguments)]
fn step_node_bard(
    world: &mut World,
    agents: &mut [AgentState],
    i: NodeId,
    t0: Real,
    tau: Real,
    packet_bits: Real,
    min_rate: Real,
    state_space: &StateSpace,
    rl: &RlParams,
    cadence: DecayCadence,
    log: &mut EventLog,
    in_flight: &mut BinaryHeap<InFlight>,
    seq: &mut u64,
) -> Result<(), EngineError> {
    if world.action_spaces[i].is_empty() {
        return Ok(()); // isolated node: packets wait for TTL expiry
    }
    let mut rem = tau;
    let mut pos = 0usize;
    while pos < world.nodes[i].queue.len() {
        let now = t0 + (tau - rem);
        let (destination, size_bin, packet_id, message_id) = {
            let p = &world.nodes[i].queue[pos];
            (p.destination, p.size_bin, p.id, p.message_id)
        };
        let dest_idx = world
            .destinations
            .iter()
            .position(|&d| d == destination)
            .ok_or(AgentError::UnknownDestination {
                dest: destination,
                known: world.destinations.len(),
            })?;
        let mask = sensing_mask(
            &mut world.spectrum,
            &world.neighbors_by_band[i],
            &world.catalog,
            i,
            now,
        );
        let state = state_space.encode(dest_idx, size_bin, mask)?;

        let agent = &mut agents[i];
        let action_idx = select_action(&agent.qtable, state, agent.epsilon, rl, &mut agent.rng)
            .expect("non-empty action space");
        if cadence == DecayCadence::Decision {
            agent.epsilon *= rl.epsilon_decay;
        }
        let Action { next_node: j, band } = world.action_spaces[i][action_idx];
        let band_idx = world.catalog.index_of(band).expect("action band in catalog");
        let profile = &world.catalog.profiles()[band_idx];
        let tx_delay = packet_bits / profile.bit_rate_bps;

        let fits_budget = tx_delay < rem;
        let channel = if fits_budget {
            log.push(Event {
                time: now,
                kind: EventKind::TxAttempt,
                from: Some(i),
                to: Some(j),
                band: Some(band),
                channel: None,
                packet_id,
                message_id,
            });
            world
                .spectrum
                .find_common_channel(i, j, band_idx, band, profile.range_m, now)
        } else {
            None // budget exhausted for this band: no attempt, no probe
        };

        let transmitted = fits_budget && channel.is_some();
        let ctx = RewardContext {
            next_queue_len: world.nodes[j].queue.len(),
            packet_size_bits: packet_bits,
            min_bit_rate_bps: min_rate,
            bit_rate_bps: profile.bit_rate_bps,
            dist_self_to_dest_m: world.su_dist[i][destination],
            dist_next_to_dest_m: world.su_dist[j][destination],
            next_is_destination: transmitted && j == destination,
            channel_unavailable: fits_budget && channel.is_none(),
        };
        let reward = compute_reward(&ctx, rl)?;

        if let (true, Some(c)) = (fits_budget, channel) {
            transmit_packet(world, i, j, band, c, pos, now, tx_delay, log, in_flight, seq)?;
            rem -= tx_delay;
            let bootstrap = if j == destination {
                0.0 // terminal: the packet left the network
            } else {
                let now2 = t0 + (tau - rem);
                let mask2 = sensing_mask(
                    &mut world.spectrum,
                    &world.neighbors_by_band[i],
                    &world.catalog,
                    i,
                    now2,
                );
                let s2 = state_space.encode(dest_idx, size_bin, mask2)?;
                agents[i].qtable.max_q(s2)
            };
            agents[i].qtable.update(state, action_idx, reward, bootstrap, rl)?;
            // pos stays: the next packet shifted into this slot.
        } else {
            if fits_budget {
                log.push(Event {
                    time: now,
                    kind: EventKind::NoChannel,
                    from: Some(i),
                    to: Some(j),
                    band: Some(band),
                    channel: None,
                    packet_id,
                    message_id,
                });
            }
            // Nothing moved and no time passed, so the successor state
            // equals the observed one.
            let bootstrap = agents[i].qtable.max_q(state);
            agents[i].qtable.update(state, action_idx, reward, bootstrap, rl)?;
            pos += 1; // packet keeps its FIFO slot
        }
    }
    Ok(())
}

/// One baseline step of node `i`: each queued packet attempts its
/// precomputed hop if the budget allows; a blocked packet waits in FIFO
/// order with no rerouting and no re-banding.
#[allow(clippy::too_many_arguments)]
fn step_node_baseline(
    world: &mut World,
    routes: &RouteTable,
    i: NodeId,
    t0: Real,
    tau: Real,
    packet_bits: Real,
    log: &mut EventLog,
    in_flight: &mut BinaryHeap<InFlight>,
    seq: &mut u64,
) -> Result<(), EngineError> {
    let mut rem = tau;
    let mut pos = 0usize;
    while pos < world.nodes[i].queue.len() {
        let now = t0 + (tau - rem);
        let (source, destination, hops_taken, packet_id, message_id) = {
            let p = &world.nodes[i].queue[pos];
            (p.source, p.destination, p.hops_taken(), p.id, p.message_id)
        };
        let hop = routes
            .get(source, destination)
            .and_then(|r| r.get(hops_taken))
            .copied();
        let Some(hop) = hop else {
            pos += 1; // no (or exhausted) route: the packet waits out its TTL
            continue;
        };
        let (j, band) = (hop.next, hop.band);
        let band_idx = world.catalog.index_of(band).expect("route band in catalog");
        let profile = &world.catalog.profiles()[band_idx];
        let tx_delay = packet_bits / profile.bit_rate_bps;
        if tx_delay >= rem {
            pos += 1; // cannot fit this hop's band now; the packet waits
            continue;
        }

        log.push(Event {
            time: now,
            kind: EventKind::TxAttempt,
            from: Some(i),
            to: Some(j),
            band: Some(band),
            channel: None,
            packet_id,
            message_id,
        });
        match world
            .spectrum
            .find_common_channel(i, j, band_idx, band, profile.range_m, now)
        {
            Some(c) => {
                transmit_packet(world, i, j, band, c, pos, now, tx_delay, log, in_flight, seq)?;
                rem -= tx_delay;
            }
            None => {
                log.push(Event {
                    time: now,
                    kind: EventKind::NoChannel,
                    from: Some(i),
                    to: Some(j),
                    band: Some(band),
                    channel: None,
                    packet_id,
                    message_id,
                });
                pos += 1; // wait in FIFO order; no rerouting, no re-banding
            }
        }
    }
    Ok(())
}
