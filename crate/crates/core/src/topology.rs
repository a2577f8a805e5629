//! Node deployment, per-node action spaces and FIFO packet queues.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Action;
use crate::radio::{BandCatalog, BandId};
use crate::traffic::Packet;
use crate::{NodeId, Point, Real};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Source,
    Relay,
    Destination,
}

/// A secondary (d-DSA) node with its forwarding queue.
#[derive(Debug)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    pub position: Point,
    pub queue: VecDeque<Packet>,
    pub queue_capacity: usize,
}

/// Outcome of offering a packet to a queue.
#[derive(Debug)]
pub enum Enqueue {
    Accepted,
    /// The queue was at capacity; the packet is handed back for logging.
    DroppedFull(Packet),
}

impl Node {
    pub fn new(id: NodeId, role: NodeRole, position: Point, queue_capacity: usize) -> Self {
        Self {
            id,
            role,
            position,
            queue: VecDeque::new(),
            queue_capacity,
        }
    }

    /// Appends in FIFO order, rejecting when at capacity.
    pub fn enqueue(&mut self, packet: Packet) -> Enqueue {
        if self.queue.len() >= self.queue_capacity {
            Enqueue::DroppedFull(packet)
        } else {
            self.queue.push_back(packet);
            Enqueue::Accepted
        }
    }

    /// Removes every packet whose deadline has passed at time `t`, preserving
    /// the relative order of survivors. Returns the expired packets.
    pub fn expire(&mut self, t: Real) -> Vec<Packet> {
        let mut expired = Vec::new();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for p in self.queue.drain(..) {
            if p.expired(t) {
                expired.push(p);
            } else {
                kept.push_back(p);
            }
        }
        self.queue = kept;
        expired
    }
}

/// One primary user's placement and channel assignment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PuSite {
    pub position: Point,
    pub band: BandId,
    pub channel: usize,
}

/// Deployment inputs (resolved from the run configuration).
#[derive(Debug, Clone)]
pub struct DeploySpec {
    pub area_width_m: Real,
    pub area_height_m: Real,
    pub num_sus: usize,
    pub num_sources: usize,
    pub num_destinations: usize,
    pub num_pus: usize,
    pub queue_capacity: usize,
    /// Forces every PU into a single band ("all PUs in one band" scenarios).
    pub pu_concentration: Option<BandId>,
}

#[derive(Debug)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub sources: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    pub pu_sites: Vec<PuSite>,
}

/// Deploys nodes and PUs uniformly at random over the area.
///
/// Roles go to the first node indices: sources, then destinations, then
/// relays. PU (band, channel) assignments are uniform over every channel of
/// the catalog unless a concentration band is forced.
pub fn deploy(
    spec: &DeploySpec,
    catalog: &BandCatalog,
    rng: &mut impl Rng,
) -> Result<Topology, TopologyError> {
    if spec.num_sources + spec.num_destinations > spec.num_sus {
        return Err(TopologyError::Invalid(format!(
            "{} sources + {} destinations exceed {} nodes",
            spec.num_sources, spec.num_destinations, spec.num_sus
        )));
    }
    if spec.queue_capacity == 0 {
        return Err(TopologyError::Invalid("queue capacity must be >= 1".into()));
    }
    if spec.area_width_m <= 0.0 || spec.area_height_m <= 0.0 {
        return Err(TopologyError::Invalid("deployment area must be positive".into()));
    }
    if let Some(band) = spec.pu_concentration {
        if catalog.get(band).is_none() {
            return Err(TopologyError::Invalid(format!(
                "concentration band {band} is not in the active catalog"
            )));
        }
    }

    let mut nodes = Vec::with_capacity(spec.num_sus);
    for id in 0..spec.num_sus {
        let position = Point::new(
            rng.gen_range(0.0..=spec.area_width_m),
            rng.gen_range(0.0..=spec.area_height_m),
        );
        let role = if id < spec.num_sources {
            NodeRole::Source
        } else if id < spec.num_sources + spec.num_destinations {
            NodeRole::Destination
        } else {
            NodeRole::Relay
        };
        nodes.push(Node::new(id, role, position, spec.queue_capacity));
    }

    // Flattened (band, channel) slots in catalog order.
    let slots: Vec<(BandId, usize)> = match spec.pu_concentration {
        Some(band) => {
            let p = catalog.get(band).expect("validated above");
            (0..p.num_channels).map(|c| (band, c)).collect()
        }
        None => catalog
            .profiles()
            .iter()
            .flat_map(|p| (0..p.num_channels).map(move |c| (p.band, c)))
            .collect(),
    };
    let mut pu_sites = Vec::with_capacity(spec.num_pus);
    for _ in 0..spec.num_pus {
        let position = Point::new(
            rng.gen_range(0.0..=spec.area_width_m),
            rng.gen_range(0.0..=spec.area_height_m),
        );
        let (band, channel) = slots[rng.gen_range(0..slots.len())];
        pu_sites.push(PuSite {
            position,
            band,
            channel,
        });
    }

    let sources = (0..spec.num_sources).collect();
    let destinations = (spec.num_sources..spec.num_sources + spec.num_destinations).collect();
    Ok(Topology {
        nodes,
        sources,
        destinations,
        pu_sites,
    })
}

/// Action space of node `i`: every (j, band) with `j != i` within the band's
/// range, ordered by ascending node id then catalog band order.
pub fn build_action_space(
    i: NodeId,
    positions: &[Point],
    catalog: &BandCatalog,
) -> Vec<Action> {
    let mut actions = Vec::new();
    for j in 0..positions.len() {
        if j == i {
            continue;
        }
        let d = positions[i].distance(&positions[j]);
        for profile in catalog.profiles() {
            if d <= profile.range_m {
                actions.push(Action {
                    next_node: j,
                    band: profile.band,
                });
            }
        }
    }
    actions
}

/// Pairwise node distances in meters.
pub fn distance_matrix(positions: &[Point]) -> Vec<Vec<Real>> {
    positions
        .iter()
        .map(|a| positions.iter().map(|b| a.distance(b)).collect())
        .collect()
}
