//! Discrete-event simulator for diverse band-aware dynamic spectrum access
//! (d-DSA) networks.
//!
//! Secondary nodes equipped with software-defined radios relay packetized
//! message traffic over whitespaces in several heterogeneous spectrum bands
//! (TV, ISM, LTE, CBRS) while never interfering with primary users, whose
//! activity follows alternating ON/OFF renewal processes. Two forwarding
//! strategies are provided:
//!
//! * **BARD** — a decentralized multi-agent Q-learning policy that jointly
//!   picks the next hop and the band for every packet ([`agent`], [`engine`]).
//! * **dDSAaR** — a centralized baseline that precomputes least-delay-cost
//!   routes on a static band-multigraph and never adapts ([`baseline`]).
//!
//! The numeric core (link budgets, Shannon rates, reward shaping, value
//! updates, route costs) is generic over the scalar type via [`scalar::Scalar`];
//! the simulator instantiates everything at [`Real`] through the aliases
//! exported at the crate root.

pub mod agent;
pub mod audit;
pub mod baseline;
pub mod config;
pub mod engine;
pub mod events;
pub mod metrics;
pub mod radio;
pub mod scalar;
pub mod spectrum;
pub mod sweep;
pub mod topology;
pub mod traffic;

use serde::{Deserialize, Serialize};

/// Scalar type used by the simulation engine.
pub type Real = f64;

/// Index of a secondary (d-DSA) node in the deployed topology.
pub type NodeId = usize;

/// Concrete instantiations of the generic numeric core.
pub type RadioParams = radio::RadioParams<Real>;
pub type BandProfile = radio::BandProfile<Real>;
pub type BandCatalog = radio::BandCatalog<Real>;
pub type RlParams = agent::RlParams<Real>;
pub type QTable = agent::QTable<Real>;
pub type StbGraph = baseline::StbGraph<Real>;

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Real,
    pub y: Real,
}

impl Point {
    pub fn new(x: Real, y: Real) -> Self {
        Self { x, y }
    }

    /// Euclidean distance in meters.
    pub fn distance(&self, other: &Point) -> Real {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}
