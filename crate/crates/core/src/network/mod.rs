//! The hierarchical network: topology, wavelength routing, the subnet
//! switch, per-pair key pools, trusted-relay chaining and the simulation
//! that fills the pools.

mod pool;
mod relay;
mod scenario;
mod sim;
mod switch;
mod topology;
mod wavelength;

pub use pool::{KeyMaterial, KeyPool, PoolLevel};
pub use relay::{relay_establish, relay_forward_words, relay_recover, RelayOutcome};
pub use scenario::{LinkConfig, LinkDefaults, NodeConfig, NodeRole, RouterConfig, ScenarioConfig, SimulationConfig, SwitchConfig, Via};
pub use sim::{establish_link_keys, simulate_network, LinkRun, NetworkRun};
pub use switch::{is_exclusive, round_robin_schedule, OpticalSwitch, SwitchInterval};
pub use topology::{build_topology, Link, LinkKind, Node, QuantumRouter, RelayPath, Topology};
pub use wavelength::{assign_wavelengths, check_edge_coloring, colors_needed, is_complete, ColoringConflict, WavelengthMap};

use thiserror::Error;

use crate::decoy::NoSecureKey;
use crate::types::{NodeId, NodePair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{ports} router ports need {needed} wavelengths, palette has {got}")]
    PaletteTooSmall { ports: usize, needed: usize, got: usize },
    #[error("wavelength {} used twice at node {}: {} and {}", .0.wavelength, .0.node, .0.pairs.0, .0.pairs.1)]
    Coloring(Box<ColoringConflict>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no QKD link between {0}")]
    NoLink(NodePair),
    #[error("{from} cannot reach {to} through trusted relays")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("invalid relay path: {0}")]
    InvalidPath(String),
    #[error("switch {switch} has no leaf {leaf}")]
    UnknownLeaf { switch: String, leaf: NodeId },
    #[error("{0} is not a switched link")]
    NotSwitched(NodePair),
    #[error("switch busy: {requested} requested while {} is connected", .active.as_ref().map_or("nothing", |a| a.as_str()))]
    SwitchBusy { requested: NodeId, active: Option<NodeId> },
    #[error("insufficient key for {pair}: need {needed} bits, {available} available")]
    InsufficientKey { pair: NodePair, needed: u64, available: u64 },
    #[error("block {block_id} of {pair} already consumed")]
    AlreadyConsumed { pair: NodePair, block_id: u64 },
    #[error("no block {block_id} in pool {pair}")]
    UnknownBlock { pair: NodePair, block_id: u64 },
    #[error("{route}: {reason}")]
    NoSecureKey { route: String, reason: NoSecureKey },
    #[error("{route}: {message}")]
    Distill { route: String, message: String },
}
