//! Simulation and analysis of a hierarchical metropolitan decoy-state QKD
//! network: key-rate estimation from per-intensity link statistics, link
//! Monte Carlo, classical key distillation, the routed/switched/relayed
//! network with its key pools, and an AES-128 messaging layer on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod crypto_app;
pub mod decoy;
pub mod fixtures;
pub mod link_sim;
pub mod network;
pub mod postprocessing;
pub mod records;
pub mod report;
pub mod types;

pub use bits::Bits;
pub use decoy::{
    binary_entropy, e1_upper_bound, finite_statistic_bounds, key_rate, key_rate_with, q1_lower_bound, ClassStats,
    Fluctuation, IntensityClass, IntensityMix, NoSecureKey, ObservedStatistics, ProtocolParams, RateEstimate,
};
pub use records::{load_measurement_records, MeasurementRecord};
pub use types::{NodeId, NodePair};
