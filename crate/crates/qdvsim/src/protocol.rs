//! Pair-based failure-notification protocols layered over the routing
//! engine and the pair registry.
//!
//! [`sentinel`]: neighbors of one watched node share Bell pairs with distant
//! gateways; a watcher that detects the failure flags its pairs, and the
//! gateways learn it at their next poll, independent of hop distance.
//!
//! [`handshake`]: every routing exchange carries fresh pairs per advertised
//! entry; before applying a neighbor's metric for a destination, a node
//! probes one shared pair and distrusts the advertisement if the neighbor
//! flagged that destination down.
//!
//! Both protocols degrade to plain classical behavior when pairs run out or
//! arrive erased; they never halt the run.

pub mod handshake;
pub mod sentinel;

use crate::entangle::PairPurpose;
use crate::routing::{NodeId, Topology};

/// Render a purpose for traces, e.g. `sentinel:A` or `entry:A`.
pub fn purpose_label(purpose: PairPurpose, topo: &Topology) -> String {
    match purpose {
        PairPurpose::Sentinel { watched } => format!("sentinel:{}", topo.name(watched)),
        PairPurpose::Entry { dest } => format!("entry:{}", topo.name(dest)),
    }
}

/// Outcome of one pre-exchange trust check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustDecision {
    Trust,
    Distrust,
    NoPairs,
}

impl TrustDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            TrustDecision::Trust => "trust",
            TrustDecision::Distrust => "distrust",
            TrustDecision::NoPairs => "no_pairs",
        }
    }
}

/// Where a trust decision came from: a consumed pair, the node's own
/// memory of the destination being down, or the classical fallback when no
/// pair was available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionSource {
    Probe,
    Remembered,
    Fallback,
}

impl DecisionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionSource::Probe => "probe",
            DecisionSource::Remembered => "remembered",
            DecisionSource::Fallback => "fallback",
        }
    }
}

/// One consumed pair inside a protocol step, kept for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReading {
    pub pair: crate::entangle::PairId,
    pub by: NodeId,
    pub expectation: Option<f64>,
    pub sampled_bit: Option<u8>,
    pub flagged_down: bool,
}
