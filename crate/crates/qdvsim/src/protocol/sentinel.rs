//! Gateway-sentinel protocol: watchers adjacent to one watched node share
//! Bell pairs with distant gateways. A watcher that declares the watched
//! node silent flags every fresh pair it holds toward every gateway; each
//! gateway polls one pair per watcher on a fixed period and, on reading a
//! flag, latches a region-down decision: its metric for the watched node is
//! capped at the watcher-to-gateway hop count plus one, and advertisements
//! for it arriving from the loop region are no longer trusted.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::entangle::{PairId, PairPurpose, PairRegistry, ProbeOutcome, Tick};
use crate::routing::{NodeId, Topology};
use crate::scenario::{ProbeMode, SentinelConfig};

use super::ProbeReading;

/// A gateway's verdict after one poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollStatus {
    Alive,
    RegionDown,
    NoPairs,
}

impl PollStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PollStatus::Alive => "alive",
            PollStatus::RegionDown => "region_down",
            PollStatus::NoPairs => "no_pairs",
        }
    }
}

/// What one gateway did during a poll event.
#[derive(Debug, Clone)]
pub struct PollReport {
    pub gateway: NodeId,
    pub status: PollStatus,
    pub readings: Vec<ProbeReading>,
    /// Watchers that had no live pair left toward this gateway.
    pub exhausted_watchers: Vec<NodeId>,
}

/// Flags raised by one watcher after detecting the failure.
#[derive(Debug, Clone)]
pub struct FlagReport {
    pub flagged: Vec<(PairId, NodeId)>,
    /// Gateways toward which the watcher had no fresh pair left.
    pub uncovered_gateways: Vec<NodeId>,
}

#[derive(Debug)]
pub struct SentinelState {
    watched: NodeId,
    watchers: Vec<NodeId>,
    gateways: Vec<NodeId>,
    pairs_per_watcher_gateway: u32,
    poll_period: Tick,
    /// Per gateway: hop distance to the nearest watcher on the pre-failure
    /// topology.
    hops: BTreeMap<NodeId, u32>,
    /// Per gateway: the scoped infinity value, hops + 1 capped at the
    /// global infinity.
    scoped: BTreeMap<NodeId, u32>,
    /// Per gateway: neighbors on min-hop paths toward the watched node,
    /// distrusted after a region-down decision.
    region_side: BTreeMap<NodeId, BTreeSet<NodeId>>,
    region_down: BTreeMap<NodeId, Tick>,
}

impl SentinelState {
    /// Precompute hop distances and region-side neighbor sets from the
    /// pre-failure topology.
    pub fn new(config: &SentinelConfig, topo: &Topology, infinity: u32) -> Self {
        let mut watchers = config.watchers.clone();
        watchers.sort_unstable();
        watchers.dedup();
        let mut gateways = config.gateways.clone();
        gateways.sort_unstable();
        gateways.dedup();

        let mut hops = BTreeMap::new();
        let mut scoped = BTreeMap::new();
        let mut region_side = BTreeMap::new();
        for &gw in &gateways {
            let distance = watchers
                .iter()
                .filter_map(|&w| topo.hop_distance(w, gw))
                .min()
                .unwrap_or(infinity);
            hops.insert(gw, distance);
            scoped.insert(gw, (distance + 1).min(infinity));
            let toward_watched = topo.hop_distance(gw, config.watched);
            let side: BTreeSet<NodeId> = topo
                .neighbors(gw)
                .into_iter()
                .filter(
                    |&(nb, _)| match (toward_watched, topo.hop_distance(nb, config.watched)) {
                        (Some(d), Some(nd)) => nd + 1 == d,
                        _ => false,
                    },
                )
                .map(|(nb, _)| nb)
                .collect();
            region_side.insert(gw, side);
        }
        Self {
            watched: config.watched,
            watchers,
            gateways,
            pairs_per_watcher_gateway: config.pairs_per_watcher_gateway,
            poll_period: config.poll_period,
            hops,
            scoped,
            region_side,
            region_down: BTreeMap::new(),
        }
    }

    pub fn watched(&self) -> NodeId {
        self.watched
    }

    pub fn watchers(&self) -> &[NodeId] {
        &self.watchers
    }

    pub fn gateways(&self) -> &[NodeId] {
        &self.gateways
    }

    pub fn poll_period(&self) -> Tick {
        self.poll_period
    }

    pub fn pairs_per_watcher_gateway(&self) -> u32 {
        self.pairs_per_watcher_gateway
    }

    fn purpose(&self) -> PairPurpose {
        PairPurpose::Sentinel {
            watched: self.watched,
        }
    }

    pub fn is_watcher(&self, node: NodeId) -> bool {
        self.watchers.contains(&node)
    }

    pub fn is_region_down(&self, gateway: NodeId) -> bool {
        self.region_down.contains_key(&gateway)
    }

    pub fn hops(&self, gateway: NodeId) -> u32 {
        self.hops[&gateway]
    }

    pub fn scoped_infinity(&self, gateway: NodeId) -> u32 {
        self.scoped[&gateway]
    }

    /// Is `from` on the distrusted loop-region side of `gateway`?
    pub fn is_region_side(&self, gateway: NodeId, from: NodeId) -> bool {
        self.region_side
            .get(&gateway)
            .is_some_and(|s| s.contains(&from))
    }

    /// Allocate the initial pair stock: `pairs_per_watcher_gateway` fresh
    /// pairs per (watcher, gateway) channel.
    pub fn allocate_initial(&self, registry: &mut PairRegistry) -> Vec<PairId> {
        let mut ids = Vec::new();
        for &w in &self.watchers {
            for &g in &self.gateways {
                let a = registry.reserve_slots(w, self.pairs_per_watcher_gateway);
                let b = registry.reserve_slots(g, self.pairs_per_watcher_gateway);
                ids.extend(
                    registry
                        .allocate(a, b, self.purpose(), self.pairs_per_watcher_gateway)
                        .expect("reserved slots cannot collide"),
                );
            }
        }
        ids
    }

    /// The watcher detected the watched node silent: flag every fresh
    /// sentinel pair it holds toward every gateway. Running out of pairs is
    /// degraded coverage, not an error.
    pub fn on_failure_detected(&self, watcher: NodeId, registry: &mut PairRegistry) -> FlagReport {
        debug_assert!(self.is_watcher(watcher));
        let mut flagged = Vec::new();
        let mut uncovered = Vec::new();
        for &g in &self.gateways {
            let fresh = registry.fresh_between(watcher, g, self.purpose());
            if fresh.is_empty() {
                uncovered.push(g);
                continue;
            }
            for id in fresh {
                let endpoint = registry.pair(id).unwrap().endpoint_of(watcher).unwrap();
                registry
                    .flag(id, endpoint)
                    .expect("fresh pair owned by the watcher must accept a flag");
                flagged.push((id, g));
            }
        }
        FlagReport {
            flagged,
            uncovered_gateways: uncovered,
        }
    }

    /// One poll by every gateway that has not already latched a decision:
    /// probe one pair per watcher; any flag reading latches region-down.
    pub fn poll<R: Rng + ?Sized>(
        &mut self,
        registry: &mut PairRegistry,
        mode: ProbeMode,
        samples: u32,
        now: Tick,
        rng: &mut R,
    ) -> Vec<PollReport> {
        let mut reports = Vec::new();
        for &gw in &self.gateways.clone() {
            if self.is_region_down(gw) {
                continue;
            }
            let mut readings = Vec::new();
            let mut exhausted = Vec::new();
            let mut any_flag = false;
            for &w in &self.watchers {
                let live = registry.live_between(w, gw, self.purpose());
                match mode {
                    ProbeMode::Expectation => {
                        let Some(&id) = live.first() else {
                            exhausted.push(w);
                            continue;
                        };
                        let endpoint = registry.pair(id).unwrap().endpoint_of(gw).unwrap();
                        let expectation = registry.probe_expectation(id, endpoint);
                        match registry.probe(id, endpoint) {
                            Ok(outcome) => {
                                let down = outcome == ProbeOutcome::FlaggedDown;
                                any_flag |= down;
                                readings.push(ProbeReading {
                                    pair: id,
                                    by: gw,
                                    expectation,
                                    sampled_bit: None,
                                    flagged_down: down,
                                });
                            }
                            Err(_) => exhausted.push(w),
                        }
                    }
                    ProbeMode::Sampled => {
                        // A single 1 proves the pair was never flagged; an
                        // all-zero run of samples is read as a flag.
                        let take: Vec<PairId> =
                            live.into_iter().take(samples.max(1) as usize).collect();
                        if take.is_empty() {
                            exhausted.push(w);
                            continue;
                        }
                        let mut saw_one = false;
                        for id in take {
                            let endpoint = registry.pair(id).unwrap().endpoint_of(gw).unwrap();
                            if let Ok(bit) = registry.probe_sampled(id, endpoint, rng) {
                                saw_one |= bit == 1;
                                readings.push(ProbeReading {
                                    pair: id,
                                    by: gw,
                                    expectation: None,
                                    sampled_bit: Some(bit),
                                    flagged_down: false,
                                });
                            }
                        }
                        any_flag |= !saw_one;
                    }
                }
            }
            let status = if any_flag {
                self.region_down.insert(gw, now);
                PollStatus::RegionDown
            } else if readings.is_empty() {
                PollStatus::NoPairs
            } else {
                PollStatus::Alive
            };
            reports.push(PollReport {
                gateway: gw,
                status,
                readings,
                exhausted_watchers: exhausted,
            });
        }
        reports
    }
}
