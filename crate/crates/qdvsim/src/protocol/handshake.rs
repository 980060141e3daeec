//! Per-entry entangled handshake: every routing exchange also hands the
//! receiver fresh pairs for each advertised entry, and before applying a
//! neighbor's metric for a destination the receiver probes one shared pair.
//! A flag reading means the neighbor knows that destination is gone, so the
//! advertisement is distrusted, the local route through that neighbor is
//! cut, and the node flags its own pairs for the destination toward its
//! remaining neighbors — the down-signal travels hop by hop.
//!
//! A node that has itself concluded a destination is down remembers that
//! verdict and distrusts further advertisements without spending pairs (it
//! has flagged its own pairs, and a flagged pair only reads from the far
//! side). The memory counts only while the node still holds a live pair
//! for the entry; ledgers exhausted or erased in transit fall back to
//! trusting classically.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::entangle::{PairId, PairPurpose, PairRegistry, ProbeOutcome};
use crate::routing::NodeId;
use crate::scenario::ProbeMode;

use super::{DecisionSource, ProbeReading, TrustDecision};

/// Ledger key: (holder, neighbor it shares with, destination guarded).
type LedgerKey = (NodeId, NodeId, NodeId);

/// What an attach call produced.
#[derive(Debug, Clone)]
pub struct AttachReport {
    pub pairs: Vec<PairId>,
}

/// Flags raised while propagating a down-signal.
#[derive(Debug, Clone, Default)]
pub struct EntryFlagReport {
    pub flagged: Vec<(PairId, NodeId)>,
    /// True when the ledger had no live pair anywhere for the destination.
    pub nothing_to_flag: bool,
}

/// Result of one pre-exchange trust check.
#[derive(Debug, Clone)]
pub struct TrustReport {
    pub decision: TrustDecision,
    pub source: DecisionSource,
    pub readings: Vec<ProbeReading>,
}

#[derive(Debug)]
pub struct HandshakeState {
    pairs_per_entry: u32,
    probe_mode: ProbeMode,
    probe_samples: u32,
    ledger: BTreeMap<LedgerKey, Vec<PairId>>,
    generation: BTreeMap<LedgerKey, u64>,
    down_belief: BTreeSet<(NodeId, NodeId)>,
}

impl HandshakeState {
    pub fn new(pairs_per_entry: u32, probe_mode: ProbeMode, probe_samples: u32) -> Self {
        Self {
            pairs_per_entry,
            probe_mode,
            probe_samples: probe_samples.max(1),
            ledger: BTreeMap::new(),
            generation: BTreeMap::new(),
            down_belief: BTreeSet::new(),
        }
    }

    pub fn pairs_per_entry(&self) -> u32 {
        self.pairs_per_entry
    }

    pub fn believes_down(&self, node: NodeId, dest: NodeId) -> bool {
        self.down_belief.contains(&(node, dest))
    }

    pub fn generation(&self, node: NodeId, neighbor: NodeId, dest: NodeId) -> u64 {
        self.generation
            .get(&(node, neighbor, dest))
            .copied()
            .unwrap_or(0)
    }

    /// Live pairs `node` holds with `neighbor` for `dest`, oldest first.
    /// Consumed and erased ids are pruned from both mirrored ledger lists.
    pub fn live_pairs(
        &mut self,
        registry: &PairRegistry,
        node: NodeId,
        neighbor: NodeId,
        dest: NodeId,
    ) -> Vec<PairId> {
        for key in [(node, neighbor, dest), (neighbor, node, dest)] {
            if let Some(list) = self.ledger.get_mut(&key) {
                list.retain(|id| registry.pair(*id).is_some_and(|p| p.is_live()));
            }
        }
        self.ledger
            .get(&(node, neighbor, dest))
            .cloned()
            .unwrap_or_default()
    }

    /// Attach `count` fresh pairs for `dest` alongside an advertisement
    /// from `sender` to `receiver`; both ledgers list the same ids. Transit
    /// erasure, when modeled, runs between this call and
    /// [`Self::flag_attached_if_believed`] — a pair lost on the way is
    /// useless no matter what the sender does to its local half.
    pub fn attach(
        &mut self,
        registry: &mut PairRegistry,
        sender: NodeId,
        receiver: NodeId,
        dest: NodeId,
        count: u32,
    ) -> AttachReport {
        if count == 0 {
            return AttachReport { pairs: Vec::new() };
        }
        let a = registry.reserve_slots(sender, count);
        let b = registry.reserve_slots(receiver, count);
        let ids = registry
            .allocate(a, b, PairPurpose::Entry { dest }, count)
            .expect("reserved slots cannot collide");
        for key in [(sender, receiver, dest), (receiver, sender, dest)] {
            self.ledger
                .entry(key)
                .or_default()
                .extend(ids.iter().copied());
            *self.generation.entry(key).or_insert(0) += 1;
        }
        AttachReport { pairs: ids }
    }

    /// A sender that believes `dest` is down flags its side of freshly
    /// attached pairs at once, so the receiver's next probe reads the
    /// signal. Pairs erased in transit are skipped.
    pub fn flag_attached_if_believed(
        &mut self,
        registry: &mut PairRegistry,
        sender: NodeId,
        dest: NodeId,
        pairs: &[PairId],
    ) -> Vec<PairId> {
        if !self.believes_down(sender, dest) {
            return Vec::new();
        }
        let mut flagged = Vec::new();
        for &id in pairs {
            let Some(pair) = registry.pair(id) else {
                continue;
            };
            if pair.status() != crate::entangle::PairStatus::Fresh {
                continue;
            }
            let endpoint = pair.endpoint_of(sender).unwrap();
            registry
                .flag(id, endpoint)
                .expect("fresh pair accepts a flag");
            flagged.push(id);
        }
        flagged
    }

    /// The node concluded `dest` is unreachable: record the belief and flag
    /// every still-fresh pair it holds for that destination toward every
    /// ledger neighbor except `exclude` (the neighbor whose own flag just
    /// told us — it already knows). Already-flagged pairs are skipped.
    pub fn flag_entry(
        &mut self,
        registry: &mut PairRegistry,
        node: NodeId,
        dest: NodeId,
        exclude: Option<NodeId>,
    ) -> EntryFlagReport {
        self.down_belief.insert((node, dest));
        let neighbors: Vec<NodeId> = self
            .ledger
            .keys()
            .filter(|&&(n, _, d)| n == node && d == dest)
            .map(|&(_, nb, _)| nb)
            .filter(|nb| Some(*nb) != exclude)
            .collect();
        let mut report = EntryFlagReport::default();
        let mut saw_live = false;
        for nb in neighbors {
            for id in self.live_pairs(registry, node, nb, dest) {
                saw_live = true;
                let pair = registry.pair(id).unwrap();
                if pair.status() != crate::entangle::PairStatus::Fresh {
                    continue;
                }
                let endpoint = pair.endpoint_of(node).unwrap();
                registry
                    .flag(id, endpoint)
                    .expect("fresh pair accepts a flag");
                report.flagged.push((id, nb));
            }
        }
        report.nothing_to_flag = !saw_live;
        report
    }

    /// Trust check run immediately before applying `neighbor`'s advertised
    /// metric for `dest`. A node that already concluded the destination is
    /// down distrusts without consuming anything, but only while it still
    /// holds a live pair for the entry — the pair is the token of that
    /// knowledge, and with every token erased the node is classical again.
    pub fn pre_exchange_probe<R: Rng + ?Sized>(
        &mut self,
        registry: &mut PairRegistry,
        node: NodeId,
        neighbor: NodeId,
        dest: NodeId,
        rng: &mut R,
    ) -> TrustReport {
        let live = self.live_pairs(registry, node, neighbor, dest);
        if live.is_empty() {
            return TrustReport {
                decision: TrustDecision::NoPairs,
                source: DecisionSource::Fallback,
                readings: Vec::new(),
            };
        }
        if self.believes_down(node, dest) {
            return TrustReport {
                decision: TrustDecision::Distrust,
                source: DecisionSource::Remembered,
                readings: Vec::new(),
            };
        }
        match self.probe_mode {
            ProbeMode::Expectation => {
                let id = live[0];
                let endpoint = registry.pair(id).unwrap().endpoint_of(node).unwrap();
                let expectation = registry.probe_expectation(id, endpoint);
                let outcome = registry
                    .probe(id, endpoint)
                    .expect("live pair held by a non-believing node is probeable");
                let down = outcome == ProbeOutcome::FlaggedDown;
                TrustReport {
                    decision: if down {
                        TrustDecision::Distrust
                    } else {
                        TrustDecision::Trust
                    },
                    source: DecisionSource::Probe,
                    readings: vec![ProbeReading {
                        pair: id,
                        by: node,
                        expectation,
                        sampled_bit: None,
                        flagged_down: down,
                    }],
                }
            }
            ProbeMode::Sampled => {
                let take: Vec<PairId> =
                    live.into_iter().take(self.probe_samples as usize).collect();
                let mut readings = Vec::new();
                let mut saw_one = false;
                for id in take {
                    let endpoint = registry.pair(id).unwrap().endpoint_of(node).unwrap();
                    if let Ok(bit) = registry.probe_sampled(id, endpoint, rng) {
                        saw_one |= bit == 1;
                        readings.push(ProbeReading {
                            pair: id,
                            by: node,
                            expectation: None,
                            sampled_bit: Some(bit),
                            flagged_down: false,
                        });
                    }
                }
                TrustReport {
                    decision: if saw_one {
                        TrustDecision::Trust
                    } else {
                        TrustDecision::Distrust
                    },
                    source: DecisionSource::Probe,
                    readings,
                }
            }
        }
    }
}
