//! Lifecycle registry for Bell pairs shared between two node endpoints.
//!
//! A pair is allocated fresh in the Bell state, may be flagged once by one
//! endpoint (a local P0), and is consumed by the first probe from the other
//! endpoint — reading costs the pair, which is what makes periodic
//! replenishment necessary. Pairs lost in transit are erased and refuse all
//! further operations, forcing callers back onto classical behavior.
//!
//! Legal status transitions: fresh→flagged, fresh→consumed, flagged→consumed,
//! fresh→erased. Nothing else.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::quantum::{JointState, Projector, QuantumError};
use crate::routing::NodeId;

pub type Tick = u64;

/// Expectation classification tolerance for probes: ½ means alive, 0 means
/// the far end flagged; anything else is corruption, never guessed around.
pub const PROBE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairId(pub u64);

/// One node's half of a pair: the owning node and a per-node slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EndpointRef {
    pub node: NodeId,
    pub slot: u32,
}

impl EndpointRef {
    pub fn new(node: NodeId, slot: u32) -> Self {
        Self { node, slot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Fresh,
    Flagged,
    Consumed,
    Erased,
}

impl PairStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PairStatus::Fresh => "fresh",
            PairStatus::Flagged => "flagged",
            PairStatus::Consumed => "consumed",
            PairStatus::Erased => "erased",
        }
    }
}

/// What a pair is for: watching one node (sentinel) or guarding one
/// routing-table entry (handshake).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PairPurpose {
    Sentinel { watched: NodeId },
    Entry { dest: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    Alive,
    FlaggedDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EndSide {
    A,
    B,
}

/// A two-qubit register shared by two endpoints; qubit 0 belongs to
/// endpoint A, qubit 1 to endpoint B.
#[derive(Debug, Clone)]
pub struct EntangledPair {
    id: PairId,
    endpoint_a: EndpointRef,
    endpoint_b: EndpointRef,
    state: JointState,
    status: PairStatus,
    purpose: PairPurpose,
    flagged_by: Option<EndSide>,
}

impl EntangledPair {
    pub fn id(&self) -> PairId {
        self.id
    }

    pub fn endpoint_a(&self) -> EndpointRef {
        self.endpoint_a
    }

    pub fn endpoint_b(&self) -> EndpointRef {
        self.endpoint_b
    }

    pub fn status(&self) -> PairStatus {
        self.status
    }

    pub fn purpose(&self) -> PairPurpose {
        self.purpose
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    fn side_of(&self, endpoint: EndpointRef) -> Option<EndSide> {
        if endpoint == self.endpoint_a {
            Some(EndSide::A)
        } else if endpoint == self.endpoint_b {
            Some(EndSide::B)
        } else {
            None
        }
    }

    /// The endpoint held by `node`, if the node owns one side.
    pub fn endpoint_of(&self, node: NodeId) -> Option<EndpointRef> {
        if self.endpoint_a.node == node {
            Some(self.endpoint_a)
        } else if self.endpoint_b.node == node {
            Some(self.endpoint_b)
        } else {
            None
        }
    }

    pub fn other_node(&self, node: NodeId) -> Option<NodeId> {
        if self.endpoint_a.node == node {
            Some(self.endpoint_b.node)
        } else if self.endpoint_b.node == node {
            Some(self.endpoint_a.node)
        } else {
            None
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self.status, PairStatus::Fresh | PairStatus::Flagged)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("endpoint slot {slot} on node {node:?} is already in use by a live pair")]
    SlotInUse { node: NodeId, slot: u32 },
    #[error("unknown pair {0:?}")]
    UnknownPair(PairId),
    #[error("endpoint {endpoint:?} is not part of pair {pair:?}")]
    NotAnEndpoint { pair: PairId, endpoint: EndpointRef },
    #[error("pair {pair:?} is {status}; the operation requires {required}")]
    Lifecycle {
        pair: PairId,
        status: &'static str,
        required: &'static str,
    },
    #[error("pair {0:?} can only be probed from the endpoint opposite its flagger")]
    SameSideProbe(PairId),
    #[error("pair {pair:?} read expectation {value}, which is neither 1/2 nor 0")]
    CorruptExpectation { pair: PairId, value: f64 },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Running totals, mirrored into [`crate::trace::Metrics`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounters {
    pub allocated: u64,
    pub flagged: u64,
    pub probed: u64,
    pub erased: u64,
}

/// Per-channel targets for periodic replenishment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairBudget {
    /// Fresh pairs each channel is topped back up to.
    pub target_fresh: u32,
    /// Most pairs added to one channel at a single boundary.
    pub replenish_batch: u32,
    pub replenish_period: Tick,
}

/// Owner of every pair in a run. All mutation happens in event order on the
/// simulation thread; reads are snapshots.
#[derive(Debug, Default)]
pub struct PairRegistry {
    pairs: BTreeMap<PairId, EntangledPair>,
    next_id: u64,
    live_slots: BTreeSet<(NodeId, u32)>,
    slot_cursor: BTreeMap<NodeId, u32>,
    in_transit: Vec<PairId>,
    counters: PairCounters,
}

impl PairRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserve `count` consecutive unused slots on `node`, returning the
    /// base endpoint. Reserved slots are never handed out twice.
    pub fn reserve_slots(&mut self, node: NodeId, count: u32) -> EndpointRef {
        let cursor = self.slot_cursor.entry(node).or_insert(0);
        let base = *cursor;
        *cursor += count;
        EndpointRef::new(node, base)
    }

    /// Register `count` fresh Bell pairs between `a` and `b`; pair k uses
    /// slots `a.slot + k` and `b.slot + k`. Pair ids are a monotonic
    /// counter. Fails without side effects if any slot is held by a live
    /// pair.
    pub fn allocate(
        &mut self,
        a: EndpointRef,
        b: EndpointRef,
        purpose: PairPurpose,
        count: u32,
    ) -> Result<Vec<PairId>, RegistryError> {
        if count == 0 {
            return Err(RegistryError::ZeroCount);
        }
        let mut wanted = Vec::new();
        for k in 0..count {
            wanted.push((a.node, a.slot + k));
            wanted.push((b.node, b.slot + k));
        }
        for &(node, slot) in &wanted {
            if self.live_slots.contains(&(node, slot)) {
                return Err(RegistryError::SlotInUse { node, slot });
            }
        }
        {
            let mut seen = BTreeSet::new();
            for &(node, slot) in &wanted {
                if !seen.insert((node, slot)) {
                    return Err(RegistryError::SlotInUse { node, slot });
                }
            }
        }
        let mut ids = Vec::with_capacity(count as usize);
        for k in 0..count {
            let id = PairId(self.next_id);
            self.next_id += 1;
            let ea = EndpointRef::new(a.node, a.slot + k);
            let eb = EndpointRef::new(b.node, b.slot + k);
            self.pairs.insert(
                id,
                EntangledPair {
                    id,
                    endpoint_a: ea,
                    endpoint_b: eb,
                    state: JointState::bell_pair(),
                    status: PairStatus::Fresh,
                    purpose,
                    flagged_by: None,
                },
            );
            self.live_slots.insert((ea.node, ea.slot));
            self.live_slots.insert((eb.node, eb.slot));
            self.in_transit.push(id);
            self.counters.allocated += 1;
            ids.push(id);
        }
        for node in [a.node, b.node] {
            let cursor = self.slot_cursor.entry(node).or_insert(0);
            let used = if node == a.node {
                a.slot + count
            } else {
                b.slot + count
            };
            *cursor = (*cursor).max(used);
        }
        Ok(ids)
    }

    pub fn pair(&self, id: PairId) -> Option<&EntangledPair> {
        self.pairs.get(&id)
    }

    fn pair_mut(&mut self, id: PairId) -> Result<&mut EntangledPair, RegistryError> {
        self.pairs
            .get_mut(&id)
            .ok_or(RegistryError::UnknownPair(id))
    }

    fn release_slots(live_slots: &mut BTreeSet<(NodeId, u32)>, pair: &EntangledPair) {
        live_slots.remove(&(pair.endpoint_a.node, pair.endpoint_a.slot));
        live_slots.remove(&(pair.endpoint_b.node, pair.endpoint_b.slot));
    }

    /// Apply P0 at the flagger's qubit. Only a fresh pair can be flagged,
    /// and only by one of its endpoints.
    pub fn flag(&mut self, id: PairId, by: EndpointRef) -> Result<(), RegistryError> {
        let pair = self.pair_mut(id)?;
        let side = pair.side_of(by).ok_or(RegistryError::NotAnEndpoint {
            pair: id,
            endpoint: by,
        })?;
        if pair.status != PairStatus::Fresh {
            return Err(RegistryError::Lifecycle {
                pair: id,
                status: pair.status.as_str(),
                required: "fresh",
            });
        }
        let qubit = match side {
            EndSide::A => 0,
            EndSide::B => 1,
        };
        pair.state = pair.state.apply_projector(Projector::p0(qubit))?;
        pair.status = PairStatus::Flagged;
        pair.flagged_by = Some(side);
        self.counters.flagged += 1;
        Ok(())
    }

    /// Read the pair with a P1 expectation at the prober's qubit and consume
    /// it. ½ classifies as [`ProbeOutcome::Alive`], 0 as
    /// [`ProbeOutcome::FlaggedDown`]; any other value is an internal
    /// corruption error. A flagged pair can only be probed from the side
    /// opposite its flagger.
    pub fn probe(&mut self, id: PairId, by: EndpointRef) -> Result<ProbeOutcome, RegistryError> {
        let (value, _) = self.consume_for_probe(id, by)?;
        let outcome = if (value - 0.5).abs() <= PROBE_TOLERANCE {
            ProbeOutcome::Alive
        } else if value.abs() <= PROBE_TOLERANCE {
            ProbeOutcome::FlaggedDown
        } else {
            return Err(RegistryError::CorruptExpectation { pair: id, value });
        };
        Ok(outcome)
    }

    /// Expectation value a probe would read, without consuming (trace use).
    pub fn probe_expectation(&self, id: PairId, by: EndpointRef) -> Option<f64> {
        let pair = self.pairs.get(&id)?;
        let side = pair.side_of(by)?;
        let qubit = match side {
            EndSide::A => 0,
            EndSide::B => 1,
        };
        pair.state.expectation(Projector::p1(qubit)).ok()
    }

    fn consume_for_probe(
        &mut self,
        id: PairId,
        by: EndpointRef,
    ) -> Result<(f64, PairStatus), RegistryError> {
        let pair = self.pair_mut(id)?;
        let side = pair.side_of(by).ok_or(RegistryError::NotAnEndpoint {
            pair: id,
            endpoint: by,
        })?;
        if !pair.is_live() {
            return Err(RegistryError::Lifecycle {
                pair: id,
                status: pair.status.as_str(),
                required: "fresh or flagged",
            });
        }
        if pair.flagged_by == Some(side) {
            return Err(RegistryError::SameSideProbe(id));
        }
        let qubit = match side {
            EndSide::A => 0,
            EndSide::B => 1,
        };
        let value = pair.state.expectation(Projector::p1(qubit))?;
        let before = pair.status;
        pair.status = PairStatus::Consumed;
        let pair = self.pairs.get(&id).cloned().unwrap();
        Self::release_slots(&mut self.live_slots, &pair);
        self.counters.probed += 1;
        Ok((value, before))
    }

    /// Single-shot sampled probe: one Born-rule measurement of P1's basis at
    /// the prober's qubit. Consumes the pair and exactly one random draw.
    pub fn probe_sampled<R: Rng + ?Sized>(
        &mut self,
        id: PairId,
        by: EndpointRef,
        rng: &mut R,
    ) -> Result<u8, RegistryError> {
        let pair = self.pair_mut(id)?;
        let side = pair.side_of(by).ok_or(RegistryError::NotAnEndpoint {
            pair: id,
            endpoint: by,
        })?;
        if !pair.is_live() {
            return Err(RegistryError::Lifecycle {
                pair: id,
                status: pair.status.as_str(),
                required: "fresh or flagged",
            });
        }
        if pair.flagged_by == Some(side) {
            return Err(RegistryError::SameSideProbe(id));
        }
        let qubit = match side {
            EndSide::A => 0,
            EndSide::B => 1,
        };
        let (bit, _) = pair.state.measure_sample(qubit, rng)?;
        pair.status = PairStatus::Consumed;
        let pair = self.pairs.get(&id).cloned().unwrap();
        Self::release_slots(&mut self.live_slots, &pair);
        self.counters.probed += 1;
        Ok(bit)
    }

    /// Distinct (node, node, purpose) channels over every pair ever
    /// allocated, normalized so the lower node id comes first.
    pub fn channels(&self) -> BTreeSet<(NodeId, NodeId, PairPurpose)> {
        self.pairs
            .values()
            .map(|p| {
                let (x, y) = if p.endpoint_a.node <= p.endpoint_b.node {
                    (p.endpoint_a.node, p.endpoint_b.node)
                } else {
                    (p.endpoint_b.node, p.endpoint_a.node)
                };
                (x, y, p.purpose)
            })
            .collect()
    }

    /// Live pair ids between two nodes for a purpose, oldest first.
    pub fn live_between(&self, x: NodeId, y: NodeId, purpose: PairPurpose) -> Vec<PairId> {
        self.pairs
            .values()
            .filter(|p| {
                p.is_live()
                    && p.purpose == purpose
                    && ((p.endpoint_a.node == x && p.endpoint_b.node == y)
                        || (p.endpoint_a.node == y && p.endpoint_b.node == x))
            })
            .map(|p| p.id)
            .collect()
    }

    /// Fresh pair ids between two nodes for a purpose, oldest first.
    pub fn fresh_between(&self, x: NodeId, y: NodeId, purpose: PairPurpose) -> Vec<PairId> {
        self.live_between(x, y, purpose)
            .into_iter()
            .filter(|&id| self.pairs[&id].status == PairStatus::Fresh)
            .collect()
    }

    /// At a period boundary, top every known channel back up to the budget,
    /// adding at most `replenish_batch` pairs per channel. Away from a
    /// boundary this is a no-op.
    pub fn replenish(&mut self, budget: &PairBudget, now: Tick) -> Vec<PairId> {
        if budget.replenish_period == 0 || !now.is_multiple_of(budget.replenish_period) {
            return Vec::new();
        }
        let mut added = Vec::new();
        for (x, y, purpose) in self.channels() {
            let fresh = self.fresh_between(x, y, purpose).len() as u32;
            let deficit = budget
                .target_fresh
                .saturating_sub(fresh)
                .min(budget.replenish_batch);
            if deficit == 0 {
                continue;
            }
            let a = self.reserve_slots(x, deficit);
            let b = self.reserve_slots(y, deficit);
            let ids = self
                .allocate(a, b, purpose, deficit)
                .expect("reserved slots cannot collide");
            added.extend(ids);
        }
        added
    }

    /// Independently erase each in-transit fresh pair with probability
    /// `rate`, then mark the batch as delivered. Draws one random value per
    /// in-transit pair regardless of outcome.
    pub fn erase_randomly<R: Rng + ?Sized>(&mut self, rate: f64, rng: &mut R) -> Vec<PairId> {
        debug_assert!((0.0..=1.0).contains(&rate));
        let batch: Vec<PairId> = std::mem::take(&mut self.in_transit);
        let mut erased = Vec::new();
        for id in batch {
            let lost = rng.random::<f64>() < rate;
            let Some(pair) = self.pairs.get_mut(&id) else {
                continue;
            };
            if lost && pair.status == PairStatus::Fresh {
                pair.status = PairStatus::Erased;
                let pair = pair.clone();
                Self::release_slots(&mut self.live_slots, &pair);
                self.counters.erased += 1;
                erased.push(id);
            }
        }
        erased
    }

    pub fn counters(&self) -> PairCounters {
        self.counters
    }

    /// (fresh, flagged, consumed, erased) totals over all pairs.
    pub fn status_counts(&self) -> (u64, u64, u64, u64) {
        let mut counts = (0, 0, 0, 0);
        for p in self.pairs.values() {
            match p.status {
                PairStatus::Fresh => counts.0 += 1,
                PairStatus::Flagged => counts.1 += 1,
                PairStatus::Consumed => counts.2 += 1,
                PairStatus::Erased => counts.3 += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::AMP_TOLERANCE;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_nodes() -> (NodeId, NodeId) {
        (NodeId(0), NodeId(1))
    }

    fn sentinel(watched: u16) -> PairPurpose {
        PairPurpose::Sentinel {
            watched: NodeId(watched),
        }
    }

    #[test]
    fn allocation_yields_fresh_bell_pairs() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let ids = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                3,
            )
            .unwrap();
        assert_eq!(ids, vec![PairId(0), PairId(1), PairId(2)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for id in ids {
            let pair = reg.pair(id).unwrap();
            assert_eq!(pair.status(), PairStatus::Fresh);
            let amps = pair.state().amplitudes();
            assert!((amps[0].re - h).abs() <= AMP_TOLERANCE);
            assert!((amps[3].re - h).abs() <= AMP_TOLERANCE);
        }
        // A receiver-side probe of a fresh pair reads 1/2.
        let ep = reg.pair(PairId(0)).unwrap().endpoint_of(e).unwrap();
        assert!((reg.probe_expectation(PairId(0), ep).unwrap() - 0.5).abs() <= AMP_TOLERANCE);
    }

    #[test]
    fn slot_reuse_is_rejected() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        reg.allocate(
            EndpointRef::new(b, 0),
            EndpointRef::new(e, 0),
            sentinel(7),
            1,
        )
        .unwrap();
        let err = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 5),
                sentinel(7),
                1,
            )
            .unwrap_err();
        assert_eq!(err, RegistryError::SlotInUse { node: b, slot: 0 });
    }

    #[test]
    fn flag_projects_the_flagger_qubit() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let ids = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                1,
            )
            .unwrap();
        let id = ids[0];
        reg.flag(id, EndpointRef::new(b, 0)).unwrap();
        let pair = reg.pair(id).unwrap();
        assert_eq!(pair.status(), PairStatus::Flagged);
        let amps = pair.state().amplitudes();
        assert!((amps[0].re - std::f64::consts::FRAC_1_SQRT_2).abs() <= AMP_TOLERANCE);
        for a in &amps[1..] {
            assert!(a.norm() <= AMP_TOLERANCE);
        }

        assert!(matches!(
            reg.flag(id, EndpointRef::new(b, 0)),
            Err(RegistryError::Lifecycle {
                required: "fresh",
                ..
            })
        ));
        let outsider = EndpointRef::new(NodeId(9), 0);
        let mut reg2 = PairRegistry::new();
        let ids2 = reg2
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                1,
            )
            .unwrap();
        assert!(matches!(
            reg2.flag(ids2[0], outsider),
            Err(RegistryError::NotAnEndpoint { .. })
        ));
    }

    #[test]
    fn probing_fresh_and_flagged_pairs() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let ids = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                2,
            )
            .unwrap();

        // Fresh pair: alive, consumed by the read.
        assert_eq!(
            reg.probe(ids[0], EndpointRef::new(e, 0)).unwrap(),
            ProbeOutcome::Alive
        );
        assert_eq!(reg.pair(ids[0]).unwrap().status(), PairStatus::Consumed);
        assert!(matches!(
            reg.probe(ids[0], EndpointRef::new(e, 0)),
            Err(RegistryError::Lifecycle {
                required: "fresh or flagged",
                ..
            })
        ));

        // Flagged pair: the far side reads 0.
        reg.flag(ids[1], EndpointRef::new(b, 1)).unwrap();
        assert_eq!(
            reg.probe(ids[1], EndpointRef::new(e, 1)).unwrap(),
            ProbeOutcome::FlaggedDown
        );
    }

    #[test]
    fn flagger_cannot_probe_its_own_pair() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let ids = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                1,
            )
            .unwrap();
        reg.flag(ids[0], EndpointRef::new(b, 0)).unwrap();
        assert_eq!(
            reg.probe(ids[0], EndpointRef::new(b, 0)).unwrap_err(),
            RegistryError::SameSideProbe(ids[0])
        );
    }

    #[test]
    fn consumed_slots_become_reusable() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let ids = reg
            .allocate(
                EndpointRef::new(b, 0),
                EndpointRef::new(e, 0),
                sentinel(7),
                1,
            )
            .unwrap();
        reg.probe(ids[0], EndpointRef::new(e, 0)).unwrap();
        reg.allocate(
            EndpointRef::new(b, 0),
            EndpointRef::new(e, 0),
            sentinel(7),
            1,
        )
        .unwrap();
    }

    #[test]
    fn replenish_tops_back_up_to_budget() {
        let (b, e) = two_nodes();
        let mut reg = PairRegistry::new();
        let a0 = reg.reserve_slots(b, 4);
        let b0 = reg.reserve_slots(e, 4);
        let ids = reg.allocate(a0, b0, sentinel(7), 4).unwrap();
        for &id in &ids[..3] {
            reg.probe(
                id,
                EndpointRef::new(e, reg.pair(id).unwrap().endpoint_of(e).unwrap().slot),
            )
            .unwrap();
        }
        let budget = PairBudget {
            target_fresh: 4,
            replenish_batch: 16,
            replenish_period: 50,
        };
        // Between boundaries: nothing.
        assert!(reg.replenish(&budget, 49).is_empty());
        // At the boundary: 3 new pairs to reach the target again.
        let added = reg.replenish(&budget, 50);
        assert_eq!(added.len(), 3);
        assert_eq!(reg.fresh_between(b, e, sentinel(7)).len(), 4);
        // Batch cap limits a single boundary.
        for &id in added.iter() {
            let ep = reg.pair(id).unwrap().endpoint_of(e).unwrap();
            reg.probe(id, ep).unwrap();
        }
        let capped = PairBudget {
            target_fresh: 4,
            replenish_batch: 2,
            replenish_period: 50,
        };
        assert_eq!(reg.replenish(&capped, 100).len(), 2);
    }

    #[test]
    fn replenish_replaces_erased_pairs_at_the_boundary() {
        let (b, e) = two_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut reg = PairRegistry::new();
        let a0 = reg.reserve_slots(b, 6);
        let b0 = reg.reserve_slots(e, 6);
        reg.allocate(a0, b0, sentinel(7), 6).unwrap();
        let lost = reg.erase_randomly(0.5, &mut rng).len() as u32;
        assert!(lost > 0, "seed must erase something for the test to bite");
        assert_eq!(reg.fresh_between(b, e, sentinel(7)).len() as u32, 6 - lost);

        let budget = PairBudget {
            target_fresh: 6,
            replenish_batch: 16,
            replenish_period: 50,
        };
        let added = reg.replenish(&budget, 50);
        assert_eq!(added.len() as u32, lost, "every erased pair is replaced");
        assert_eq!(reg.fresh_between(b, e, sentinel(7)).len(), 6);
        // Bookkeeping stays consistent with the event counts.
        let counters = reg.counters();
        assert_eq!(counters.allocated, 6 + u64::from(lost));
        assert_eq!(counters.erased, u64::from(lost));
        let (fresh, flagged, consumed, erased) = reg.status_counts();
        assert_eq!(fresh + flagged + consumed + erased, counters.allocated);
    }

    #[test]
    fn erasure_rates_zero_and_one() {
        let (b, e) = two_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reg = PairRegistry::new();
        let a0 = reg.reserve_slots(b, 8);
        let b0 = reg.reserve_slots(e, 8);
        reg.allocate(a0, b0, sentinel(7), 8).unwrap();
        assert!(reg.erase_randomly(0.0, &mut rng).is_empty());
        // The batch was delivered; a second call has nothing in transit.
        assert!(reg.erase_randomly(1.0, &mut rng).is_empty());

        let a1 = reg.reserve_slots(b, 8);
        let b1 = reg.reserve_slots(e, 8);
        let ids = reg.allocate(a1, b1, sentinel(7), 8).unwrap();
        let erased = reg.erase_randomly(1.0, &mut rng);
        assert_eq!(erased, ids);
        for id in erased {
            assert_eq!(reg.pair(id).unwrap().status(), PairStatus::Erased);
            let ep = reg.pair(id).unwrap().endpoint_a();
            assert!(matches!(
                reg.probe(id, ep),
                Err(RegistryError::Lifecycle { .. })
            ));
            assert!(matches!(
                reg.flag(id, ep),
                Err(RegistryError::Lifecycle { .. })
            ));
        }
    }

    #[test]
    fn erasure_count_tracks_the_binomial_oracle() {
        // n = 10^4, p = 0.1: mean 1000, 3σ = 3·sqrt(900) = 90.
        let (b, e) = two_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut reg = PairRegistry::new();
        let a0 = reg.reserve_slots(b, 10_000);
        let b0 = reg.reserve_slots(e, 10_000);
        reg.allocate(a0, b0, sentinel(7), 10_000).unwrap();
        let erased = reg.erase_randomly(0.1, &mut rng).len() as i64;
        assert!(
            (erased - 1000).abs() <= 90,
            "erased {erased} outside 1000 ± 90"
        );
        assert_eq!(reg.counters().erased, erased as u64);
    }

    #[test]
    fn sampled_probe_consumes_and_reports_bits() {
        let (b, e) = two_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut reg = PairRegistry::new();
        let a0 = reg.reserve_slots(b, 64);
        let b0 = reg.reserve_slots(e, 64);
        let ids = reg.allocate(a0, b0, sentinel(7), 64).unwrap();
        // Flagged pairs can never sample a 1 at the far end.
        for &id in &ids[..32] {
            reg.flag(id, reg.pair(id).unwrap().endpoint_of(b).unwrap())
                .unwrap();
            let ep = reg.pair(id).unwrap().endpoint_of(e).unwrap();
            assert_eq!(reg.probe_sampled(id, ep, &mut rng).unwrap(), 0);
        }
        // Fresh pairs yield both bits over enough samples.
        let mut ones = 0;
        for &id in &ids[32..] {
            let ep = reg.pair(id).unwrap().endpoint_of(e).unwrap();
            ones += u32::from(reg.probe_sampled(id, ep, &mut rng).unwrap());
        }
        assert!(ones > 0 && ones < 32);
    }

    /// Random walk over registry operations: whatever sequence is attempted,
    /// observed transitions stay within the legal status machine.
    #[derive(Debug, Clone)]
    enum Op {
        Flag(u8, bool),
        Probe(u8, bool),
        Erase,
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (any::<u8>(), any::<bool>()).prop_map(|(i, side)| Op::Flag(i, side)),
            (any::<u8>(), any::<bool>()).prop_map(|(i, side)| Op::Probe(i, side)),
            Just(Op::Erase),
        ]
    }

    proptest! {
        #[test]
        fn status_machine_admits_only_legal_transitions(ops in prop::collection::vec(arb_op(), 1..64)) {
            let (b, e) = two_nodes();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut reg = PairRegistry::new();
            let a0 = reg.reserve_slots(b, 8);
            let b0 = reg.reserve_slots(e, 8);
            let ids = reg.allocate(a0, b0, sentinel(7), 8).unwrap();
            let mut last: BTreeMap<PairId, PairStatus> =
                ids.iter().map(|&id| (id, PairStatus::Fresh)).collect();
            for op in ops {
                match op {
                    Op::Flag(i, side) => {
                        let id = ids[i as usize % ids.len()];
                        let node = if side { b } else { e };
                        let ep = reg.pair(id).unwrap().endpoint_of(node).unwrap();
                        let _ = reg.flag(id, ep);
                    }
                    Op::Probe(i, side) => {
                        let id = ids[i as usize % ids.len()];
                        let node = if side { b } else { e };
                        let ep = reg.pair(id).unwrap().endpoint_of(node).unwrap();
                        let _ = reg.probe(id, ep);
                    }
                    Op::Erase => {
                        let _ = reg.erase_randomly(0.5, &mut rng);
                    }
                }
                for (&id, old) in last.iter_mut() {
                    let new = reg.pair(id).unwrap().status();
                    let legal = matches!(
                        (*old, new),
                        (x, y) if x == y
                    ) || matches!(
                        (*old, new),
                        (PairStatus::Fresh, PairStatus::Flagged)
                            | (PairStatus::Fresh, PairStatus::Consumed)
                            | (PairStatus::Fresh, PairStatus::Erased)
                            | (PairStatus::Flagged, PairStatus::Consumed)
                    );
                    prop_assert!(legal, "illegal transition {:?} -> {:?}", old, new);
                    *old = new;
                }
            }
            // Conservation: every pair is in exactly one terminal-or-live bucket.
            let (fresh, flagged, consumed, erased) = reg.status_counts();
            prop_assert_eq!(fresh + flagged + consumed + erased, reg.counters().allocated);
        }
    }
}
