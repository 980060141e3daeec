//! Deterministic discrete-event scheduler and the run engine.
//!
//! Events are totally ordered by (tick, seq). Within a tick, failures come
//! first, then the exchange round, sentinel polls, pair replenishment and
//! manual measurements; ties inside one class keep scheduling order, which
//! the engine always produces in node-id order. The whole run is a pure
//! function of (scenario, seed): one logical thread mutates all state in
//! event order, and every random draw comes from a labeled stream.

use std::cmp::Ordering;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::entangle::{PairBudget, PairId, PairRegistry, RegistryError, Tick};
use crate::protocol::handshake::HandshakeState;
use crate::protocol::sentinel::{PollStatus, SentinelState};
use crate::protocol::{purpose_label, DecisionSource, ProbeReading, TrustDecision};
use crate::rng::RngStreams;
use crate::routing::{
    apply_item, build_update, converged_tables, handle_silence, EntryChange, NodeId, RoutingTable,
    Topology, UpdateMessage,
};
use crate::scenario::{FailureKind, ProtocolVariant, ScenarioConfig, ScenarioError};
use crate::trace::{Metrics, RecordBody, TraceRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("internal registry fault: {0}")]
    Registry(#[from] RegistryError),
}

/// What the scheduler can process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NodeDown(NodeId),
    LinkDown(NodeId, NodeId),
    ExchangeRound,
    SentinelPoll,
    PairReplenish,
    /// Manual single-shot measurement of one pair, for fault injection in
    /// tests; never produced by scenarios.
    Measure {
        pair: PairId,
        by: NodeId,
    },
}

impl EventKind {
    /// Fixed processing precedence inside one tick.
    fn class(self) -> u8 {
        match self {
            EventKind::NodeDown(_) | EventKind::LinkDown(..) => 0,
            EventKind::ExchangeRound => 1,
            EventKind::SentinelPoll => 2,
            EventKind::PairReplenish => 3,
            EventKind::Measure { .. } => 4,
        }
    }
}

/// A popped scheduler event; `seq` is the processing index, so (tick, seq)
/// totally orders everything that happened in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub tick: Tick,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QueueEntry {
    tick: Tick,
    class: u8,
    insertion: u64,
    kind: EventKind,
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.tick, self.class, self.insertion).cmp(&(other.tick, other.class, other.insertion))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap of pending events; never admits an event in the past.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<QueueEntry>>,
    insertion: u64,
    processed: u64,
    now: Tick,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// Schedule `kind` at `tick`. Panics on an attempt to schedule into the
    /// past; event handlers only ever look forward.
    pub fn schedule(&mut self, tick: Tick, kind: EventKind) {
        assert!(tick >= self.now, "event scheduled into the past");
        let entry = QueueEntry {
            tick,
            class: kind.class(),
            insertion: self.insertion,
            kind,
        };
        self.insertion += 1;
        self.heap.push(Reverse(entry));
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.tick;
        self.processed += 1;
        Some(Event {
            tick: entry.tick,
            seq: self.processed,
            kind: entry.kind,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Everything a completed run hands back.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
}

/// Run a scenario to convergence or its round cap.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    run_with_injections(config, &[])
}

/// Like [`run`], with extra events pre-scheduled (test hook).
pub fn run_with_injections(
    config: &ScenarioConfig,
    injections: &[(Tick, EventKind)],
) -> Result<RunOutput, SimError> {
    config.validate()?;
    let mut engine = Engine::new(config);
    engine.init(injections);
    engine.run_loop();
    Ok(engine.finish())
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    topo: Topology,
    tables: BTreeMap<NodeId, RoutingTable>,
    /// Each node's own belief about which neighbors are still worth
    /// listening to; detection removes entries one node at a time.
    live_neighbors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    miss_counts: BTreeMap<(NodeId, NodeId), u32>,
    silenced: BTreeSet<(NodeId, NodeId)>,
    registry: PairRegistry,
    sentinel: Option<SentinelState>,
    handshake: Option<HandshakeState>,
    queue: EventQueue,
    round: u64,
    trace: Vec<TraceRecord>,
    metrics: Metrics,
    downed_nodes: BTreeSet<NodeId>,
    pending_failures: usize,
    current_tick: Tick,
    current_seq: u64,
    stopping: bool,
    converged: bool,
    erasure_rng: ChaCha8Rng,
    sampling_rng: ChaCha8Rng,
    first_sentinel_flag: Option<usize>,
    region_down_at: Option<usize>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let streams = RngStreams::new(cfg.seed);
        let topo = cfg.topology.clone();
        let tables = topo
            .all_nodes()
            .map(|n| (n, RoutingTable::new(n, cfg.infinity)))
            .collect();
        let live_neighbors = topo
            .all_nodes()
            .map(|n| (n, topo.neighbors(n).into_iter().map(|(m, _)| m).collect()))
            .collect();
        Self {
            cfg,
            topo,
            tables,
            live_neighbors,
            miss_counts: BTreeMap::new(),
            silenced: BTreeSet::new(),
            registry: PairRegistry::new(),
            sentinel: None,
            handshake: None,
            queue: EventQueue::new(),
            round: 0,
            trace: Vec::new(),
            metrics: Metrics::default(),
            downed_nodes: BTreeSet::new(),
            pending_failures: 0,
            current_tick: 0,
            current_seq: 0,
            stopping: false,
            converged: false,
            erasure_rng: streams.stream("erasure"),
            sampling_rng: streams.stream("sampling"),
            first_sentinel_flag: None,
            region_down_at: None,
        }
    }

    fn name(&self, n: NodeId) -> String {
        self.cfg.topology.name(n).to_string()
    }

    fn emit(&mut self, actor: Option<NodeId>, body: RecordBody) {
        let actor = actor.map_or_else(|| "-".to_string(), |n| self.name(n));
        self.trace.push(TraceRecord {
            tick: self.current_tick,
            seq: self.current_seq,
            actor,
            body,
        });
    }

    fn init(&mut self, injections: &[(Tick, EventKind)]) {
        let mut failures = self.cfg.failures.clone();
        failures.sort_by_key(|&(tick, kind)| {
            let key = match kind {
                FailureKind::NodeDown(n) => (0u8, n, n),
                FailureKind::LinkDown(a, b) => (1u8, a.min(b), a.max(b)),
            };
            (tick, key)
        });
        self.pending_failures = failures.len();
        for (tick, failure) in failures {
            let kind = match failure {
                FailureKind::NodeDown(n) => EventKind::NodeDown(n),
                FailureKind::LinkDown(a, b) => EventKind::LinkDown(a, b),
            };
            self.queue.schedule(tick, kind);
        }
        self.queue
            .schedule(self.cfg.exchange_period, EventKind::ExchangeRound);

        match self.cfg.variant {
            ProtocolVariant::GatewaySentinel => {
                let sentinel_cfg = self
                    .cfg
                    .quantum
                    .sentinel
                    .as_ref()
                    .expect("validated sentinel config");
                let state = SentinelState::new(sentinel_cfg, &self.cfg.topology, self.cfg.infinity);
                let pairs = state.allocate_initial(&mut self.registry);
                for id in pairs {
                    self.emit_pair_allocated(id);
                }
                self.apply_transit_erasure();
                self.queue
                    .schedule(state.poll_period(), EventKind::SentinelPoll);
                self.queue
                    .schedule(self.cfg.quantum.replenish_period, EventKind::PairReplenish);
                self.sentinel = Some(state);
            }
            ProtocolVariant::EntangledHandshake => {
                self.handshake = Some(HandshakeState::new(
                    self.cfg.quantum.pairs_per_entry,
                    self.cfg.quantum.probe_mode,
                    self.cfg.quantum.probe_samples,
                ));
            }
            ProtocolVariant::Classical(_) => {}
        }

        for &(tick, kind) in injections {
            self.queue.schedule(tick, kind);
        }
    }

    fn run_loop(&mut self) {
        loop {
            if self.stopping {
                break;
            }
            let Some(event) = self.queue.pop() else { break };
            self.current_tick = event.tick;
            self.current_seq = event.seq;
            match event.kind {
                EventKind::NodeDown(n) => {
                    self.topo.remove_node(n);
                    self.downed_nodes.insert(n);
                    self.pending_failures -= 1;
                    let node = self.name(n);
                    self.emit(Some(n), RecordBody::NodeDown { node });
                }
                EventKind::LinkDown(a, b) => {
                    self.topo.remove_link(a, b);
                    self.pending_failures -= 1;
                    let (na, nb) = (self.name(a), self.name(b));
                    self.emit(None, RecordBody::LinkDown { a: na, b: nb });
                }
                EventKind::ExchangeRound => {
                    self.exchange_round();
                    if !self.stopping {
                        self.queue.schedule(
                            event.tick + self.cfg.exchange_period,
                            EventKind::ExchangeRound,
                        );
                    }
                }
                EventKind::SentinelPoll => {
                    self.sentinel_poll(event.tick);
                    if !self.stopping {
                        if let Some(s) = &self.sentinel {
                            self.queue
                                .schedule(event.tick + s.poll_period(), EventKind::SentinelPoll);
                        }
                    }
                }
                EventKind::PairReplenish => {
                    self.replenish(event.tick);
                    if !self.stopping {
                        self.queue.schedule(
                            event.tick + self.cfg.quantum.replenish_period,
                            EventKind::PairReplenish,
                        );
                    }
                }
                EventKind::Measure { pair, by } => self.manual_measure(pair, by),
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        self.emit(
            None,
            RecordBody::RunEnd {
                converged: self.converged,
                rounds: self.round,
                loop_detected: self.metrics.loop_detected,
            },
        );
        self.metrics.converged = self.converged;
        self.metrics.total_rounds = self.round;
        let counters = self.registry.counters();
        self.metrics.pairs_allocated = counters.allocated;
        self.metrics.pairs_flagged = counters.flagged;
        self.metrics.pairs_probed = counters.probed;
        self.metrics.pairs_erased = counters.erased;
        // Conservation: every pair ends in exactly one bucket.
        let (fresh, flagged, consumed, erased) = self.registry.status_counts();
        debug_assert_eq!(fresh + flagged + consumed + erased, counters.allocated);
        if let (Some(flag), Some(decision)) = (self.first_sentinel_flag, self.region_down_at) {
            if decision > flag {
                self.metrics.notification_latency_events = Some((decision - flag - 1) as u64);
            }
        }
        RunOutput {
            trace: self.trace,
            metrics: self.metrics,
        }
    }

    // ------------------------------------------------------------------
    // Pair-event helpers
    // ------------------------------------------------------------------

    fn emit_pair_allocated(&mut self, id: PairId) {
        let pair = self.registry.pair(id).unwrap();
        let purpose = purpose_label(pair.purpose(), &self.cfg.topology);
        let (a, b) = (pair.endpoint_a(), pair.endpoint_b());
        let body = RecordBody::PairAllocated {
            pair: id.0,
            purpose,
            a: self.name(a.node),
            a_slot: a.slot,
            b: self.name(b.node),
            b_slot: b.slot,
        };
        self.emit(None, body);
    }

    fn emit_pair_flagged(&mut self, id: PairId, by: NodeId) {
        let pair = self.registry.pair(id).unwrap();
        let purpose = purpose_label(pair.purpose(), &self.cfg.topology);
        if purpose.starts_with("sentinel") && self.first_sentinel_flag.is_none() {
            self.first_sentinel_flag = Some(self.trace.len());
        }
        let body = RecordBody::PairFlagged {
            pair: id.0,
            by: self.name(by),
            purpose,
        };
        self.emit(Some(by), body);
    }

    fn emit_probe_reading(&mut self, reading: &ProbeReading, during: &str) {
        let pair = self.registry.pair(reading.pair).unwrap();
        let purpose = purpose_label(pair.purpose(), &self.cfg.topology);
        let outcome = if reading.flagged_down {
            "flagged_down"
        } else {
            "alive"
        };
        let body = RecordBody::PairProbed {
            pair: reading.pair.0,
            by: self.name(reading.by),
            purpose,
            outcome: outcome.to_string(),
            expectation: reading.expectation,
            sampled_bit: reading.sampled_bit,
            during: during.to_string(),
        };
        self.emit(Some(reading.by), body);
    }

    /// Model transit loss on everything allocated since the last call.
    fn apply_transit_erasure(&mut self) {
        if self.cfg.quantum.erasure_rate <= 0.0 {
            return;
        }
        let rate = self.cfg.quantum.erasure_rate;
        let erased = self.registry.erase_randomly(rate, &mut self.erasure_rng);
        for id in erased {
            self.emit(None, RecordBody::PairErased { pair: id.0 });
        }
    }

    // ------------------------------------------------------------------
    // Routing-event helpers
    // ------------------------------------------------------------------

    fn record_change(&mut self, node: NodeId, change: EntryChange) {
        let dest = change.dest;
        let body = RecordBody::EntryChange {
            node: self.name(node),
            dest: self.name(dest),
            old_next_hop: change.old_next_hop.map(|h| self.name(h)),
            old_metric: change.old_metric,
            new_next_hop: change.new_next_hop.map(|h| self.name(h)),
            new_metric: change.new_metric,
        };
        self.emit(Some(node), body);
        if change.new_metric == self.cfg.infinity {
            let body = RecordBody::Saturation {
                node: self.name(node),
                dest: self.name(dest),
            };
            self.emit(Some(node), body);
        }
        let dest_name = self.name(dest);
        let seen = self
            .metrics
            .max_metric_seen
            .entry(dest_name.clone())
            .or_insert(0);
        *seen = (*seen).max(change.new_metric);
        if change.new_next_hop.is_some() && self.downed_nodes.contains(&dest) {
            self.metrics.loop_detected = true;
            let worst = self
                .metrics
                .max_finite_metric_after_node_down
                .entry(dest_name)
                .or_insert(0);
            *worst = (*worst).max(change.new_metric);
        }
    }

    /// Neighbors `sender` will actually reach this round: in its own live
    /// view, alive, and connected by a live link.
    fn deliverable_neighbors(&self, sender: NodeId) -> Vec<NodeId> {
        self.live_neighbors[&sender]
            .iter()
            .copied()
            .filter(|&nb| self.topo.is_alive(nb) && self.topo.link_cost(sender, nb).is_some())
            .collect()
    }

    fn exchange_round(&mut self) {
        self.round += 1;
        let alive: Vec<NodeId> = self.topo.alive_nodes().collect();
        let variant = self.cfg.effective_classical_variant();

        // Build phase: every node advertises from its current table.
        let mut messages: Vec<UpdateMessage> = Vec::new();
        for &sender in &alive {
            for nb in self.deliverable_neighbors(sender) {
                let mut msg = build_update(&self.tables[&sender], nb, variant);
                if let Some(s) = &self.sentinel {
                    // A decided gateway always advertises the watched node
                    // as unreachable: the problem must not pass through it.
                    if s.is_region_down(sender) {
                        for item in &mut msg.items {
                            if item.0 == s.watched() {
                                item.1 = self.cfg.infinity;
                            }
                        }
                    }
                }
                messages.push(msg);
            }
        }
        for msg in &messages {
            self.metrics.total_messages += 1;
            self.metrics.total_update_entries += msg.items.len() as u64;
            for &(dest, _) in &msg.items {
                let dest = self.name(dest);
                *self
                    .metrics
                    .update_entries_per_dest
                    .entry(dest)
                    .or_insert(0) += 1;
            }
            let body = RecordBody::Message {
                from: self.name(msg.from),
                to: self.name(msg.to),
                items: msg.items.iter().map(|&(d, m)| (self.name(d), m)).collect(),
            };
            self.emit(Some(msg.from), body);
        }

        // Apply phase: receivers in node order, senders in node order.
        let mut changes_this_round = 0u64;
        for &receiver in &alive {
            let incoming: Vec<UpdateMessage> = messages
                .iter()
                .filter(|m| m.to == receiver)
                .cloned()
                .collect();
            let mut heard: BTreeSet<NodeId> = BTreeSet::new();
            for msg in incoming {
                heard.insert(msg.from);
                self.miss_counts.remove(&(receiver, msg.from));
                let link_cost = self
                    .topo
                    .link_cost(msg.from, receiver)
                    .expect("deliverable message has a live link");
                changes_this_round += self.apply_message(receiver, &msg, link_cost);
            }
            changes_this_round += self.detect_silences(receiver, &heard);
        }

        // A run only finishes on convergence once every scheduled failure
        // has landed; matching the oracle before that is transient.
        let converged_now = self.check_convergence();
        let finished = converged_now && self.pending_failures == 0;
        let body = RecordBody::RoundEnd {
            round: self.round,
            changes: changes_this_round,
            converged: finished,
        };
        self.emit(None, body);
        if finished {
            self.converged = true;
            self.stopping = true;
            if self.metrics.rounds_to_convergence.is_none() {
                self.metrics.rounds_to_convergence = Some(self.round);
            }
        } else if self.round >= self.cfg.max_rounds {
            self.stopping = true;
        }
    }

    /// Apply one message at `receiver`, routing each item through the
    /// active protocol's checks.
    fn apply_message(&mut self, receiver: NodeId, msg: &UpdateMessage, link_cost: u32) -> u64 {
        let mut changes = 0u64;
        for &(dest, advertised) in &msg.items {
            if dest == receiver {
                continue;
            }
            // Gateway containment: after region-down, advertisements for
            // the watched node from the loop-region side are discarded.
            if let Some(s) = &self.sentinel {
                if s.is_region_down(receiver)
                    && dest == s.watched()
                    && s.is_region_side(receiver, msg.from)
                {
                    let body = RecordBody::AdvertRejected {
                        node: self.name(receiver),
                        from: self.name(msg.from),
                        dest: self.name(dest),
                        reason: "untrusted_region".to_string(),
                    };
                    self.emit(Some(receiver), body);
                    continue;
                }
            }
            let mut effective = advertised;
            if self.handshake.is_some() {
                match self.handshake_trust_check(receiver, msg.from, dest) {
                    TrustDecision::Trust | TrustDecision::NoPairs => {}
                    TrustDecision::Distrust => {
                        // Whatever was advertised, treat the route for this
                        // destination via this neighbor as unreachable.
                        effective = self.cfg.infinity;
                    }
                }
            }
            let change = {
                let table = self.tables.get_mut(&receiver).unwrap();
                apply_item(table, msg.from, dest, effective, link_cost)
            };
            if let Some(change) = change {
                changes += 1;
                self.record_change(receiver, change);
            }
        }
        if self.handshake.is_some() {
            self.handshake_attach_for(msg);
        }
        changes
    }

    /// Pre-exchange probe plus distrust propagation; returns the decision.
    fn handshake_trust_check(
        &mut self,
        receiver: NodeId,
        sender: NodeId,
        dest: NodeId,
    ) -> TrustDecision {
        let hs = self.handshake.as_mut().unwrap();
        let report = hs.pre_exchange_probe(
            &mut self.registry,
            receiver,
            sender,
            dest,
            &mut self.sampling_rng,
        );
        for reading in &report.readings {
            self.emit_probe_reading(reading, "exchange");
        }
        let body = RecordBody::ProbeDecision {
            node: self.name(receiver),
            neighbor: self.name(sender),
            dest: self.name(dest),
            decision: report.decision.as_str().to_string(),
            source: report.source.as_str().to_string(),
        };
        self.emit(Some(receiver), body);
        if report.decision == TrustDecision::Distrust && report.source == DecisionSource::Probe {
            // First distrust from this neighbor: pass the down-signal on to
            // the other neighbors before anyone else offers a stale route.
            let flags = {
                let hs = self.handshake.as_mut().unwrap();
                hs.flag_entry(&mut self.registry, receiver, dest, Some(sender))
            };
            for (id, _toward) in flags.flagged {
                self.emit_pair_flagged(id, receiver);
            }
        }
        report.decision
    }

    /// Hand the receiver fresh pairs for every advertised entry. Transit
    /// erasure hits each batch before the sender can flag the survivors.
    fn handshake_attach_for(&mut self, msg: &UpdateMessage) {
        let count = self.handshake.as_ref().unwrap().pairs_per_entry();
        if count == 0 {
            return;
        }
        for &(dest, _) in &msg.items {
            let report = {
                let hs = self.handshake.as_mut().unwrap();
                hs.attach(&mut self.registry, msg.from, msg.to, dest, count)
            };
            for &id in &report.pairs {
                self.emit_pair_allocated(id);
            }
            self.apply_transit_erasure();
            let flagged = {
                let hs = self.handshake.as_mut().unwrap();
                hs.flag_attached_if_believed(&mut self.registry, msg.from, dest, &report.pairs)
            };
            for id in flagged {
                self.emit_pair_flagged(id, msg.from);
            }
        }
    }

    /// Count a missed update from every expected-but-silent neighbor; after
    /// the configured number of consecutive misses the neighbor is declared
    /// silent and the protocols react.
    fn detect_silences(&mut self, receiver: NodeId, heard: &BTreeSet<NodeId>) -> u64 {
        let mut changes = 0u64;
        let expected: Vec<NodeId> = self.live_neighbors[&receiver].iter().copied().collect();
        for nb in expected {
            if heard.contains(&nb) {
                continue;
            }
            let misses = self.miss_counts.entry((receiver, nb)).or_insert(0);
            *misses += 1;
            if *misses < self.cfg.detection_misses {
                continue;
            }
            self.miss_counts.remove(&(receiver, nb));
            self.silenced.insert((receiver, nb));
            self.live_neighbors.get_mut(&receiver).unwrap().remove(&nb);
            let body = RecordBody::SilenceDetected {
                node: self.name(receiver),
                neighbor: self.name(nb),
            };
            self.emit(Some(receiver), body);
            let silent_changes = {
                let table = self.tables.get_mut(&receiver).unwrap();
                handle_silence(table, nb)
            };
            for change in silent_changes {
                changes += 1;
                self.record_change(receiver, change);
            }
            self.on_silence_protocol_hooks(receiver, nb);
        }
        changes
    }

    fn on_silence_protocol_hooks(&mut self, detector: NodeId, dead: NodeId) {
        if let Some(s) = &self.sentinel {
            if s.is_watcher(detector) && dead == s.watched() {
                let report = {
                    let s = self.sentinel.as_ref().unwrap();
                    s.on_failure_detected(detector, &mut self.registry)
                };
                for (id, _gateway) in report.flagged {
                    self.emit_pair_flagged(id, detector);
                }
                for gateway in report.uncovered_gateways {
                    let body = RecordBody::DegradedCoverage {
                        node: self.name(detector),
                        detail: format!(
                            "no fresh sentinel pair toward gateway {}",
                            self.name(gateway)
                        ),
                    };
                    self.emit(Some(detector), body);
                }
            }
        }
        if self.handshake.is_some() {
            let report = {
                let hs = self.handshake.as_mut().unwrap();
                hs.flag_entry(&mut self.registry, detector, dead, None)
            };
            if report.nothing_to_flag {
                let body = RecordBody::DegradedCoverage {
                    node: self.name(detector),
                    detail: format!("no pairs held for entry {}", self.name(dead)),
                };
                self.emit(Some(detector), body);
            }
            for (id, _toward) in report.flagged {
                self.emit_pair_flagged(id, detector);
            }
        }
    }

    // ------------------------------------------------------------------
    // Sentinel events
    // ------------------------------------------------------------------

    fn sentinel_poll(&mut self, now: Tick) {
        let Some(mut state) = self.sentinel.take() else {
            return;
        };
        let reports = state.poll(
            &mut self.registry,
            self.cfg.quantum.probe_mode,
            self.cfg.quantum.probe_samples,
            now,
            &mut self.sampling_rng,
        );
        for report in &reports {
            for reading in &report.readings {
                self.emit_probe_reading(reading, "poll");
            }
            for &watcher in &report.exhausted_watchers {
                let body = RecordBody::DegradedCoverage {
                    node: self.name(report.gateway),
                    detail: format!("no sentinel pair left for watcher {}", self.name(watcher)),
                };
                self.emit(Some(report.gateway), body);
            }
            let body = RecordBody::SentinelPoll {
                gateway: self.name(report.gateway),
                status: report.status.as_str().to_string(),
            };
            self.emit(Some(report.gateway), body);
            if report.status == PollStatus::RegionDown {
                let gw = report.gateway;
                let hops = state.hops(gw);
                let scoped = state.scoped_infinity(gw);
                if self.region_down_at.is_none() {
                    self.region_down_at = Some(self.trace.len());
                }
                let body = RecordBody::RegionDown {
                    gateway: self.name(gw),
                    watched: self.name(state.watched()),
                    hops,
                    scoped_infinity: scoped,
                };
                self.emit(Some(gw), body);
                let change = {
                    let table = self.tables.get_mut(&gw).unwrap();
                    table.install_scoped_unreachable(state.watched(), scoped)
                };
                if let Some(change) = change {
                    self.record_change(gw, change);
                }
            }
        }
        self.sentinel = Some(state);
    }

    fn replenish(&mut self, now: Tick) {
        let Some(state) = &self.sentinel else { return };
        let watched = state.watched();
        let budget = PairBudget {
            target_fresh: state.pairs_per_watcher_gateway(),
            replenish_batch: self.cfg.quantum.replenish_batch,
            replenish_period: self.cfg.quantum.replenish_period,
        };
        let added = self.registry.replenish(&budget, now);
        for &id in &added {
            self.emit_pair_allocated(id);
        }
        self.apply_transit_erasure();
        // A watcher that already knows the watched node is down flags
        // replacement pairs as they arrive, keeping coverage for gateways
        // that have not read the signal yet.
        let watchers: Vec<NodeId> = self.sentinel.as_ref().unwrap().watchers().to_vec();
        for id in added {
            let Some(pair) = self.registry.pair(id) else {
                continue;
            };
            if !pair.is_live() {
                continue;
            }
            let holder = [pair.endpoint_a().node, pair.endpoint_b().node]
                .into_iter()
                .find(|n| watchers.contains(n));
            if let Some(watcher) = holder {
                if self.silenced.contains(&(watcher, watched)) {
                    let endpoint = self
                        .registry
                        .pair(id)
                        .unwrap()
                        .endpoint_of(watcher)
                        .unwrap();
                    self.registry
                        .flag(id, endpoint)
                        .expect("fresh pair accepts a flag");
                    self.emit_pair_flagged(id, watcher);
                }
            }
        }
    }

    fn manual_measure(&mut self, pair: PairId, by: NodeId) {
        let endpoint = self.registry.pair(pair).and_then(|p| p.endpoint_of(by));
        let Some(endpoint) = endpoint else {
            let body = RecordBody::DegradedCoverage {
                node: self.name(by),
                detail: format!("measure target pair {} not held", pair.0),
            };
            self.emit(Some(by), body);
            return;
        };
        match self
            .registry
            .probe_sampled(pair, endpoint, &mut self.sampling_rng)
        {
            Ok(bit) => {
                let reading = ProbeReading {
                    pair,
                    by,
                    expectation: None,
                    sampled_bit: Some(bit),
                    flagged_down: false,
                };
                self.emit_probe_reading(&reading, "measure");
            }
            Err(err) => {
                let body = RecordBody::DegradedCoverage {
                    node: self.name(by),
                    detail: format!("measure failed: {err}"),
                };
                self.emit(Some(by), body);
            }
        }
    }

    // ------------------------------------------------------------------
    // Convergence
    // ------------------------------------------------------------------

    /// Tables match the shortest-path oracle of the current topology:
    /// metrics equal, and every finite next hop lies on a shortest path. A
    /// decided sentinel gateway is expected to hold its scoped infinity for
    /// the watched node instead of the global cap.
    fn check_convergence(&self) -> bool {
        let oracle = converged_tables(&self.topo, self.cfg.infinity);
        let inf = self.cfg.infinity;
        for node in self.topo.alive_nodes() {
            let table = &self.tables[&node];
            for dest in self.topo.all_nodes() {
                if dest == node {
                    continue;
                }
                let mut expected = if self.topo.is_alive(dest) {
                    oracle[&node].metric(dest)
                } else {
                    inf
                };
                let mut expect_unreachable = expected >= inf;
                if let Some(s) = &self.sentinel {
                    if s.is_region_down(node) && dest == s.watched() {
                        expected = s.scoped_infinity(node);
                        expect_unreachable = true;
                    }
                }
                if table.metric(dest) != expected {
                    return false;
                }
                let next_hop = table.entry(dest).and_then(|e| e.next_hop);
                if expect_unreachable {
                    if next_hop.is_some() {
                        return false;
                    }
                } else {
                    let Some(hop) = next_hop else { return false };
                    let Some(cost) = self.topo.link_cost(node, hop) else {
                        return false;
                    };
                    if cost + oracle[&hop].metric(dest) != expected {
                        return false;
                    }
                }
            }
        }
        true
    }
}
