//! Classical distance-vector routing: topologies, per-node tables, the
//! three update-building variants (plain, split horizon, poisoned reverse),
//! Bellman relaxation with the accept-from-current-next-hop rule, and an
//! independent all-pairs shortest-path oracle used for convergence checks.
//!
//! Metrics saturate at a configurable infinity cap (16 by default, the RIP
//! convention); a saturated entry has no next hop.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node identifier; assigned in declaration order by [`Topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

/// Metric value treated as unreachable, following the RIP convention.
pub const DEFAULT_INFINITY: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("duplicate node name {0:?}")]
    DuplicateNode(String),
    #[error("unknown node id {0:?}")]
    UnknownNode(NodeId),
    #[error("self-links are not allowed")]
    SelfLink,
    #[error("link between {0:?} and {1:?} already exists")]
    DuplicateLink(NodeId, NodeId),
    #[error("link cost must be at least 1")]
    ZeroCost,
}

/// Undirected topology with unit-or-greater integer link costs. Nodes keep
/// their ids when removed, so tables and traces stay stable across failures.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    names: Vec<String>,
    links: BTreeMap<(NodeId, NodeId), u32>,
    dead: BTreeSet<NodeId>,
}

fn link_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str) -> Result<NodeId, TopologyError> {
        if self.names.iter().any(|n| n == name) {
            return Err(TopologyError::DuplicateNode(name.to_string()));
        }
        let id = NodeId(self.names.len() as u16);
        self.names.push(name.to_string());
        Ok(id)
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, cost: u32) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLink);
        }
        for n in [a, b] {
            if n.0 as usize >= self.names.len() {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if cost == 0 {
            return Err(TopologyError::ZeroCost);
        }
        let key = link_key(a, b);
        if self.links.contains_key(&key) {
            return Err(TopologyError::DuplicateLink(a, b));
        }
        self.links.insert(key, cost);
        Ok(())
    }

    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u16))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0 as usize]
    }

    /// All node ids ever declared, alive or not, in declaration order.
    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(|i| NodeId(i as u16))
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.all_nodes().filter(move |n| !self.dead.contains(n))
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        (n.0 as usize) < self.names.len() && !self.dead.contains(&n)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn link_cost(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.links.get(&link_key(a, b)).copied()
    }

    /// Live neighbors of `n` with link costs, ascending by node id.
    pub fn neighbors(&self, n: NodeId) -> Vec<(NodeId, u32)> {
        self.links
            .iter()
            .filter_map(|(&(a, b), &cost)| {
                if a == n {
                    Some((b, cost))
                } else if b == n {
                    Some((a, cost))
                } else {
                    None
                }
            })
            .filter(|(m, _)| !self.dead.contains(m))
            .collect()
    }

    /// Take a node out of the topology, dropping all of its links.
    pub fn remove_node(&mut self, n: NodeId) {
        self.dead.insert(n);
        self.links.retain(|&(a, b), _| a != n && b != n);
    }

    pub fn remove_link(&mut self, a: NodeId, b: NodeId) {
        self.links.remove(&link_key(a, b));
    }

    /// Unit-hop distance between two alive nodes, ignoring link costs.
    pub fn hop_distance(&self, from: NodeId, to: NodeId) -> Option<u32> {
        let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
        dist.insert(from, 0);
        let mut frontier = vec![from];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for n in frontier {
                let d = dist[&n];
                if n == to {
                    return Some(d);
                }
                for (m, _) in self.neighbors(n) {
                    if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(m) {
                        e.insert(d + 1);
                        next.push(m);
                    }
                }
            }
            frontier = next;
        }
        dist.get(&to).copied()
    }

    /// Weighted shortest-path distances from `src` over the alive subgraph.
    fn dijkstra(&self, src: NodeId) -> BTreeMap<NodeId, u64> {
        let mut dist: BTreeMap<NodeId, u64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(src, 0);
        heap.push(Reverse((0u64, src)));
        while let Some(Reverse((d, n))) = heap.pop() {
            if dist.get(&n) != Some(&d) {
                continue;
            }
            for (m, cost) in self.neighbors(n) {
                let nd = d + u64::from(cost);
                if dist.get(&m).is_none_or(|&old| nd < old) {
                    dist.insert(m, nd);
                    heap.push(Reverse((nd, m)));
                }
            }
        }
        dist
    }

    /// Largest finite pairwise distance among alive nodes, in metric units.
    pub fn diameter(&self) -> u32 {
        let mut best = 0u64;
        for n in self.alive_nodes() {
            for (_, d) in self.dijkstra(n) {
                best = best.max(d);
            }
        }
        best as u32
    }
}

/// Update-building rule applied when advertising a table to one neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    SplitHorizon,
    PoisonedReverse,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::SplitHorizon => "split_horizon",
            Variant::PoisonedReverse => "poisoned_reverse",
        }
    }
}

/// One destination's route: next hop and metric. A saturated entry
/// (metric = infinity) never carries a next hop, and only the owner's
/// self-entry has metric 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub next_hop: Option<NodeId>,
    pub metric: u32,
}

/// Per-node destination map with an infinity cap.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    owner: NodeId,
    infinity: u32,
    entries: BTreeMap<NodeId, RouteEntry>,
}

/// Record of one entry rewrite, kept for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryChange {
    pub dest: NodeId,
    pub old_next_hop: Option<NodeId>,
    pub old_metric: u32,
    pub new_next_hop: Option<NodeId>,
    pub new_metric: u32,
}

impl RoutingTable {
    pub fn new(owner: NodeId, infinity: u32) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            owner,
            RouteEntry {
                next_hop: Some(owner),
                metric: 0,
            },
        );
        Self {
            owner,
            infinity,
            entries,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn infinity(&self) -> u32 {
        self.infinity
    }

    pub fn entry(&self, dest: NodeId) -> Option<RouteEntry> {
        self.entries.get(&dest).copied()
    }

    /// Metric for `dest`; destinations never heard of count as infinity.
    pub fn metric(&self, dest: NodeId) -> u32 {
        self.entry(dest).map_or(self.infinity, |e| e.metric)
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, RouteEntry)> + '_ {
        self.entries.iter().map(|(&d, &e)| (d, e))
    }

    fn write(
        &mut self,
        dest: NodeId,
        next_hop: Option<NodeId>,
        metric: u32,
    ) -> Option<EntryChange> {
        let old = self.entry(dest);
        let new = RouteEntry { next_hop, metric };
        if old == Some(new) {
            return None;
        }
        self.entries.insert(dest, new);
        Some(EntryChange {
            dest,
            old_next_hop: old.and_then(|e| e.next_hop),
            old_metric: old.map_or(self.infinity, |e| e.metric),
            new_next_hop: next_hop,
            new_metric: metric,
        })
    }

    /// Install an unreachable marker carrying a protocol-scoped infinity
    /// value below the global cap. Only the sentinel gateway uses this; the
    /// classical layer always saturates to the global cap.
    pub fn install_scoped_unreachable(&mut self, dest: NodeId, scoped: u32) -> Option<EntryChange> {
        self.write(dest, None, scoped)
    }
}

/// Routing exchange payload: (destination, advertised metric) items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub items: Vec<(NodeId, u32)>,
}

/// Advertise `table` to `to`, applying the variant's suppression rule.
pub fn build_update(table: &RoutingTable, to: NodeId, variant: Variant) -> UpdateMessage {
    let mut items = Vec::new();
    for (dest, entry) in table.entries() {
        let learned_from_target = entry.next_hop == Some(to);
        match variant {
            Variant::Plain => items.push((dest, entry.metric)),
            Variant::SplitHorizon => {
                if !learned_from_target {
                    items.push((dest, entry.metric));
                }
            }
            Variant::PoisonedReverse => {
                let metric = if learned_from_target {
                    table.infinity()
                } else {
                    entry.metric
                };
                items.push((dest, metric));
            }
        }
    }
    UpdateMessage {
        from: table.owner(),
        to,
        items,
    }
}

/// Relax a single advertised item into `table`. Installs when the candidate
/// improves on the current metric, or unconditionally when the advertisement
/// comes from the entry's current next hop (the rule that lets stale routes
/// climb). Metrics saturate at the cap, and a saturated entry loses its
/// next hop.
pub fn apply_item(
    table: &mut RoutingTable,
    from: NodeId,
    dest: NodeId,
    advertised: u32,
    link_cost: u32,
) -> Option<EntryChange> {
    if dest == table.owner() {
        return None;
    }
    let inf = table.infinity();
    let candidate = advertised.saturating_add(link_cost).min(inf);
    let current = table.entry(dest).unwrap_or(RouteEntry {
        next_hop: None,
        metric: inf,
    });
    let from_current_hop = current.next_hop == Some(from);
    if candidate < current.metric || from_current_hop {
        if candidate >= inf {
            table.write(dest, None, inf)
        } else {
            table.write(dest, Some(from), candidate)
        }
    } else {
        None
    }
}

/// Apply a whole update message over a link of the given cost.
pub fn apply_update(
    table: &mut RoutingTable,
    msg: &UpdateMessage,
    link_cost: u32,
) -> Vec<EntryChange> {
    debug_assert_eq!(msg.to, table.owner());
    msg.items
        .iter()
        .filter_map(|&(dest, adv)| apply_item(table, msg.from, dest, adv, link_cost))
        .collect()
}

/// React to a neighbor declared silent: every route through it saturates.
pub fn handle_silence(table: &mut RoutingTable, dead_neighbor: NodeId) -> Vec<EntryChange> {
    let inf = table.infinity();
    let via_dead: Vec<NodeId> = table
        .entries()
        .filter(|(_, e)| e.next_hop == Some(dead_neighbor))
        .map(|(d, _)| d)
        .collect();
    via_dead
        .into_iter()
        .filter_map(|dest| table.write(dest, None, inf))
        .collect()
}

/// Ground-truth converged tables from all-pairs shortest paths (Dijkstra per
/// node). Next hops are first hops of shortest paths, lowest node id on
/// ties; unreachable destinations saturate. Serves as the convergence
/// oracle; the distance-vector engine never calls it.
pub fn converged_tables(topo: &Topology, infinity: u32) -> BTreeMap<NodeId, RoutingTable> {
    let alive: Vec<NodeId> = topo.alive_nodes().collect();
    let dists: BTreeMap<NodeId, BTreeMap<NodeId, u64>> =
        alive.iter().map(|&n| (n, topo.dijkstra(n))).collect();
    let mut tables = BTreeMap::new();
    for &src in &alive {
        let mut table = RoutingTable::new(src, infinity);
        for &dest in &alive {
            if dest == src {
                continue;
            }
            let d = dists[&src].get(&dest).copied();
            match d {
                Some(d) if d < u64::from(infinity) => {
                    let next = topo
                        .neighbors(src)
                        .into_iter()
                        .find(|&(nb, cost)| {
                            dists[&nb]
                                .get(&dest)
                                .is_some_and(|&rest| u64::from(cost) + rest == d)
                        })
                        .map(|(nb, _)| nb)
                        .expect("finite distance must have a first hop");
                    table.write(dest, Some(next), d as u32);
                }
                _ => {
                    table.write(dest, None, infinity);
                }
            }
        }
        tables.insert(src, table);
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::IndexedRandom;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_abc() -> (Topology, NodeId, NodeId, NodeId) {
        let mut t = Topology::new();
        let a = t.add_node("A").unwrap();
        let b = t.add_node("B").unwrap();
        let c = t.add_node("C").unwrap();
        t.add_link(a, b, 1).unwrap();
        t.add_link(b, c, 1).unwrap();
        (t, a, b, c)
    }

    #[test]
    fn topology_rejects_bad_shapes() {
        let mut t = Topology::new();
        let a = t.add_node("A").unwrap();
        let b = t.add_node("B").unwrap();
        assert_eq!(
            t.add_node("A").unwrap_err(),
            TopologyError::DuplicateNode("A".into())
        );
        assert_eq!(t.add_link(a, a, 1).unwrap_err(), TopologyError::SelfLink);
        assert_eq!(t.add_link(a, b, 0).unwrap_err(), TopologyError::ZeroCost);
        t.add_link(a, b, 1).unwrap();
        assert_eq!(
            t.add_link(b, a, 2).unwrap_err(),
            TopologyError::DuplicateLink(b, a)
        );
    }

    /// C's converged table on the A–B–C line, built by the oracle.
    fn converged_c() -> RoutingTable {
        let (t, _, _, c) = line_abc();
        converged_tables(&t, DEFAULT_INFINITY).remove(&c).unwrap()
    }

    #[test]
    fn update_variants_on_the_line() {
        let (t, a, b, c) = line_abc();
        let table = converged_c();
        assert_eq!(
            table.entry(a).unwrap(),
            RouteEntry {
                next_hop: Some(b),
                metric: 2
            }
        );

        let poisoned = build_update(&table, b, Variant::PoisonedReverse);
        assert!(poisoned.items.contains(&(a, DEFAULT_INFINITY)));

        let split = build_update(&table, b, Variant::SplitHorizon);
        assert!(!split.items.iter().any(|&(d, _)| d == a));

        let plain = build_update(&table, b, Variant::Plain);
        assert!(plain.items.contains(&(a, 2)));
        // Self entry is advertised too.
        assert!(plain.items.contains(&(c, 0)));
        let _ = t;
    }

    #[test]
    fn relaxation_installs_new_route() {
        let (_, a, b, c) = line_abc();
        let mut table = RoutingTable::new(c, DEFAULT_INFINITY);
        let change = apply_item(&mut table, b, a, 1, 1).unwrap();
        assert_eq!(change.new_metric, 2);
        assert_eq!(
            table.entry(a).unwrap(),
            RouteEntry {
                next_hop: Some(b),
                metric: 2
            }
        );
    }

    #[test]
    fn current_next_hop_is_accepted_even_when_worse() {
        let (_, a, b, c) = line_abc();
        let mut table = RoutingTable::new(c, DEFAULT_INFINITY);
        apply_item(&mut table, b, a, 1, 1);
        let change = apply_item(&mut table, b, a, 5, 1).unwrap();
        assert_eq!(change.new_metric, 6);
        assert_eq!(table.entry(a).unwrap().next_hop, Some(b));
    }

    #[test]
    fn worse_offer_from_elsewhere_is_ignored() {
        let (_, a, b, c) = line_abc();
        let other = NodeId(9);
        let mut table = RoutingTable::new(c, DEFAULT_INFINITY);
        apply_item(&mut table, b, a, 1, 1);
        assert!(apply_item(&mut table, other, a, 4, 1).is_none());
        assert_eq!(
            table.entry(a).unwrap(),
            RouteEntry {
                next_hop: Some(b),
                metric: 2
            }
        );
    }

    #[test]
    fn metrics_saturate_and_drop_next_hop() {
        let (_, a, b, c) = line_abc();
        let mut table = RoutingTable::new(c, DEFAULT_INFINITY);
        apply_item(&mut table, b, a, 1, 1);
        let change = apply_item(&mut table, b, a, DEFAULT_INFINITY, 1).unwrap();
        assert_eq!(change.new_metric, DEFAULT_INFINITY);
        assert_eq!(
            table.entry(a).unwrap(),
            RouteEntry {
                next_hop: None,
                metric: 16
            }
        );
    }

    #[test]
    fn silence_saturates_routes_through_the_dead() {
        let (_, a, b, c) = line_abc();
        let mut table = RoutingTable::new(b, DEFAULT_INFINITY);
        apply_item(&mut table, a, a, 0, 1);
        apply_item(&mut table, c, c, 0, 1);
        let changes = handle_silence(&mut table, a);
        assert_eq!(changes.len(), 1);
        assert_eq!(
            table.entry(a).unwrap(),
            RouteEntry {
                next_hop: None,
                metric: 16
            }
        );
        // Entries not via A stay put.
        assert_eq!(
            table.entry(c).unwrap(),
            RouteEntry {
                next_hop: Some(c),
                metric: 1
            }
        );
        // Next round C offers A at 2; the relaxation reinstalls it at 3 —
        // the opening move of the count-to-infinity loop.
        let change = apply_item(&mut table, c, a, 2, 1).unwrap();
        assert_eq!((change.new_next_hop, change.new_metric), (Some(c), 3));
    }

    #[test]
    fn oracle_on_line_and_triangle() {
        let (t, a, _, c) = line_abc();
        let tables = converged_tables(&t, DEFAULT_INFINITY);
        assert_eq!(tables[&c].metric(a), 2);

        let mut tri = Topology::new();
        let x = tri.add_node("X").unwrap();
        let y = tri.add_node("Y").unwrap();
        let z = tri.add_node("Z").unwrap();
        tri.add_link(x, y, 1).unwrap();
        tri.add_link(y, z, 1).unwrap();
        tri.add_link(x, z, 1).unwrap();
        let tables = converged_tables(&tri, DEFAULT_INFINITY);
        for (n, table) in &tables {
            for m in tri.alive_nodes() {
                if m != *n {
                    assert_eq!(table.metric(m), 1);
                }
            }
        }
    }

    #[test]
    fn oracle_saturates_disconnected_destinations() {
        let (mut t, a, b, c) = line_abc();
        t.remove_node(a);
        let tables = converged_tables(&t, DEFAULT_INFINITY);
        assert!(!tables.contains_key(&a));
        assert_eq!(tables[&b].metric(a), DEFAULT_INFINITY);
        assert_eq!(tables[&c].entry(a), None);
        assert_eq!(tables[&c].metric(a), DEFAULT_INFINITY);
    }

    /// Brute-force Floyd-Warshall, independent of the Dijkstra-based oracle.
    fn floyd_warshall(topo: &Topology) -> BTreeMap<(NodeId, NodeId), u64> {
        const UNREACH: u64 = u64::MAX / 4;
        let nodes: Vec<NodeId> = topo.alive_nodes().collect();
        let mut dist: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for &i in &nodes {
            for &j in &nodes {
                let d = if i == j {
                    0
                } else {
                    topo.link_cost(i, j).map_or(UNREACH, u64::from)
                };
                dist.insert((i, j), d);
            }
        }
        for &k in &nodes {
            for &i in &nodes {
                for &j in &nodes {
                    let through = dist[&(i, k)] + dist[&(k, j)];
                    if through < dist[&(i, j)] {
                        dist.insert((i, j), through);
                    }
                }
            }
        }
        dist
    }

    pub(crate) fn random_connected_topology(seed: u64, max_nodes: usize) -> Topology {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=max_nodes);
        let mut topo = Topology::new();
        let ids: Vec<NodeId> = (0..n)
            .map(|i| topo.add_node(&format!("N{i}")).unwrap())
            .collect();
        // Random spanning tree first, extra edges after.
        for i in 1..n {
            let parent = ids[rng.random_range(0..i)];
            topo.add_link(ids[i], parent, 1).unwrap();
        }
        let extras = rng.random_range(0..=n);
        for _ in 0..extras {
            let a = *ids.choose(&mut rng).unwrap();
            let b = *ids.choose(&mut rng).unwrap();
            if a != b && topo.link_cost(a, b).is_none() {
                topo.add_link(a, b, 1).unwrap();
            }
        }
        topo
    }

    #[test]
    fn oracle_matches_floyd_warshall_on_random_graphs() {
        for seed in 0..25u64 {
            let topo = random_connected_topology(seed, 10);
            let tables = converged_tables(&topo, DEFAULT_INFINITY);
            let brute = floyd_warshall(&topo);
            for i in topo.alive_nodes() {
                for j in topo.alive_nodes() {
                    if i == j {
                        continue;
                    }
                    let expected = brute[&(i, j)].min(u64::from(DEFAULT_INFINITY)) as u32;
                    assert_eq!(tables[&i].metric(j), expected, "seed {seed} {i:?}->{j:?}");
                    // The chosen next hop must sit on a shortest path.
                    if expected < DEFAULT_INFINITY {
                        let hop = tables[&i].entry(j).unwrap().next_hop.unwrap();
                        let cost = u64::from(topo.link_cost(i, hop).unwrap());
                        assert_eq!(cost + brute[&(hop, j)], brute[&(i, j)]);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn entry_invariants_hold_after_any_item(adv in 0u32..=16, cost in 1u32..4) {
            let (_, a, b, c) = line_abc();
            let mut table = RoutingTable::new(c, DEFAULT_INFINITY);
            apply_item(&mut table, b, a, adv, cost);
            for (dest, e) in table.entries() {
                prop_assert_eq!(e.metric == 0, dest == c);
                prop_assert_eq!(e.metric == DEFAULT_INFINITY, e.next_hop.is_none());
                prop_assert!(e.metric <= DEFAULT_INFINITY);
            }
        }
    }
}
