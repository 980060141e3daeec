//! Recompute run metrics from a trace alone.
//!
//! The engine counts its metrics online while it runs; this module derives
//! the same [`Metrics`] by folding over the emitted records, with no access
//! to engine state. Agreement between the two is a run invariant and part
//! of the acceptance suite.

use std::collections::BTreeSet;

use crate::trace::{Metrics, RecordBody, TraceRecord};

/// Fold a trace into the metrics it implies.
pub fn replay_metrics(trace: &[TraceRecord]) -> Metrics {
    let mut m = Metrics::default();
    let mut downed: BTreeSet<String> = BTreeSet::new();
    let mut first_sentinel_flag: Option<usize> = None;
    let mut region_down_at: Option<usize> = None;

    for (idx, record) in trace.iter().enumerate() {
        match &record.body {
            RecordBody::NodeDown { node } => {
                downed.insert(node.clone());
            }
            RecordBody::Message { items, .. } => {
                m.total_messages += 1;
                m.total_update_entries += items.len() as u64;
                for (dest, _) in items {
                    *m.update_entries_per_dest.entry(dest.clone()).or_insert(0) += 1;
                }
            }
            RecordBody::EntryChange {
                dest,
                new_next_hop,
                new_metric,
                ..
            } => {
                let seen = m.max_metric_seen.entry(dest.clone()).or_insert(0);
                *seen = (*seen).max(*new_metric);
                // A route with a next hop is a live (finite) route; one
                // installed for a destination already known to be down is
                // stale-route evidence of the counting loop.
                if new_next_hop.is_some() && downed.contains(dest) {
                    m.loop_detected = true;
                    let worst = m
                        .max_finite_metric_after_node_down
                        .entry(dest.clone())
                        .or_insert(0);
                    *worst = (*worst).max(*new_metric);
                }
            }
            RecordBody::RoundEnd {
                round, converged, ..
            } => {
                m.total_rounds = m.total_rounds.max(*round);
                if *converged && m.rounds_to_convergence.is_none() {
                    m.rounds_to_convergence = Some(*round);
                }
            }
            RecordBody::PairAllocated { .. } => m.pairs_allocated += 1,
            RecordBody::PairFlagged { purpose, .. } => {
                m.pairs_flagged += 1;
                if purpose.starts_with("sentinel") && first_sentinel_flag.is_none() {
                    first_sentinel_flag = Some(idx);
                }
            }
            RecordBody::PairProbed { .. } => m.pairs_probed += 1,
            RecordBody::PairErased { .. } => m.pairs_erased += 1,
            RecordBody::RegionDown { .. } => {
                if region_down_at.is_none() {
                    region_down_at = Some(idx);
                }
            }
            RecordBody::RunEnd {
                converged,
                rounds,
                loop_detected,
            } => {
                m.converged = *converged;
                m.total_rounds = *rounds;
                debug_assert_eq!(*loop_detected, m.loop_detected);
            }
            _ => {}
        }
    }

    if let (Some(flag), Some(decision)) = (first_sentinel_flag, region_down_at) {
        if decision > flag {
            m.notification_latency_events = Some((decision - flag - 1) as u64);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(idx: u64, body: RecordBody) -> TraceRecord {
        TraceRecord {
            tick: idx,
            seq: idx,
            actor: "-".into(),
            body,
        }
    }

    #[test]
    fn counts_messages_and_entries() {
        let trace = vec![
            rec(
                1,
                RecordBody::Message {
                    from: "B".into(),
                    to: "C".into(),
                    items: vec![("A".into(), 16), ("B".into(), 0)],
                },
            ),
            rec(
                2,
                RecordBody::RunEnd {
                    converged: true,
                    rounds: 1,
                    loop_detected: false,
                },
            ),
        ];
        let m = replay_metrics(&trace);
        assert_eq!(m.total_messages, 1);
        assert_eq!(m.total_update_entries, 2);
        assert_eq!(m.update_entries_per_dest["A"], 1);
        assert!(m.converged);
    }

    #[test]
    fn stale_installs_after_node_down_flag_the_loop() {
        let change = |hop: Option<&str>, metric| RecordBody::EntryChange {
            node: "B".into(),
            dest: "A".into(),
            old_next_hop: None,
            old_metric: 16,
            new_next_hop: hop.map(str::to_string),
            new_metric: metric,
        };
        // Finite install before the failure: not a loop.
        let before = vec![
            rec(0, change(Some("C"), 2)),
            rec(1, RecordBody::NodeDown { node: "A".into() }),
            rec(
                2,
                RecordBody::RunEnd {
                    converged: true,
                    rounds: 1,
                    loop_detected: false,
                },
            ),
        ];
        assert!(!replay_metrics(&before).loop_detected);

        // Finite install after: loop evidence with its worst metric.
        let after = vec![
            rec(0, RecordBody::NodeDown { node: "A".into() }),
            rec(1, change(Some("C"), 3)),
            rec(2, change(None, 16)),
            rec(
                3,
                RecordBody::RunEnd {
                    converged: true,
                    rounds: 2,
                    loop_detected: true,
                },
            ),
        ];
        let m = replay_metrics(&after);
        assert!(m.loop_detected);
        assert_eq!(m.max_finite_metric_after_node_down["A"], 3);
        assert_eq!(m.max_metric_seen["A"], 16);
    }

    #[test]
    fn latency_counts_records_strictly_between_flag_and_decision() {
        let trace = vec![
            rec(
                0,
                RecordBody::PairFlagged {
                    pair: 0,
                    by: "B".into(),
                    purpose: "sentinel:A".into(),
                },
            ),
            rec(
                1,
                RecordBody::PairProbed {
                    pair: 0,
                    by: "E".into(),
                    purpose: "sentinel:A".into(),
                    outcome: "flagged_down".into(),
                    expectation: Some(0.0),
                    sampled_bit: None,
                    during: "poll".into(),
                },
            ),
            rec(
                2,
                RecordBody::RegionDown {
                    gateway: "E".into(),
                    watched: "A".into(),
                    hops: 2,
                    scoped_infinity: 3,
                },
            ),
        ];
        assert_eq!(replay_metrics(&trace).notification_latency_events, Some(1));
    }
}
