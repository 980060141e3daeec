//! Shared helpers for the integration suites: scenario builders and trace
//! folding utilities.

#![allow(dead_code)]

use std::collections::BTreeMap;

use qdvsim::trace::{RecordBody, TraceRecord};

/// Three-node line with A failing after initial convergence.
pub fn line3(variant: &str) -> String {
    format!(
        "[nodes]\nA B C\n\n[links]\nA B\nB C\n\n[protocol]\nvariant = {variant}\n\
         exchange_period = 10\nmax_rounds = 60\nseed = 7\n\n[failures]\n35 node_down A\n"
    )
}

/// Triangle B-C-D with tail node A hanging off B; A fails.
pub fn triangle_tail(variant: &str) -> String {
    format!(
        "[nodes]\nA B C D\n\n[links]\nA B\nB C\nB D\nC D\n\n[protocol]\n\
         variant = {variant}\nexchange_period = 10\nmax_rounds = 80\nseed = 7\n\n\
         [failures]\n35 node_down A\n"
    )
}

/// Chain A - B - I1 .. I(dist-1) - G - O1 - O2 with watcher B and gateway G
/// at the given watcher-gateway hop distance; A fails after convergence.
pub fn sentinel_chain(dist: usize, variant: &str, max_rounds: u32) -> String {
    let mut names = vec!["A".to_string(), "B".to_string()];
    for i in 1..dist {
        names.push(format!("I{i}"));
    }
    names.push("G".to_string());
    names.push("O1".to_string());
    names.push("O2".to_string());
    let mut text = String::from("[nodes]\n");
    text.push_str(&names.join(" "));
    text.push_str("\n\n[links]\n");
    for pair in names.windows(2) {
        text.push_str(&format!("{} {}\n", pair[0], pair[1]));
    }
    text.push_str(&format!(
        "\n[protocol]\nvariant = {variant}\nexchange_period = 10\nmax_rounds = {max_rounds}\n\
         seed = 7\n\n[failures]\n155 node_down A\n\n\
         [quantum]\nwatched = A\nwatchers = B\ngateways = G\npairs_per_watcher_gateway = 8\n\
         poll_period = 10\nreplenish_period = 50\nreplenish_batch = 16\n"
    ));
    text
}

/// Five-node line with A failing after convergence; pair-per-entry budget 1.
pub fn handshake_line5(variant: &str) -> String {
    format!(
        "[nodes]\nA B C D E\n\n[links]\nA B\nB C\nC D\nD E\n\n[protocol]\nvariant = {variant}\n\
         exchange_period = 10\nmax_rounds = 120\nseed = 7\n\n[failures]\n65 node_down A\n\n\
         [quantum]\npairs_per_entry = 1\n"
    )
}

/// Round a record index falls in: 1 + completed rounds before it.
pub fn round_of(trace: &[TraceRecord], idx: usize) -> u64 {
    1 + trace[..idx]
        .iter()
        .filter(|r| matches!(r.body, RecordBody::RoundEnd { .. }))
        .count() as u64
}

/// Index of the first record matching the predicate.
pub fn find_record(trace: &[TraceRecord], pred: impl Fn(&RecordBody) -> bool) -> Option<usize> {
    trace.iter().position(|r| pred(&r.body))
}

/// Final (metric, next_hop) per (node, dest) folded from entry changes.
pub fn final_entries(trace: &[TraceRecord]) -> BTreeMap<(String, String), (u32, Option<String>)> {
    let mut map = BTreeMap::new();
    for rec in trace {
        if let RecordBody::EntryChange {
            node,
            dest,
            new_metric,
            new_next_hop,
            ..
        } = &rec.body
        {
            map.insert(
                (node.clone(), dest.clone()),
                (*new_metric, new_next_hop.clone()),
            );
        }
    }
    map
}

/// Per-round snapshots of one destination's metric at selected nodes after
/// the first silence detection for that destination.
pub fn metric_rounds_after_detection(
    trace: &[TraceRecord],
    dest: &str,
    nodes: &[&str],
) -> Vec<Vec<Option<u32>>> {
    let mut current: BTreeMap<String, u32> = BTreeMap::new();
    let mut detected = false;
    let mut out = Vec::new();
    for rec in trace {
        match &rec.body {
            RecordBody::SilenceDetected { neighbor, .. } if neighbor == dest => detected = true,
            RecordBody::EntryChange {
                node,
                dest: d,
                new_metric,
                ..
            } if d == dest => {
                current.insert(node.clone(), *new_metric);
            }
            RecordBody::RoundEnd { .. } if detected => {
                out.push(nodes.iter().map(|n| current.get(*n).copied()).collect());
            }
            _ => {}
        }
    }
    out
}
