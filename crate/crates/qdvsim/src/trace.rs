//! Append-only trace records and the metrics summary derived from them.
//!
//! A trace is a list of records, one JSON object per line, with a stable
//! field order; identical (scenario, seed) inputs yield byte-identical
//! files. [`Metrics`] is a pure function of the trace — the engine counts
//! online, and [`crate::replay`] recomputes the same numbers from the
//! records alone.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One trace line: position in the event order plus a typed body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    /// Processing index of the scheduler event this record belongs to.
    pub seq: u64,
    /// Acting node name, or "-" for run-level records.
    pub actor: String,
    #[serde(flatten)]
    pub body: RecordBody,
}

/// Typed payloads, tagged by `kind` in the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    NodeDown {
        node: String,
    },
    LinkDown {
        a: String,
        b: String,
    },
    /// A node declared a neighbor silent after the configured miss count.
    SilenceDetected {
        node: String,
        neighbor: String,
    },
    Message {
        from: String,
        to: String,
        items: Vec<(String, u32)>,
    },
    EntryChange {
        node: String,
        dest: String,
        old_next_hop: Option<String>,
        old_metric: u32,
        new_next_hop: Option<String>,
        new_metric: u32,
    },
    /// An entry hit the infinity cap.
    Saturation {
        node: String,
        dest: String,
    },
    RoundEnd {
        round: u64,
        changes: u64,
        converged: bool,
    },
    PairAllocated {
        pair: u64,
        purpose: String,
        a: String,
        a_slot: u32,
        b: String,
        b_slot: u32,
    },
    PairFlagged {
        pair: u64,
        by: String,
        purpose: String,
    },
    PairProbed {
        pair: u64,
        by: String,
        purpose: String,
        outcome: String,
        expectation: Option<f64>,
        sampled_bit: Option<u8>,
        during: String,
    },
    PairErased {
        pair: u64,
    },
    /// A protocol step found no usable pair and fell back to classical
    /// behavior.
    DegradedCoverage {
        node: String,
        detail: String,
    },
    SentinelPoll {
        gateway: String,
        status: String,
    },
    RegionDown {
        gateway: String,
        watched: String,
        hops: u32,
        scoped_infinity: u32,
    },
    /// Gateway discarded an advertisement for the watched destination.
    AdvertRejected {
        node: String,
        from: String,
        dest: String,
        reason: String,
    },
    /// Pre-exchange trust decision for one (neighbor, dest) advertisement.
    ProbeDecision {
        node: String,
        neighbor: String,
        dest: String,
        decision: String,
        source: String,
    },
    RunEnd {
        converged: bool,
        rounds: u64,
        loop_detected: bool,
    },
}

/// Counters summarizing one run; recomputable from the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    pub converged: bool,
    pub rounds_to_convergence: Option<u64>,
    pub total_rounds: u64,
    pub total_messages: u64,
    pub total_update_entries: u64,
    pub update_entries_per_dest: BTreeMap<String, u64>,
    pub max_metric_seen: BTreeMap<String, u32>,
    /// Highest finite metric installed for a destination after that
    /// destination's node went down; stale-route evidence.
    pub max_finite_metric_after_node_down: BTreeMap<String, u32>,
    pub loop_detected: bool,
    pub pairs_allocated: u64,
    pub pairs_flagged: u64,
    pub pairs_probed: u64,
    pub pairs_erased: u64,
    /// Trace records strictly between the first sentinel flag and the
    /// gateway's region-down decision.
    pub notification_latency_events: Option<u64>,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Render the trace as line-delimited JSON, one record per line.
pub fn trace_to_string(trace: &[TraceRecord]) -> Result<String, EmitError> {
    let mut out = String::new();
    for record in trace {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Render the metrics summary as a single pretty-printed JSON document.
pub fn metrics_to_string(metrics: &Metrics) -> Result<String, EmitError> {
    let mut out = serde_json::to_string_pretty(metrics)?;
    out.push('\n');
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), EmitError> {
    let mut file = fs::File::create(path).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| EmitError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(())
}

/// Write trace and/or metrics files; both are byte-stable for fixed inputs.
pub fn emit(
    trace: &[TraceRecord],
    metrics: &Metrics,
    trace_path: Option<&Path>,
    metrics_path: Option<&Path>,
) -> Result<(), EmitError> {
    if let Some(path) = trace_path {
        write_file(path, &trace_to_string(trace)?)?;
    }
    if let Some(path) = metrics_path {
        write_file(path, &metrics_to_string(metrics)?)?;
    }
    Ok(())
}

/// Parse a line-delimited trace produced by [`trace_to_string`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().map(serde_json::from_str).collect()
}
