//! Scenario documents: a small sectioned key/value format, chosen over a
//! binary encoding so test fixtures stay diffable.
//!
//! ```text
//! # comments run to end of line
//! [nodes]
//! A B C            # names, whitespace-separated, one or more per line
//!
//! [links]
//! A B              # undirected link, cost defaults to 1
//! B C 1
//!
//! [protocol]
//! variant = plain  # plain | split_horizon | poisoned_reverse |
//!                  # gateway_sentinel | entangled_handshake
//! classical_variant = poisoned_reverse   # underlay for the quantum variants
//! infinity = 16
//! exchange_period = 10
//! detection_misses = 3
//! max_rounds = 100
//! seed = 42
//!
//! [failures]
//! 30 node_down A
//! 45 link_down B C
//!
//! [quantum]
//! probe_mode = expectation   # expectation | sampled
//! probe_samples = 1
//! erasure_rate = 0.0
//! pairs_per_entry = 1        # handshake
//! watched = A                # sentinel
//! watchers = B               # sentinel, space-separated
//! gateways = E               # sentinel, space-separated
//! pairs_per_watcher_gateway = 2
//! poll_period = 10
//! replenish_period = 50
//! replenish_batch = 16
//! ```
//!
//! Sections may appear in any order except that `[nodes]` must precede any
//! section referring to nodes. Every error names the offending line or
//! field.

use std::str::FromStr;

use thiserror::Error;

use crate::entangle::Tick;
use crate::routing::{NodeId, Topology, Variant, DEFAULT_INFINITY};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("field {field}: {msg}")]
    Field { field: &'static str, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Which protocol the run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolVariant {
    Classical(Variant),
    GatewaySentinel,
    EntangledHandshake,
}

impl ProtocolVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVariant::Classical(v) => v.as_str(),
            ProtocolVariant::GatewaySentinel => "gateway_sentinel",
            ProtocolVariant::EntangledHandshake => "entangled_handshake",
        }
    }
}

impl FromStr for ProtocolVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(ProtocolVariant::Classical(Variant::Plain)),
            "split_horizon" => Ok(ProtocolVariant::Classical(Variant::SplitHorizon)),
            "poisoned_reverse" => Ok(ProtocolVariant::Classical(Variant::PoisonedReverse)),
            "gateway_sentinel" => Ok(ProtocolVariant::GatewaySentinel),
            "entangled_handshake" => Ok(ProtocolVariant::EntangledHandshake),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

fn classical_from_str(s: &str) -> Result<Variant, String> {
    match s {
        "plain" => Ok(Variant::Plain),
        "split_horizon" => Ok(Variant::SplitHorizon),
        "poisoned_reverse" => Ok(Variant::PoisonedReverse),
        other => Err(format!("unknown classical variant {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    NodeDown(NodeId),
    LinkDown(NodeId, NodeId),
}

/// How pair probes read their answer: deterministic expectation values, or
/// single-shot Born samples (several per decision).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    Expectation,
    Sampled,
}

/// Gateway-sentinel parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentinelConfig {
    pub watched: NodeId,
    pub watchers: Vec<NodeId>,
    pub gateways: Vec<NodeId>,
    pub pairs_per_watcher_gateway: u32,
    pub poll_period: Tick,
}

/// Everything the pair-based protocols need.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumConfig {
    pub probe_mode: ProbeMode,
    /// Pairs sampled per decision in sampled mode; the decision is "alive"
    /// as soon as any sample reads 1, since a flagged pair can never yield
    /// a 1 at the far end.
    pub probe_samples: u32,
    pub erasure_rate: f64,
    pub pairs_per_entry: u32,
    pub replenish_period: Tick,
    pub replenish_batch: u32,
    pub sentinel: Option<SentinelConfig>,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self {
            probe_mode: ProbeMode::Expectation,
            probe_samples: 1,
            erasure_rate: 0.0,
            pairs_per_entry: 1,
            replenish_period: 50,
            replenish_batch: 16,
            sentinel: None,
        }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub variant: ProtocolVariant,
    /// Distance-vector rules in effect underneath a quantum variant.
    pub classical_variant: Variant,
    pub infinity: u32,
    pub exchange_period: Tick,
    pub detection_misses: u32,
    pub max_rounds: u64,
    pub seed: u64,
    pub failures: Vec<(Tick, FailureKind)>,
    pub quantum: QuantumConfig,
}

impl ScenarioConfig {
    /// Bare config over a topology: plain variant, RIP defaults.
    pub fn new(topology: Topology) -> Self {
        Self {
            topology,
            variant: ProtocolVariant::Classical(Variant::Plain),
            classical_variant: Variant::Plain,
            infinity: DEFAULT_INFINITY,
            exchange_period: 10,
            detection_misses: 3,
            max_rounds: 100,
            seed: 0,
            failures: Vec::new(),
            quantum: QuantumConfig::default(),
        }
    }

    /// The distance-vector rules a given node runs under this variant.
    pub fn effective_classical_variant(&self) -> Variant {
        match self.variant {
            ProtocolVariant::Classical(v) => v,
            _ => self.classical_variant,
        }
    }

    pub fn set_variant(&mut self, variant: ProtocolVariant) {
        self.variant = variant;
        if let ProtocolVariant::Classical(v) = variant {
            self.classical_variant = v;
        }
    }

    /// Cross-field checks; [`crate::sim::run`] re-runs them so configs
    /// built in code get the same guarantees as parsed ones.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.max_rounds < 1 {
            return Err(ScenarioError::Field {
                field: "max_rounds",
                msg: "must be at least 1".into(),
            });
        }
        if self.exchange_period < 1 {
            return Err(ScenarioError::Field {
                field: "exchange_period",
                msg: "must be at least 1".into(),
            });
        }
        if self.detection_misses < 1 {
            return Err(ScenarioError::Field {
                field: "detection_misses",
                msg: "must be at least 1".into(),
            });
        }
        if self.infinity < 2 {
            return Err(ScenarioError::Field {
                field: "infinity",
                msg: "must be at least 2".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.quantum.erasure_rate) {
            return Err(ScenarioError::Field {
                field: "erasure_rate",
                msg: "must lie in [0, 1]".into(),
            });
        }
        if self.quantum.probe_samples < 1 {
            return Err(ScenarioError::Field {
                field: "probe_samples",
                msg: "must be at least 1".into(),
            });
        }
        if self.quantum.replenish_period < 1 {
            return Err(ScenarioError::Field {
                field: "replenish_period",
                msg: "must be at least 1".into(),
            });
        }
        if self.quantum.replenish_batch < 1 {
            return Err(ScenarioError::Field {
                field: "replenish_batch",
                msg: "must be at least 1".into(),
            });
        }
        for (_, failure) in &self.failures {
            let nodes: Vec<NodeId> = match *failure {
                FailureKind::NodeDown(n) => vec![n],
                FailureKind::LinkDown(a, b) => vec![a, b],
            };
            for n in nodes {
                if (n.0 as usize) >= self.topology.node_count() {
                    return Err(ScenarioError::Field {
                        field: "failures",
                        msg: format!("unknown node id {n:?}"),
                    });
                }
            }
        }
        if self.variant == ProtocolVariant::GatewaySentinel {
            let Some(sentinel) = &self.quantum.sentinel else {
                return Err(ScenarioError::Field {
                    field: "watched",
                    msg: "gateway_sentinel requires watched/watchers/gateways".into(),
                });
            };
            if sentinel.watchers.is_empty() {
                return Err(ScenarioError::Field {
                    field: "watchers",
                    msg: "at least one watcher is required".into(),
                });
            }
            if sentinel.gateways.is_empty() {
                return Err(ScenarioError::Field {
                    field: "gateways",
                    msg: "at least one gateway is required".into(),
                });
            }
            let neighbor_ids: Vec<NodeId> = self
                .topology
                .neighbors(sentinel.watched)
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            for w in &sentinel.watchers {
                if !neighbor_ids.contains(w) {
                    return Err(ScenarioError::Field {
                        field: "watchers",
                        msg: format!(
                            "{} is not a neighbor of the watched node",
                            self.topology.name(*w)
                        ),
                    });
                }
            }
            for g in &sentinel.gateways {
                if sentinel.watchers.contains(g) {
                    return Err(ScenarioError::Field {
                        field: "gateways",
                        msg: format!("{} is also a watcher", self.topology.name(*g)),
                    });
                }
                if *g == sentinel.watched {
                    return Err(ScenarioError::Field {
                        field: "gateways",
                        msg: "the watched node cannot be its own gateway".into(),
                    });
                }
            }
            if sentinel.pairs_per_watcher_gateway < 1 {
                return Err(ScenarioError::Field {
                    field: "pairs_per_watcher_gateway",
                    msg: "must be at least 1".into(),
                });
            }
            if sentinel.poll_period < 1 {
                return Err(ScenarioError::Field {
                    field: "poll_period",
                    msg: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Nodes,
    Links,
    Protocol,
    Failures,
    Quantum,
}

struct RawSentinel {
    watched: Option<NodeId>,
    watchers: Vec<NodeId>,
    gateways: Vec<NodeId>,
    pairs_per_watcher_gateway: u32,
    poll_period: Option<Tick>,
}

/// Parse and validate a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut topology = Topology::new();
    let mut config_seen = false;
    let mut section = Section::None;
    let mut variant = ProtocolVariant::Classical(Variant::Plain);
    let mut classical_variant: Option<Variant> = None;
    let mut infinity = DEFAULT_INFINITY;
    let mut exchange_period: Tick = 10;
    let mut detection_misses: u32 = 3;
    let mut max_rounds: u64 = 100;
    let mut seed: u64 = 0;
    let mut failures: Vec<(Tick, FailureKind)> = Vec::new();
    let mut quantum = QuantumConfig::default();
    let mut sentinel = RawSentinel {
        watched: None,
        watchers: Vec::new(),
        gateways: Vec::new(),
        pairs_per_watcher_gateway: 2,
        poll_period: None,
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = match name {
                "nodes" => Section::Nodes,
                "links" => Section::Links,
                "protocol" => Section::Protocol,
                "failures" => Section::Failures,
                "quantum" => Section::Quantum,
                other => return Err(parse_err(line_no, format!("unknown section [{other}]"))),
            };
            continue;
        }
        match section {
            Section::None => {
                return Err(parse_err(line_no, "content before any [section] header"));
            }
            Section::Nodes => {
                for name in line.split_whitespace() {
                    topology
                        .add_node(name)
                        .map_err(|e| parse_err(line_no, e.to_string()))?;
                }
            }
            Section::Links => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 2 && parts.len() != 3 {
                    return Err(parse_err(line_no, "expected: NODE NODE [COST]"));
                }
                let a = node_ref(&topology, parts[0], line_no)?;
                let b = node_ref(&topology, parts[1], line_no)?;
                let cost: u32 = match parts.get(2) {
                    Some(c) => c
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("invalid link cost {c:?}")))?,
                    None => 1,
                };
                topology
                    .add_link(a, b, cost)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
            }
            Section::Protocol => {
                config_seen = true;
                let (key, value) = key_value(line, line_no)?;
                match key {
                    "variant" => {
                        variant = value.parse().map_err(|e| parse_err(line_no, e))?;
                    }
                    "classical_variant" => {
                        classical_variant =
                            Some(classical_from_str(value).map_err(|e| parse_err(line_no, e))?);
                    }
                    "infinity" => infinity = parse_num(value, "infinity", line_no)?,
                    "exchange_period" => {
                        exchange_period = parse_num(value, "exchange_period", line_no)?;
                    }
                    "detection_misses" => {
                        detection_misses = parse_num(value, "detection_misses", line_no)?;
                    }
                    "max_rounds" => max_rounds = parse_num(value, "max_rounds", line_no)?,
                    "seed" => seed = parse_num(value, "seed", line_no)?,
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("unknown protocol key {other:?}"),
                        ));
                    }
                }
            }
            Section::Failures => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() < 3 {
                    return Err(parse_err(
                        line_no,
                        "expected: TICK node_down NODE | TICK link_down NODE NODE",
                    ));
                }
                let tick: Tick = parse_num(parts[0], "failure tick", line_no)?;
                let failure = match (parts[1], parts.len()) {
                    ("node_down", 3) => {
                        FailureKind::NodeDown(node_ref(&topology, parts[2], line_no)?)
                    }
                    ("link_down", 4) => FailureKind::LinkDown(
                        node_ref(&topology, parts[2], line_no)?,
                        node_ref(&topology, parts[3], line_no)?,
                    ),
                    (other, _) => {
                        return Err(parse_err(
                            line_no,
                            format!("unknown failure kind {other:?}"),
                        ));
                    }
                };
                failures.push((tick, failure));
            }
            Section::Quantum => {
                let (key, value) = key_value(line, line_no)?;
                match key {
                    "probe_mode" => {
                        quantum.probe_mode = match value {
                            "expectation" => ProbeMode::Expectation,
                            "sampled" => ProbeMode::Sampled,
                            other => {
                                return Err(parse_err(
                                    line_no,
                                    format!("unknown probe_mode {other:?}"),
                                ));
                            }
                        };
                    }
                    "probe_samples" => {
                        quantum.probe_samples = parse_num(value, "probe_samples", line_no)?;
                    }
                    "erasure_rate" => {
                        quantum.erasure_rate = value.parse().map_err(|_| {
                            parse_err(line_no, format!("invalid erasure_rate {value:?}"))
                        })?;
                    }
                    "pairs_per_entry" => {
                        quantum.pairs_per_entry = parse_num(value, "pairs_per_entry", line_no)?;
                    }
                    "replenish_period" => {
                        quantum.replenish_period = parse_num(value, "replenish_period", line_no)?;
                    }
                    "replenish_batch" => {
                        quantum.replenish_batch = parse_num(value, "replenish_batch", line_no)?;
                    }
                    "watched" => sentinel.watched = Some(node_ref(&topology, value, line_no)?),
                    "watchers" => {
                        for name in value.split_whitespace() {
                            sentinel.watchers.push(node_ref(&topology, name, line_no)?);
                        }
                    }
                    "gateways" => {
                        for name in value.split_whitespace() {
                            sentinel.gateways.push(node_ref(&topology, name, line_no)?);
                        }
                    }
                    "pairs_per_watcher_gateway" => {
                        sentinel.pairs_per_watcher_gateway =
                            parse_num(value, "pairs_per_watcher_gateway", line_no)?;
                    }
                    "poll_period" => {
                        sentinel.poll_period = Some(parse_num(value, "poll_period", line_no)?);
                    }
                    other => {
                        return Err(parse_err(line_no, format!("unknown quantum key {other:?}")));
                    }
                }
            }
        }
    }

    if topology.node_count() == 0 {
        return Err(ScenarioError::Field {
            field: "nodes",
            msg: "no nodes declared".into(),
        });
    }
    let _ = config_seen;

    if let Some(watched) = sentinel.watched {
        quantum.sentinel = Some(SentinelConfig {
            watched,
            watchers: sentinel.watchers,
            gateways: sentinel.gateways,
            pairs_per_watcher_gateway: sentinel.pairs_per_watcher_gateway,
            poll_period: sentinel.poll_period.unwrap_or(exchange_period),
        });
    }

    let classical_variant = classical_variant.unwrap_or(match variant {
        ProtocolVariant::Classical(v) => v,
        ProtocolVariant::GatewaySentinel => Variant::PoisonedReverse,
        ProtocolVariant::EntangledHandshake => Variant::Plain,
    });

    let config = ScenarioConfig {
        topology,
        variant,
        classical_variant,
        infinity,
        exchange_period,
        detection_misses,
        max_rounds,
        seed,
        failures,
        quantum,
    };
    config.validate()?;
    Ok(config)
}

fn node_ref(topo: &Topology, name: &str, line: usize) -> Result<NodeId, ScenarioError> {
    topo.id_of(name)
        .ok_or_else(|| parse_err(line, format!("unknown node {name:?}")))
}

fn key_value(line: &str, line_no: usize) -> Result<(&str, &str), ScenarioError> {
    let Some((key, value)) = line.split_once('=') else {
        return Err(parse_err(line_no, "expected: key = value"));
    };
    Ok((key.trim(), value.trim()))
}

fn parse_num<T: FromStr>(value: &str, field: &str, line: usize) -> Result<T, ScenarioError> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("invalid value {value:?} for {field}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "\
[nodes]
A B C

[links]
A B
B C

[protocol]
variant = plain
exchange_period = 10
";

    #[test]
    fn parses_a_line_scenario() {
        let config = load_scenario(LINE).unwrap();
        assert_eq!(config.topology.node_count(), 3);
        let a = config.topology.id_of("A").unwrap();
        let b = config.topology.id_of("B").unwrap();
        let c = config.topology.id_of("C").unwrap();
        assert_eq!(config.topology.link_cost(a, b), Some(1));
        assert_eq!(config.topology.link_cost(b, c), Some(1));
        assert_eq!(config.topology.link_cost(a, c), None);
        assert_eq!(config.variant, ProtocolVariant::Classical(Variant::Plain));
        // Omitted infinity defaults to the RIP value.
        assert_eq!(config.infinity, 16);
        assert_eq!(config.seed, 0);
    }

    #[test]
    fn unknown_node_reference_is_an_error() {
        let text = format!("{LINE}\n[failures]\n10 node_down Z\n");
        let err = load_scenario(&text).unwrap_err();
        assert!(
            matches!(err, ScenarioError::Parse { line: 13, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("\"Z\""));
    }

    #[test]
    fn bad_values_name_their_line() {
        let text = LINE.replace("exchange_period = 10", "exchange_period = -4");
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("line 10"), "{err}");

        let text = LINE.replace("variant = plain", "variant = bogus");
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("unknown variant"), "{err}");

        let err = load_scenario("[links]\nA B\n").unwrap_err();
        assert!(err.to_string().contains("unknown node"), "{err}");
    }

    #[test]
    fn sentinel_needs_its_configuration() {
        let text = LINE.replace("variant = plain", "variant = gateway_sentinel");
        let err = load_scenario(&text).unwrap_err();
        assert!(
            matches!(
                err,
                ScenarioError::Field {
                    field: "watched",
                    ..
                }
            ),
            "{err}"
        );

        let full = format!(
            "{}\n[quantum]\nwatched = A\nwatchers = B\ngateways = C\n",
            text
        );
        let config = load_scenario(&full).unwrap();
        let sentinel = config.quantum.sentinel.as_ref().unwrap();
        assert_eq!(sentinel.poll_period, 10);
        assert_eq!(config.classical_variant, Variant::PoisonedReverse);
    }

    #[test]
    fn watcher_must_neighbor_the_watched_node() {
        let text = format!(
            "{}\n[quantum]\nwatched = A\nwatchers = C\ngateways = B\n",
            LINE.replace("variant = plain", "variant = gateway_sentinel")
        );
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("not a neighbor"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\n[nodes]\nA B # trailing\n\n[links]\nA B 2\n";
        let config = load_scenario(text).unwrap();
        let a = config.topology.id_of("A").unwrap();
        let b = config.topology.id_of("B").unwrap();
        assert_eq!(config.topology.link_cost(a, b), Some(2));
    }

    #[test]
    fn erasure_rate_is_bounded() {
        let text = format!("{LINE}\n[quantum]\nerasure_rate = 1.5\n");
        let err = load_scenario(&text).unwrap_err();
        assert!(
            matches!(
                err,
                ScenarioError::Field {
                    field: "erasure_rate",
                    ..
                }
            ),
            "{err}"
        );
    }
}
