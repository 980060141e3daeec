//! Deterministic discrete-event simulation of distance-vector routing with
//! entanglement-assisted failure notification.
//!
//! The crate is organized in five layers:
//!
//! - [`quantum`] — exact state-vector arithmetic: joint states, projectors,
//!   expectation values and Born-rule sampling,
//! - [`entangle`] — lifecycle registry for Bell pairs shared between two
//!   node-owned endpoints,
//! - [`routing`] — the classical distance-vector engine (plain, split
//!   horizon, poisoned reverse) and its independent shortest-path oracle,
//! - [`protocol`] — the two pair-based failure-notification protocols
//!   layered on top: the gateway sentinel and the per-entry handshake,
//! - [`sim`] — the event scheduler, scenario format, trace and metrics
//!   emission, plus the [`replay`] checker that recomputes metrics from a
//!   trace alone.
//!
//! Every run is a pure function of the scenario and its seed: identical
//! inputs produce byte-identical trace and metrics files. The state-vector
//! kernels are data-parallel (rayon) behind the default `parallel` feature;
//! disabling it leaves a sequential fallback that produces bit-identical
//! results.

pub mod entangle;
pub mod protocol;
pub mod quantum;
pub mod replay;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use quantum::{bell_pair, JointState, Projector, ProjectorKind, QuantumError};
pub use routing::{NodeId, RoutingTable, Topology, Variant};
pub use scenario::{load_scenario, ProtocolVariant, ScenarioConfig, ScenarioError};
pub use sim::{run, RunOutput, SimError};
pub use trace::{Metrics, TraceRecord};
