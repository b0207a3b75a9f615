//! Simulation and trace auditing for six-state leader election in the
//! synchronous beeping model.
//!
//! * [`graph`]: generators, edge-list input, all-pairs distances.
//! * [`engine`]: protocol-generic round semantics and seeded runs.
//! * [`bfw`]: the Beeping/Frozen/Waiting leader-election protocol.
//! * [`flowcheck`]: flow along paths and post-hoc trace auditors.
//! * [`markov`]: the single-node W/B/F chain and its visit statistics.
//! * [`harness`]: convergence-time sweeps and scaling fits.
//! * [`tracefile`]: JSON-lines trace files.

pub mod bfw;
pub mod engine;
pub mod flowcheck;
pub mod graph;
pub mod harness;
pub mod markov;
pub mod tracefile;

pub use bfw::{bfw_protocol, BfwParams, NodeState};
pub use engine::{run, step, Configuration, ProtocolDefinition, RunOptions, RunOutcome, RunTrace};
pub use graph::{distances, generate, load_edge_list, DistanceTable, Graph, GraphSpec};
