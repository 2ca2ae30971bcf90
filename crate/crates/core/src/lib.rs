//! Sorted linked-list sets built on a versioned try-lock, with the baselines,
//! a linearizability checker, a deterministic schedule replayer and a
//! throughput harness used to evaluate them.

pub mod baseline_sets;
pub mod bench;
pub mod lincheck;
pub mod probe;
pub mod sched_replay;
pub mod set_api;
pub mod versioned_set;
pub mod vlock;

pub use baseline_sets::{HarrisMichaelSet, LazySet, SequentialSet};
pub use probe::{Action, NoProbe, NodeId, Outcome, Probe, Step};
pub use set_api::{ConcurrentSet, ImplKind, OpKind, SetError, SetOps, HEAD_KEY, TAIL_KEY};
pub use versioned_set::{NodeSnapshot, VersionedSet};
pub use vlock::VersionedTryLock;
