//! Deterministic replay of scripted interleavings at the granularity of node
//! reads, writes, creations and lock steps.

pub mod builtin;
mod controller;
mod script;
mod serializability;
mod trace;

pub use controller::{
    record_solo, run_random, run_scripted, GateProbe, Policy, ReplayError, EXTRA_CAP, STEP_CAP,
};
pub use script::{Gate, Label, Script, ScriptError, TagPattern};
pub use serializability::{check_local_serializability, Violation};
pub use trace::{EventOutcome, OpTrace, Trace, TraceEvent};
