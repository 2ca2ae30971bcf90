use std::collections::BTreeMap;
use std::fmt;

use crate::probe::Action;
use crate::set_api::OpKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventOutcome {
    /// Tag of the node a `READ_NEXT` returned (`None` past the tail).
    Node(Option<String>),
    Flag(bool),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    /// 0-based op index.
    pub op: usize,
    pub action: Action,
    pub node: Option<String>,
    /// Link target of `WRITE_NEXT`, successor of `NEW_NODE`.
    pub arg: Option<String>,
    pub outcome: Option<EventOutcome>,
    /// Granted against a script gate rather than as an extra step.
    pub scripted: bool,
}

impl TraceEvent {
    pub fn flag(&self) -> Option<bool> {
        match self.outcome {
            Some(EventOutcome::Flag(b)) => Some(b),
            _ => None,
        }
    }

    pub fn next_node(&self) -> Option<&str> {
        match &self.outcome {
            Some(EventOutcome::Node(Some(tag))) => Some(tag),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpTrace {
    pub kind: OpKind,
    pub arg: i64,
    /// `None` if the op never responded.
    pub response: Option<bool>,
    /// `RETRY` plus `RESTART` steps.
    pub restarts: u32,
}

/// Everything a replay observed, in global grant order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub initial: Vec<i64>,
    pub ops: Vec<OpTrace>,
    pub events: Vec<TraceEvent>,
    /// Key of every tag handed out.
    pub nodes: BTreeMap<String, i64>,
    pub final_keys: Vec<i64>,
    /// Indices of gates given up on (allow-and-log policy only).
    pub skipped_gates: Vec<usize>,
}

impl Trace {
    pub fn op_events(&self, op: usize) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.op == op)
    }

    pub fn responses(&self) -> Vec<Option<bool>> {
        self.ops.iter().map(|o| o.response).collect()
    }

    pub fn total_restarts(&self) -> u32 {
        self.ops.iter().map(|o| o.restarts).sum()
    }

    pub fn count(&self, action: Action) -> usize {
        self.events.iter().filter(|e| e.action == action).count()
    }

    pub fn trylock_failures(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.action == Action::TryLock && e.flag() == Some(false))
            .count()
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{} {}", self.op + 1, self.action)?;
        if let Some(node) = &self.node {
            write!(f, " {node}")?;
        }
        if let Some(arg) = &self.arg {
            write!(f, " -> {arg}")?;
        }
        match &self.outcome {
            Some(EventOutcome::Node(Some(tag))) => write!(f, " = {tag}")?,
            Some(EventOutcome::Node(None)) => f.write_str(" = null")?,
            Some(EventOutcome::Flag(b)) => write!(f, " = {b}")?,
            None => {}
        }
        if !self.scripted {
            f.write_str("  (extra)")?;
        }
        Ok(())
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "initial {:?}", self.initial)?;
        for (i, e) in self.events.iter().enumerate() {
            writeln!(f, "{:>5}  {e}", i + 1)?;
        }
        for (i, op) in self.ops.iter().enumerate() {
            let response = match op.response {
                Some(r) => r.to_string(),
                None => "pending".into(),
            };
            writeln!(
                f,
                "op{} {}({}) -> {response}, restarts {}",
                i + 1,
                op.kind,
                op.arg,
                op.restarts
            )?;
        }
        if !self.skipped_gates.is_empty() {
            let gates: Vec<String> = self
                .skipped_gates
                .iter()
                .map(|g| (g + 1).to_string())
                .collect();
            writeln!(f, "skipped gates {}", gates.join(", "))?;
        }
        write!(f, "final {:?}", self.final_keys)
    }
}
