//! Local serializability: each op's own reads, writes and node creations must
//! look like a solo run of the sequential list over some list contents.
//!
//! Per op, the check keeps the chain of nodes the op has walked (`h` first,
//! each next entry being what a `READ_NEXT` of the previous one returned). A
//! re-read of a walked node that returns the same successor is a no-op; one
//! that returns a different successor replaces the rest of the chain, since
//! the op is now working from a newer view. Reading a node that is not on
//! the chain is a violation. At the end the chain must be sorted up to the
//! first node whose key is not below the op's key, and the writes must be
//! the single link the sequential list would perform there.

use std::fmt;

use super::trace::{Trace, TraceEvent};
use crate::probe::Action;
use crate::set_api::OpKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// 0-based op index.
    pub op: usize,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}: {}", self.op + 1, self.reason)
    }
}

impl std::error::Error for Violation {}

pub fn check_local_serializability(trace: &Trace) -> Result<(), Violation> {
    for op in 0..trace.ops.len() {
        check_op(trace, op).map_err(|reason| Violation { op, reason })?;
    }
    Ok(())
}

/// The op's steps the sequential list also performs. Updates keep only what
/// follows their last full restart.
fn projection(trace: &Trace, op: usize) -> Vec<&TraceEvent> {
    let events: Vec<&TraceEvent> = trace.op_events(op).collect();
    let start = match trace.ops[op].kind {
        OpKind::Contains => 0,
        _ => events
            .iter()
            .rposition(|e| e.action == Action::Restart)
            .map_or(0, |i| i + 1),
    };
    events[start..]
        .iter()
        .copied()
        .filter(|e| match e.action {
            Action::ReadVal | Action::ReadNext | Action::NewNode => true,
            Action::WriteNext => e.flag() != Some(false),
            _ => false,
        })
        .collect()
}

fn check_op(trace: &Trace, op: usize) -> Result<(), String> {
    let key = trace.ops[op].arg;
    let kind = trace.ops[op].kind;
    let val = |tag: &str| -> Result<i64, String> {
        trace
            .nodes
            .get(tag)
            .copied()
            .ok_or_else(|| format!("unknown node {tag}"))
    };

    let mut chain: Vec<&str> = vec!["h"];
    let mut created: Option<(&str, &str)> = None;
    let mut writes: Vec<(&str, &str)> = Vec::new();

    for e in projection(trace, op) {
        let Some(node) = e.node.as_deref() else {
            return Err(format!("{} without a node", e.action));
        };
        if let Some((from, to)) = writes.last() {
            return Err(format!("{} {node} after writing {from} -> {to}", e.action));
        }
        match e.action {
            Action::ReadVal => {
                if !chain.contains(&node) {
                    return Err(format!("READ_VAL of {node}, which it never reached"));
                }
            }
            Action::ReadNext => {
                let Some(i) = chain.iter().position(|&n| n == node) else {
                    return Err(format!("READ_NEXT of {node}, which it never reached"));
                };
                let Some(next) = e.next_node() else {
                    return Err(format!("READ_NEXT of {node} returned no node"));
                };
                if chain.get(i + 1) != Some(&next) {
                    chain.truncate(i + 1);
                    chain.push(next);
                }
            }
            Action::NewNode => {
                let succ = e.arg.as_deref().ok_or("NEW_NODE without a successor")?;
                created = Some((node, succ));
            }
            Action::WriteNext => {
                let target = e.arg.as_deref().ok_or("WRITE_NEXT without a target")?;
                writes.push((node, target));
            }
            _ => unreachable!("filtered by projection"),
        }
    }

    if trace.ops[op].response.is_none() {
        // Unfinished: any prefix of a solo run is acceptable.
        return Ok(());
    }

    let Some(stop) = chain
        .iter()
        .map(|n| val(n))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .position(|&v| v >= key)
    else {
        return Err(format!("walk ended before reaching a key >= {key}"));
    };
    let keys: Vec<i64> = chain.iter().map(|n| val(n)).collect::<Result<_, _>>()?;
    if keys[..=stop].windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("walked chain {chain:?} is not sorted"));
    }
    let curr = chain[stop];
    let prev = stop.checked_sub(1).map(|i| chain[i]);
    let tail_len = chain.len() - stop - 1;
    let removes_here = kind == OpKind::Remove && keys[stop] == key;
    if tail_len > usize::from(removes_here) {
        return Err(format!("walked past {curr}"));
    }

    match (kind, writes.as_slice()) {
        (_, []) => {
            if kind == OpKind::Contains && created.is_some() {
                return Err("contains created a node".into());
            }
            Ok(())
        }
        (OpKind::Insert, [(from, to)]) => {
            let Some((x, succ)) = created else {
                return Err(format!(
                    "insert wrote {from} -> {to} without creating a node"
                ));
            };
            if keys[stop] == key {
                return Err(format!(
                    "insert linked a node although {curr} holds the key"
                ));
            }
            if val(x)? != key || succ != curr || *to != x || Some(*from) != prev {
                return Err(format!(
                    "insert wrote {from} -> {to} with node {x} -> {succ}; expected {} -> new -> {curr}",
                    prev.unwrap_or("?")
                ));
            }
            Ok(())
        }
        (OpKind::Remove, [(from, to)]) => {
            let succ = chain.get(stop + 1).copied();
            if !removes_here || Some(*from) != prev || Some(*to) != succ {
                return Err(format!(
                    "remove wrote {from} -> {to}, not an unlink of {curr}"
                ));
            }
            Ok(())
        }
        (_, many) => Err(format!("{kind} performed writes {many:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched_replay::trace::{EventOutcome, OpTrace};
    use std::collections::BTreeMap;

    fn ev(action: Action, node: &str, arg: Option<&str>, next: Option<&str>) -> TraceEvent {
        TraceEvent {
            op: 0,
            action,
            node: Some(node.into()),
            arg: arg.map(Into::into),
            outcome: next.map(|n| EventOutcome::Node(Some(n.into()))),
            scripted: false,
        }
    }

    fn trace(kind: OpKind, arg: i64, events: Vec<TraceEvent>) -> Trace {
        let nodes: BTreeMap<String, i64> = [
            ("h", i64::MIN),
            ("t", i64::MAX),
            ("X1", 1),
            ("X2", 2),
            ("X3", 3),
            ("X5", 5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        Trace {
            ops: vec![OpTrace {
                kind,
                arg,
                response: Some(true),
                restarts: 0,
            }],
            events,
            nodes,
            ..Trace::default()
        }
    }

    #[test]
    fn solo_insert_is_serializable() {
        let t = trace(
            OpKind::Insert,
            2,
            vec![
                ev(Action::ReadNext, "h", None, Some("X1")),
                ev(Action::ReadVal, "X1", None, None),
                ev(Action::ReadNext, "X1", None, Some("X3")),
                ev(Action::ReadVal, "X3", None, None),
                ev(Action::NewNode, "X2", Some("X3"), None),
                ev(Action::WriteNext, "X1", Some("X2"), None),
            ],
        );
        assert_eq!(check_local_serializability(&t), Ok(()));
    }

    #[test]
    fn reading_an_unreached_node_is_a_violation() {
        let t = trace(
            OpKind::Contains,
            3,
            vec![
                ev(Action::ReadNext, "h", None, Some("X1")),
                ev(Action::ReadNext, "X5", None, Some("t")),
            ],
        );
        assert_eq!(check_local_serializability(&t).unwrap_err().op, 0);
    }

    #[test]
    fn insert_writing_without_a_node_is_a_violation() {
        let t = trace(
            OpKind::Insert,
            3,
            vec![
                ev(Action::ReadNext, "h", None, Some("X1")),
                ev(Action::ReadNext, "X1", None, Some("X2")),
                ev(Action::WriteNext, "X1", Some("X3"), None),
                ev(Action::ReadNext, "X1", None, Some("X3")),
            ],
        );
        assert!(check_local_serializability(&t).is_err());
    }

    #[test]
    fn remove_unlinks_its_node() {
        let t = trace(
            OpKind::Remove,
            2,
            vec![
                ev(Action::ReadNext, "h", None, Some("X2")),
                ev(Action::ReadVal, "X2", None, None),
                ev(Action::ReadNext, "X2", None, Some("X3")),
                ev(Action::WriteNext, "h", Some("X3"), None),
            ],
        );
        assert_eq!(check_local_serializability(&t), Ok(()));
        let mut bad = t.clone();
        bad.events[3].arg = Some("t".into());
        assert!(check_local_serializability(&bad).is_err());
    }

    #[test]
    fn unsorted_walk_is_a_violation() {
        let t = trace(
            OpKind::Contains,
            5,
            vec![
                ev(Action::ReadNext, "h", None, Some("X3")),
                ev(Action::ReadNext, "X3", None, Some("X1")),
                ev(Action::ReadNext, "X1", None, Some("X5")),
            ],
        );
        assert!(check_local_serializability(&t).is_err());
    }
}
