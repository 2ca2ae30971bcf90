use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Barrier};

use crate::set_api::{ImplKind, OpKind, SetError};

/// One completed high-level operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpRecord {
    pub op_id: usize,
    pub thread: usize,
    pub kind: OpKind,
    pub arg: i64,
    pub result: bool,
    /// Global event index taken just before the call.
    pub invoke_at: u64,
    /// Global event index taken just after the return.
    pub respond_at: u64,
}

impl OpRecord {
    /// Real-time precedence: `self` returned before `other` was invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.respond_at < other.invoke_at
    }
}

/// A complete history: every operation has responded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pub initial: Vec<i64>,
    pub ops: Vec<OpRecord>,
}

/// Sequential specification of the set type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SetModel {
    pub keys: BTreeSet<i64>,
}

impl SetModel {
    pub fn from_keys(keys: impl IntoIterator<Item = i64>) -> Self {
        SetModel {
            keys: keys.into_iter().collect(),
        }
    }
}

/// `(q, insert(v), q ∪ {v}, v ∉ q)`, `(q, remove(v), q \ {v}, v ∈ q)`,
/// `(q, contains(v), q, v ∈ q)`.
pub fn oracle_apply(model: &SetModel, kind: OpKind, arg: i64) -> (SetModel, bool) {
    let mut next = model.clone();
    let result = match kind {
        OpKind::Insert => next.keys.insert(arg),
        OpKind::Remove => next.keys.remove(&arg),
        OpKind::Contains => next.keys.contains(&arg),
    };
    (next, result)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("op {0}: invoke_at must be below respond_at")]
    EmptyInterval(usize),
    #[error("event index {0} is used twice")]
    DuplicateEvent(u64),
    #[error("thread {0} has overlapping operations")]
    OverlappingThread(usize),
}

impl History {
    /// Checks the invariants the recorder guarantees: proper intervals,
    /// unique event indices and sequential threads.
    pub fn check_well_formed(&self) -> Result<(), HistoryError> {
        let mut seen = BTreeSet::new();
        for op in &self.ops {
            if op.invoke_at >= op.respond_at {
                return Err(HistoryError::EmptyInterval(op.op_id));
            }
            for at in [op.invoke_at, op.respond_at] {
                if !seen.insert(at) {
                    return Err(HistoryError::DuplicateEvent(at));
                }
            }
        }
        let mut by_thread: Vec<&OpRecord> = self.ops.iter().collect();
        by_thread.sort_by_key(|op| (op.thread, op.invoke_at));
        for pair in by_thread.windows(2) {
            if pair[0].thread == pair[1].thread && pair[1].invoke_at < pair[0].respond_at {
                return Err(HistoryError::OverlappingThread(pair[0].thread));
            }
        }
        Ok(())
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "initial {:?}", self.initial)?;
        let mut ops: Vec<&OpRecord> = self.ops.iter().collect();
        ops.sort_by_key(|op| op.invoke_at);
        for op in ops {
            writeln!(
                f,
                "  [{:>4}, {:>4}] t{} #{} {}({}) -> {}",
                op.invoke_at, op.respond_at, op.thread, op.op_id, op.kind, op.arg, op.result
            )?;
        }
        Ok(())
    }
}

/// Per-thread list of `(kind, key)` calls.
pub type ThreadProgram = Vec<(OpKind, i64)>;

/// Runs each program on its own thread against a fresh instance of `kind`
/// holding `initial`, and returns the complete history. Op ids number the
/// calls thread by thread in program order.
pub fn record_run(
    kind: ImplKind,
    programs: &[ThreadProgram],
    initial: &[i64],
) -> Result<History, SetError> {
    let set = kind.build_shared()?;
    for &key in initial {
        set.insert(key);
    }
    let clock = Arc::new(AtomicU64::new(0));
    let barrier = Arc::new(Barrier::new(programs.len()));
    let mut first_id = 0;
    let handles: Vec<_> = programs
        .iter()
        .enumerate()
        .map(|(thread, program)| {
            let set = Arc::clone(&set);
            let clock = Arc::clone(&clock);
            let barrier = Arc::clone(&barrier);
            let program = program.clone();
            let base = first_id;
            first_id += program.len();
            std::thread::spawn(move || {
                barrier.wait();
                program
                    .into_iter()
                    .enumerate()
                    .map(|(i, (op, arg))| {
                        let invoke_at = clock.fetch_add(1, Ordering::SeqCst);
                        let result = op.apply(&*set, arg);
                        let respond_at = clock.fetch_add(1, Ordering::SeqCst);
                        OpRecord {
                            op_id: base + i,
                            thread,
                            kind: op,
                            arg,
                            result,
                            invoke_at,
                            respond_at,
                        }
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let mut ops = Vec::new();
    for h in handles {
        match h.join() {
            Ok(records) => ops.extend(records),
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
    ops.sort_by_key(|op| op.op_id);
    Ok(History {
        initial: initial.to_vec(),
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_transitions() {
        let empty = SetModel::default();
        let (three, r) = oracle_apply(&empty, OpKind::Insert, 3);
        assert!(r);
        assert_eq!(three, SetModel::from_keys([3]));
        let (same, r) = oracle_apply(&three, OpKind::Insert, 3);
        assert!(!r);
        assert_eq!(same, three);
        assert!(!oracle_apply(&three, OpKind::Contains, 5).1);
        let (gone, r) = oracle_apply(&three, OpKind::Remove, 3);
        assert!(r);
        assert_eq!(gone, empty);
        assert!(!oracle_apply(&empty, OpKind::Remove, 3).1);
    }

    #[test]
    fn single_thread_run_is_sequential() {
        let h = record_run(
            ImplKind::Versioned,
            &[vec![(OpKind::Insert, 1), (OpKind::Contains, 1)]],
            &[],
        )
        .unwrap();
        assert_eq!(h.ops.len(), 2);
        assert!(h.ops[0].result && h.ops[1].result);
        assert!(h.ops[0].precedes(&h.ops[1]));
        h.check_well_formed().unwrap();
    }

    #[test]
    fn malformed_histories_are_caught() {
        let op = |op_id, thread, invoke_at, respond_at| OpRecord {
            op_id,
            thread,
            kind: OpKind::Contains,
            arg: 1,
            result: false,
            invoke_at,
            respond_at,
        };
        let h = History {
            initial: vec![],
            ops: vec![op(0, 0, 0, 3), op(1, 0, 1, 2)],
        };
        assert_eq!(
            h.check_well_formed(),
            Err(HistoryError::OverlappingThread(0))
        );
        let h = History {
            initial: vec![],
            ops: vec![op(0, 0, 2, 2)],
        };
        assert_eq!(h.check_well_formed(), Err(HistoryError::EmptyInterval(0)));
    }
}
