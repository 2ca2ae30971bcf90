use std::collections::HashSet;

use super::history::{oracle_apply, History, SetModel};

/// Largest history the bitmask search accepts.
pub const MAX_OPS: usize = 64;
pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Indices into `History::ops`, in linearization order.
    Linearizable(Vec<usize>),
    NotLinearizable,
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("history has {0} operations; at most {MAX_OPS} are supported")]
    TooManyOps(usize),
    #[error("search visited more than {0} states; shrink the history")]
    SearchCapExceeded(u64),
}

pub fn check_linearizable(history: &History) -> Result<Verdict, CheckError> {
    check_linearizable_with_cap(history, DEFAULT_STATE_CAP)
}

/// Wing–Gong search: repeatedly pick an operation that no pending operation
/// precedes in real time, apply it to the model if its result matches, and
/// backtrack otherwise. Visited `(linearized set, model)` pairs are memoized.
pub fn check_linearizable_with_cap(history: &History, cap: u64) -> Result<Verdict, CheckError> {
    let n = history.ops.len();
    if n > MAX_OPS {
        return Err(CheckError::TooManyOps(n));
    }
    let mut search = Search {
        history,
        seen: HashSet::new(),
        visited: 0,
        cap,
        order: Vec::with_capacity(n),
    };
    let model = SetModel::from_keys(history.initial.iter().copied());
    if search.dfs(0, &model)? {
        Ok(Verdict::Linearizable(search.order))
    } else {
        Ok(Verdict::NotLinearizable)
    }
}

struct Search<'a> {
    history: &'a History,
    seen: HashSet<(u64, Vec<i64>)>,
    visited: u64,
    cap: u64,
    order: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, done: u64, model: &SetModel) -> Result<bool, CheckError> {
        let ops = &self.history.ops;
        let all = if ops.len() == 64 {
            u64::MAX
        } else {
            (1u64 << ops.len()) - 1
        };
        if done == all {
            return Ok(true);
        }
        if !self
            .seen
            .insert((done, model.keys.iter().copied().collect()))
        {
            return Ok(false);
        }
        self.visited += 1;
        if self.visited > self.cap {
            return Err(CheckError::SearchCapExceeded(self.cap));
        }
        let pending = || (0..ops.len()).filter(move |i| done & (1 << i) == 0);
        let earliest_response = pending()
            .map(|i| ops[i].respond_at)
            .min()
            .unwrap_or(u64::MAX);
        for i in pending() {
            let op = &ops[i];
            if op.invoke_at > earliest_response {
                continue;
            }
            let (next, result) = oracle_apply(model, op.kind, op.arg);
            if result != op.result {
                continue;
            }
            self.order.push(i);
            if self.dfs(done | (1 << i), &next)? {
                return Ok(true);
            }
            self.order.pop();
        }
        Ok(false)
    }
}

/// Straight replay of a witness: a permutation of all ops, respecting real
/// time, with every result matching the sequential specification.
pub fn verify_witness(history: &History, order: &[usize]) -> bool {
    let n = history.ops.len();
    let mut placed = vec![false; n];
    if order.len() != n {
        return false;
    }
    let mut model = SetModel::from_keys(history.initial.iter().copied());
    for (pos, &i) in order.iter().enumerate() {
        if i >= n || placed[i] {
            return false;
        }
        placed[i] = true;
        let op = &history.ops[i];
        if order[pos + 1..]
            .iter()
            .any(|&later| history.ops[later].precedes(op))
        {
            return false;
        }
        let (next, result) = oracle_apply(&model, op.kind, op.arg);
        if result != op.result {
            return false;
        }
        model = next;
    }
    true
}
