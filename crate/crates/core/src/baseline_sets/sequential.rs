//! Single-threaded sorted linked list, step for step the sequential reference
//! algorithm: reads of `val`/`next`, one node creation and one write for an
//! effective insert, one read of the removed node's `next` and one write for an
//! effective remove. It is the differential oracle for the concurrent lists
//! and its probe stream is the step language the local-serializability check
//! replays.

use std::cell::RefCell;

use crate::probe::{Action, NoProbe, NodeId, Outcome, Probe, Step};
use crate::set_api::{check_key, SetOps, HEAD_KEY, TAIL_KEY};

const HEAD: usize = 0;
const TAIL: usize = 1;

#[derive(Clone, Copy, Debug)]
struct SeqNode {
    val: i64,
    next: usize,
}

#[derive(Debug, Default)]
struct Arena {
    nodes: Vec<SeqNode>,
    free: Vec<usize>,
}

/// Not `Sync`: the `RefCell` keeps it on one thread.
pub struct SequentialSet<P: Probe = NoProbe> {
    arena: RefCell<Arena>,
    probe: P,
}

impl SequentialSet<NoProbe> {
    pub fn new() -> Self {
        Self::with_probe(NoProbe)
    }
}

impl Default for SequentialSet<NoProbe> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Probe> SequentialSet<P> {
    pub fn with_probe(probe: P) -> Self {
        let nodes = vec![
            SeqNode {
                val: HEAD_KEY,
                next: TAIL,
            },
            SeqNode {
                val: TAIL_KEY,
                next: usize::MAX,
            },
        ];
        SequentialSet {
            arena: RefCell::new(Arena {
                nodes,
                free: Vec::new(),
            }),
            probe,
        }
    }

    fn id(&self, idx: usize) -> NodeId {
        NodeId {
            addr: idx,
            val: self.arena.borrow().nodes[idx].val,
        }
    }

    fn read_val(&self, idx: usize) -> i64 {
        self.probe.step(Step::new(Action::ReadVal, self.id(idx)));
        self.arena.borrow().nodes[idx].val
    }

    fn read_next(&self, idx: usize) -> usize {
        self.probe.step(Step::new(Action::ReadNext, self.id(idx)));
        let next = self.arena.borrow().nodes[idx].next;
        self.probe.outcome(Outcome::Node(Some(self.id(next))));
        next
    }

    fn write_next(&self, idx: usize, target: usize) {
        self.probe.step(Step::with_arg(
            Action::WriteNext,
            self.id(idx),
            self.id(target),
        ));
        self.arena.borrow_mut().nodes[idx].next = target;
    }

    fn new_node(&self, val: i64, next: usize) -> usize {
        let idx = {
            let mut arena = self.arena.borrow_mut();
            let node = SeqNode { val, next };
            match arena.free.pop() {
                Some(idx) => {
                    arena.nodes[idx] = node;
                    idx
                }
                None => {
                    arena.nodes.push(node);
                    arena.nodes.len() - 1
                }
            }
        };
        self.probe
            .step(Step::with_arg(Action::NewNode, self.id(idx), self.id(next)));
        idx
    }

    /// Returns `(prev, curr, tval)` with `tval = curr.val >= v`.
    fn locate(&self, v: i64) -> (usize, usize, i64) {
        let mut prev = HEAD;
        let mut curr = self.read_next(prev);
        loop {
            let tval = self.read_val(curr);
            if tval >= v {
                return (prev, curr, tval);
            }
            prev = curr;
            curr = self.read_next(curr);
        }
    }

    pub fn insert(&self, v: i64) -> bool {
        check_key(v);
        let (prev, curr, tval) = self.locate(v);
        if tval != v {
            let x = self.new_node(v, curr);
            self.write_next(prev, x);
        }
        tval != v
    }

    pub fn remove(&self, v: i64) -> bool {
        check_key(v);
        let (prev, curr, tval) = self.locate(v);
        if tval == v {
            let tnext = self.read_next(curr);
            self.write_next(prev, tnext);
            self.arena.borrow_mut().free.push(curr);
        }
        tval == v
    }

    pub fn contains(&self, v: i64) -> bool {
        check_key(v);
        let (_, _, tval) = self.locate(v);
        tval == v
    }
}

impl<P: Probe> SetOps for SequentialSet<P> {
    fn insert(&self, key: i64) -> bool {
        SequentialSet::insert(self, key)
    }
    fn remove(&self, key: i64) -> bool {
        SequentialSet::remove(self, key)
    }
    fn contains(&self, key: i64) -> bool {
        SequentialSet::contains(self, key)
    }
    fn keys(&self) -> Vec<i64> {
        let arena = self.arena.borrow();
        let mut out = Vec::new();
        let mut curr = arena.nodes[HEAD].next;
        while curr != TAIL {
            out.push(arena.nodes[curr].val);
            curr = arena.nodes[curr].next;
        }
        out
    }
}
