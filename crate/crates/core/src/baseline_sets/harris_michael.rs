//! Lock-free list with logical deletion by marking a node's own `next` link
//! (tag bit 1). Traversals that meet a marked node snip it out with a CAS on
//! the predecessor's link and restart from the head when that CAS fails.

use std::sync::atomic::Ordering;

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use crate::probe::{Action, NoProbe, NodeId, Outcome, Probe, Step};
use crate::set_api::{check_key, SetOps, HEAD_KEY, TAIL_KEY};

const MARK: usize = 1;

struct HmNode {
    val: i64,
    next: Atomic<HmNode>,
}

impl HmNode {
    fn new(val: i64) -> Self {
        HmNode {
            val,
            next: Atomic::null(),
        }
    }

    #[inline]
    fn id(&self) -> NodeId {
        NodeId::of(self, self.val)
    }
}

pub struct HarrisMichaelSet<P: Probe = NoProbe> {
    head: HmNode,
    probe: P,
}

impl HarrisMichaelSet<NoProbe> {
    pub fn new() -> Self {
        Self::with_probe(NoProbe)
    }
}

impl Default for HarrisMichaelSet<NoProbe> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Probe> HarrisMichaelSet<P> {
    pub fn with_probe(probe: P) -> Self {
        let head = HmNode::new(HEAD_KEY);
        head.next
            .store(Owned::new(HmNode::new(TAIL_KEY)), Ordering::Relaxed);
        HarrisMichaelSet { head, probe }
    }

    pub fn contains(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let mut curr = &self.head;
        while self.read_val(curr) < v {
            let next = self.read_next(curr, guard);
            // SAFETY: nodes below the tail have a non-null link.
            curr = unsafe { next.deref() };
        }
        curr.val == v && !self.read_mark(curr, guard)
    }

    pub fn insert(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;
        let mut new_node: Option<Owned<HmNode>> = None;
        loop {
            let (pred, curr) = self.find(v, guard);
            // SAFETY: `find` returns nodes protected by `guard`.
            let curr_ref = unsafe { curr.deref() };
            if curr_ref.val == v {
                return false;
            }
            let node = new_node.get_or_insert_with(|| Owned::new(HmNode::new(v)));
            node.next.store(curr, Ordering::Relaxed);
            probe.step(Step::with_arg(Action::NewNode, node.id(), curr_ref.id()));
            let node_id = node.id();
            probe.update_begin();
            probe.step(Step::with_arg(Action::WriteNext, pred.id(), node_id));
            let owned = new_node.take().expect("allocated above");
            match pred.next.compare_exchange(
                curr,
                owned,
                Ordering::AcqRel,
                Ordering::Acquire,
                guard,
            ) {
                Ok(_) => {
                    probe.outcome(Outcome::Flag(true));
                    probe.update_end();
                    return true;
                }
                Err(e) => {
                    probe.outcome(Outcome::Flag(false));
                    new_node = Some(e.new);
                    probe.step(Step::new(Action::Restart, self.head.id()));
                }
            }
        }
    }

    pub fn remove(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;
        loop {
            let (pred, curr) = self.find(v, guard);
            // SAFETY: protected by `guard`.
            let curr_ref = unsafe { curr.deref() };
            if curr_ref.val != v {
                return false;
            }
            let succ = self.read_next(curr_ref, guard);
            if succ.tag() == MARK {
                probe.step(Step::new(Action::Restart, self.head.id()));
                continue;
            }
            probe.update_begin();
            probe.step(Step::new(Action::WriteDeleted, curr_ref.id()));
            let marked = curr_ref
                .next
                .compare_exchange(
                    succ,
                    succ.with_tag(MARK),
                    Ordering::AcqRel,
                    Ordering::Acquire,
                    guard,
                )
                .is_ok();
            probe.outcome(Outcome::Flag(marked));
            if !marked {
                probe.step(Step::new(Action::Restart, self.head.id()));
                continue;
            }
            // SAFETY: curr holds key v, so succ is a real node.
            let succ_id = unsafe { succ.deref() }.id();
            probe.step(Step::with_arg(Action::WriteNext, pred.id(), succ_id));
            let unlinked = pred
                .next
                .compare_exchange(curr, succ, Ordering::AcqRel, Ordering::Acquire, guard)
                .is_ok();
            probe.outcome(Outcome::Flag(unlinked));
            if unlinked {
                // SAFETY: unreachable now, and only the winning CAS retires it.
                unsafe { guard.defer_destroy(curr) };
            }
            // A failed unlink leaves the marked node for a later traversal.
            probe.update_end();
            return true;
        }
    }

    /// First unmarked node with `val >= v` and its predecessor, snipping marked
    /// nodes on the way.
    fn find<'g>(&'g self, v: i64, guard: &'g Guard) -> (&'g HmNode, Shared<'g, HmNode>) {
        'retry: loop {
            let mut pred = &self.head;
            let mut curr = self.read_next(pred, guard);
            loop {
                // SAFETY: curr is reachable and protected by `guard`.
                let curr_ref = unsafe { curr.deref() };
                let mut succ = self.read_next(curr_ref, guard);
                while succ.tag() == MARK {
                    let succ_clean = succ.with_tag(0);
                    // SAFETY: a marked node is never the tail.
                    let succ_id = unsafe { succ_clean.deref() }.id();
                    self.probe
                        .step(Step::with_arg(Action::WriteNext, pred.id(), succ_id));
                    let snipped = pred
                        .next
                        .compare_exchange(
                            curr,
                            succ_clean,
                            Ordering::AcqRel,
                            Ordering::Acquire,
                            guard,
                        )
                        .is_ok();
                    self.probe.outcome(Outcome::Flag(snipped));
                    if !snipped {
                        self.probe.step(Step::new(Action::Restart, self.head.id()));
                        continue 'retry;
                    }
                    // SAFETY: this CAS made curr unreachable.
                    unsafe { guard.defer_destroy(curr) };
                    curr = succ_clean;
                    // SAFETY: as above.
                    succ = self.read_next(unsafe { curr.deref() }, guard);
                }
                // SAFETY: as above.
                let curr_ref = unsafe { curr.deref() };
                if self.read_val(curr_ref) >= v {
                    return (pred, curr);
                }
                pred = curr_ref;
                curr = succ;
            }
        }
    }

    #[inline]
    fn read_val(&self, node: &HmNode) -> i64 {
        self.probe.step(Step::new(Action::ReadVal, node.id()));
        node.val
    }

    /// Loads the link with its mark; reports the target node.
    #[inline]
    fn read_next<'g>(&self, node: &HmNode, guard: &'g Guard) -> Shared<'g, HmNode> {
        self.probe.step(Step::new(Action::ReadNext, node.id()));
        let next = node.next.load(Ordering::Acquire, guard);
        // SAFETY: protected by `guard`.
        let next_id = unsafe { next.with_tag(0).as_ref() }.map(HmNode::id);
        self.probe.outcome(Outcome::Node(next_id));
        next
    }

    #[inline]
    fn read_mark(&self, node: &HmNode, guard: &Guard) -> bool {
        self.probe.step(Step::new(Action::ReadDeleted, node.id()));
        let marked = node.next.load(Ordering::Acquire, guard).tag() == MARK;
        self.probe.outcome(Outcome::Flag(marked));
        marked
    }
}

impl<P: Probe> SetOps for HarrisMichaelSet<P> {
    fn insert(&self, key: i64) -> bool {
        HarrisMichaelSet::insert(self, key)
    }
    fn remove(&self, key: i64) -> bool {
        HarrisMichaelSet::remove(self, key)
    }
    fn contains(&self, key: i64) -> bool {
        HarrisMichaelSet::contains(self, key)
    }
    fn keys(&self) -> Vec<i64> {
        let guard = &epoch::pin();
        let mut out = Vec::new();
        let mut curr = self.head.next.load(Ordering::Acquire, guard);
        // SAFETY: reachable nodes are protected by `guard`.
        while let Some(node) = unsafe { curr.with_tag(0).as_ref() } {
            let next = node.next.load(Ordering::Acquire, guard);
            if node.val != TAIL_KEY && next.tag() != MARK {
                out.push(node.val);
            }
            curr = next;
        }
        out
    }
}

impl<P: Probe> Drop for HarrisMichaelSet<P> {
    fn drop(&mut self) {
        // SAFETY: exclusive access; marked-but-linked nodes are still owned by
        // the chain, snipped ones were handed to the collector.
        unsafe {
            let guard = epoch::unprotected();
            let mut curr = self.head.next.load(Ordering::Relaxed, guard).with_tag(0);
            while !curr.is_null() {
                let next = curr.deref().next.load(Ordering::Relaxed, guard).with_tag(0);
                drop(curr.into_owned());
                curr = next;
            }
        }
    }
}
