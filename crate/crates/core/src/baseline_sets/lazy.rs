//! Lazy linked list: wait-free `contains`, updates that lock `pred` and `curr`
//! first and validate afterwards (`!pred.marked && !curr.marked &&
//! pred.next == curr`), restarting from the head when validation fails.
//! An insert of a present key still takes both locks before it can answer.

use std::sync::atomic::{AtomicBool, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use crate::probe::{Action, NoProbe, NodeId, Outcome, Probe, Step};
use crate::set_api::{check_key, SetOps, HEAD_KEY, TAIL_KEY};

const SPINS_BEFORE_YIELD: u32 = 64;

/// Plain test-and-set lock, no versions.
#[derive(Debug, Default)]
struct SpinLock(AtomicBool);

impl SpinLock {
    #[inline]
    fn try_lock(&self) -> bool {
        self.0
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    #[inline]
    fn unlock(&self) {
        self.0.store(false, Ordering::Release);
    }
}

struct LazyNode {
    val: i64,
    next: Atomic<LazyNode>,
    marked: AtomicBool,
    lock: SpinLock,
}

impl LazyNode {
    fn new(val: i64) -> Self {
        LazyNode {
            val,
            next: Atomic::null(),
            marked: AtomicBool::new(false),
            lock: SpinLock::default(),
        }
    }

    #[inline]
    fn id(&self) -> NodeId {
        NodeId::of(self, self.val)
    }
}

pub struct LazySet<P: Probe = NoProbe> {
    head: LazyNode,
    probe: P,
}

impl LazySet<NoProbe> {
    pub fn new() -> Self {
        Self::with_probe(NoProbe)
    }
}

impl Default for LazySet<NoProbe> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Probe> LazySet<P> {
    pub fn with_probe(probe: P) -> Self {
        let head = LazyNode::new(HEAD_KEY);
        head.next
            .store(Owned::new(LazyNode::new(TAIL_KEY)), Ordering::Relaxed);
        LazySet { head, probe }
    }

    pub fn contains(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let mut curr = &self.head;
        while self.read_val(curr) < v {
            curr = self.read_next(curr, guard);
        }
        curr.val == v && !self.read_marked(curr)
    }

    pub fn insert(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;
        let mut new_node: Option<Owned<LazyNode>> = None;
        loop {
            let (pred, curr) = self.locate(v, guard);
            probe.update_begin();
            self.lock(pred);
            self.lock(curr);
            if !self.validate(pred, curr, guard) {
                self.unlock(curr);
                self.unlock(pred);
                probe.step(Step::new(Action::Restart, self.head.id()));
                continue;
            }
            let inserted = if curr.val == v {
                false
            } else {
                let node = new_node.get_or_insert_with(|| Owned::new(LazyNode::new(v)));
                node.next
                    .store(Shared::from(curr as *const LazyNode), Ordering::Relaxed);
                probe.step(Step::with_arg(Action::NewNode, node.id(), curr.id()));
                let linked = new_node.take().expect("allocated above").into_shared(guard);
                // SAFETY: freshly converted from an Owned.
                let linked_id = unsafe { linked.deref() }.id();
                probe.step(Step::with_arg(Action::WriteNext, pred.id(), linked_id));
                pred.next.store(linked, Ordering::Release);
                true
            };
            self.unlock(curr);
            self.unlock(pred);
            probe.update_end();
            return inserted;
        }
    }

    pub fn remove(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;
        loop {
            let (pred, curr) = self.locate(v, guard);
            probe.update_begin();
            self.lock(pred);
            self.lock(curr);
            if !self.validate(pred, curr, guard) {
                self.unlock(curr);
                self.unlock(pred);
                probe.step(Step::new(Action::Restart, self.head.id()));
                continue;
            }
            if curr.val != v {
                self.unlock(curr);
                self.unlock(pred);
                probe.update_end();
                return false;
            }
            probe.step(Step::new(Action::WriteDeleted, curr.id()));
            curr.marked.store(true, Ordering::Release);
            let succ = self.read_next_shared(curr, guard);
            // SAFETY: curr holds key v, so it is not the tail.
            let succ_id = unsafe { succ.deref() }.id();
            probe.step(Step::with_arg(Action::WriteNext, pred.id(), succ_id));
            pred.next.store(succ, Ordering::Release);
            self.unlock(curr);
            self.unlock(pred);
            probe.update_end();
            // SAFETY: unlinked under both locks by this thread only.
            unsafe { guard.defer_destroy(Shared::from(curr as *const LazyNode)) };
            return true;
        }
    }

    fn locate<'g>(&'g self, v: i64, guard: &'g Guard) -> (&'g LazyNode, &'g LazyNode) {
        let mut pred = &self.head;
        let mut curr = self.read_next(pred, guard);
        while self.read_val(curr) < v {
            pred = curr;
            curr = self.read_next(curr, guard);
        }
        (pred, curr)
    }

    fn validate(&self, pred: &LazyNode, curr: &LazyNode, guard: &Guard) -> bool {
        !self.read_marked(pred)
            && !self.read_marked(curr)
            && std::ptr::eq(self.read_next_shared(pred, guard).as_raw(), curr)
    }

    fn lock(&self, node: &LazyNode) {
        self.probe.step(Step::new(Action::SpinLock, node.id()));
        let mut failures = 0u32;
        while !node.lock.try_lock() {
            self.probe.step(Step::new(Action::LockWait, node.id()));
            failures = failures.saturating_add(1);
            if failures < SPINS_BEFORE_YIELD {
                std::hint::spin_loop();
            } else {
                std::thread::yield_now();
            }
        }
    }

    fn unlock(&self, node: &LazyNode) {
        self.probe.step(Step::new(Action::Unlock, node.id()));
        node.lock.unlock();
    }

    #[inline]
    fn read_val(&self, node: &LazyNode) -> i64 {
        self.probe.step(Step::new(Action::ReadVal, node.id()));
        node.val
    }

    #[inline]
    fn read_marked(&self, node: &LazyNode) -> bool {
        self.probe.step(Step::new(Action::ReadDeleted, node.id()));
        let marked = node.marked.load(Ordering::Acquire);
        self.probe.outcome(Outcome::Flag(marked));
        marked
    }

    #[inline]
    fn read_next_shared<'g>(&self, node: &'g LazyNode, guard: &'g Guard) -> Shared<'g, LazyNode> {
        self.probe.step(Step::new(Action::ReadNext, node.id()));
        let next = node.next.load(Ordering::Acquire, guard);
        // SAFETY: protected by `guard`; null only past the tail.
        let next_id = unsafe { next.as_ref() }.map(LazyNode::id);
        self.probe.outcome(Outcome::Node(next_id));
        next
    }

    #[inline]
    fn read_next<'g>(&self, node: &'g LazyNode, guard: &'g Guard) -> &'g LazyNode {
        let next = self.read_next_shared(node, guard);
        // SAFETY: only called on nodes below the tail.
        unsafe { next.deref() }
    }
}

impl<P: Probe> SetOps for LazySet<P> {
    fn insert(&self, key: i64) -> bool {
        LazySet::insert(self, key)
    }
    fn remove(&self, key: i64) -> bool {
        LazySet::remove(self, key)
    }
    fn contains(&self, key: i64) -> bool {
        LazySet::contains(self, key)
    }
    fn keys(&self) -> Vec<i64> {
        let guard = &epoch::pin();
        let mut out = Vec::new();
        let mut curr = self.head.next.load(Ordering::Acquire, guard);
        // SAFETY: reachable nodes are protected by `guard`.
        while let Some(node) = unsafe { curr.as_ref() } {
            if node.val != TAIL_KEY && !node.marked.load(Ordering::Acquire) {
                out.push(node.val);
            }
            curr = node.next.load(Ordering::Acquire, guard);
        }
        out
    }
}

impl<P: Probe> Drop for LazySet<P> {
    fn drop(&mut self) {
        // SAFETY: exclusive access.
        unsafe {
            let guard = epoch::unprotected();
            let mut curr = self.head.next.load(Ordering::Relaxed, guard);
            while !curr.is_null() {
                let next = curr.deref().next.load(Ordering::Relaxed, guard);
                drop(curr.into_owned());
                curr = next;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn basic_ops() {
        let set = LazySet::new();
        assert!(set.insert(3));
        assert!(!set.insert(3));
        assert!(set.contains(3));
        assert!(set.insert(1));
        assert_eq!(set.keys(), vec![1, 3]);
        assert!(set.remove(3));
        assert!(!set.remove(3));
        assert_eq!(set.keys(), vec![1]);
    }

    #[test]
    fn concurrent_churn_keeps_sorted_chain() {
        let set = Arc::new(LazySet::new());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let set = Arc::clone(&set);
                std::thread::spawn(move || {
                    for i in 0..2_000i64 {
                        let k = (i * 7 + t) % 32 + 1;
                        if i % 2 == 0 {
                            set.insert(k);
                        } else {
                            set.remove(k);
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let keys = set.keys();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
