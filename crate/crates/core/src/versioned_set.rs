//! The versioned list: a sorted linked-list set with a wait-free `contains`
//! and updates that validate before locking.
//!
//! Updates traverse without synchronization, then `validate` re-walks from the
//! predecessor while recording its lock version. A later
//! `try_lock_at_version(pVer)` succeeds only if nobody locked the predecessor
//! since the version was read, which proves that the predecessor is still
//! live and still points at `curr`. A failed try-lock costs a partial abort
//! (re-validate from the retained predecessor); a deleted predecessor costs
//! a full abort (re-traverse from the head).
//!
//! Unlinked nodes are handed to the epoch collector, so a thread that read a
//! link before the unlink may keep dereferencing it until it unpins.

use std::sync::atomic::{AtomicBool, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use crate::probe::{Action, NoProbe, NodeId, Outcome, Probe, Step};
use crate::set_api::{check_key, SetOps, HEAD_KEY, TAIL_KEY};
use crate::vlock::VersionedTryLock;

struct Node {
    val: i64,
    next: Atomic<Node>,
    deleted: AtomicBool,
    vlock: VersionedTryLock,
}

impl Node {
    fn new(val: i64) -> Self {
        Node {
            val,
            next: Atomic::null(),
            deleted: AtomicBool::new(false),
            vlock: VersionedTryLock::new(),
        }
    }

    #[inline]
    fn id(&self) -> NodeId {
        NodeId::of(self, self.val)
    }
}

/// One node of a quiescent snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeSnapshot {
    pub val: i64,
    pub deleted: bool,
    pub version: u64,
}

pub struct VersionedSet<P: Probe = NoProbe> {
    head: Node,
    probe: P,
}

/// Output of a successful `validate`: `prev.val < v <= curr.val`, and `pver`
/// was read from `prev` before the read of `prev.next` that produced `curr`.
struct Validated<'g> {
    prev: &'g Node,
    pver: u64,
    curr: &'g Node,
}

impl VersionedSet<NoProbe> {
    pub fn new() -> Self {
        Self::with_probe(NoProbe)
    }
}

impl Default for VersionedSet<NoProbe> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Probe> VersionedSet<P> {
    pub fn with_probe(probe: P) -> Self {
        let head = Node::new(HEAD_KEY);
        head.next
            .store(Owned::new(Node::new(TAIL_KEY)), Ordering::Relaxed);
        VersionedSet { head, probe }
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }

    /// Wait-free: no locks, no compare-and-swap, no restarts.
    pub fn contains(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let mut curr = &self.head;
        while self.read_val(curr) < v {
            curr = self.read_next(curr, guard);
        }
        curr.val == v && !self.read_deleted(curr)
    }

    pub fn insert(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;
        // Allocated at most once per call and re-pointed before each attempt.
        let mut new_node: Option<Owned<Node>> = None;

        'traverse: loop {
            let mut prev = self.waitfree_traversal(v, guard);
            loop {
                let Some(Validated {
                    prev: p,
                    pver,
                    curr,
                }) = self.validate(v, prev, guard)
                else {
                    probe.step(Step::new(Action::Restart, self.head.id()));
                    continue 'traverse;
                };
                prev = p;
                if self.read_deleted(curr) {
                    probe.step(Step::new(Action::Retry, prev.id()));
                    continue;
                }
                if curr.val == v {
                    return false;
                }

                let node = new_node.get_or_insert_with(|| Owned::new(Node::new(v)));
                node.next
                    .store(Shared::from(curr as *const Node), Ordering::Relaxed);
                probe.step(Step::with_arg(Action::NewNode, node.id(), curr.id()));

                probe.update_begin();
                if !self.try_lock(prev, pver) {
                    probe.step(Step::new(Action::Retry, prev.id()));
                    continue;
                }
                self.debug_check_validated(prev, curr, guard);

                let linked = new_node
                    .take()
                    .expect("node allocated above")
                    .into_shared(guard);
                // SAFETY: `linked` was created from a live Owned just above.
                let linked_id = unsafe { linked.deref() }.id();
                probe.step(Step::with_arg(Action::WriteNext, prev.id(), linked_id));
                prev.next.store(linked, Ordering::Release);
                self.unlock(prev);
                probe.update_end();
                return true;
            }
        }
    }

    pub fn remove(&self, v: i64) -> bool {
        check_key(v);
        let guard = &epoch::pin();
        let probe = &self.probe;

        'traverse: loop {
            let mut prev = self.waitfree_traversal(v, guard);
            loop {
                let Some(Validated {
                    prev: p,
                    pver,
                    curr,
                }) = self.validate(v, prev, guard)
                else {
                    probe.step(Step::new(Action::Restart, self.head.id()));
                    continue 'traverse;
                };
                prev = p;
                if curr.val != v || self.read_deleted(curr) {
                    return false;
                }

                probe.update_begin();
                if !self.try_lock(prev, pver) {
                    probe.step(Step::new(Action::Retry, prev.id()));
                    continue;
                }
                self.debug_check_validated(prev, curr, guard);
                // Locks are always taken in ascending key order.
                debug_assert!(prev.val < curr.val);
                probe.step(Step::new(Action::SpinLock, curr.id()));
                curr.vlock.lock_at_current_version_or_else(|| {
                    probe.step(Step::new(Action::LockWait, curr.id()));
                });

                probe.step(Step::new(Action::WriteDeleted, curr.id()));
                curr.deleted.store(true, Ordering::Release);

                probe.step(Step::new(Action::ReadNext, curr.id()));
                let succ = curr.next.load(Ordering::Acquire, guard);
                // SAFETY: curr is not the tail (curr.val == v), so its link is
                // non-null, and the node is protected by `guard`.
                let succ_id = unsafe { succ.deref() }.id();
                probe.outcome(Outcome::Node(Some(succ_id)));

                probe.step(Step::with_arg(Action::WriteNext, prev.id(), succ_id));
                prev.next.store(succ, Ordering::Release);

                self.unlock(curr);
                self.unlock(prev);
                probe.update_end();

                // SAFETY: curr is now unreachable from the head and only this
                // thread unlinked it; readers that still hold it are pinned.
                unsafe { guard.defer_destroy(Shared::from(curr as *const Node)) };
                return true;
            }
        }
    }

    /// Last node with `val < v`, found without locks, retries or deleted-flag
    /// checks.
    fn waitfree_traversal<'g>(&'g self, v: i64, guard: &'g Guard) -> &'g Node {
        let mut prev = &self.head;
        let mut curr = &self.head;
        while self.read_val(curr) < v {
            prev = curr;
            curr = self.read_next(curr, guard);
        }
        prev
    }

    /// `None` means `prev` was logically deleted and the caller must restart
    /// from the head. A deleted node met on the way forward restarts the walk
    /// from the retained `prev`.
    fn validate<'g>(
        &'g self,
        v: i64,
        mut prev: &'g Node,
        guard: &'g Guard,
    ) -> Option<Validated<'g>> {
        debug_assert!(prev.val < v);
        'start: loop {
            let mut pver = self.read_version(prev);
            if self.read_deleted(prev) {
                return None;
            }
            let mut curr = self.read_next(prev, guard);
            while self.read_val(curr) < v {
                // Version first, then the flag: the version anchors the node
                // that is about to become prev.
                pver = self.read_version(curr);
                if self.read_deleted(curr) {
                    self.probe.step(Step::new(Action::Retry, prev.id()));
                    continue 'start;
                }
                prev = curr;
                curr = self.read_next(curr, guard);
            }
            return Some(Validated { prev, pver, curr });
        }
    }

    #[inline]
    fn read_val(&self, node: &Node) -> i64 {
        self.probe.step(Step::new(Action::ReadVal, node.id()));
        node.val
    }

    #[inline]
    fn read_next<'g>(&self, node: &'g Node, guard: &'g Guard) -> &'g Node {
        self.probe.step(Step::new(Action::ReadNext, node.id()));
        // SAFETY: only called on nodes with val < some key < TAIL_KEY, whose
        // link is never null; the target is protected by `guard`.
        let next = unsafe { node.next.load(Ordering::Acquire, guard).deref() };
        self.probe.outcome(Outcome::Node(Some(next.id())));
        next
    }

    #[inline]
    fn read_deleted(&self, node: &Node) -> bool {
        self.probe.step(Step::new(Action::ReadDeleted, node.id()));
        let deleted = node.deleted.load(Ordering::Acquire);
        self.probe.outcome(Outcome::Flag(deleted));
        deleted
    }

    #[inline]
    fn read_version(&self, node: &Node) -> u64 {
        self.probe.step(Step::new(Action::ReadVersion, node.id()));
        node.vlock.get_version()
    }

    #[inline]
    fn try_lock(&self, node: &Node, ver: u64) -> bool {
        self.probe.step(Step::new(Action::TryLock, node.id()));
        let ok = node.vlock.try_lock_at_version(ver);
        self.probe.outcome(Outcome::Flag(ok));
        ok
    }

    #[inline]
    fn unlock(&self, node: &Node) {
        self.probe.step(Step::new(Action::Unlock, node.id()));
        node.vlock.unlock_and_increment_version();
    }

    /// Holding prev's lock at the validated version, the validated facts must
    /// still hold.
    #[inline]
    fn debug_check_validated(&self, prev: &Node, curr: &Node, guard: &Guard) {
        debug_assert!(!prev.deleted.load(Ordering::Relaxed));
        debug_assert!(std::ptr::eq(
            prev.next.load(Ordering::Relaxed, guard).as_raw(),
            curr
        ));
    }

    /// Whole chain including both sentinels. Quiescence required.
    pub fn snapshot(&self) -> Vec<NodeSnapshot> {
        let guard = &epoch::pin();
        let mut out = Vec::new();
        let mut curr = Shared::from(&self.head as *const Node);
        // SAFETY: every reachable node is protected by `guard`.
        while let Some(node) = unsafe { curr.as_ref() } {
            out.push(NodeSnapshot {
                val: node.val,
                deleted: node.deleted.load(Ordering::Acquire),
                version: node.vlock.get_version(),
            });
            curr = node.next.load(Ordering::Acquire, guard);
        }
        out
    }

    pub fn head_version(&self) -> u64 {
        self.head.vlock.get_version()
    }
}

impl<P: Probe> SetOps for VersionedSet<P> {
    fn insert(&self, key: i64) -> bool {
        VersionedSet::insert(self, key)
    }
    fn remove(&self, key: i64) -> bool {
        VersionedSet::remove(self, key)
    }
    fn contains(&self, key: i64) -> bool {
        VersionedSet::contains(self, key)
    }
    fn keys(&self) -> Vec<i64> {
        self.snapshot()
            .into_iter()
            .filter(|n| n.val != HEAD_KEY && n.val != TAIL_KEY && !n.deleted)
            .map(|n| n.val)
            .collect()
    }
}

impl<P: Probe> Drop for VersionedSet<P> {
    fn drop(&mut self) {
        // SAFETY: `&mut self` means no other thread can reach the nodes.
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
