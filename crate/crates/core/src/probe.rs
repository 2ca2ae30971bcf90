//! Step instrumentation shared by every set implementation.
//!
//! Each implementation is generic over a [`Probe`]. The default [`NoProbe`]
//! has empty inline methods, so the hooks vanish after monomorphization. The
//! replay controller, the op counters used to audit `contains`, and the
//! benchmark timers are all probes.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

/// Node-level step kinds. The first twelve mirror the read/write/create
/// vocabulary of the sequential list plus lock metadata; `Retry`, `Restart`
/// and `LockWait` are how an implementation reports that it aborted a fragment
/// or is blocked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    ReadVal,
    ReadNext,
    ReadDeleted,
    WriteNext,
    WriteDeleted,
    NewNode,
    ReadVersion,
    TryLock,
    SpinLock,
    Unlock,
    Invoke,
    Respond,
    /// Partial abort: resume from the retained predecessor.
    Retry,
    /// Full abort: restart from the head.
    Restart,
    /// A blocking lock attempt failed; the op will try again.
    LockWait,
}

impl Action {
    pub const ALL: [Action; 15] = [
        Action::ReadVal,
        Action::ReadNext,
        Action::ReadDeleted,
        Action::WriteNext,
        Action::WriteDeleted,
        Action::NewNode,
        Action::ReadVersion,
        Action::TryLock,
        Action::SpinLock,
        Action::Unlock,
        Action::Invoke,
        Action::Respond,
        Action::Retry,
        Action::Restart,
        Action::LockWait,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::ReadVal => "READ_VAL",
            Action::ReadNext => "READ_NEXT",
            Action::ReadDeleted => "READ_DELETED",
            Action::WriteNext => "WRITE_NEXT",
            Action::WriteDeleted => "WRITE_DELETED",
            Action::NewNode => "NEW_NODE",
            Action::ReadVersion => "READ_VERSION",
            Action::TryLock => "TRYLOCK",
            Action::SpinLock => "SPINLOCK",
            Action::Unlock => "UNLOCK",
            Action::Invoke => "INVOKE",
            Action::Respond => "RESPOND",
            Action::Retry => "RETRY",
            Action::Restart => "RESTART",
            Action::LockWait => "LOCK_WAIT",
        }
    }

    /// Steps on metadata (versions, locks, deleted flags) that the sequential
    /// list has no counterpart for.
    pub fn is_meta(self) -> bool {
        matches!(
            self,
            Action::ReadDeleted
                | Action::WriteDeleted
                | Action::ReadVersion
                | Action::TryLock
                | Action::SpinLock
                | Action::Unlock
        )
    }

    /// Steps that mean the op gave up on the current fragment or cannot
    /// proceed.
    pub fn is_rejection(self) -> bool {
        matches!(self, Action::Retry | Action::Restart | Action::LockWait)
    }

    /// Lock acquisitions, releases and read-modify-write steps. A wait-free
    /// `contains` must emit none of these.
    pub fn is_synchronizing(self) -> bool {
        matches!(
            self,
            Action::TryLock
                | Action::SpinLock
                | Action::LockWait
                | Action::Unlock
                | Action::WriteNext
                | Action::WriteDeleted
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| UnknownAction(s.to_owned()))
    }
}

/// Identity of a list node as seen by a probe: its address and its key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub addr: usize,
    pub val: i64,
}

impl NodeId {
    #[inline]
    pub fn of<T>(node: &T, val: i64) -> Self {
        NodeId {
            addr: node as *const T as usize,
            val,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub node: NodeId,
    /// The node written into a link (`WRITE_NEXT`) or the successor of a
    /// freshly created node (`NEW_NODE`).
    pub arg: Option<NodeId>,
}

impl Step {
    #[inline]
    pub fn new(action: Action, node: NodeId) -> Self {
        Step {
            action,
            node,
            arg: None,
        }
    }

    #[inline]
    pub fn with_arg(action: Action, node: NodeId, arg: NodeId) -> Self {
        Step {
            action,
            node,
            arg: Some(arg),
        }
    }
}

/// Result of the step most recently reported by the calling thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Node returned by a `READ_NEXT` (`None` past the tail).
    Node(Option<NodeId>),
    /// Flag read, or success of a lock attempt / compare-and-swap.
    Flag(bool),
}

/// Instrumentation hooks. `step` is called immediately before the step is
/// performed and may block (schedule replay parks the thread there);
/// `outcome` is called right after for steps whose result matters.
pub trait Probe {
    #[inline(always)]
    fn step(&self, _step: Step) {}

    #[inline(always)]
    fn outcome(&self, _outcome: Outcome) {}

    /// Just before an update starts taking locks (or, for the lock-free list,
    /// its final compare-and-swap).
    #[inline(always)]
    fn update_begin(&self) {}

    /// Just after the last lock of a committed update is released.
    #[inline(always)]
    fn update_end(&self) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

impl Probe for NoProbe {}

impl<P: Probe + ?Sized> Probe for std::sync::Arc<P> {
    #[inline(always)]
    fn step(&self, step: Step) {
        (**self).step(step)
    }
    #[inline(always)]
    fn outcome(&self, outcome: Outcome) {
        (**self).outcome(outcome)
    }
    #[inline(always)]
    fn update_begin(&self) {
        (**self).update_begin()
    }
    #[inline(always)]
    fn update_end(&self) {
        (**self).update_end()
    }
}

thread_local! {
    static STEP_COUNTS: [Cell<u64>; 15] = const { [const { Cell::new(0) }; 15] };
}

/// Per-thread tally of emitted steps by action. Take a [`StepCounts`]
/// snapshot before and after an operation on the same thread to get exactly
/// the steps that operation performed.
#[derive(Clone, Copy, Debug, Default)]
pub struct CountingProbe;

impl Probe for CountingProbe {
    #[inline]
    fn step(&self, step: Step) {
        STEP_COUNTS.with(|c| {
            let cell = &c[step.action as usize];
            cell.set(cell.get() + 1);
        });
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts([u64; 15]);

impl StepCounts {
    /// Counts for the current thread.
    pub fn current() -> Self {
        STEP_COUNTS.with(|c| {
            let mut out = [0; 15];
            for (o, cell) in out.iter_mut().zip(c.iter()) {
                *o = cell.get();
            }
            StepCounts(out)
        })
    }

    pub fn get(&self, action: Action) -> u64 {
        self.0[action as usize]
    }

    pub fn since(&self, earlier: &StepCounts) -> StepCounts {
        let mut out = [0; 15];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] - earlier.0[i];
        }
        StepCounts(out)
    }

    pub fn synchronizing(&self) -> u64 {
        Action::ALL
            .iter()
            .filter(|a| a.is_synchronizing())
            .map(|a| self.get(*a))
            .sum()
    }
}
