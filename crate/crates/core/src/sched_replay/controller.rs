//! Cooperative step gating. Every op runs on its own thread; each probe step
//! parks the thread until the controller grants it, and the controller waits
//! for the granted thread to park again (or finish) before doing anything
//! else, so exactly one op moves at a time and runs are reproducible.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::script::{Gate, Label, Script};
use super::trace::{EventOutcome, OpTrace, Trace, TraceEvent};
use crate::probe::{Action, NodeId, Outcome, Probe, Step};
use crate::set_api::{ConcurrentSet, ImplKind, OpKind, HEAD_KEY, TAIL_KEY};

/// What to do when the op named by the next gate announces a different step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Every step must be scripted.
    Exact,
    /// Unscripted reads, writes, node creations and metadata steps of the
    /// gated op are granted and logged. A retry, restart, failed lock wait or
    /// early response diverges.
    Strict,
    /// Never diverge: grant whatever is needed to reach each gate, and skip a
    /// gate that cannot be reached.
    AllowAndLog,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("the {0} set is single-threaded and cannot be replayed")]
    Unsupported(ImplKind),
    #[error("bad script: {0}")]
    BadScript(String),
    #[error("schedule diverged at gate {}: expected `{expected}`, got `{}`", .step + 1, describe(.actual))]
    Diverged {
        /// 0-based gate index.
        step: usize,
        expected: Gate,
        /// `None` when the op had already finished.
        actual: Option<Label>,
        trace: Box<Trace>,
    },
    #[error("no completion after {0} steps")]
    Livelock(usize),
    #[error("op{} did not reach its next step in time", .0 + 1)]
    Stalled(usize),
    #[error("op{} panicked", .0 + 1)]
    WorkerPanicked(usize),
}

fn describe(actual: &Option<Label>) -> String {
    match actual {
        Some(label) => label.to_string(),
        None => "op already finished".into(),
    }
}

/// Most steps a single run may grant before it is declared livelocked.
pub const STEP_CAP: usize = 200_000;
/// Most extra steps spent trying to reach one gate.
pub const EXTRA_CAP: usize = 10_000;
const GRANT_TIMEOUT: Duration = Duration::from_secs(20);

thread_local! {
    static CURRENT_OP: Cell<Option<usize>> = const { Cell::new(None) };
}

#[derive(Clone, Copy, Debug)]
struct Announced {
    action: Action,
    node: Option<NodeId>,
    arg: Option<NodeId>,
}

#[derive(Clone, Copy, Debug)]
enum Status {
    Running,
    Parked(Announced),
    Finished,
    Panicked,
}

struct State {
    status: Vec<Status>,
    granted: Vec<bool>,
    outcome: Vec<Option<Outcome>>,
    result: Vec<Option<bool>>,
    /// Set when the controller gives up: gates open for good.
    released: bool,
}

struct Shared {
    state: Mutex<State>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn park(&self, op: usize, announced: Announced) {
        let mut st = self.lock();
        if st.released {
            return;
        }
        st.status[op] = Status::Parked(announced);
        self.cv.notify_all();
        while !st.granted[op] && !st.released {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.granted[op] = false;
    }

    fn finish(&self, op: usize, status: Status) {
        let mut st = self.lock();
        st.status[op] = status;
        self.cv.notify_all();
    }
}

/// The probe handed to the set under test. Steps taken on threads that are
/// not replay workers (initial inserts, final key listing) pass straight
/// through.
pub struct GateProbe {
    shared: Arc<Shared>,
}

impl Probe for GateProbe {
    fn step(&self, step: Step) {
        if let Some(op) = CURRENT_OP.get() {
            self.shared.park(
                op,
                Announced {
                    action: step.action,
                    node: Some(step.node),
                    arg: step.arg,
                },
            );
        }
    }

    fn outcome(&self, outcome: Outcome) {
        if let Some(op) = CURRENT_OP.get() {
            self.shared.lock().outcome[op] = Some(outcome);
        }
    }
}

/// Stable symbolic names for nodes: `h`, `t`, and `X<key>` (with a `#n`
/// suffix when the name is already in use).
#[derive(Default)]
struct Tagger {
    by_addr: HashMap<usize, String>,
    names: BTreeMap<String, i64>,
    created_by: HashMap<usize, usize>,
}

impl Tagger {
    fn tag(&mut self, id: NodeId) -> String {
        match self.by_addr.get(&id.addr) {
            Some(tag) => tag.clone(),
            None => self.bind(id),
        }
    }

    fn fresh_name(&self, val: i64) -> String {
        let base = match val {
            HEAD_KEY => "h".to_owned(),
            TAIL_KEY => "t".to_owned(),
            v => format!("X{v}"),
        };
        let mut name = base.clone();
        let mut n = 2;
        while self.names.contains_key(&name) {
            name = format!("{base}#{n}");
            n += 1;
        }
        name
    }

    fn bind(&mut self, id: NodeId) -> String {
        let name = self.fresh_name(id.val);
        self.names.insert(name.clone(), id.val);
        self.by_addr.insert(id.addr, name.clone());
        name
    }

    /// A node creation gets a fresh tag unless the same op is re-announcing
    /// the node it already created.
    fn created(&mut self, op: usize, id: NodeId) -> String {
        if self.created_by.get(&id.addr) == Some(&op) {
            if let Some(tag) = self.by_addr.get(&id.addr) {
                return tag.clone();
            }
        }
        self.created_by.insert(id.addr, op);
        self.bind(id)
    }
}

struct Session<'a> {
    shared: &'a Shared,
    tagger: Tagger,
    trace: Trace,
    steps: usize,
}

impl Session<'_> {
    fn status(&self, op: usize) -> Status {
        self.shared.lock().status[op]
    }

    fn label(&mut self, op: usize) -> Option<Label> {
        match self.status(op) {
            Status::Parked(a) => Some(Label {
                op,
                action: a.action,
                tag: self.peek_tag(op, a),
            }),
            _ => None,
        }
    }

    /// Tag the node of an announced step. A node creation is not bound
    /// until granted; this returns the tag it will get.
    fn peek_tag(&mut self, op: usize, a: Announced) -> Option<String> {
        let node = a.node?;
        if a.action != Action::NewNode {
            return Some(self.tagger.tag(node));
        }
        if self.tagger.created_by.get(&node.addr) == Some(&op) {
            if let Some(tag) = self.tagger.by_addr.get(&node.addr) {
                return Some(tag.clone());
            }
        }
        Some(self.tagger.fresh_name(node.val))
    }

    /// Lets `op` perform its announced step and waits until it announces the
    /// next one or finishes.
    fn grant(&mut self, op: usize, scripted: bool) -> Result<(), ReplayError> {
        self.steps += 1;
        if self.steps > STEP_CAP {
            return Err(ReplayError::Livelock(STEP_CAP));
        }
        let announced = {
            let mut st = self.shared.lock();
            let Status::Parked(a) = st.status[op] else {
                unreachable!("granting an op that is not parked");
            };
            st.status[op] = Status::Running;
            st.granted[op] = true;
            self.shared.cv.notify_all();
            a
        };
        let (node, arg) = match announced.action {
            Action::Invoke | Action::Respond => (None, None),
            Action::NewNode => {
                let node = announced.node.map(|n| self.tagger.created(op, n));
                (node, announced.arg.map(|n| self.tagger.tag(n)))
            }
            _ => (
                announced.node.map(|n| self.tagger.tag(n)),
                announced.arg.map(|n| self.tagger.tag(n)),
            ),
        };
        let (outcome, result, status) = {
            let mut st = self.shared.lock();
            while matches!(st.status[op], Status::Running) {
                let (guard, timeout) = self
                    .shared
                    .cv
                    .wait_timeout(st, GRANT_TIMEOUT)
                    .unwrap_or_else(|e| e.into_inner());
                st = guard;
                if timeout.timed_out() && matches!(st.status[op], Status::Running) {
                    return Err(ReplayError::Stalled(op));
                }
            }
            (st.outcome[op].take(), st.result[op], st.status[op])
        };
        if let Status::Panicked = status {
            return Err(ReplayError::WorkerPanicked(op));
        }
        let outcome = outcome.map(|o| match o {
            Outcome::Node(n) => EventOutcome::Node(n.map(|id| self.tagger.tag(id))),
            Outcome::Flag(b) => EventOutcome::Flag(b),
        });
        match announced.action {
            Action::Retry | Action::Restart => self.trace.ops[op].restarts += 1,
            Action::Respond => self.trace.ops[op].response = result,
            _ => {}
        }
        self.trace.events.push(TraceEvent {
            op,
            action: announced.action,
            node,
            arg,
            outcome,
            scripted,
        });
        Ok(())
    }

    fn parked(&self) -> Vec<(usize, Action)> {
        let st = self.shared.lock();
        st.status
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Status::Parked(a) => Some((i, a.action)),
                _ => None,
            })
            .collect()
    }

    /// Deterministic completion: lowest op not stuck at a rejection step,
    /// else the lowest parked op.
    fn drain(&mut self) -> Result<(), ReplayError> {
        loop {
            let parked = self.parked();
            let Some(&(first, _)) = parked.first() else {
                return Ok(());
            };
            let pick = parked
                .iter()
                .find(|(_, a)| !a.is_rejection())
                .map_or(first, |&(op, _)| op);
            self.grant(pick, false)?;
        }
    }

    fn run_gates(
        &mut self,
        gates: &[Gate],
        policy: Policy,
    ) -> Result<Option<Divergence>, ReplayError> {
        for (index, gate) in gates.iter().enumerate() {
            let mut extras = 0;
            loop {
                let actual = self.label(gate.op);
                let Some(label) = actual else {
                    if policy == Policy::AllowAndLog {
                        self.trace.skipped_gates.push(index);
                        break;
                    }
                    return Ok(Some((index, None)));
                };
                if gate.matches(&label) {
                    self.grant(gate.op, true)?;
                    break;
                }
                match policy {
                    Policy::Exact => return Ok(Some((index, Some(label)))),
                    Policy::Strict => {
                        if label.action.is_rejection() || label.action == Action::Respond {
                            return Ok(Some((index, Some(label))));
                        }
                        self.grant(gate.op, false)?;
                    }
                    Policy::AllowAndLog => {
                        if extras >= EXTRA_CAP {
                            self.trace.skipped_gates.push(index);
                            break;
                        }
                        extras += 1;
                        let helper = if label.action.is_rejection() {
                            self.parked()
                                .into_iter()
                                .find(|&(op, a)| op != gate.op && !a.is_rejection())
                                .map(|(op, _)| op)
                        } else {
                            None
                        };
                        self.grant(helper.unwrap_or(gate.op), false)?;
                    }
                }
            }
        }
        Ok(None)
    }

    fn run_random(&mut self, rng: &mut ChaCha8Rng) -> Result<(), ReplayError> {
        loop {
            let parked = self.parked();
            if parked.is_empty() {
                return Ok(());
            }
            let progressing: Vec<usize> = parked
                .iter()
                .filter(|(_, a)| !a.is_rejection())
                .map(|&(op, _)| op)
                .collect();
            let pick = if !progressing.is_empty() && rng.random_bool(0.75) {
                progressing[rng.random_range(0..progressing.len())]
            } else {
                parked[rng.random_range(0..parked.len())].0
            };
            self.grant(pick, false)?;
        }
    }
}

/// Gate index and the step actually offered there.
type Divergence = (usize, Option<Label>);

enum Driver<'a> {
    Script(&'a [Gate], Policy),
    Random(u64),
}

fn execute(
    kind: ImplKind,
    initial: &[i64],
    ops: &[(OpKind, i64)],
    driver: Driver<'_>,
) -> Result<(Trace, Option<Divergence>), ReplayError> {
    if !kind.is_concurrent() {
        return Err(ReplayError::Unsupported(kind));
    }
    let shared = Arc::new(Shared {
        state: Mutex::new(State {
            status: vec![Status::Running; ops.len()],
            granted: vec![false; ops.len()],
            outcome: vec![None; ops.len()],
            result: vec![None; ops.len()],
            released: false,
        }),
        cv: Condvar::new(),
    });
    let set: Arc<dyn ConcurrentSet> = kind
        .build_shared_with(GateProbe {
            shared: Arc::clone(&shared),
        })
        .map_err(|_| ReplayError::Unsupported(kind))?;
    for &key in initial {
        set.insert(key);
    }

    std::thread::scope(|scope| {
        for (op, &(op_kind, arg)) in ops.iter().enumerate() {
            let set = Arc::clone(&set);
            let shared = Arc::clone(&shared);
            scope.spawn(move || {
                CURRENT_OP.set(Some(op));
                let announce = |action| {
                    shared.park(
                        op,
                        Announced {
                            action,
                            node: None,
                            arg: None,
                        },
                    )
                };
                announce(Action::Invoke);
                match catch_unwind(AssertUnwindSafe(|| op_kind.apply(&*set, arg))) {
                    Ok(result) => {
                        shared.lock().result[op] = Some(result);
                        announce(Action::Respond);
                        shared.finish(op, Status::Finished);
                    }
                    Err(_) => shared.finish(op, Status::Panicked),
                }
                CURRENT_OP.set(None);
            });
        }

        let mut session = Session {
            shared: &shared,
            tagger: Tagger::default(),
            trace: Trace {
                initial: initial.to_vec(),
                ops: ops
                    .iter()
                    .map(|&(kind, arg)| OpTrace {
                        kind,
                        arg,
                        response: None,
                        restarts: 0,
                    })
                    .collect(),
                ..Trace::default()
            },
            steps: 0,
        };
        let outcome = wait_for_start(&shared, ops.len()).and_then(|()| match driver {
            Driver::Script(gates, policy) => {
                let diverged = session.run_gates(gates, policy)?;
                session.drain()?;
                Ok(diverged)
            }
            Driver::Random(seed) => {
                session.run_random(&mut ChaCha8Rng::seed_from_u64(seed))?;
                Ok(None)
            }
        });
        if outcome.is_err() {
            let mut st = shared.lock();
            st.released = true;
            shared.cv.notify_all();
        }
        let diverged = outcome?;
        let mut trace = session.trace;
        trace.nodes = session.tagger.names;
        Ok((trace, diverged))
    })
    .map(|(mut trace, diverged): (Trace, _)| {
        trace.final_keys = set.keys();
        (trace, diverged)
    })
}

fn wait_for_start(shared: &Shared, n: usize) -> Result<(), ReplayError> {
    let mut st = shared.lock();
    loop {
        if let Some(op) = st.status.iter().position(|s| matches!(s, Status::Panicked)) {
            return Err(ReplayError::WorkerPanicked(op));
        }
        if st
            .status
            .iter()
            .take(n)
            .all(|s| matches!(s, Status::Parked(_)))
        {
            return Ok(());
        }
        let (guard, timeout) = shared
            .cv
            .wait_timeout(st, GRANT_TIMEOUT)
            .unwrap_or_else(|e| e.into_inner());
        st = guard;
        if timeout.timed_out() {
            let op = st
                .status
                .iter()
                .position(|s| !matches!(s, Status::Parked(_)));
            return Err(ReplayError::Stalled(op.unwrap_or(0)));
        }
    }
}

fn check_script(script: &Script) -> Result<(), ReplayError> {
    if let Some(gate) = script.gates.iter().find(|g| g.op >= script.ops.len()) {
        return Err(ReplayError::BadScript(format!(
            "gate `{gate}` names an undeclared op"
        )));
    }
    Ok(())
}

/// Replays `script` against a fresh `kind` set. After the last gate, or after
/// a divergence, the remaining steps are granted deterministically so every op
/// completes; a divergence is reported with the completed trace.
pub fn run_scripted(kind: ImplKind, script: &Script, policy: Policy) -> Result<Trace, ReplayError> {
    check_script(script)?;
    let (trace, diverged) = execute(
        kind,
        &script.initial,
        &script.ops,
        Driver::Script(&script.gates, policy),
    )?;
    match diverged {
        None => Ok(trace),
        Some((step, actual)) => Err(ReplayError::Diverged {
            step,
            expected: script.gates[step].clone(),
            actual,
            trace: Box::new(trace),
        }),
    }
}

/// Interleaves the ops by seeded random choice at every step, favouring ops
/// that are not waiting or retrying.
pub fn run_random(
    kind: ImplKind,
    initial: &[i64],
    ops: &[(OpKind, i64)],
    seed: u64,
) -> Result<Trace, ReplayError> {
    execute(kind, initial, ops, Driver::Random(seed)).map(|(trace, _)| trace)
}

/// One op run alone from `initial`.
pub fn record_solo(
    kind: ImplKind,
    initial: &[i64],
    op: OpKind,
    arg: i64,
) -> Result<Trace, ReplayError> {
    run_scripted(
        kind,
        &Script::new(initial, &[(op, arg)]),
        Policy::AllowAndLog,
    )
}
