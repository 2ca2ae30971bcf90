//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlist::bench::{run_workload, stationarity_bound, BenchResult, WorkloadConfig};
use vlist::lincheck::{stress, StressConfig};
use vlist::probe::{CountingProbe, StepCounts};
use vlist::sched_replay::{
    builtin, check_local_serializability, run_random, run_scripted, Policy, ReplayError, Trace,
};
use vlist::{Action, ImplKind, OpKind, SequentialSet, SetOps, VersionedTryLock};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit_s: f64) -> Result<f64, String> {
    let took = start.elapsed().as_secs_f64();
    ensure!(took < limit_s, "took {took:.2} s, limit {limit_s} s");
    Ok(took)
}

fn versioned_lock() -> Outcome {
    let start = Instant::now();
    let lock = VersionedTryLock::new();
    ensure!(
        lock.raw() == 0 && !lock.is_locked(),
        "fresh lock is not unlocked at version 0"
    );
    for cycle in 0..1000u64 {
        let ver = lock.get_version();
        ensure!(
            ver == 2 * cycle && ver.is_multiple_of(2),
            "version {ver} after {cycle} cycles"
        );
        ensure!(
            lock.try_lock_at_version(ver),
            "uncontended lock at {ver} failed"
        );
        ensure!(
            lock.raw() == ver + 1 && lock.is_locked(),
            "locked word is not ver + 1"
        );
        ensure!(lock.get_version() == ver, "version changed while locked");
        ensure!(!lock.try_lock_at_version(ver), "held lock was taken again");
        lock.unlock_and_increment_version();
        ensure!(lock.raw() == ver + 2, "unlock did not advance by two");
        ensure!(
            !lock.try_lock_at_version(ver),
            "stale version {ver} accepted"
        );
    }

    const THREADS: u64 = 8;
    const CYCLES: u64 = 100_000;
    let lock = VersionedTryLock::new();
    let guarded = AtomicU64::new(0);
    std::thread::scope(|s| {
        for _ in 0..THREADS {
            s.spawn(|| {
                for _ in 0..CYCLES {
                    lock.lock_at_current_version();
                    // Non-atomic read-modify-write; only exclusion keeps it exact.
                    let v = guarded.load(Ordering::Relaxed);
                    guarded.store(v + 1, Ordering::Relaxed);
                    lock.unlock_and_increment_version();
                }
            });
        }
    });
    let want = 2 * CYCLES * THREADS;
    ensure!(
        lock.get_version() == want,
        "final version {} != {want}",
        lock.get_version()
    );
    ensure!(
        guarded.load(Ordering::Relaxed) == CYCLES * THREADS,
        "lost increments under the lock"
    );
    let took = within(start, 5.0)?;
    Ok(format!(
        "parity, +2 per cycle, stale rejection; 8x10^5 cycles end at version {want} ({took:.2} s)"
    ))
}

fn sequential_differential() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let oracle = SequentialSet::new();
    let sets: Vec<_> = ImplKind::CONCURRENT
        .iter()
        .map(|k| (k, k.build()))
        .collect();
    const KINDS: [OpKind; 3] = [OpKind::Insert, OpKind::Remove, OpKind::Contains];
    for i in 0..100_000 {
        let kind = KINDS[rng.random_range(0..3)];
        let key = rng.random_range(1..=64);
        let want = kind.apply(&oracle, key);
        for (name, set) in &sets {
            let got = kind.apply(&**set, key);
            ensure!(
                got == want,
                "{name}: op {i} {kind}({key}) returned {got}, oracle {want}"
            );
        }
    }
    for (name, set) in &sets {
        ensure!(set.keys() == oracle.keys(), "{name}: final contents differ");
    }
    let took = within(start, 10.0)?;
    Ok(format!(
        "10^5 ops over 1..64, all three match the sequential list ({took:.2} s)"
    ))
}

fn linearizability_stress() -> Outcome {
    let start = Instant::now();
    let config = StressConfig {
        threads: 3,
        ops_per_thread: 4,
        key_range: 4,
        rounds: 1000,
        seed: 3,
    };
    for kind in ImplKind::CONCURRENT {
        match stress(kind, &config).map_err(|e| e.to_string())? {
            None => {}
            Some(f) => {
                return Err(format!(
                    "{kind}: round {} (seed {}) {}\n{}",
                    f.round,
                    f.round_seed,
                    f.error
                        .map_or("not linearizable".to_owned(), |e| e.to_string()),
                    f.history
                ))
            }
        }
    }
    let took = within(start, 60.0)?;
    Ok(format!(
        "1000 rounds x 3 threads x 4 ops per impl, all linearizable ({took:.2} s)"
    ))
}

/// The traces the schedule verdicts produce, for reuse by the serializability check.
struct Verdicts {
    traces: Vec<(&'static str, Trace)>,
}

fn strict(kind: ImplKind, name: &str) -> Result<Trace, ReplayError> {
    run_scripted(
        kind,
        &builtin::by_name(name).expect("built-in schedule"),
        Policy::Strict,
    )
}

fn expect_divergence(kind: ImplKind, name: &str, gate: &str, got: &str) -> Result<Trace, String> {
    let script = builtin::by_name(name).expect("built-in schedule");
    match run_scripted(kind, &script, Policy::Strict) {
        Err(ReplayError::Diverged {
            step,
            actual,
            trace,
            ..
        }) => {
            let actual = actual.map(|l| l.to_string()).unwrap_or_default();
            ensure!(
                script.gates[step].to_string() == gate && actual == got,
                "{kind} {name} diverged at `{}` with `{actual}`, wanted `{gate}` / `{got}`",
                script.gates[step]
            );
            Ok(*trace)
        }
        Ok(_) => Err(format!("{kind} accepted {name}")),
        Err(e) => Err(format!("{kind} {name}: {e}")),
    }
}

fn schedule_verdicts(out: &mut Option<Verdicts>) -> Outcome {
    let start = Instant::now();
    let mut traces = Vec::new();

    for (name, responses, keys) in [
        ("fig3", vec![Some(true), Some(false)], vec![1, 2]),
        (
            "fig4",
            vec![Some(true), Some(true), Some(false), Some(false)],
            vec![1, 3, 4],
        ),
    ] {
        let trace =
            strict(ImplKind::Versioned, name).map_err(|e| format!("versioned {name}: {e}"))?;
        ensure!(
            trace.total_restarts() == 0,
            "versioned {name}: {} restarts",
            trace.total_restarts()
        );
        ensure!(
            trace.count(Action::LockWait) == 0,
            "versioned {name}: lock waits"
        );
        ensure!(
            trace.responses() == responses,
            "versioned {name}: responses {:?}",
            trace.responses()
        );
        ensure!(
            trace.final_keys == keys,
            "versioned {name}: final {:?}",
            trace.final_keys
        );
        traces.push((
            if name == "fig3" {
                "versioned fig3"
            } else {
                "versioned fig4"
            },
            trace,
        ));
    }

    let fig2 = match strict(ImplKind::Versioned, "fig2") {
        Ok(t) => t,
        Err(ReplayError::Diverged { trace, .. }) => *trace,
        Err(e) => return Err(format!("versioned fig2: {e}")),
    };
    ensure!(
        fig2.trylock_failures() == 1,
        "fig2: {} TRYLOCK failures",
        fig2.trylock_failures()
    );
    ensure!(
        fig2.final_keys == vec![1, 2],
        "fig2: final {:?}",
        fig2.final_keys
    );
    traces.push(("versioned fig2", fig2));

    let lazy = expect_divergence(ImplKind::Lazy, "fig3", "op2 RESPOND", "op2 LOCK_WAIT X1")?;
    traces.push(("lazy fig3", lazy));
    let hm = expect_divergence(
        ImplKind::HarrisMichael,
        "fig4",
        "op3 READ_VAL X4",
        "op3 RESTART h",
    )?;
    traces.push(("harris-michael fig4", hm));

    let took = within(start, 5.0)?;
    *out = Some(Verdicts { traces });
    Ok(format!(
        "versioned accepts fig3/fig4 with 0 restarts; fig2: 1 TRYLOCK failure, final {{1,2}}; \
         lazy diverges on fig3 at op2 RESPOND, harris-michael on fig4 at op3 READ_VAL X4 ({took:.2} s)"
    ))
}

fn local_serializability(verdicts: &Option<Verdicts>) -> Outcome {
    let start = Instant::now();
    let Some(verdicts) = verdicts else {
        return Err("schedule traces unavailable (criterion 4 failed)".into());
    };
    let mut notes = Vec::new();
    for (name, trace) in &verdicts.traces {
        match (
            check_local_serializability(trace),
            name.starts_with("harris-michael"),
        ) {
            (Ok(()), false) => {}
            (Err(v), false) => return Err(format!("{name}: {v}")),
            // The lock-free list reads a node's link before its key and
            // unlinks marked nodes during traversal; its trace is reported,
            // not counted.
            (Err(v), true) => notes.push(format!("{name} not serializable as expected ({v})")),
            (Ok(()), true) => notes.push(format!("{name} serializable")),
        }
    }

    const KINDS: [OpKind; 3] = [OpKind::Insert, OpKind::Remove, OpKind::Contains];
    let mut checked = 0;
    for kind in [ImplKind::Versioned, ImplKind::Lazy] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let initial: Vec<i64> = (1..=4).filter(|_| rng.random_bool(0.5)).collect();
            let ops: Vec<(OpKind, i64)> = (0..rng.random_range(2..=4))
                .map(|_| (KINDS[rng.random_range(0..3)], rng.random_range(1..=4)))
                .collect();
            let trace = run_random(kind, &initial, &ops, seed).map_err(|e| e.to_string())?;
            check_local_serializability(&trace)
                .map_err(|v| format!("{kind} random trace seed {seed}: {v}\n{trace}"))?;
            checked += 1;
        }
    }
    let took = within(start, 30.0)?;
    Ok(format!(
        "{} schedule traces and {checked} random traces serializable; {} ({took:.2} s)",
        verdicts.traces.len() - notes.len(),
        notes.join("; ")
    ))
}

fn wait_free_contains() -> Outcome {
    const THREADS: usize = 4;
    const OPS_PER_THREAD: usize = 25_000;
    let mut summary = Vec::new();
    for kind in ImplKind::CONCURRENT {
        let set = kind
            .build_shared_with(CountingProbe)
            .map_err(|e| e.to_string())?;
        for k in (1..=64).step_by(2) {
            set.insert(k);
        }
        let totals: Vec<(u64, u64, u64)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..THREADS)
                .map(|t| {
                    let set = &set;
                    s.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(6 + t as u64);
                        let (mut contains, mut inside, mut outside) = (0, 0, 0);
                        for _ in 0..OPS_PER_THREAD {
                            let key = rng.random_range(1..=64);
                            let before = StepCounts::current();
                            let op = [OpKind::Insert, OpKind::Remove, OpKind::Contains]
                                [rng.random_range(0..3)];
                            op.apply(&**set, key);
                            let sync = StepCounts::current().since(&before).synchronizing();
                            if op == OpKind::Contains {
                                contains += 1;
                                inside += sync;
                            } else {
                                outside += sync;
                            }
                        }
                        (contains, inside, outside)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let contains: u64 = totals.iter().map(|t| t.0).sum();
        let inside: u64 = totals.iter().map(|t| t.1).sum();
        let outside: u64 = totals.iter().map(|t| t.2).sum();
        ensure!(
            inside == 0,
            "{kind}: {inside} lock/CAS steps inside {contains} contains calls"
        );
        ensure!(
            outside > 0,
            "{kind}: updates recorded no synchronizing steps; probe inactive?"
        );
        summary.push(format!("{kind} {contains}"));
    }
    Ok(format!(
        "10^5 mixed ops on 4 threads per impl; zero lock/CAS steps in contains ({})",
        summary.join(", ")
    ))
}

fn mean_throughput(
    kind: ImplKind,
    threads: usize,
    ratio: f64,
    rounds: &mut Vec<BenchResult>,
) -> Result<f64, String> {
    let mut sum = 0.0;
    for round in 0..3 {
        let config = WorkloadConfig {
            warmup_ms: 200,
            ..WorkloadConfig::new(kind, 100, ratio, threads, 1000, 70 + round)
        };
        let r = run_workload(&config).map_err(|e| e.to_string())?;
        sum += r.ops_per_ms;
        rounds.push(r);
    }
    Ok(sum / 3.0)
}

fn performance_smoke() -> Outcome {
    let start = Instant::now();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut scratch = Vec::new();
    let v1 = mean_throughput(ImplKind::Versioned, 1, 0.0, &mut scratch)?;
    let v4 = mean_throughput(ImplKind::Versioned, 4, 0.0, &mut scratch)?;
    let mut churn = Vec::new();
    let v4u = mean_throughput(ImplKind::Versioned, 4, 1.0, &mut churn)?;
    let l4u = mean_throughput(ImplKind::Lazy, 4, 1.0, &mut churn)?;
    let scaling = v4 / v1;
    let relative = v4u / l4u;

    let bound = stationarity_bound(100);
    let worst = churn
        .iter()
        .map(|r| (r.final_size as f64 - 100.0).abs())
        .fold(0.0, f64::max);
    ensure!(
        worst <= bound,
        "(c) final size strayed {worst} from 100, bound {bound:.1}"
    );
    let measured = format!(
        "(a) 4-thread/1-thread read-only {scaling:.2}x [{v4:.0} vs {v1:.0} ops/ms], \
         (b) versioned/lazy at ratio 1.0 {relative:.2}x [{v4u:.0} vs {l4u:.0} ops/ms]"
    );
    let ab = if cores >= 4 {
        ensure!(
            scaling >= 1.3,
            "(a) scaling {scaling:.2}x < 1.3x; {measured}"
        );
        ensure!(
            relative >= 0.9,
            "(b) ratio {relative:.2}x < 0.9x; {measured}"
        );
        format!("{measured} meet 1.3x and 0.9x")
    } else {
        format!("(a)/(b) not assessed, they need >= 4 cores and this host has {cores}; measured {measured}")
    };
    let took = within(start, 120.0)?;
    Ok(format!(
        "(c) final sizes within {worst:.0} of 100 (3 sigma = {bound:.1}); {ab} ({took:.1} s)"
    ))
}

fn resident_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn reclamation_bound() -> Outcome {
    const LIMIT_KIB: u64 = 64 * 1024;
    let Some(baseline) = resident_kib() else {
        return Err("cannot read resident memory from /proc/self/status".into());
    };
    let done = Arc::new(AtomicBool::new(false));
    let peak = Arc::new(AtomicU64::new(baseline));
    let sampler = {
        let (done, peak) = (done.clone(), peak.clone());
        std::thread::spawn(move || {
            while !done.load(Ordering::Relaxed) {
                if let Some(rss) = resident_kib() {
                    peak.fetch_max(rss, Ordering::Relaxed);
                }
                std::thread::sleep(Duration::from_millis(100));
            }
        })
    };
    let config = WorkloadConfig {
        warmup_ms: 0,
        ..WorkloadConfig::new(ImplKind::Versioned, 100, 1.0, 4, 30_000, 8)
    };
    let result = run_workload(&config);
    done.store(true, Ordering::Relaxed);
    sampler.join().map_err(|_| "sampler panicked")?;
    let result = result.map_err(|e| e.to_string())?;
    let growth = peak.load(Ordering::Relaxed).saturating_sub(baseline);
    // Every successful insert allocates a node; without reclamation each
    // successful remove would strand one.
    let stranded = result.effective_updates / 2;
    ensure!(
        growth < LIMIT_KIB,
        "resident memory grew {growth} KiB (limit {LIMIT_KIB} KiB) over {} ops",
        result.ops_total
    );
    Ok(format!(
        "30 s churn, {} ops, ~{stranded} nodes unlinked; resident growth {growth} KiB < {LIMIT_KIB} KiB",
        result.ops_total
    ))
}

fn run(number: u32, name: &str, check: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {number}. {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {number}. {name}: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let passed = Cell::new(0);
    let tally = |ok: bool| passed.set(passed.get() + u32::from(ok));
    let mut verdicts = None;
    tally(run(1, "versioned lock", versioned_lock));
    tally(run(2, "sequential differential", sequential_differential));
    tally(run(3, "linearizability stress", linearizability_stress));
    tally(run(4, "schedule verdicts", || {
        schedule_verdicts(&mut verdicts)
    }));
    tally(run(5, "local serializability", || {
        local_serializability(&verdicts)
    }));
    tally(run(6, "wait-free contains", wait_free_contains));
    tally(run(7, "performance smoke", performance_smoke));
    tally(run(8, "reclamation bound", reclamation_bound));
    println!("{}/8 criteria passed", passed.get());
    if passed.get() == 8 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
