use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::probe::{Action, Probe, Step};
use crate::set_api::{ConcurrentSet, ImplKind, OpKind, SetOps};

pub const DEFAULT_WARMUP_MS: u64 = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub impl_kind: ImplKind,
    /// Cardinality after prefill; keys are drawn from `1..=2 * size`.
    pub size: usize,
    /// Fraction of operations that are updates, split evenly between insert
    /// and remove.
    pub update_ratio: f64,
    pub threads: usize,
    pub duration_ms: u64,
    pub seed: u64,
    /// Untimed run on a separate set before the measured one.
    pub warmup_ms: u64,
    /// Time one operation in `sample_every` (1 = all).
    pub sample_every: u32,
    /// Stop a worker after this many operations even if time remains; makes
    /// single-threaded runs reproducible.
    pub max_ops_per_thread: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

impl WorkloadConfig {
    pub fn new(
        impl_kind: ImplKind,
        size: usize,
        update_ratio: f64,
        threads: usize,
        duration_ms: u64,
        seed: u64,
    ) -> Self {
        WorkloadConfig {
            impl_kind,
            size,
            update_ratio,
            threads,
            duration_ms,
            seed,
            warmup_ms: DEFAULT_WARMUP_MS,
            sample_every: 1,
            max_ops_per_thread: None,
        }
    }

    pub fn key_range(&self) -> i64 {
        2 * self.size as i64
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |m: &str| Err(BenchError::ConfigInvalid(m.to_owned()));
        if self.threads == 0 {
            return invalid("threads must be at least 1");
        }
        if self.duration_ms == 0 {
            return invalid("duration must be at least 1 ms");
        }
        if self.size == 0 {
            return invalid("size must be at least 1 (the key range is 2 x size)");
        }
        if !(0.0..=1.0).contains(&self.update_ratio) {
            return invalid("update ratio must lie in [0, 1]");
        }
        if self.sample_every == 0 {
            return invalid("sample_every must be at least 1");
        }
        if !self.impl_kind.is_concurrent() {
            return invalid("the sequential set cannot be benchmarked with threads");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchResult {
    pub ops_total: u64,
    pub ops_per_ms: f64,
    pub contains: u64,
    pub inserts: u64,
    pub removes: u64,
    /// Updates that returned true.
    pub effective_updates: u64,
    /// Mean per sampled op, from invocation to the start of the committed
    /// update attempt (or to the return when nothing was committed).
    pub traversal_ns: f64,
    /// Mean per sampled op, from the last update start to the end of the
    /// committed update.
    pub update_ns: f64,
    pub restarts: u64,
    pub elapsed_ms: f64,
    /// Cardinality after the run.
    pub final_size: usize,
}

/// Inserts uniform keys from `1..=key_range` until `set` holds `size` keys.
pub fn prefill(set: &dyn SetOps, size: usize, key_range: i64, rng: &mut impl Rng) {
    assert!(
        size as i64 <= key_range,
        "cannot hold {size} keys from a range of {key_range}"
    );
    let mut held = set.len();
    while held < size {
        if set.insert(rng.random_range(1..=key_range)) {
            held += 1;
        }
    }
}

/// Three-sigma bound on the distance of a stationary run's cardinality from
/// `size`: each of the `2 * size` keys is present with probability 1/2.
pub fn stationarity_bound(size: usize) -> f64 {
    3.0 * (size as f64 / 2.0).sqrt()
}

struct OpClock {
    timing: Cell<bool>,
    begin: Cell<Option<Instant>>,
    end: Cell<Option<Instant>>,
    restarts: Cell<u64>,
}

thread_local! {
    static CLOCK: OpClock = const {
        OpClock {
            timing: Cell::new(false),
            begin: Cell::new(None),
            end: Cell::new(None),
            restarts: Cell::new(0),
        }
    };
}

/// Counts restarts and timestamps the update segment of the current op.
#[derive(Clone, Copy, Debug, Default)]
pub struct BenchProbe;

impl Probe for BenchProbe {
    #[inline]
    fn step(&self, step: Step) {
        if matches!(step.action, Action::Retry | Action::Restart) {
            CLOCK.with(|c| c.restarts.set(c.restarts.get() + 1));
        }
    }

    #[inline]
    fn update_begin(&self) {
        CLOCK.with(|c| {
            if c.timing.get() {
                c.begin.set(Some(Instant::now()));
            }
        });
    }

    #[inline]
    fn update_end(&self) {
        CLOCK.with(|c| {
            if c.timing.get() {
                c.end.set(Some(Instant::now()));
            }
        });
    }
}

#[derive(Default)]
struct WorkerTally {
    ops: u64,
    contains: u64,
    inserts: u64,
    removes: u64,
    effective: u64,
    sampled: u64,
    traversal_ns: u128,
    update_ns: u128,
    restarts: u64,
}

fn worker(
    set: &dyn ConcurrentSet,
    config: &WorkloadConfig,
    thread: usize,
    stop: &AtomicBool,
    barrier: &Barrier,
) -> WorkerTally {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(thread as u64 + 1);
    let key_range = config.key_range();
    let limit = config.max_ops_per_thread.unwrap_or(u64::MAX);
    let mut tally = WorkerTally::default();
    CLOCK.with(|c| c.restarts.set(0));
    barrier.wait();
    while tally.ops < limit && !stop.load(Ordering::Relaxed) {
        let kind = if rng.random_bool(config.update_ratio) {
            if rng.random_bool(0.5) {
                OpKind::Insert
            } else {
                OpKind::Remove
            }
        } else {
            OpKind::Contains
        };
        let key = rng.random_range(1..=key_range);
        let timed = tally.ops % u64::from(config.sample_every) == 0;
        if timed {
            CLOCK.with(|c| {
                c.timing.set(true);
                c.begin.set(None);
                c.end.set(None);
            });
            let t0 = Instant::now();
            let result = kind.apply(set, key);
            let t_end = Instant::now();
            let (begin, end) = CLOCK.with(|c| {
                c.timing.set(false);
                (c.begin.get(), c.end.get())
            });
            match (begin, end) {
                (Some(b), Some(e)) => {
                    tally.traversal_ns += b.saturating_duration_since(t0).as_nanos();
                    tally.update_ns += e.saturating_duration_since(b).as_nanos();
                }
                _ => tally.traversal_ns += t_end.saturating_duration_since(t0).as_nanos(),
            }
            tally.sampled += 1;
            tally.record(kind, result);
        } else {
            let result = kind.apply(set, key);
            tally.record(kind, result);
        }
    }
    tally.restarts = CLOCK.with(|c| c.restarts.get());
    tally
}

impl WorkerTally {
    #[inline]
    fn record(&mut self, kind: OpKind, result: bool) {
        self.ops += 1;
        match kind {
            OpKind::Contains => self.contains += 1,
            OpKind::Insert => self.inserts += 1,
            OpKind::Remove => self.removes += 1,
        }
        if result && kind != OpKind::Contains {
            self.effective += 1;
        }
    }
}

fn run_phase(config: &WorkloadConfig, duration_ms: u64) -> BenchResult {
    let set = config
        .impl_kind
        .build_shared_with(BenchProbe)
        .expect("validated as concurrent");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    prefill(&*set, config.size, config.key_range(), &mut rng);

    let stop = Arc::new(AtomicBool::new(false));
    let barrier = Arc::new(Barrier::new(config.threads + 1));
    let (tallies, elapsed) = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.threads)
            .map(|thread| {
                let (set, stop, barrier) = (&set, &stop, &barrier);
                scope.spawn(move || worker(&**set, config, thread, stop, barrier))
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        let deadline = start + Duration::from_millis(duration_ms);
        while !handles.iter().all(|h| h.is_finished()) {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            std::thread::sleep((deadline - now).min(Duration::from_millis(5)));
        }
        stop.store(true, Ordering::Relaxed);
        let tallies: Vec<WorkerTally> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect();
        (tallies, start.elapsed())
    });

    let mut result = BenchResult::default();
    let mut sampled = 0u64;
    let (mut traversal, mut update) = (0u128, 0u128);
    for t in &tallies {
        result.ops_total += t.ops;
        result.contains += t.contains;
        result.inserts += t.inserts;
        result.removes += t.removes;
        result.effective_updates += t.effective;
        result.restarts += t.restarts;
        sampled += t.sampled;
        traversal += t.traversal_ns;
        update += t.update_ns;
    }
    result.elapsed_ms = elapsed.as_secs_f64() * 1e3;
    result.ops_per_ms = result.ops_total as f64 / result.elapsed_ms.max(f64::MIN_POSITIVE);
    if sampled > 0 {
        result.traversal_ns = traversal as f64 / sampled as f64;
        result.update_ns = update as f64 / sampled as f64;
    }
    result.final_size = set.len();
    result
}

/// Prefills a fresh set, runs `threads` workers for `duration_ms` (or until
/// each hits `max_ops_per_thread`) and aggregates their counters.
pub fn run_workload(config: &WorkloadConfig) -> Result<BenchResult, BenchError> {
    config.validate()?;
    if config.warmup_ms > 0 {
        run_phase(config, config.warmup_ms);
    }
    Ok(run_phase(config, config.duration_ms))
}
