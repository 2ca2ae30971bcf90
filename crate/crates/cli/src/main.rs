use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vlist::bench::{self, GridSpec, ResultRow};
use vlist::lincheck::{self, StressConfig};
use vlist::sched_replay::{self, builtin, Policy, ReplayError, Script};
use vlist::ImplKind;

#[derive(Parser)]
#[command(
    name = "vlist",
    version,
    about = "Versioned-lock list sets: benchmarks, linearizability stress, schedule replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Timed mixed workload; CSV rows per round plus an `avg` row per cell.
    Bench(BenchArgs),
    /// Randomized rounds of small concurrent programs, each history checked
    /// for linearizability.
    Lincheck(LincheckArgs),
    /// Replay a scripted interleaving step by step.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Implementations, comma separated.
    #[arg(long = "impl", value_delimiter = ',', default_value = "versioned")]
    impls: Vec<ImplKind>,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    #[arg(long, default_value_t = 0.1)]
    update_ratio: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = bench::DEFAULT_DURATION_MS)]
    duration_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep sizes, update ratios and thread counts (defaults: 100/1000/10000,
    /// 0/0.1/1.0, 1..72 threads) instead of one cell.
    #[arg(long)]
    grid: bool,
    /// Override the grid's sizes (comma separated).
    #[arg(long, value_delimiter = ',', requires = "grid")]
    sizes: Option<Vec<usize>>,
    /// Override the grid's update ratios (comma separated).
    #[arg(long, value_delimiter = ',', requires = "grid")]
    ratios: Option<Vec<f64>>,
    /// Override the grid's thread counts (comma separated).
    #[arg(long, value_delimiter = ',', requires = "grid")]
    thread_counts: Option<Vec<usize>>,
    /// Rounds per cell (default 1, or 10 with --grid).
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP_MS)]
    warmup_ms: u64,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Time one operation in N.
    #[arg(long, default_value_t = 1)]
    sample_every: u32,
}

#[derive(Args)]
struct LincheckArgs {
    #[arg(long = "impl", default_value = "versioned")]
    impl_kind: ImplKind,
    #[arg(long, default_value_t = 3)]
    threads: usize,
    #[arg(long, default_value_t = 4)]
    ops_per_thread: usize,
    #[arg(long, default_value_t = 4)]
    key_range: i64,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long = "impl", default_value = "versioned")]
    impl_kind: ImplKind,
    /// fig2, fig3, fig4 or file:<path>
    #[arg(long)]
    schedule: String,
    /// Diverge on retries, restarts, lock waits and early responses.
    #[arg(long, conflicts_with = "exact")]
    strict: bool,
    /// Diverge on any step the script does not list.
    #[arg(long)]
    exact: bool,
    /// Print the full step trace.
    #[arg(long)]
    trace: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(args) => bench_cmd(args),
        Command::Lincheck(args) => lincheck_cmd(args),
        Command::Replay(args) => replay_cmd(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let spec = if args.grid {
        let full = GridSpec::full(args.impls.clone());
        GridSpec {
            sizes: args.sizes.unwrap_or(full.sizes.clone()),
            ratios: args.ratios.unwrap_or(full.ratios.clone()),
            threads: args.thread_counts.unwrap_or(full.threads.clone()),
            rounds: args.rounds.unwrap_or(full.rounds),
            ..full
        }
    } else {
        GridSpec {
            impls: args.impls.clone(),
            sizes: vec![args.size],
            ratios: vec![args.update_ratio],
            threads: vec![args.threads],
            rounds: args.rounds.unwrap_or(1),
            ..GridSpec::full(args.impls.clone())
        }
    };
    let spec = GridSpec {
        duration_ms: args.duration_ms,
        seed: args.seed,
        warmup_ms: args.warmup_ms,
        sample_every: args.sample_every,
        ..spec
    };
    for cell in spec.cells() {
        cell.validate()?;
    }
    let rows = bench::run_grid_with(&spec, |row: &ResultRow| {
        if row.is_average() {
            eprintln!(
                "{} size={} ratio={} threads={}: {:.1} ops/ms",
                row.impl_name, row.size, row.update_ratio, row.threads, row.ops_per_ms
            );
        }
    })?;
    match &args.csv {
        Some(path) => bench::emit_csv(&rows, path)?,
        None => bench::write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn lincheck_cmd(args: LincheckArgs) -> Result<ExitCode> {
    if args.threads == 0 || args.key_range < 1 {
        bail!("need at least one thread and a key range of at least 1");
    }
    let ops = args.threads * args.ops_per_thread;
    if ops > lincheck::MAX_OPS {
        bail!(
            "{ops} operations per round; at most {} are supported",
            lincheck::MAX_OPS
        );
    }
    let config = StressConfig {
        threads: args.threads,
        ops_per_thread: args.ops_per_thread,
        key_range: args.key_range,
        rounds: args.rounds,
        seed: args.seed,
    };
    match lincheck::stress(args.impl_kind, &config)? {
        None => {
            println!(
                "PASS {}: {} rounds linearizable",
                args.impl_kind, args.rounds
            );
            Ok(ExitCode::SUCCESS)
        }
        Some(failure) => {
            match &failure.error {
                Some(e) => println!("FAIL {}: round {}: {e}", args.impl_kind, failure.round),
                None => println!(
                    "FAIL {}: round {} is not linearizable",
                    args.impl_kind, failure.round
                ),
            }
            println!("round seed {}", failure.round_seed);
            print!("{}", failure.history);
            Ok(ExitCode::from(1))
        }
    }
}

fn load_schedule(name: &str) -> Result<Script> {
    if let Some(path) = name.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        return text.parse().with_context(|| format!("parsing {path}"));
    }
    builtin::by_name(name)
        .with_context(|| format!("unknown schedule `{name}` (fig2, fig3, fig4 or file:<path>)"))
}

fn replay_cmd(args: ReplayArgs) -> Result<ExitCode> {
    let script = load_schedule(&args.schedule)?;
    let policy = if args.exact {
        Policy::Exact
    } else if args.strict {
        Policy::Strict
    } else {
        Policy::AllowAndLog
    };
    let (trace, code) = match sched_replay::run_scripted(args.impl_kind, &script, policy) {
        Ok(trace) => {
            println!("ACCEPTED by {} ({policy:?})", args.impl_kind);
            (trace, ExitCode::SUCCESS)
        }
        Err(ReplayError::Diverged {
            step,
            expected,
            actual,
            trace,
        }) => {
            let actual = actual.map_or("op already finished".to_owned(), |l| l.to_string());
            println!(
                "DIVERGED on {} at gate {}: expected `{expected}`, got `{actual}`",
                args.impl_kind,
                step + 1
            );
            (*trace, ExitCode::from(2))
        }
        Err(e) => return Err(e.into()),
    };
    if args.trace {
        println!("{trace}");
    } else {
        for (i, op) in trace.ops.iter().enumerate() {
            let response = op.response.map_or("pending".to_owned(), |r| r.to_string());
            println!(
                "op{} {}({}) -> {response}, restarts {}",
                i + 1,
                op.kind,
                op.arg,
                op.restarts
            );
        }
        println!("final {:?}", trace.final_keys);
    }
    match sched_replay::check_local_serializability(&trace) {
        Ok(()) => println!("locally serializable"),
        Err(v) => println!("not locally serializable: {v}"),
    }
    Ok(code)
}
