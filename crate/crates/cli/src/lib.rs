//! Command-line driver: one experiment per invocation, records appended as
//! JSON lines, replay by re-execution.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use riskmin::harness::{read_records, replay, run_and_record, ExperimentConfig, ExperimentKind, ExperimentRecord, RECORDS_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "riskmin", version, about = "Run and replay conditional-risk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to the config's `output_dir`, then `runs`.
    #[arg(long, env = "RISKMIN_OUT")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RecordArgs {
    /// A records file, or a directory holding `records.jsonl`.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, env = "RISKMIN_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    VerifyTheorem1(RunArgs),
    GapCheck(RunArgs),
    NoisyLabels(RunArgs),
    Noise2noise(RunArgs),
    Score(RunArgs),
    Tweedie(RunArgs),
    Uncertainty(RunArgs),
    /// Summarize records as a plain-text table.
    Report(RecordArgs),
    /// Re-execute every record and compare metrics bit for bit.
    Replay(RecordArgs),
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }
    let (kind, args) = match cli.command {
        Command::VerifyTheorem1(a) => (ExperimentKind::Theorem1, a),
        Command::GapCheck(a) => (ExperimentKind::Theorem2Gap, a),
        Command::NoisyLabels(a) => (ExperimentKind::NoisyLabels, a),
        Command::Noise2noise(a) => (ExperimentKind::Noise2noise, a),
        Command::Score(a) => (ExperimentKind::Score, a),
        Command::Tweedie(a) => (ExperimentKind::Tweedie, a),
        Command::Uncertainty(a) => (ExperimentKind::Uncertainty, a),
        Command::Report(a) => return report(&a),
        Command::Replay(a) => return replay_all(&a),
    };
    run_experiment(kind, &args)
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> i32 {
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "error: {} holds a {} config, not {}",
            args.config.display(),
            cfg.kind.name(),
            kind.name()
        );
        return EXIT_CONFIG;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    match run_and_record(&cfg, &out) {
        Ok((record, _)) => {
            println!("{}", render(&[record]));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn records_path(args: &RecordArgs) -> PathBuf {
    let base = args
        .record
        .clone()
        .or_else(|| args.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    if base.is_dir() {
        base.join(RECORDS_FILE)
    } else {
        base
    }
}

fn load(path: &Path) -> Result<Vec<ExperimentRecord>, i32> {
    read_records(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn report(args: &RecordArgs) -> i32 {
    match load(&records_path(args)) {
        Ok(records) => {
            print!("{}", render(&records));
            EXIT_OK
        }
        Err(code) => code,
    }
}

/// One block per record: a header line, then aligned `name value` rows.
pub fn render(records: &[ExperimentRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let secs = r.finished_ms.saturating_sub(r.started_ms) as f64 / 1000.0;
        let _ = writeln!(
            out,
            "{}  seed={}  config={}  {secs:.1}s",
            r.config.kind.name(),
            r.config.seed,
            &r.config_hash[..12.min(r.config_hash.len())]
        );
        let width = r.metrics.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in &r.metrics {
            let _ = writeln!(out, "  {k:<width$}  {v:.6e}");
        }
    }
    out
}

fn replay_all(args: &RecordArgs) -> i32 {
    let records = match load(&records_path(args)) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let mut mismatched = false;
    for (i, r) in records.iter().enumerate() {
        match replay(r) {
            Ok(diffs) if diffs.is_empty() => {
                println!("record {}: {} reproduced ({} metrics)", i + 1, r.config.kind.name(), r.metrics.len());
            }
            Ok(diffs) => {
                mismatched = true;
                eprintln!("record {}: {} MISMATCH", i + 1, r.config.kind.name());
                for d in diffs {
                    eprintln!("  {d}");
                }
            }
            Err(e) => {
                eprintln!("record {}: error: {e}", i + 1);
                return EXIT_RUNTIME;
            }
        }
    }
    if mismatched {
        EXIT_MISMATCH
    } else {
        EXIT_OK
    }
}
