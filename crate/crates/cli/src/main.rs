//! `parl`: generate task corpora, evaluate and train orchestrator policies,
//! verify traces and aggregate reports.

use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use parl_core::harness::experiment::{load_snapshots, run_experiment_with, PolicyEval, RunOptions, RunSummary};
use parl_core::harness::trace::{read_jsonl, replay_trace};
use parl_core::harness::{ExperimentConfig, Mode};
use parl_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "parl", version, about = "Parallel-agent orchestrator training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of episodes in flight.
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the training task pool as JSONL, one task per line.
    Gen(Common),
    /// Evaluate the configured policies without training.
    Run(Common),
    /// Train, checkpoint, then evaluate.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue each seed from its latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Re-execute stored traces and report divergences.
    Replay {
        /// Trace file (JSONL).
        #[arg(long)]
        trace: PathBuf,
        /// Directory searched for checkpoints; defaults to the trace's directory.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Aggregate a finished run into report.csv.
    Report {
        /// Run output directory containing summary.json.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Divergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(c: &Common, mode: Mode) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.mode = mode;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(k) = c.concurrency {
        cfg.concurrency_limit = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c, Mode::Eval)?;
    let out = cfg.output_dir.clone().ok_or_else(|| Failure::Config("gen needs --out".into()))?;
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
    for &seed in &cfg.seeds {
        let tasks = parl_core::harness::experiment::training_pool(&cfg, seed)?;
        let path = out.join(format!("tasks-seed-{seed}.jsonl"));
        let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Failure::Runtime(e.to_string()))?);
        for t in &tasks {
            let line = serde_json::to_string(t.as_ref()).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        println!("wrote {} tasks to {}", tasks.len(), path.display());
    }
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    for seed in &summary.seeds {
        println!("seed {} ({} iterations, snapshot {})", seed.seed, seed.iterations_run, seed.final_snapshot);
        for e in &seed.evals {
            println!(
                "  {:<14} r_perf {:.3}  critical {:.2}  tokens {:.2}  width {:.2}  zero-spawn {:.3}",
                e.policy, e.mean_r_perf, e.mean_critical_steps, e.mean_tokens, e.mean_parallelism, e.zero_spawn_fraction
            );
        }
        for r in &seed.speedup {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
            println!(
                "  r_perf >= {:.2}: serial {} swarm {} speedup {}",
                r.threshold,
                fmt(r.serial_critical_steps),
                fmt(r.swarm_critical_steps),
                fmt(r.speedup)
            );
        }
    }
}

fn execute(c: &Common, mode: Mode, resume: bool) -> Result<(), Failure> {
    let cfg = load_config(c, mode)?;
    let summary = run_experiment_with(&cfg, RunOptions { resume })?;
    print_summary(&summary);
    Ok(())
}

fn replay(trace: &Path, snapshots: Option<&Path>) -> Result<(), Failure> {
    let records = read_jsonl(trace)?;
    let root = match snapshots {
        Some(p) => p.to_path_buf(),
        None => trace.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let store = if root.is_dir() { load_snapshots(&root)? } else { Default::default() };
    let mut diverged = 0;
    for (i, r) in records.iter().enumerate() {
        let verdict = replay_trace(r, &store)?;
        if !verdict.is_clean() {
            diverged += 1;
            println!("record {i} ({}): {}", r.trace.task_id, verdict.divergences.join("; "));
        }
    }
    println!("{} records replayed, {diverged} diverged", records.len());
    if diverged > 0 {
        return Err(Failure::Divergence(format!("{diverged} records diverged")));
    }
    Ok(())
}

/// Mean of every per-policy metric across seeds.
fn report(out: &Path) -> Result<(), Failure> {
    let path = out.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let summary: RunSummary = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let mut by_policy: BTreeMap<&str, Vec<&PolicyEval>> = BTreeMap::new();
    for e in summary.seeds.iter().flat_map(|s| &s.evals) {
        by_policy.entry(&e.policy).or_default().push(e);
    }
    let report_path = out.join("report.csv");
    let mut w = fs::File::create(&report_path).map_err(|e| Failure::Runtime(e.to_string()))?;
    let io = |e: std::io::Error| Failure::Runtime(e.to_string());
    writeln!(
        w,
        "policy,seeds,mean_r_perf,mean_critical_steps,mean_total_steps,mean_tokens,mean_parallelism,zero_spawn_fraction,mean_finish_rate,assigned_per_completed,mean_orchestrator_context"
    )
    .map_err(io)?;
    for (policy, evals) in &by_policy {
        let m = |f: fn(&PolicyEval) -> f64| evals.iter().map(|e| f(e)).sum::<f64>() / evals.len() as f64;
        let line = format!(
            "{policy},{},{},{},{},{},{},{},{},{},{}",
            evals.len(),
            m(|e| e.mean_r_perf),
            m(|e| e.mean_critical_steps),
            m(|e| e.mean_total_steps),
            m(|e| e.mean_tokens),
            m(|e| e.mean_parallelism),
            m(|e| e.zero_spawn_fraction),
            m(|e| e.mean_finish_rate),
            m(PolicyEval::assigned_per_completed),
            m(|e| e.mean_orchestrator_context),
        );
        writeln!(w, "{line}").map_err(io)?;
        println!("{line}");
    }
    println!("wrote {}", report_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Gen(c) => gen(c),
        Command::Run(c) => execute(c, Mode::Eval, false),
        Command::Train { common, resume } => execute(common, Mode::Train, *resume),
        Command::Replay { trace, snapshots } => replay(trace, snapshots.as_deref()),
        Command::Report { out } => report(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Divergence(m)) => {
            eprintln!("replay divergence: {m}");
            ExitCode::from(EXIT_DIVERGENCE)
        }
    }
}
