use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use valleywalk::experiments::{self, ExperimentConfig, ExperimentKind, RunRecord};

/// Random walks in random environments: simulation, valley statistics and
/// stable-limit checks.
#[derive(Parser)]
#[command(name = "valleywalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hitting times τ(n) by direct or accelerated simulation.
    Simulate(RunArgs),
    /// Deep-valley counts K_n and the NO(n) frequency.
    Valleys(RunArgs),
    /// Tail constants and the special-function self-check.
    Constants(RunArgs),
    /// Normalized τ(n) against the predicted stable law.
    LimitCheck(RunArgs),
    /// Tail of τ(e_1) under the conditioned environment.
    OccupationTail(RunArgs),
    /// Quenched formulas against the linear-system oracles.
    QuenchedCheck(RunArgs),
    /// Failure rates of the good-environment events.
    GoodEnv(RunArgs),
    /// Fluctuations of the time spent in small excursions.
    Interarrival(RunArgs),
    /// Tail of the excursion height H.
    IglehartTail(RunArgs),
    /// Tail of Z = M1 M2 e^H.
    ZTail(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`. Nothing is written when
    /// neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: config value, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Simulate(a) => (ExperimentKind::Simulate, a),
            Command::Valleys(a) => (ExperimentKind::ValleyStats, a),
            Command::Constants(a) => (ExperimentKind::Constants, a),
            Command::LimitCheck(a) => (ExperimentKind::LimitCheck, a),
            Command::OccupationTail(a) => (ExperimentKind::OccupationTail, a),
            Command::QuenchedCheck(a) => (ExperimentKind::QuenchedGate, a),
            Command::GoodEnv(a) => (ExperimentKind::GoodEnv, a),
            Command::Interarrival(a) => (ExperimentKind::InterarrivalDiag, a),
            Command::IglehartTail(a) => (ExperimentKind::IglehartTail, a),
            Command::ZTail(a) => (ExperimentKind::ZTail, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> valleywalk::Result<RunRecord> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.kind != kind {
        return Err(valleywalk::Error::Config(format!(
            "config kind is {} but the subcommand runs {}",
            config.kind.name(),
            kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(dir) = args.out {
        config.output.dir = Some(dir);
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    let record = experiments::run(&config)?;
    if let Some(dir) = &config.output.dir {
        for p in record.write(dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(record)
}

fn report(record: &RunRecord) {
    for s in &record.summary {
        match s.stderr {
            Some(e) => println!("{} = {} ± {}", s.name, s.value, e),
            None if s.exact => println!("{} = {} (exact)", s.name, s.value),
            None => println!("{} = {}", s.name, s.value),
        }
    }
    for note in &record.notes {
        println!("note: {note}");
    }
    for g in &record.gates {
        let verdict = if g.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} = {} ({})", g.name, g.value, g.bound);
    }
    println!(
        "censored {} of {} replicates, {:.2} s on {} workers",
        record.censored,
        record.replicates.len(),
        record.wall_time_s,
        record.workers
    );
}

fn main() -> ExitCode {
    // clap's own usage exit code (2) would read as "gates failed"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(record) => {
            report(&record);
            if record.all_gates_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
