use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rescover_core::harness::{run_experiment, Config, ExperimentKind};

/// Run reservoir-covering bound experiments and write CSV results.
#[derive(Parser)]
#[command(name = "rescover", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo approximation rate of shallow networks
    ApproxRate(Common),
    /// Parameter covering sizes and snap gaps
    Covering(Common),
    /// Worst filter error of a concatenated covering reservoir
    ConcatError(Common),
    /// Cascade echo-state, finite-memory and combined error checks
    CascadeError(Common),
    /// Brute-force pseudo-dimension of readout classes
    Pdim(Common),
    /// Bump grafting of a second fixed point
    EspGraft(Common),
    /// Node-count and error arithmetic of the cascade construction
    Scale(Common),
}

#[derive(Args)]
struct Common {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (all cores when omitted)
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::ApproxRate(c) => (ExperimentKind::ApproxRate, c),
            Command::Covering(c) => (ExperimentKind::Covering, c),
            Command::ConcatError(c) => (ExperimentKind::ConcatError, c),
            Command::CascadeError(c) => (ExperimentKind::CascadeError, c),
            Command::Pdim(c) => (ExperimentKind::Pdim, c),
            Command::EspGraft(c) => (ExperimentKind::EspGraft, c),
            Command::Scale(c) => (ExperimentKind::Scale, c),
        }
    }
}

fn run(kind: ExperimentKind, args: Common) -> Result<bool, String> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.set("seed", seed);
    }
    let pool = match args.threads {
        Some(0) => return Err("--threads must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let table = pool.install(|| run_experiment(kind, &cfg)).map_err(|e| e.to_string())?;
    let csv = table.render();
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{csv}"),
    }
    let failed = table.rows.iter().filter(|r| !r.pass()).count();
    eprintln!("{kind}: {} rows, {failed} failed, {:.3} s", table.rows.len(), start.elapsed().as_secs_f64());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
