use std::path::PathBuf;
use std::process::ExitCode;

use atlas_core::harness::{self, ExperimentKind, ExperimentSpec, OutputFormat};
use atlas_core::Error;
use clap::{Args, Parser, Subcommand};

/// Sparse low-rank matrix sensing experiments.
#[derive(Debug, Parser)]
#[command(name = "atlas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One recovery with bound evaluations and lemma verdicts.
    Recover(RunArgs),
    /// Error against noise-to-signal ratio.
    NoiseSweep(RunArgs),
    /// Error against the regularization parameters.
    ParamSweep(RunArgs),
    /// Error against the Frobenius norm of the planted matrix.
    NormSweep(RunArgs),
    /// Success probability over a (sparsity, measurements) grid.
    Phase(RunArgs),
    /// Success probability for several initializations on paired instances.
    InitStudy(RunArgs),
    /// Monte-Carlo lower bounds on the additive RIP constant.
    RipProbe(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Record wall-clock time per trial (output is then no longer reproducible byte for byte).
    #[arg(long)]
    timing: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Recover(a) => (ExperimentKind::SingleRecover, a),
            Command::NoiseSweep(a) => (ExperimentKind::NoiseSweep, a),
            Command::ParamSweep(a) => (ExperimentKind::ParamSweep, a),
            Command::NormSweep(a) => (ExperimentKind::NormSweep, a),
            Command::Phase(a) => (ExperimentKind::PhaseDiagram, a),
            Command::InitStudy(a) => (ExperimentKind::InitStudy, a),
            Command::RipProbe(a) => (ExperimentKind::RipSweep, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<usize, Error> {
    let format: OutputFormat = args.format.parse()?;
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_path(path)?,
        None => ExperimentSpec::default(),
    };
    match spec.kind {
        Some(k) if k != kind => {
            return Err(Error::Config {
                field: "kind".into(),
                message: format!("config is for `{}`, subcommand runs `{}`", k.label(), kind.label()),
            })
        }
        _ => spec.kind = Some(kind),
    }
    if args.seed.is_some() {
        spec.base_seed = args.seed;
    }
    if args.threads.is_some() {
        spec.threads = args.threads;
    }
    if args.timing {
        spec.record_wall_time = Some(true);
    }
    let plan = spec.resolve()?;
    let records = harness::run_to_dir(&plan, &args.out, format)?;
    Ok(records.len())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config() || matches!(err, Error::Json(_)) {
        2
    } else if err.is_divergence() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let out = args.out.clone();
    match run(kind, args) {
        Ok(n) => {
            eprintln!("{}: {n} trial rows written to {}", kind.label(), out.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
