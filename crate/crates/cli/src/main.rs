//! `latentprobe`: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid config or inputs,
//! 3 a stage failed (the manifest names it).

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use config::RunConfig;
use error::{CliError, CliResult};
use run::Run;

const DEFAULT_OUT: &str = "latentprobe-out";

#[derive(Parser, Debug)]
#[command(name = "latentprobe", version, about = "Embedding inference, attribute probing and erasure for follow networks")]
struct Cli {
    /// TOML config with one table per subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Require an explicit seed and train bit-reproducibly.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory; falls back to the config, then $LATENTPROBE_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Read a tab-separated edge list into the output directory.
    Ingest,
    /// Generate a synthetic world with planted attributes.
    Synth,
    /// Train a TransE embedding.
    Train,
    /// Sweep the WTF/Follow weight alpha.
    Sweep,
    /// Held-out AUC, baselines and precision@k.
    Eval,
    /// Find and test attribute directions.
    Probe,
    /// Iteratively project an attribute out of the embedding.
    Erase,
    /// Compare recommendation slates of two embeddings.
    Recommend,
    /// Fit ideal points on a user-to-MP follow matrix.
    Scale,
    /// Retrain on perturbed graphs and align with the reference.
    Robustness,
    /// Rebuild summary tables from stored reports.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Eval => "eval",
            Command::Probe => "probe",
            Command::Erase => "erase",
            Command::Recommend => "recommend",
            Command::Scale => "scale",
            Command::Robustness => "robustness",
            Command::Report => "report",
        }
    }

    fn randomized(self) -> bool {
        !matches!(self, Command::Ingest | Command::Report)
    }

    fn execute(self, run: &Run) -> CliResult<()> {
        match self {
            Command::Ingest => commands::ingest(run),
            Command::Synth => commands::synth(run),
            Command::Train => commands::train(run),
            Command::Sweep => commands::sweep(run),
            Command::Eval => commands::eval(run),
            Command::Probe => commands::probe(run),
            Command::Erase => commands::erase(run),
            Command::Recommend => commands::recommend(run),
            Command::Scale => commands::scale(run),
            Command::Robustness => commands::robustness(run),
            Command::Report => commands::report(run),
        }
    }
}

/// File values, then flags on top.
fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    config.deterministic |= cli.deterministic;
    if cli.out.is_some() {
        config.out = cli.out.clone();
    }
    Ok(config)
}

fn output_dir(config: &RunConfig) -> PathBuf {
    config
        .out
        .clone()
        .or_else(|| std::env::var_os("LATENTPROBE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn start(cli: &Cli) -> CliResult<Option<Run>> {
    let config = effective_config(cli)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(None);
    }
    let command = cli
        .command
        .ok_or_else(|| CliError::Usage("a subcommand is required; see --help".into()))?;
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot start {} threads: {e}", config.threads)))?;
    }
    let out = output_dir(&config);
    Run::new(command.name(), config, out, command.randomized()).map(Some)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let run = match start(&cli) {
        Ok(Some(run)) => run,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let command = cli.command.expect("checked in start");
    let result = command.execute(&run);
    if let Err(e) = run.write_manifest(result.as_ref().err()) {
        eprintln!("error: cannot write manifest: {e}");
        if result.is_ok() {
            return ExitCode::from(3);
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
