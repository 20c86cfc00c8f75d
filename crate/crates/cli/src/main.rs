use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use cpl_cli::config::parse_config;
use cpl_cli::error::CliError;
use cpl_cli::run::{run, Context, Subcommand};
use cpl_core::exec::{init_threads, Exec};

#[derive(Parser)]
#[command(name = "cpl", version, about = "Positive stable solutions on rotationally symmetric domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `[output] directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for the multistart initial guesses (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Solve on the target domain and write the field.
    Solve,
    /// First eigenvalue of the linearized operator.
    Eigen,
    /// Critical points of the solution.
    Census,
    /// Symmetry, monotonicity and uniqueness checks.
    Verify {
        /// Check this CPFIELD file instead of solving.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Domain homotopy from the ball to the target.
    Continue,
    /// Brute-force voxel solve and comparison.
    Oracle3d {
        /// Compare this CPVOX file instead of solving.
        #[arg(long)]
        voxel: Option<PathBuf>,
    },
    /// Aggregate the artifacts of earlier runs.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("CPL_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
    init_threads(threads);

    let (cmd, field, voxel) = match cli.command {
        Command::Solve => (Subcommand::Solve, None, None),
        Command::Eigen => (Subcommand::Eigen, None, None),
        Command::Census => (Subcommand::Census, None, None),
        Command::Verify { field } => (Subcommand::Verify, field, None),
        Command::Continue => (Subcommand::Continue, None, None),
        Command::Oracle3d { voxel } => (Subcommand::Oracle3d, None, voxel),
        Command::Report => (Subcommand::Report, None, None),
    };
    let config = match &cli.config {
        Some(p) => match parse_config(p) {
            Ok(mut c) => {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                Some(c)
            }
            Err(e) => return fail(&e),
        },
        None if cmd == Subcommand::Report => None,
        None => return fail(&CliError::Usage("--config is required".into())),
    };
    let out = cli
        .out
        .or_else(|| config.as_ref().map(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { config, out, quiet: cli.quiet, field, voxel, exec: Exec::default() };
    match run(cmd, &ctx) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}
