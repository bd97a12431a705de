use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cghydro_cli::config::RunConfig;
use cghydro_cli::runner::{resolve_out_dir, run_command};
use cghydro_cli::CliError;

#[derive(Parser)]
#[command(name = "cghydro", version, about = "Coarse-grained field runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the projected evolution equation and extract fields.
    Evolve(RunArgs),
    /// Scan the averaging length and assemble the classicality verdict.
    Sweep(RunArgs),
    /// Field-equation residuals, pressure and the quantum-force bound.
    Diagnose(RunArgs),
    /// Dump the multiplier tables and the expansion diagnostic.
    Kernels(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fluctuation seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(name: &str, args: &RunArgs) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        // ignore failure: the global pool may already exist in-process
        let _ = rayon_pool(n);
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = RunConfig::parse(&text)?;
    let out_dir = resolve_out_dir(&cfg, args.out.as_deref());
    let manifest = run_command(name, &cfg, &out_dir, args.seed)?;
    eprintln!(
        "{name}: wrote {} files to {}",
        manifest.outputs.len(),
        out_dir.display()
    );
    Ok(())
}

fn rayon_pool(n: usize) -> Result<(), Box<dyn std::error::Error>> {
    cghydro_core::build_thread_pool(n)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Evolve(a) => ("evolve", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Diagnose(a) => ("diagnose", a),
        Command::Kernels(a) => ("kernels", a),
    };
    match execute(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
