use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gexpect::expectation::BackendKind;
use gexpect_cli::{execute, parse_config, Command, Overrides, EXIT_CONFIG};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Pde,
    Lsmc,
}

/// g-expectations, capacities and Choquet integrals from a JSON run config.
#[derive(Debug, Parser)]
#[command(name = "gexpect", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the LSMC seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Recompute even if a report for this configuration exists.
    #[arg(long)]
    force: bool,
    /// Root directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(n) = std::env::var("GEXPECT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("GEXPECT_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    Overrides {
        seed: cli.seed,
        backend: cli.backend.map(|b| match b {
            BackendArg::Pde => BackendKind::Pde,
            BackendArg::Lsmc => BackendKind::Lsmc,
        }),
    }
    .apply(&mut cfg);
    match execute(cli.command, &cfg, &cli.out, cli.force) {
        Ok(out) => {
            let tag = if out.cached { " (cached)" } else { "" };
            println!("{}{tag} [{}]", out.summary, out.run_dir.display());
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
