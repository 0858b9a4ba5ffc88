use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pseudogen::experiment::{exit_code, run, Command, ExperimentConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Eigenvalues of G2, R^t and E^t over the lag-time grid
    Spectrum,
    /// Ulam reference matrices with replication stderr
    Reference,
    /// Reconstruction errors against the Ulam reference and their slopes
    Compare,
    /// Metastable sets, bounds and Monte-Carlo metastability
    Bounds,
}

/// Pseudo-generator metastability analysis of Langevin dynamics.
///
/// The thread count can be set with PSEUDOGEN_THREADS.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML configuration file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: double-well or four-well
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default out/<command>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate the acceptance checks; exit with 4 if any fails
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("PSEUDOGEN_THREADS") {
        match n.parse::<usize>() {
            Ok(n) => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool");
            }
            Err(_) => {
                eprintln!("error: PSEUDOGEN_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(2);
            }
        }
    }
    let command = match cli.command {
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Reference => Command::Reference,
        Cmd::Compare => Command::Compare,
        Cmd::Bounds => Command::Bounds,
    };
    let config = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path),
        (None, Some(name)) => ExperimentConfig::preset(name),
        (None, None) => {
            eprintln!("error: give --config <path> or --preset <name>");
            return ExitCode::from(2);
        }
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = Some(out);
    }
    match run(command, &config, cli.check) {
        Ok(output) => {
            for c in &output.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} files to {}", output.files.len() + 1, output.dir.display());
            if output.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
