use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use spherefield_cli::config::parse_config;
use spherefield_cli::run::{dispatch, write_outputs, Command};

/// Spectral Monte Carlo suites for regularized free fields on spheres.
#[derive(Debug, Parser)]
#[command(name = "spherefield", version)]
struct Cli {
    command: Command,
    /// TOML run configuration; a one-dimensional default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory, overriding `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size of the worker pool; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => "dim = 1\n".to_string(),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        if n < 2 {
            eprintln!("error: --samples must be at least 2");
            return ExitCode::from(2);
        }
        cfg.samples = n;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.display().to_string();
    }
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let outcome = match dispatch(cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let dir = PathBuf::from(&cfg.output);
    if let Err(e) = write_outputs(&dir, cli.command, &cfg, &outcome, start.elapsed().as_secs_f64()) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    println!(
        "{} {}: {}",
        cli.command.name(),
        if outcome.passed { "passed" } else { "FAILED" },
        dir.join("report.json").display()
    );
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
