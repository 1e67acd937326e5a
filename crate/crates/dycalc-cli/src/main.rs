//! `dycalc`: runs one experiment described by a JSON config file.
//!
//! Exit codes: 0 success, 1 a declared tolerance failed (the report is
//! still written), 2 invalid config or input (nothing is written),
//! 3 output could not be written.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "dycalc", version, about = "Runs one dyadic-calculus experiment from a JSON config")]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "dycalc-out")]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "DYCALC_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let result = config::load(&args.config, args.seed).and_then(|ctx| commands::run(&ctx));
    let (report, files) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Err(e) = output::emit(&args.out, &report, &files, seconds) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    let mut failed = false;
    for c in report.failures() {
        eprintln!("tolerance failure: {}", c.describe());
        failed = true;
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
