use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use optpot_cli::{load_config, run, CliError};

/// Closest potential with prescribed Dirichlet eigenvalues.
#[derive(Debug, Parser)]
#[command(name = "optpot", version, about)]
struct Args {
    /// TOML run description.
    #[arg(long)]
    config: PathBuf,

    /// Output directory, overriding `output_dir` in the config.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(dir) = &args.output {
        config.output_dir = dir.clone();
    }
    let report = run(&config)?;
    if !args.quiet {
        println!("{}", report.summary());
        println!("artifacts in {}", config.output_dir.display());
    }
    if let Some(failure) = &report.failure {
        eprintln!("optpot: {}", failure.message);
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("optpot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
