use std::path::PathBuf;
use std::process::ExitCode;

use basket_wing::Side;
use clap::{Parser, Subcommand};
use log::{error, info};

mod config;
mod error;
mod report;
mod sweep;
mod validate;

use error::CliError;

pub const THREADS_VAR: &str = "BASKET_WING_THREADS";

#[derive(Parser)]
#[command(name = "basket-wing", version, about = "Extreme-strike implied volatility of basket options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Small-strike wing: asymptotic expansion against the oracle.
    Leftwing(Args),
    /// Large-strike wing.
    Rightwing(Args),
    /// Run the acceptance checks for one configuration.
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn wing(args: &Args, side: Side) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    let sweep = sweep::run(&cfg, side)?;
    report::ensure_dir(&args.out)?;
    let command = sweep.summary.command.clone();
    let csv = report::output_path(&args.out, &cfg.stem, &command, "csv");
    report::write_csv(&csv, &sweep.rows)?;
    report::write_json(&report::output_path(&args.out, &cfg.stem, &command, "json"), &sweep.summary)?;
    info!("wrote {}", csv.display());
    if sweep.failed() {
        for f in &sweep.summary.failures {
            error!("{f}");
        }
        return Err(CliError::Numeric(format!("{} point(s) failed", sweep.summary.failures.len())));
    }
    Ok(())
}

fn validate_cmd(args: &Args) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    let rep = validate::run(&cfg)?;
    report::ensure_dir(&args.out)?;
    report::write_json(&report::output_path(&args.out, &cfg.stem, "validate", "json"), &rep)?;
    for c in &rep.criteria {
        let mark = if c.pass { "PASS" } else { "FAIL" };
        println!("[{mark}] {}: {:e} (tolerance {:e})", c.name, c.measured, c.tolerance);
    }
    if !rep.pass {
        let failed: Vec<&str> = rep.criteria.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::Numeric(format!("failed criteria: {}", failed.join(", "))));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Leftwing(a) => wing(a, Side::Left),
        Command::Rightwing(a) => wing(a, Side::Right),
        Command::Validate(a) => validate_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("basket-wing: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
