//! Batch front door: wires run configurations to the library operations
//! and emits machine-readable reports.
//!
//! Exit codes: 0 all checks passed, 1 a computed check disagreed,
//! 2 configuration or input-data error.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::{CmdError, Outcome};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "maxplus",
    version,
    about = "Max-plus supermartingale decompositions: prices, stopping rules, and exact verification"
)]
struct Cli {
    /// TOML run configuration; flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (mandatory for stochastic subcommands).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo path count.
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Grid steps per path.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Omit the timestamp so identical runs emit byte-identical reports.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Perpetual American call: closed form, boundary, and MC estimators.
    Price,
    /// Exercise boundary and call values over a strike grid (closed form).
    Boundary,
    /// Path simulation consistency: supremum law (gbm) or discounted
    /// martingale mean (levy).
    Simulate,
    /// Exact decomposition pipeline on a lattice, with every identity
    /// checked.
    TreeVerify,
    /// Convex-order comparison of the two martingale decompositions.
    ConvexOrder,
    /// Max-plus martingales from a concave transform: pathwise and
    /// closed-form checks.
    AzemaYor,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Boundary => "boundary",
            Command::Simulate => "simulate",
            Command::TreeVerify => "tree-verify",
            Command::ConvexOrder => "convex-order",
            Command::AzemaYor => "azema-yor",
        }
    }

    fn tabular(&self) -> bool {
        matches!(self, Command::Boundary | Command::ConvexOrder)
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema: &'static str,
    command: &'static str,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_unix: Option<u64>,
    config: &'a RunConfig,
    report: serde_json::Value,
}

fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("MAXPLUS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("MAXPLUS_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("MAXPLUS_THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match out {
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| format!("stdout: {e}"))?;
            Ok(())
        }
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
    }
}

fn run(cli: &Cli) -> Result<bool, String> {
    // Reject an unusable format up front: the commands below can run for
    // minutes, and the answer would be thrown away.
    if cli.format == Format::Csv && !cli.command.tabular() {
        return Err(format!(
            "csv output is not available for `{}` (boundary and convex-order only)",
            cli.command.name()
        ));
    }
    init_thread_pool()?;
    let over = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        steps: cli.steps,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &over)?;

    let outcome: Outcome = match cli.command {
        Command::Price => commands::price(&cfg),
        Command::Boundary => commands::boundary(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::TreeVerify => commands::tree_verify(&cfg),
        Command::ConvexOrder => commands::convex_order(&cfg),
        Command::AzemaYor => commands::azema_yor(&cfg),
    }
    .map_err(|CmdError::Config(msg)| msg)?;

    let text = match cli.format {
        Format::Json => {
            let timestamp_unix = if cli.deterministic {
                None
            } else {
                Some(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                )
            };
            let envelope = Envelope {
                schema: "maxplus/1",
                command: cli.command.name(),
                pass: outcome.pass,
                timestamp_unix,
                config: &cfg,
                report: outcome.report,
            };
            let mut s = serde_json::to_string_pretty(&envelope)
                .map_err(|e| format!("serialize: {e}"))?;
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv.ok_or_else(|| {
            format!(
                "csv output is not available for `{}` (boundary and convex-order only)",
                cli.command.name()
            )
        })?,
    };
    emit(cli.out.as_ref(), &text)?;

    if !outcome.pass {
        eprintln!("{}: check failed", cli.command.name());
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
