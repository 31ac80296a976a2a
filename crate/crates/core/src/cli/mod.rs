//! Experiment runner behind the `aoii` binary.
//!
//! Settings come from flags, then an optional flat TOML file (`--config`)
//! whose keys are spelled like the flags, then built-in defaults. Every CSV
//! output starts with `# key = value` lines recording all resolved settings;
//! JSON outputs carry the same data under `"header"`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 solver did not
//! converge, 4 a check raised a flag.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use config::{CommandKind, Overrides, Resolved};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_FLAGGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "aoii", version, about = "Age of incorrect information: closed forms, MDP solvers and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the threshold-policy optimality condition over a Zipf grid.
    ConditionSweep(RunArgs),
    /// Optimal vs lazy-threshold average AoII along one swept parameter.
    Perf(RunArgs),
    /// Solve the truncated MDP; writes a JSON summary and a policy CSV.
    Solve(RunArgs),
    /// Monte Carlo run of one policy.
    Simulate(RunArgs),
    /// Compare the solver's policy with a canonical one on reachable states.
    Compare(RunArgs),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } | Error::PolicyCycle { .. } | Error::Singular | Error::Multichain { .. } => {
            EXIT_NOT_CONVERGED
        }
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let (kind, args) = match cli.command {
        Command::ConditionSweep(a) => (CommandKind::ConditionSweep, a),
        Command::Perf(a) => (CommandKind::Perf, a),
        Command::Solve(a) => (CommandKind::Solve, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Compare(a) => (CommandKind::Compare, a),
    };
    let context = args.config.as_ref().map(|p| format!(" (config {})", p.display())).unwrap_or_default();
    match execute(kind, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error{context}: {e}");
            exit_code(&e)
        }
    }
}

fn execute(kind: CommandKind, args: RunArgs) -> Result<i32> {
    let file = args.config.as_deref().map(Overrides::from_file).transpose()?;
    let cfg = Resolved::resolve(kind, args.overrides, file)?;
    let header = cfg.header();
    let out = cfg.out.as_deref();
    match kind {
        CommandKind::ConditionSweep => {
            let rows = commands::condition_sweep(&cfg)?;
            let summary = commands::summarize(&rows);
            output::write_csv(output::open(out)?, &header, &rows)?;
            match output::sibling(out, "summary.csv") {
                Some(path) => output::write_csv(output::open(Some(&path))?, &header, &summary)?,
                None => {
                    for s in &summary {
                        eprintln!("a = {:<5} {:?} ({}/{})", s.a, s.verdict, s.passed, s.total);
                    }
                }
            }
            Ok(EXIT_OK)
        }
        CommandKind::Perf => {
            let rows = commands::perf(&cfg)?;
            output::write_csv(output::open(out)?, &header, &rows)?;
            let flagged = rows.iter().filter(|r| r.flagged).count();
            if flagged > 0 {
                eprintln!("{flagged} row(s) flagged");
                return Ok(EXIT_FLAGGED);
            }
            Ok(EXIT_OK)
        }
        CommandKind::Solve => {
            let (_, res) = commands::solve(&cfg)?;
            let policy_path = output::sibling(out, "policy.csv");
            let body = serde_json::json!({
                "result": res.summary(),
                "policy_csv": policy_path.as_ref().map(|p| p.display().to_string()),
            });
            output::write_json(output::open(out)?, &header, &body)?;
            if let Some(path) = policy_path {
                let mut w = output::open(Some(&path))?;
                output::write_header(&mut w, &header)?;
                res.policy.write_csv(&mut w)?;
            }
            Ok(EXIT_OK)
        }
        CommandKind::Simulate => {
            let mut res = commands::simulate_cmd(&cfg)?;
            let trace = res.trace.take();
            output::write_json(output::open(out)?, &header, &res)?;
            if let Some(rows) = trace {
                let mut w = output::open(output::sibling(out, "trace.csv").as_deref())?;
                output::write_header(&mut w, &header)?;
                crate::sim::write_trace_csv(&rows, &mut w)?;
            }
            Ok(EXIT_OK)
        }
        CommandKind::Compare => {
            let report = commands::compare(&cfg)?;
            output::write_json(output::open(out)?, &header, &report)?;
            Ok(if report.comparison.equal { EXIT_OK } else { EXIT_FLAGGED })
        }
    }
}
