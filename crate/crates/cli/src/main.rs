//! `qse`: run, validate and list simulation scenarios.

mod config;
mod run;
mod validate;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{RunConfig, Scenario};
use qse_core::QseError;
use run::{execute, write_summary, Context};
use validate::{has_errors, validate, Finding, Severity};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "qse", version, about = "Quantum stochastic energetics simulations")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, env = "QSE_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts into an output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the available scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot size the worker pool: {e}");
        }
    }
    match cli.command {
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<12} {}", s.name(), s.describe());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok((cfg, _)) => {
                let (findings, _) = validate(&cfg);
                let failed = has_errors(&findings);
                let report = json!({ "status": if failed { "invalid" } else { "ok" }, "findings": findings });
                println!("{}", serde_json::to_string_pretty(&report).expect("findings serialize"));
                if failed {
                    ExitCode::from(EXIT_VALIDATION)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(f) => fail_validation(&[f], None),
        },
        Command::Run { config, out, seed } => run_command(&config, &out, seed),
    }
}

/// Reads and parses a config, keeping the raw text for the verbatim echo.
fn load(path: &PathBuf) -> Result<(RunConfig, String), Finding> {
    let text = fs::read_to_string(path).map_err(|e| finding("config-io", format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| finding("config-parse", e.to_string()))?;
    Ok((cfg, text))
}

fn finding(code: &'static str, message: String) -> Finding {
    Finding { severity: Severity::Error, code, message, measured: None, limit: None }
}

/// Prints (and, when possible, stores) the machine-readable error report.
fn error_report(status: &str, body: serde_json::Value, out: Option<&PathBuf>) {
    let mut report = json!({ "status": status });
    if let (Some(map), serde_json::Value::Object(extra)) = (report.as_object_mut(), body) {
        map.extend(extra);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(dir) = out {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), format!("{text}\n"));
        }
    }
    eprintln!("{text}");
}

fn fail_validation(findings: &[Finding], out: Option<&PathBuf>) -> ExitCode {
    error_report("invalid", json!({ "findings": findings }), out);
    ExitCode::from(EXIT_VALIDATION)
}

fn run_command(config: &PathBuf, out: &PathBuf, seed: Option<u64>) -> ExitCode {
    let (cfg, text) = match load(config) {
        Ok(v) => v,
        Err(f) => return fail_validation(&[f], Some(out)),
    };
    let (findings, built) = validate(&cfg);
    let built = match built {
        Some(b) if !has_errors(&findings) => b,
        _ => return fail_validation(&findings, Some(out)),
    };
    if let Err(e) = fs::create_dir_all(out).and_then(|_| fs::write(out.join("config.toml"), &text)) {
        eprintln!("cannot write to {}: {e}", out.display());
        return ExitCode::from(EXIT_NUMERICAL);
    }
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let ctx = Context { cfg: &cfg, built: &built, seed, out };
    let outcome = match execute(&ctx) {
        Ok(o) => o,
        Err(e) => {
            let (status, code) = classify(&e);
            error_report(status, json!({ "error": e.to_string(), "seed": seed }), Some(out));
            return ExitCode::from(code);
        }
    };
    let status = if outcome.passed() { "ok" } else { "invariant_violation" };
    if let Err(e) = write_summary(out, cfg.scenario, seed, status, &outcome, &findings) {
        eprintln!("cannot write the summary: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} = {:.6e} (limit {} {:.3e})", c.name, c.measured, c.relation, c.limit);
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    }
}

/// Status word and exit code of an error raised while running.
fn classify(e: &QseError) -> (&'static str, u8) {
    match e {
        QseError::InvalidParameter { .. } | QseError::DimensionMismatch { .. } | QseError::GridMismatch | QseError::Unsupported(_) => {
            ("invalid", EXIT_VALIDATION)
        }
        QseError::NumericalAbort { .. }
        | QseError::StepRejected { .. }
        | QseError::DomainTooSmall(_)
        | QseError::NotHermitian { .. }
        | QseError::Io(_) => ("numerical_abort", EXIT_NUMERICAL),
    }
}
