//! Command-line entry point.

use anyhow::{Context, Result};
use clap::Parser;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cvp_mass::cli::{self, Format, RunConfig, Scenario};

#[derive(Debug, Parser)]
#[command(name = "cvp-mass", version, about = "Surface-layer mass computations for causal variational principles")]
struct Args {
    /// moments, positivity, schwarzschild, ultrastatic, align, quasilocal or synthetic-scal
    scenario: String,
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. --set kernel.delta=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file (default: config output.path, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Shorthand for --set schwarzschild.mass=…
    #[arg(long = "M", value_name = "MASS")]
    mass: Option<f64>,
    /// Shorthand for --set schwarzschild.delta_over_r0=…
    #[arg(long = "delta-over-R0", value_name = "RATIO")]
    delta_over_r0: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

enum Status {
    Ok,
    AcceptanceFailure,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::AcceptanceFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(args: Args) -> Result<Status> {
    let scenario = Scenario::parse(&args.scenario)?;
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = args.set.clone();
    if let Some(m) = args.mass {
        overrides.push(format!("schwarzschild.mass={m:?}"));
    }
    if let Some(r) = args.delta_over_r0 {
        overrides.push(format!("schwarzschild.delta_over_r0={r:?}"));
    }
    let mut cfg = RunConfig::load(&text, &overrides)?;
    cfg.scenario = Some(scenario);
    if let Some(f) = args.format {
        cfg.output.format = match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    if let Some(p) = args.out {
        cfg.output.path = Some(p);
    }

    let outcome = cli::run(&cfg, scenario)?;
    let body = match cfg.output.format {
        Format::Json => cli::render_json(&cfg, scenario, &outcome)?,
        Format::Csv => cli::render_csv(&outcome)?,
    };
    match &cfg.output.path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(body.as_bytes()).context("writing to stdout")?,
    }
    for c in outcome.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: value {:.6e}, target {:.6e}, tolerance {:.3e}", c.name, c.value, c.target, c.tolerance);
    }
    Ok(if outcome.passed() { Status::Ok } else { Status::AcceptanceFailure })
}
