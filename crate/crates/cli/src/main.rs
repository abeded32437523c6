use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftkernel_cli::{operation, sweep, verify, ExperimentConfig, Operation, Outcome, RunError};

/// Heat kernels and Green functions of the fractional Laplacian with drift.
///
/// Exit status: 0 pass, 1 fail, 2 inconclusive, 3 error.
#[derive(Parser)]
#[command(name = "driftkernel", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set mc.paths=200000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Drifted free kernel at `point.x`, `point.y` for each time in `grid.t`.
    FreeKernel,
    /// Individual perturbation series terms up to `series.order`.
    Series,
    /// Killed paths from `point.x` up to the largest time in `grid.t`.
    Simulate,
    /// Killed heat kernel at `point.x`, `point.y` for each time in `grid.t`.
    DomainKernel,
    /// Killed Green function at `point.x`, `point.y`.
    Green,
    /// Run one property suite, e.g. `heat-two-sided`.
    Verify { suite: String },
    /// Run a suite across the values of one axis.
    Sweep {
        suite: String,
        /// One of alpha, drift-amplitude, radius, lambda, t.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Print the resolved config.
    Config,
}

fn load(common: &Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    let mut sets = common.sets.clone();
    if let Some(w) = common.workers {
        sets.push(format!("mc.workers={w}"));
    }
    cfg.apply_overrides(&sets)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, RunError> {
    let cfg = load(&cli.common)?;
    match &cli.cmd {
        Cmd::FreeKernel => operation(&cfg, Operation::FreeKernel),
        Cmd::Series => operation(&cfg, Operation::Series),
        Cmd::Simulate => operation(&cfg, Operation::Simulate),
        Cmd::DomainKernel => operation(&cfg, Operation::DomainKernel),
        Cmd::Green => operation(&cfg, Operation::Green),
        Cmd::Verify { suite } => verify(&cfg, suite),
        Cmd::Sweep { suite, axis, values } => sweep(&cfg, suite, axis, values),
        Cmd::Config => {
            print!("{}", cfg.emit());
            Ok(Outcome { verdict: driftkernel::verify::Verdict::Pass, reports: Vec::new() })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors share status 3 with every other error.
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            for p in &out.reports {
                println!("{}", p.display());
            }
            eprintln!("verdict: {}", out.verdict);
            ExitCode::from(out.verdict.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", serde_json::json!({ "status": 3, "error": e.to_string() }));
            ExitCode::from(3)
        }
    }
}
