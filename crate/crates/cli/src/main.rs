//! `qoctl`: simulate, synthesize, verify and certify optimal protocols for a
//! driven open two-level system.
//!
//! Exit codes: 0 success, 1 verification failed or internal error, 2 bad
//! input, 3 infeasible problem.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qoctl_core::{DissipatorKind, Objective};

use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "qoctl", version, about = "Optimal control of driven open two-level systems")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Search seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// gibbs, bosonic or fermionic
    #[arg(long, global = true, value_parser = parse_kind)]
    model: Option<DissipatorKind>,
    /// heat or time
    #[arg(long, global = true, value_parser = parse_objective)]
    objective: Option<Objective>,
    /// Clamp for infinite gaps.
    #[arg(long, global = true)]
    eps_max: Option<f64>,
    /// Integrator step.
    #[arg(long, global = true)]
    step: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a sampled control schedule (CSV with columns t, eps and
    /// optionally l0, l1, l2, l3).
    Simulate {
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Build the analytic optimal protocol and re-simulate it.
    Synthesize,
    /// Check the optimality conditions along a trajectory CSV.
    Verify {
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Run the multistart search against the analytic protocol.
    Certify,
    /// Minimal times from the initial state to a set of diagonal targets.
    Reach,
}

fn parse_kind(s: &str) -> Result<DissipatorKind, String> {
    s.parse().map_err(|e: qoctl_core::Error| e.to_string())
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: qoctl_core::Error| e.to_string())
}

/// Invalid user input; maps to exit code 2.
#[derive(Debug)]
pub struct InputError(String);

impl InputError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// Optimality check ran but did not pass; maps to exit code 1.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use qoctl_core::Error as E;
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if cause.is::<VerificationFailed>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible { .. } => 3,
                E::InputDomain(_)
                | E::SingularRate { .. }
                | E::DegenerateSpectrum { .. }
                | E::MissingCostate
                | E::Parse { .. }
                | E::Csv(_) => 2,
                E::IntegrationDiverged { .. } | E::BranchUndefined(_) | E::Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        model: cli.model,
        objective: cli.objective,
        eps_max: cli.eps_max,
        step: cli.step,
        threads: qoctl_core::optimizer::threads_from_env(),
    };
    let run = || -> anyhow::Result<()> {
        let cfg = config::RunConfig::load(cli.config.as_deref(), &overrides)?;
        match &cli.command {
            Command::Simulate { schedule } => commands::simulate(&cfg, schedule),
            Command::Synthesize => commands::synthesize(&cfg),
            Command::Verify { trajectory } => commands::verify(&cfg, trajectory),
            Command::Certify => commands::certify(&cfg),
            Command::Reach => commands::reach(&cfg),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
