//! Command-line front end: netlist checking, monolithic and coupled
//! simulation, co-simulation and the operator-splitting demonstrator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phdae_core::cosim::IterationMode;
use phdae_core::integrate::Scheme;

use commands::{CliError, CosimSettings, RunSettings};
use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "phdae",
    version,
    about = "Port-Hamiltonian simulation of electrical networks and electromagnetic devices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Output directory for CSV files and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the randomized validators.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key-value configuration file; flags win over file entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Integration scheme: implicit-euler, midpoint or discrete-gradient.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Step size.
    #[arg(long)]
    h: Option<f64>,
    /// End time.
    #[arg(long = "T", visible_alias = "end-time")]
    end_time: Option<f64>,
    /// Relative tolerance of the dissipation-inequality audit gate.
    #[arg(long)]
    audit_tol: Option<f64>,
    /// Trajectory CSV to compare the final state against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a netlist and report topology, index and passivity findings.
    Check {
        netlist: PathBuf,
        /// Random samples per passivity check.
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Simulate a netlist monolithically.
    Run {
        netlist: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Couple a netlist with a field device and simulate the condensed system.
    Couple {
        netlist: PathBuf,
        device: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Co-simulate a netlist and a field device by dynamic iteration.
    Cosim {
        netlist: PathBuf,
        device: PathBuf,
        /// Iteration mode: jacobi or gauss-seidel.
        #[arg(long)]
        mode: Option<IterationMode>,
        /// Window length (an integer multiple of the micro step).
        #[arg(long)]
        window: Option<f64>,
        /// Sweep convergence tolerance on exchanged waveforms.
        #[arg(long)]
        sweep_tol: Option<f64>,
        /// Max sweeps per window.
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Reproduce the operator-splitting counterexample report.
    DemoSplitting {
        /// Macro step of the splitting experiment.
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

const DEFAULT_SEED: u64 = 12345;

fn load_config(common: &CommonArgs) -> Result<FileConfig, CliError> {
    match &common.config {
        Some(path) => FileConfig::load(path).map_err(CliError::Input),
        None => Ok(FileConfig::default()),
    }
}

fn run_settings(
    solver: &SolverArgs,
    common: &CommonArgs,
    cfg: &FileConfig,
) -> Result<RunSettings, CliError> {
    let scheme = cfg
        .resolve(solver.scheme, "scheme", Scheme::Midpoint)
        .map_err(CliError::Input)?;
    let step = cfg.resolve(solver.h, "h", 1e-3).map_err(CliError::Input)?;
    let end_time = cfg
        .resolve(solver.end_time, "t", 1.0)
        .map_err(CliError::Input)?;
    let out_dir = match &common.out {
        Some(dir) => dir.clone(),
        None => cfg
            .get("out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let seed = cfg
        .resolve(common.seed, "seed", DEFAULT_SEED)
        .map_err(CliError::Input)?;
    let audit_tol = cfg
        .resolve(solver.audit_tol, "audit-tol", 1e-6)
        .map_err(CliError::Input)?;
    Ok(RunSettings {
        scheme,
        step,
        end_time,
        out_dir,
        seed,
        audit_tol,
        reference: solver.reference.clone(),
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check {
            netlist,
            samples,
            common,
        } => {
            let cfg = load_config(&common)?;
            let samples = cfg
                .resolve(samples, "samples", 200)
                .map_err(CliError::Input)?;
            let seed = cfg
                .resolve(common.seed, "seed", DEFAULT_SEED)
                .map_err(CliError::Input)?;
            commands::cmd_check(&netlist, samples, seed, common.out.as_deref())
        }
        Command::Run {
            netlist,
            solver,
            common,
        } => {
            let cfg = load_config(&common)?;
            let settings = run_settings(&solver, &common, &cfg)?;
            commands::cmd_run(&netlist, &settings)
        }
        Command::Couple {
            netlist,
            device,
            solver,
            common,
        } => {
            let cfg = load_config(&common)?;
            let settings = run_settings(&solver, &common, &cfg)?;
            commands::cmd_couple(&netlist, &device, &settings)
        }
        Command::Cosim {
            netlist,
            device,
            mode,
            window,
            sweep_tol,
            max_sweeps,
            solver,
            common,
        } => {
            let cfg = load_config(&common)?;
            let run = run_settings(&solver, &common, &cfg)?;
            let settings = CosimSettings {
                window: cfg
                    .resolve(window, "window", 10.0 * run.step)
                    .map_err(CliError::Input)?,
                mode: cfg
                    .resolve(mode, "mode", IterationMode::GaussSeidel)
                    .map_err(CliError::Input)?,
                sweep_tol: cfg
                    .resolve(sweep_tol, "sweep-tol", 1e-8)
                    .map_err(CliError::Input)?,
                max_sweeps: cfg
                    .resolve(max_sweeps, "max-sweeps", 30)
                    .map_err(CliError::Input)?,
                run,
            };
            commands::cmd_cosim(&netlist, &device, &settings)
        }
        Command::DemoSplitting { h, common } => {
            let cfg = load_config(&common)?;
            let h = cfg.resolve(h, "h", 0.1).map_err(CliError::Input)?;
            let seed = cfg
                .resolve(common.seed, "seed", DEFAULT_SEED)
                .map_err(CliError::Input)?;
            commands::cmd_demo_splitting(h, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
