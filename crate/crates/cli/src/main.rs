//! `epictrl`: simulate, optimize and verify vaccination policies.

mod commands;
mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "epictrl", version, about = "Constrained metapopulation vaccination control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Built-in scenario: cities3, cities5, cities8 or toy.
    #[arg(long, global = true, conflicts_with = "scenario")]
    pub preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long, global = true, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Simulation step in days; must divide a week.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub h: f64,
    /// Half-width (days) of the smoothed shipment ramps.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Multi-start count.
    #[arg(long, global = true, default_value_t = 8)]
    pub starts: usize,
    /// Evaluation budget per start (sweep iterations for grid methods).
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory; the EPICTRL_OUT environment variable takes precedence.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Reject scenarios that violate the modelling assumptions.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Add susceptible migration along the commuting network at this rate
    /// (per day; presets only).
    #[arg(long, global = true, value_name = "RATE")]
    pub migration: Option<f64>,
    /// Skip SVG output (CSV and JSON are still written).
    #[arg(long, global = true)]
    pub no_plots: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a policy and write the trajectory.
    Simulate {
        /// Policy file: an optimize result or a bare schedule.
        #[arg(long, value_name = "PATH")]
        schedule: Option<PathBuf>,
        /// Without --schedule, every region switches off at this fraction of each week.
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
    },
    /// Minimize the vaccination cost.
    Optimize {
        #[arg(long, value_enum, default_value_t = Mode::Bang)]
        mode: Mode,
    },
    /// Check the optimality structure of a policy; exits 0 iff every check passes.
    Verify {
        /// Policy file: an optimize result or a bare schedule.
        #[arg(long, value_name = "PATH")]
        schedule: PathBuf,
    },
    /// Exhaustive switching-time grid (tiny instances only).
    Oracle {
        /// Grid spacing in days; must divide a week.
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
    },
    /// Linear optimum against the quadratic-effort optimum.
    Compare {
        /// Quadratic effort weight; calibrated on the linear optimum if absent.
        #[arg(long)]
        cq: Option<f64>,
    },
    /// Costate series along a policy (the optimum if no schedule is given).
    Adjoint {
        #[arg(long, value_name = "PATH")]
        schedule: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Switching times of bang-bang policies.
    Bang,
    /// Forward-backward sweep on the simulation grid.
    Grid,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut common = cli.common;
    if let Some(dir) = std::env::var_os("EPICTRL_OUT").filter(|d| !d.is_empty()) {
        common.out = PathBuf::from(dir);
    }
    let result = match &cli.command {
        Command::Simulate { schedule, fraction } => {
            commands::run_simulate(&common, schedule.as_deref(), *fraction)
        }
        Command::Optimize { mode } => commands::optimize(&common, *mode),
        Command::Verify { schedule } => commands::verify(&common, schedule),
        Command::Oracle { resolution } => commands::oracle(&common, *resolution),
        Command::Compare { cq } => commands::compare(&common, *cq),
        Command::Adjoint { schedule } => commands::adjoint(&common, schedule.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let json = commands::error_json(&e);
            eprintln!("{json}");
            // best effort: the output directory may be the problem
            let _ = std::fs::create_dir_all(&common.out)
                .and_then(|_| std::fs::write(common.out.join("error.json"), &json));
            ExitCode::from(2)
        }
    }
}
