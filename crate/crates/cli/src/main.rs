use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod plots;

use config::Config;

/// Gain design, small-signal analysis and simulation of a virtual-flux
/// grid-forming converter controller.
#[derive(Debug, Parser)]
#[command(name = "fluxgfm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file (defaults are used for missing keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files (created if missing). `gains` and
    /// `linearize` only write files when this is given.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design the controller gains and check every design identity.
    Gains {
        /// Override the design power (pu).
        #[arg(long)]
        p_star: Option<f64>,
    },
    /// Closed-loop poles over a range of plant inductances.
    EigSweep {
        #[arg(long)]
        l_min: Option<f64>,
        #[arg(long)]
        l_max: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
        /// Worker threads for the sweep.
        #[arg(long, env = "FLUXGFM_THREADS")]
        threads: Option<usize>,
    },
    /// Run a named scenario or a scenario JSON file.
    Simulate {
        /// Scenario name (step_L050, step_L100, step_L010, framp_L050) or path.
        scenario: Option<String>,
        /// Run the controller at the configured sampling rate.
        #[arg(long)]
        sampled: bool,
        /// Write CSV numbers as hexadecimal floats.
        #[arg(long)]
        hex: bool,
    },
    /// Linearize the closed loop at one plant inductance.
    Linearize {
        /// Plant inductance (pu); defaults to `plant.l_pu`.
        #[arg(long)]
        l: Option<f64>,
        /// Grid frequency (Hz); defaults to the base frequency.
        #[arg(long)]
        f_hz: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Config::load(cli.common.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Gains { p_star } => commands::gains(&cfg, p_star, cli.common.out.as_deref()),
        Command::EigSweep {
            l_min,
            l_max,
            n_points,
            threads,
        } => commands::eig_sweep(&cfg, l_min, l_max, n_points, threads, cli.common.out.as_deref()),
        Command::Simulate { scenario, sampled, hex } => {
            commands::simulate(&cfg, scenario.as_deref(), sampled, hex, cli.common.out.as_deref())
        }
        Command::Linearize { l, f_hz } => commands::linearize(&cfg, l, f_hz, cli.common.out.as_deref()),
    });
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            commands::exit_code_for(&err)
        }
    }
}
