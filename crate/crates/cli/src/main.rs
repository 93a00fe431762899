//! `fbsopf`: power flow, OPF, storage sizing and the experiment drivers.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible, 4 solver failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbsopf::lp::{Backend, SolveOptions};
use fbsopf::scenario::Configuration;
use fbsopf::Error;

#[derive(Parser, Debug)]
#[command(name = "fbsopf", version, about = "Forward-backward-sweep OPF and storage sizing for radial LV grids")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario file, or `bundled:<name>` (table1, cigre_month).
    #[arg(long, global = true, default_value = "bundled:cigre_month")]
    pub scenario: String,
    /// Overrides the scenario seed for synthetic series.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for CSV reports and the run manifest. Nothing is written
    /// without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// FBS-OPF stopping threshold on the mean voltage update, pu.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Maximum number of FBS-OPF iterations.
    #[arg(long, global = true, default_value_t = 4)]
    pub h_max: usize,
    /// Require every storage to end the horizon at least as full as it
    /// started.
    #[arg(long, global = true)]
    pub terminal_soc: bool,
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Highs)]
    pub backend: BackendArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BackendArg {
    Highs,
    /// Dense two-phase simplex; only for small problems.
    Simplex,
}

impl Common {
    pub fn solver(&self) -> SolveOptions {
        SolveOptions {
            backend: match self.backend {
                BackendArg::Highs => Backend::Highs,
                BackendArg::Simplex => Backend::DenseSimplex,
            },
            ..SolveOptions::default()
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// The storages listed in the scenario.
    Scenario,
    Centralized,
    Distributed,
}

impl Layout {
    pub fn configuration(self) -> Option<Configuration> {
        match self {
            Layout::Scenario => None,
            Layout::Centralized => Some(Configuration::Centralized),
            Layout::Distributed => Some(Configuration::Distributed),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load and check a scenario, print its summary and hash.
    Validate,
    /// Exact power flow of one period with every generator at its
    /// available maximum.
    Powerflow {
        #[arg(long, default_value_t = 0)]
        period: usize,
    },
    /// Single-period FBS-OPF.
    Opf {
        #[arg(long, default_value_t = 0)]
        period: usize,
    },
    /// Multiperiod OPF with the scenario's storages at fixed capacity.
    Mpopf,
    /// Storage sizing and placement at one capacity cost.
    Size {
        #[arg(long, value_enum, default_value_t = Layout::Scenario)]
        layout: Layout,
        /// Capacity cost, currency per kWh over the calendar life. Defaults
        /// to each storage's own cost.
        #[arg(long)]
        cost: Option<f64>,
    },
    /// Capacity-cost sweep: revenue, capacity, break-even and placement.
    Sweep {
        /// Layouts to compare.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Layout::Centralized, Layout::Distributed])]
        layout: Vec<Layout>,
        /// Explicit cost points; overrides the range flags.
        #[arg(long, value_delimiter = ',')]
        costs: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        cost_min: f64,
        #[arg(long, default_value_t = 380.0)]
        cost_max: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Cold-start the points on all cores instead of warm-starting them
        /// in sequence.
        #[arg(long)]
        parallel: bool,
    },
    /// Projects every FBS-OPF iterate onto the exact power flow.
    ConvergenceStudy {
        #[arg(long, default_value_t = 0)]
        period: usize,
    },
    /// Sizing-LP runtime over growing horizons.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [24, 96, 384, 744])]
        steps: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Layout::Distributed)]
        layout: Layout,
    },
    /// Linear model and LP of one period at flat voltages.
    Linearize {
        #[arg(long, default_value_t = 0)]
        period: usize,
        /// Write B_v, B_r, the loss planes and the supporting currents as
        /// JSON to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the LP in CPLEX LP format to this file.
        #[arg(long)]
        lp: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. }) => 3,
        Some(Error::Unbounded | Error::Solver(_) | Error::NotConverging { .. } | Error::PowerFlowDiverged { .. }) => 4,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Library errors already embed their cause; skip repeated links.
            let mut message = err.to_string();
            for cause in err.chain().skip(1) {
                let cause = cause.to_string();
                if !message.contains(&cause) {
                    message = format!("{message}: {cause}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(exit_code(&err))
        }
    }
}
