//! Experiment CLI for the blockchain digital-twin simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chaintwin_cli::commands::{self, ControllerChoice, WorkloadChoice};
use chaintwin_cli::config::ExperimentConfig;
use chaintwin_cli::CliError;

#[derive(Parser)]
#[command(
    name = "chaintwin",
    about = "Permissioned-blockchain simulator with a digital-twin consensus controller",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one scenario file.
    GenScenario {
        #[command(flatten)]
        common: Common,
        /// Which workload's parameters to draw from.
        #[arg(long, default_value = "wl1")]
        workload: String,
        /// Scenario index within the workload.
        #[arg(long, default_value_t = 0)]
        index: u32,
        /// Where to write the scenario file.
        #[arg(long)]
        scenario_out: PathBuf,
    },
    /// Train the Q-learning agent offline on WL1.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the config's episode count.
        #[arg(long)]
        episodes: Option<u32>,
        /// Train on one saved scenario instead of the generated pool.
        #[arg(long)]
        scenario_in: Option<PathBuf>,
    },
    /// Evaluate controllers on paired scenarios.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Workload to evaluate on.
        #[arg(long, default_value = "wl2")]
        workload: String,
        /// Comma-separated controllers: pbft-static, bigfoot-static,
        /// agent, agent+, sim-only.
        #[arg(
            long,
            default_value = "pbft-static,bigfoot-static,agent,agent+,sim-only"
        )]
        controllers: String,
        /// Trained q-table (required for agent and agent+).
        #[arg(long)]
        qtable: Option<PathBuf>,
        /// Evaluate on one saved scenario instead of the generated pool.
        #[arg(long)]
        scenario_in: Option<PathBuf>,
        /// Freeze the q-table during evaluation (no online updates).
        #[arg(long)]
        freeze_qtable: bool,
        /// Also write per-run block/consensus/twin/decision CSVs here.
        #[arg(long)]
        detail_dir: Option<PathBuf>,
    },
    /// Compare agent+ and sim-only decision runtimes on WL2.
    CompareRuntime {
        #[command(flatten)]
        common: Common,
        /// Trained q-table.
        #[arg(long)]
        qtable: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::GenScenario {
            common,
            workload,
            index,
            scenario_out,
        } => {
            let config = load_config(&common)?;
            let workload = WorkloadChoice::parse(&workload)?;
            commands::cmd_gen_scenario(&config, workload, index, &scenario_out)
        }
        Command::Train {
            common,
            episodes,
            scenario_in,
        } => {
            let mut config = load_config(&common)?;
            if let Some(episodes) = episodes {
                config.episodes = episodes;
                config.validate()?;
            }
            let out_dir = commands::default_out_dir(common.out_dir);
            commands::cmd_train(&config, &out_dir, scenario_in.as_deref())
        }
        Command::Evaluate {
            common,
            workload,
            controllers,
            qtable,
            scenario_in,
            freeze_qtable,
            detail_dir,
        } => {
            let mut config = load_config(&common)?;
            if freeze_qtable {
                config.online_updates_eval = false;
            }
            let workload = WorkloadChoice::parse(&workload)?;
            let controllers = ControllerChoice::parse_list(&controllers)?;
            let out_dir = commands::default_out_dir(common.out_dir);
            commands::cmd_evaluate(
                &config,
                workload,
                &controllers,
                qtable.as_deref(),
                scenario_in.as_deref(),
                &out_dir,
                detail_dir.as_deref(),
            )
        }
        Command::CompareRuntime { common, qtable } => {
            let config = load_config(&common)?;
            let out_dir = commands::default_out_dir(common.out_dir);
            commands::cmd_compare_runtime(&config, &qtable, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
