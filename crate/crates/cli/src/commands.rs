//! The four experiment commands: scenario generation, training,
//! controller evaluation and the runtime comparison.

use std::path::{Path, PathBuf};

use chaintwin_core::agent::QTable;
use chaintwin_core::consensus::ProtocolId;
use chaintwin_core::control::{train_offline, AgentController, Controller, NullTime, TimeSource};
use chaintwin_core::rng::derive_seed;
use chaintwin_core::runner::{run_system, RunContext, RunOutput};
use chaintwin_core::scenario::{build_workload, generate_scenario, Scenario, WorkloadLabel};

use crate::config::ExperimentConfig;
use crate::formats;
use crate::timing::WallClock;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadChoice {
    Wl1,
    Wl2,
}

impl WorkloadChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "wl1" => Ok(WorkloadChoice::Wl1),
            "wl2" => Ok(WorkloadChoice::Wl2),
            other => Err(CliError::Config(format!(
                "unknown workload `{other}` (expected wl1 or wl2)"
            ))),
        }
    }

    fn label(self) -> WorkloadLabel {
        match self {
            WorkloadChoice::Wl1 => WorkloadLabel::Wl1,
            WorkloadChoice::Wl2 => WorkloadLabel::Wl2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    PbftStatic,
    BigfootStatic,
    Agent,
    AgentPlus,
    SimOnly,
}

impl ControllerChoice {
    pub const ALL: [ControllerChoice; 5] = [
        ControllerChoice::PbftStatic,
        ControllerChoice::BigfootStatic,
        ControllerChoice::Agent,
        ControllerChoice::AgentPlus,
        ControllerChoice::SimOnly,
    ];

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "pbft-static" => Ok(ControllerChoice::PbftStatic),
            "bigfoot-static" => Ok(ControllerChoice::BigfootStatic),
            "agent" => Ok(ControllerChoice::Agent),
            "agent+" | "agent-plus" => Ok(ControllerChoice::AgentPlus),
            "sim-only" => Ok(ControllerChoice::SimOnly),
            other => Err(CliError::Config(format!("unknown controller `{other}`"))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>, CliError> {
        s.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Self::parse)
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            ControllerChoice::PbftStatic => "pbft-static",
            ControllerChoice::BigfootStatic => "bigfoot-static",
            ControllerChoice::Agent => "agent",
            ControllerChoice::AgentPlus => "agent+",
            ControllerChoice::SimOnly => "sim-only",
        }
    }

    pub fn needs_qtable(self) -> bool {
        matches!(self, ControllerChoice::Agent | ControllerChoice::AgentPlus)
    }

    fn build(self, config: &ExperimentConfig, table: Option<&QTable>) -> Controller {
        match self {
            ControllerChoice::PbftStatic => Controller::Static(ProtocolId::Pbft),
            ControllerChoice::BigfootStatic => Controller::Static(ProtocolId::Bigfoot),
            ControllerChoice::SimOnly => Controller::SimOnly,
            ControllerChoice::Agent | ControllerChoice::AgentPlus => {
                let mut agent = AgentController::new(
                    table.cloned().unwrap_or_default(),
                    config.epsilon_eval,
                    self == ControllerChoice::AgentPlus,
                );
                agent.online_updates = config.online_updates_eval;
                Controller::Agent(agent)
            }
        }
    }
}

fn workload_params(
    config: &ExperimentConfig,
    workload: WorkloadChoice,
) -> &chaintwin_core::scenario::ScenarioParams {
    match workload {
        WorkloadChoice::Wl1 => &config.wl1,
        WorkloadChoice::Wl2 => &config.wl2,
    }
}

/// Scenarios for an evaluation, either loaded from a file (one scenario)
/// or regenerated from the config (eval_seeds of them).
fn evaluation_scenarios(
    config: &ExperimentConfig,
    workload: WorkloadChoice,
    scenario_in: Option<&Path>,
) -> Result<Vec<Scenario>, CliError> {
    match scenario_in {
        Some(path) => Ok(vec![formats::load_scenario(path)?]),
        None => {
            let workload = build_workload(
                workload.label(),
                workload_params(config, workload),
                config.master_seed,
                config.eval_seeds as usize,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(workload.scenarios)
        }
    }
}

fn run_one(
    config: &ExperimentConfig,
    scenario: &Scenario,
    choice: ControllerChoice,
    table: Option<&QTable>,
    seed_index: u32,
    timer: &mut dyn TimeSource,
) -> RunOutput {
    let mut controller = choice.build(config, table);
    let ctx = RunContext {
        system: &config.system,
        twin: &config.twin,
        agent: &config.agent,
        run_seed: derive_seed(config.master_seed, "eval-run", seed_index as u64),
    };
    run_system(scenario, &mut controller, &ctx, timer)
}

/// `gen-scenario`: write one deterministic scenario file.
pub fn cmd_gen_scenario(
    config: &ExperimentConfig,
    workload: WorkloadChoice,
    index: u32,
    out: &Path,
) -> Result<(), CliError> {
    let params = workload_params(config, workload);
    let seed = derive_seed(config.master_seed, workload.label().as_str(), index as u64);
    let scenario = generate_scenario(params, seed).map_err(|e| CliError::Config(e.to_string()))?;
    formats::write_file(out, &formats::scenario_to_string(&scenario)?)?;
    println!(
        "wrote {} (workload {}, index {index}, seed {seed})",
        out.display(),
        workload.label()
    );
    Ok(())
}

/// `train`: offline training on WL1; writes the q-table and the
/// per-episode learning curve.
pub fn cmd_train(
    config: &ExperimentConfig,
    out_dir: &Path,
    scenario_in: Option<&Path>,
) -> Result<(), CliError> {
    let workload = match scenario_in {
        Some(path) => chaintwin_core::scenario::Workload {
            label: WorkloadLabel::Custom,
            scenarios: vec![formats::load_scenario(path)?],
        },
        None => build_workload(
            WorkloadLabel::Wl1,
            &config.wl1,
            config.master_seed,
            config.train_scenarios as usize,
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let outcome = train_offline(
        QTable::new(),
        &workload,
        &config.system,
        &config.twin,
        &config.agent,
        config.episodes,
        config.synthetic_per_episode,
        config.master_seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    formats::write_file(
        &out_dir.join("qtable.txt"),
        &formats::qtable_text(&outcome.table),
    )?;
    formats::write_file(
        &out_dir.join("learning_curve.csv"),
        &formats::learning_curve_csv(&outcome.curve),
    )?;
    let episodes = outcome.curve.len();
    let mean_last = outcome.curve.iter().rev().take(10).sum::<f64>() / 10f64.min(episodes as f64);
    println!(
        "trained {episodes} episodes on {} scenarios; {} states learned; last-10 mean latency {:.4}s",
        workload.scenarios.len(),
        outcome.table.len() / 2,
        mean_last
    );
    Ok(())
}

/// `evaluate`: run the requested controllers over paired scenarios and
/// write the results CSV (plus optional per-run detail CSVs).
#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    workload: WorkloadChoice,
    controllers: &[ControllerChoice],
    qtable_path: Option<&Path>,
    scenario_in: Option<&Path>,
    out_dir: &Path,
    detail_dir: Option<&Path>,
) -> Result<(), CliError> {
    if controllers.is_empty() {
        return Err(CliError::Config("no controllers requested".into()));
    }
    let table = match qtable_path {
        Some(path) => Some(formats::load_qtable(path)?),
        None => None,
    };
    if table.is_none() {
        if let Some(c) = controllers.iter().find(|c| c.needs_qtable()) {
            return Err(CliError::MissingArtifact(format!(
                "controller {} needs --qtable",
                c.name()
            )));
        }
    }

    let scenarios = evaluation_scenarios(config, workload, scenario_in)?;
    let mut rows = Vec::new();
    for &choice in controllers {
        for (i, scenario) in scenarios.iter().enumerate() {
            let out = run_one(
                config,
                scenario,
                choice,
                table.as_ref(),
                i as u32,
                &mut NullTime,
            );
            rows.push(formats::ResultRow {
                label: config.label.clone(),
                workload: match workload {
                    WorkloadChoice::Wl1 => "wl1".into(),
                    WorkloadChoice::Wl2 => "wl2".into(),
                },
                controller: choice.name(),
                seed_index: i as u32,
                scenario_seed: scenario.seed,
                mean_latency_secs: out
                    .mean_latency_secs
                    .unwrap_or_else(|| config.system.penalty_latency_secs(scenario.params.ts_ms)),
                simulator_calls: out.simulator_calls,
                decisions: out.decisions.len(),
                txs_committed: out.txs_committed,
            });
            if let Some(dir) = detail_dir {
                let stem = format!("{}_{i}", choice.name().replace('+', "-plus"));
                formats::write_file(
                    &dir.join(format!("blocks_{stem}.csv")),
                    &formats::blocks_csv(&out.blocks, &out.missed),
                )?;
                formats::write_file(
                    &dir.join(format!("consensus_{stem}.csv")),
                    &formats::consensus_csv(&out.blocks),
                )?;
                formats::write_file(
                    &dir.join(format!("twin_{stem}.csv")),
                    &formats::twin_csv(&out.twin_trace),
                )?;
                formats::write_file(
                    &dir.join(format!("decisions_{stem}.csv")),
                    &formats::decisions_csv(&out.decisions),
                )?;
            }
        }
    }
    let path = out_dir.join("results.csv");
    formats::write_file(&path, &formats::results_csv(&rows))?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// `compare-runtime`: agent+ versus the simulation-only optimiser on
/// identical workloads, with wall-clock timing around decision code only.
pub fn cmd_compare_runtime(
    config: &ExperimentConfig,
    qtable_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let table = formats::load_qtable(qtable_path)?;
    let scenarios = evaluation_scenarios(config, WorkloadChoice::Wl2, None)?;
    let mut rows = Vec::new();
    for &choice in &[ControllerChoice::AgentPlus, ControllerChoice::SimOnly] {
        for (i, scenario) in scenarios.iter().enumerate() {
            let mut clock = WallClock::new();
            let out = run_one(config, scenario, choice, Some(&table), i as u32, &mut clock);
            rows.push(formats::RuntimeRow {
                controller: choice.name(),
                seed_index: i as u32,
                decisions: out.decisions.len(),
                simulator_calls: out.simulator_calls,
                total_decision_wall_ns: out.decision_wall_ns,
                mean_latency_secs: out
                    .mean_latency_secs
                    .unwrap_or_else(|| config.system.penalty_latency_secs(scenario.params.ts_ms)),
            });
            let stem = format!("{}_{i}", choice.name().replace('+', "-plus"));
            formats::write_file(
                &out_dir.join(format!("decisions_{stem}.csv")),
                &formats::decisions_csv(&out.decisions),
            )?;
        }
    }
    let path = out_dir.join("runtime.csv");
    formats::write_file(&path, &formats::runtime_csv(&rows))?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

pub fn default_out_dir(out_dir: Option<PathBuf>) -> PathBuf {
    out_dir.unwrap_or_else(|| PathBuf::from("out"))
}
