//! Experiment configuration: one TOML record that fully determines a run.
//!
//! Every field has a default, so `chaintwin train` works with no config
//! file at all; anything provided overrides the default. Unknown keys are
//! rejected so typos surface as config errors.

use std::path::Path;

use chaintwin_core::agent::AgentConfig;
use chaintwin_core::runner::SystemConfig;
use chaintwin_core::scenario::{default_wl1_params, default_wl2_params, ScenarioParams};
use chaintwin_core::twin::TwinConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Training episodes over the WL1 scenario pool.
    pub episodes: u32,
    /// Scenarios per workload during evaluation; controllers are paired on
    /// identical scenarios and run seeds.
    pub eval_seeds: u32,
    /// Scenarios in the training pool, cycled across episodes.
    pub train_scenarios: u32,
    /// Generator-drawn what-if scenarios injected per training episode.
    pub synthetic_per_episode: u32,
    /// Exploration rate during evaluation runs.
    pub epsilon_eval: f64,
    /// Whether agents keep learning from real rewards during evaluation;
    /// disabled by --freeze-qtable.
    pub online_updates_eval: bool,
    /// Label stamped into result rows.
    pub label: String,
    pub system: SystemConfig,
    pub agent: AgentConfig,
    pub twin: TwinConfig,
    pub wl1: ScenarioParams,
    pub wl2: ScenarioParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 42,
            episodes: 200,
            eval_seeds: 10,
            train_scenarios: 10,
            synthetic_per_episode: 5,
            epsilon_eval: 0.0,
            online_updates_eval: true,
            label: "latency".to_string(),
            system: SystemConfig::default(),
            agent: AgentConfig::default(),
            twin: TwinConfig::default(),
            wl1: default_wl1_params(),
            wl2: default_wl2_params(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let config = match path {
            None => ExperimentConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.agent
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.wl1
            .validate()
            .map_err(|e| CliError::Config(format!("wl1: {e}")))?;
        self.wl2
            .validate()
            .map_err(|e| CliError::Config(format!("wl2: {e}")))?;
        if self.episodes == 0 {
            return Err(CliError::Config("episodes must be positive".into()));
        }
        if self.eval_seeds == 0 || self.train_scenarios == 0 {
            return Err(CliError::Config("need at least one scenario".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_eval) {
            return Err(CliError::Config("epsilon_eval must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let config = ExperimentConfig::default();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.master_seed, config.master_seed);
        assert_eq!(back.wl2.speed_range, config.wl2.speed_range);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<ExperimentConfig>("not_a_field = 1").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn partial_override() {
        let config: ExperimentConfig = toml::from_str("episodes = 7").unwrap();
        assert_eq!(config.episodes, 7);
        assert_eq!(config.master_seed, 42);
    }
}
