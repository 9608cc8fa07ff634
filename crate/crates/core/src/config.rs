//! Run configuration shared by every command: one TOML file with a section
//! per subsystem, plus dot-path overrides (`sim.n_ues=20`).

use crate::controllers::ControllerKind;
use crate::ppo::PpoConfig;
use crate::predictors::PredictorConfig;
use crate::sim::SimConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Offline training stage: trace corpus and policy training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Scenarios in the predictor training corpus.
    pub n_trace_runs: usize,
    pub policy_episodes: usize,
    /// UEs (agents) per training scenario.
    pub policy_ues: usize,
    /// Distinct training scenarios the episodes cycle through; 0 = fresh
    /// scenario per episode.
    pub scenario_pool: usize,
    /// Rollout cap in rApp periods per episode.
    pub horizon: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n_trace_runs: 3,
            policy_episodes: 200,
            policy_ues: 20,
            scenario_pool: 10,
            horizon: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub n_runs: usize,
    pub controllers: Vec<ControllerKind>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n_runs: 30,
            controllers: ControllerKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Base seed; training and campaign scenarios derive disjoint streams.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub predictors: PredictorConfig,
    pub ppo: PpoConfig,
    pub training: TrainingConfig,
    pub campaign: CampaignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 2024,
            out_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            predictors: PredictorConfig::default(),
            ppo: PpoConfig::default(),
            training: TrainingConfig::default(),
            campaign: CampaignConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::FormatVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.campaign.n_runs == 0 {
            return Err(Error::InvalidInput("campaign.n_runs must be >= 1".into()));
        }
        if self.campaign.controllers.is_empty() {
            return Err(Error::InvalidInput("campaign.controllers is empty".into()));
        }
        if self.training.n_trace_runs == 0 || self.training.policy_ues == 0 || self.training.horizon == 0 {
            return Err(Error::InvalidInput(
                "training.n_trace_runs, policy_ues and horizon must be >= 1".into(),
            ));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::InvalidInput("out_dir is empty".into()));
        }
        if self.out_dir.is_file() {
            return Err(Error::InvalidInput(format!("out_dir {} is a file", self.out_dir.display())));
        }
        let p = &self.predictors;
        if p.window == 0 || p.k == 0 || !(p.test_fraction > 0.0 && p.test_fraction < 1.0) {
            return Err(Error::InvalidInput("predictors: window, k >= 1 and test_fraction in (0, 1)".into()));
        }
        self.sim.validate()?;
        self.ppo.validate()
    }

    /// Applies `key=value` overrides. Keys are dot paths into the TOML
    /// structure; values are TOML literals, with bare words taken as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = toml::Table::try_from(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("override '{o}' is not key=value")))?;
            set_path(&mut root, key.trim(), parse_literal(raw.trim()))?;
        }
        let cfg: Self = root.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| unknown(key))?;
    let mut table = root;
    for p in parts {
        table = match table.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(unknown(key)),
        };
    }
    // Optional fields absent from the serialized form can still be set.
    let optional = matches!(last, "cell_capacity" | "max_features" | "lb_coverage");
    if !table.contains_key(last) && !optional {
        return Err(unknown(key));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn unknown(key: &str) -> Error {
    Error::InvalidInput(format!("unknown config key '{key}'"))
}
