//! Run configuration: a TOML tree with `--set key.path=value` overrides.
//!
//! Loading starts from the defaults for the selected system, merges the
//! file on top, then the overrides. The fully resolved tree is what gets
//! written to `config.resolved` and hashed.

use std::path::Path;

use diffsim::actuation::ActuatorConfig;
use diffsim::contact::ContactModelConfig;
use diffsim::dynamics::SystemId;
use diffsim::envs::{Env, EnvConfig};
use diffsim::learn::{Algorithm, PpoConfig, ShacConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

/// Training budget, evaluation cadence and fault handling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Stop after this many iterations.
    pub iterations: Option<u64>,
    /// Stop once this many environment steps have been consumed.
    pub env_steps: Option<u64>,
    /// Evaluate whenever env steps cross a multiple of this (0: final only).
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Write a checkpoint every this many iterations (0: final only).
    pub checkpoint_interval: u64,
    /// Abort with a runtime fault once more faults than this have occurred.
    pub max_faults: u64,
    /// Stop early once an evaluation's mean return reaches this.
    pub target_return: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: None,
            env_steps: Some(200_000),
            eval_interval: 0,
            eval_episodes: 8,
            eval_seed: 12345,
            checkpoint_interval: 0,
            max_faults: 10,
            target_return: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Run directory; falls back to a directory under the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub contact: ContactModelConfig,
    pub actuator: ActuatorConfig,
    pub shac: ShacConfig,
    pub ppo: PpoConfig,
}

impl RunConfig {
    pub fn defaults(system: SystemId) -> Self {
        RunConfig {
            algorithm: Algorithm::Shac,
            seed: 0,
            output_dir: None,
            train: TrainConfig::default(),
            env: EnvConfig::for_system(system),
            contact: ContactModelConfig::default(),
            actuator: ActuatorConfig::default(),
            shac: ShacConfig::default(),
            ppo: PpoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: String| CliError::Usage(e);
        self.env.validate().map_err(usage)?;
        self.contact.validate().map_err(usage)?;
        self.actuator.validate().map_err(usage)?;
        match self.algorithm {
            Algorithm::Shac => self.shac.validate().map_err(usage)?,
            Algorithm::Ppo => self.ppo.validate().map_err(usage)?,
        }
        if self.train.iterations.is_none() && self.train.env_steps.is_none() {
            return Err(usage("train: set iterations or env_steps".into()));
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<Env, CliError> {
        Env::new(
            self.env.clone(),
            self.contact.clone(),
            self.actuator.clone(),
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Canonical TOML text of the configuration without `output_dir`.
    pub fn resolved_text(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        toml::to_string(&c).expect("run config serializes")
    }

    /// SHA-256 of [`resolved_text`](Self::resolved_text), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut user: Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let system = match user.get("env").and_then(|e| e.get("system")) {
            Some(v) => SystemId::deserialize(v.clone())
                .map_err(|e| CliError::Usage(format!("env.system: {e}")))?,
            None => SystemId::Hopper2d,
        };
        let mut base = Table::try_from(RunConfig::defaults(system)).expect("defaults serialize");
        merge(&mut base, user);
        let cfg: RunConfig = Value::Table(base)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c = value`; the value is read as TOML, or as a bare string if
/// that fails.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("override `{spec}` has an empty key")));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override `{key}`: `{p}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
