use std::path::Path;

use diffsim::contact::ContactKind;
use diffsim::learn::checkpoint::{self, Checkpoint};
use diffsim::learn::{evaluate, EvalMetrics};

use crate::config::RunConfig;
use crate::output::{csv_writer, num, EVAL_SCHEMA};
use crate::train::write_config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Evaluate under this contact model instead of the configured one.
    pub contact: Option<ContactKind>,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    checkpoint::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Evaluates a checkpoint and writes `metrics.csv` plus the resolved
/// config (with any contact override applied) to `out`.
pub fn eval(
    cfg: &RunConfig,
    ckpt_path: &Path,
    opts: &EvalOptions,
    out: &Path,
) -> Result<EvalMetrics, CliError> {
    let mut cfg = cfg.clone();
    if let Some(kind) = opts.contact {
        cfg.contact.kind = kind;
    }
    let ck = load_checkpoint(ckpt_path)?;
    let env = cfg.build_env()?;
    ck.agent
        .check_dims(env.obs_dim(), env.act_dim())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let m = evaluate(&ck.agent, &env, opts.episodes, opts.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    write_config(&cfg, out)?;
    let header = [
        "checkpoint_iteration",
        "checkpoint_env_steps",
        "contact",
        "episodes",
        "seed",
        "mean_return",
        "mean_length",
        "mean_forward_velocity",
        "mean_command",
        "falls",
    ]
    .map(String::from);
    let mut w = csv_writer(&out.join("metrics.csv"), EVAL_SCHEMA, &[], &header)?;
    w.write_record([
        ck.agent.iteration.to_string(),
        ck.agent.env_steps.to_string(),
        cfg.contact.kind.name().to_string(),
        m.episodes.to_string(),
        opts.seed.to_string(),
        num(m.mean_return),
        num(m.mean_length),
        num(m.mean_forward_velocity),
        num(m.mean_command),
        m.falls.to_string(),
    ])?;
    w.flush()?;
    Ok(m)
}
