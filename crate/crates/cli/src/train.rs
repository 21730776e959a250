use std::path::{Path, PathBuf};
use std::time::Instant;

use diffsim::envs::Env;
use diffsim::learn::checkpoint::{self, Checkpoint};
use diffsim::learn::{
    evaluate, AgentState, Algorithm, EvalMetrics, IterMetrics, PpoTrainer, ShacTrainer,
};

use crate::config::RunConfig;
use crate::output::{csv_writer, num, METRICS_SCHEMA, TIMING_SCHEMA};
use crate::{output_root, CliError};

pub const METRICS_COLUMNS: [&str; 14] = [
    "iteration",
    "env_steps",
    "mean_return",
    "mean_reward",
    "episodes",
    "actor_loss",
    "critic_loss",
    "grad_norm",
    "faults",
    "faulted",
    "eval_return",
    "eval_length",
    "eval_forward_velocity",
    "eval_falls",
];

pub enum Trainer {
    Shac(ShacTrainer),
    Ppo(PpoTrainer),
}

impl Trainer {
    pub fn new(cfg: &RunConfig, env: Env) -> Result<Self, CliError> {
        Ok(match cfg.algorithm {
            Algorithm::Shac => Trainer::Shac(
                ShacTrainer::new(env, cfg.shac.clone(), cfg.seed).map_err(CliError::Usage)?,
            ),
            Algorithm::Ppo => Trainer::Ppo(
                PpoTrainer::new(env, cfg.ppo.clone(), cfg.seed).map_err(CliError::Usage)?,
            ),
        })
    }

    pub fn iterate(&mut self) -> IterMetrics {
        match self {
            Trainer::Shac(t) => t.iterate(),
            Trainer::Ppo(t) => t.iterate(),
        }
    }

    pub fn agent(&self) -> &AgentState {
        match self {
            Trainer::Shac(t) => &t.agent,
            Trainer::Ppo(t) => &t.agent,
        }
    }

    pub fn env(&self) -> &Env {
        match self {
            Trainer::Shac(t) => &t.env,
            Trainer::Ppo(t) => &t.env,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub iterations: u64,
    pub env_steps: u64,
    pub faults: u64,
    pub final_eval: Option<EvalMetrics>,
}

/// `explicit`, else the config's `output_dir`, else
/// `<output root>/<algorithm>-<system>-s<seed>-<hash prefix>`.
pub fn resolve_out_dir(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return PathBuf::from(p);
    }
    output_root().join(format!(
        "{}-{}-s{}-{}",
        cfg.algorithm.name(),
        cfg.env.system.name(),
        cfg.seed,
        &cfg.hash()[..8]
    ))
}

/// Writes `config.resolved` and `config.sha256` into `out`.
pub fn write_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.resolved"), cfg.resolved_text())?;
    std::fs::write(out.join("config.sha256"), format!("{}\n", cfg.hash()))?;
    Ok(())
}

fn budget_reached(cfg: &RunConfig, iterations: u64, steps: u64) -> bool {
    cfg.train.iterations.is_some_and(|n| iterations >= n)
        || cfg.train.env_steps.is_some_and(|n| steps >= n)
}

fn save_checkpoint(cfg: &RunConfig, agent: &AgentState, path: &Path) -> Result<(), CliError> {
    let ck = Checkpoint {
        algorithm: cfg.algorithm.name().to_string(),
        config_hash: cfg.hash(),
        agent: agent.clone(),
    };
    checkpoint::save(&ck, path).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Trains to the configured budget (or until an evaluation reaches
/// `train.target_return`), writing `metrics.csv` (deterministic),
/// `timing.csv` (wall clock), checkpoints and the resolved config to `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let mut trainer = Trainer::new(cfg, env)?;
    write_config(cfg, out)?;
    let header: Vec<String> = METRICS_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut metrics = csv_writer(&out.join("metrics.csv"), METRICS_SCHEMA, &[], &header)?;
    let mut timing = csv_writer(
        &out.join("timing.csv"),
        TIMING_SCHEMA,
        &[],
        &["iteration".into(), "wall_seconds".into()],
    )?;
    let ckpt_dir = out.join("checkpoints");
    let t0 = Instant::now();
    let interval = cfg.train.eval_interval;
    let mut next_eval = interval;
    let mut iterations = 0u64;
    let mut steps = 0u64;
    let mut faults = 0u64;
    let mut final_eval = None;

    while !budget_reached(cfg, iterations, steps) {
        let m = trainer.iterate();
        iterations += 1;
        steps = m.env_steps;
        faults = m.faults;
        let last = budget_reached(cfg, iterations, steps);
        let over_faults = m.faults > cfg.train.max_faults;

        let mut due = last;
        if interval > 0 && steps >= next_eval {
            due = true;
            while next_eval <= steps {
                next_eval += interval;
            }
        }
        let ev = if due && !over_faults {
            Some(
                evaluate(
                    trainer.agent(),
                    trainer.env(),
                    cfg.train.eval_episodes,
                    cfg.train.eval_seed,
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?,
            )
        } else {
            None
        };

        let mut row = vec![
            m.iteration.to_string(),
            m.env_steps.to_string(),
            num(m.mean_return),
            num(m.mean_reward),
            m.episodes.to_string(),
            num(m.actor_loss),
            num(m.critic_loss),
            num(m.grad_norm),
            m.faults.to_string(),
            (m.faulted as u8).to_string(),
        ];
        match &ev {
            Some(e) => row.extend([
                num(e.mean_return),
                num(e.mean_length),
                num(e.mean_forward_velocity),
                e.falls.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        metrics.write_record(&row)?;
        metrics.flush()?;
        timing.write_record(&[m.iteration.to_string(), num(t0.elapsed().as_secs_f64())])?;
        timing.flush()?;

        if over_faults {
            return Err(CliError::Runtime(format!(
                "fault budget exceeded: {} faults (max {})",
                m.faults, cfg.train.max_faults
            )));
        }
        if cfg.train.checkpoint_interval > 0 && iterations.is_multiple_of(cfg.train.checkpoint_interval) {
            std::fs::create_dir_all(&ckpt_dir)?;
            save_checkpoint(
                cfg,
                trainer.agent(),
                &ckpt_dir.join(format!("iter_{iterations:06}.ckpt")),
            )?;
        }
        let hit = matches!((&ev, cfg.train.target_return), (Some(e), Some(r)) if e.mean_return >= r);
        if ev.is_some() {
            final_eval = ev;
        }
        if hit {
            break;
        }
    }
    if iterations > 0 {
        std::fs::create_dir_all(&ckpt_dir)?;
        save_checkpoint(cfg, trainer.agent(), &ckpt_dir.join("final.ckpt"))?;
    }
    Ok(TrainSummary {
        out_dir: out.to_path_buf(),
        iterations,
        env_steps: steps,
        faults,
        final_eval,
    })
}
