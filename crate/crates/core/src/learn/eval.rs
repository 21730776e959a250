use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgentState, LearnError};
use crate::envs::{Env, EnvError, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub mean_forward_velocity: f64,
    pub mean_command: f64,
    /// Episodes that ended by falling.
    pub falls: usize,
}

/// Runs `episodes` episodes with the mean action, one per lane of a batch
/// seeded with `seed`. Has no effect on the agent.
pub fn evaluate(
    agent: &AgentState,
    env: &Env,
    episodes: usize,
    seed: u64,
) -> Result<EvalMetrics, LearnError> {
    agent.check_dims(env.obs_dim(), env.act_dim())?;
    let runs: Vec<Result<(f64, usize, f64, f64, bool), LearnError>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut lane = env.reset_lane(seed, i, 0);
            let command = lane.params.command;
            let mut obs = env.observe_lane(&lane);
            let (mut ret, mut len, mut vel) = (0.0, 0usize, 0.0);
            loop {
                let action = agent.act(&obs);
                let (next, r, info) = env
                    .step_lane(&mut lane, &action)
                    .map_err(|source| EnvError::Step { lane: i, source })?;
                ret += r;
                len += 1;
                let last = info.terminal_obs.as_ref().unwrap_or(&next);
                vel += last[3];
                if info.done {
                    let fell = info.termination == Termination::Fall;
                    return Ok((ret, len, vel / len as f64, command, fell));
                }
                obs = next;
            }
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = episodes.max(1) as f64;
    Ok(EvalMetrics {
        episodes,
        mean_return: runs.iter().map(|r| r.0).sum::<f64>() / n,
        mean_length: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        mean_forward_velocity: runs.iter().map(|r| r.2).sum::<f64>() / n,
        mean_command: runs.iter().map(|r| r.3).sum::<f64>() / n,
        falls: runs.iter().filter(|r| r.4).count(),
    })
}
