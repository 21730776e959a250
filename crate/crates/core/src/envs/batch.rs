use rayon::prelude::*;

use super::{Env, EnvError, LaneState, StepInfo};

/// `N` causally independent lanes. Each lane owns its random stream, so
/// results do not depend on the batch size or on how lanes are scheduled.
#[derive(Debug, Clone)]
pub struct EnvBatch {
    pub env: Env,
    pub lanes: Vec<LaneState>,
}

#[derive(Debug, Clone)]
pub struct BatchStep {
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub infos: Vec<StepInfo>,
}

impl EnvBatch {
    pub fn new(env: Env, n: usize, master_seed: u64) -> Self {
        let mut b = EnvBatch { env, lanes: vec![] };
        b.reset(n, master_seed);
        b
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Resets every lane to episode 0 of its stream and returns observations.
    pub fn reset(&mut self, n: usize, master_seed: u64) -> Vec<Vec<f64>> {
        self.lanes = (0..n)
            .map(|i| self.env.reset_lane(master_seed, i, 0))
            .collect();
        self.observations()
    }

    /// Starts a fresh episode on one lane, advancing its stream.
    pub fn reset_one(&mut self, i: usize) {
        let l = &self.lanes[i];
        self.lanes[i] = self.env.reset_lane(l.master_seed, l.lane, l.episode + 1);
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        self.lanes.iter().map(|l| self.env.observe_lane(l)).collect()
    }

    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<BatchStep, EnvError> {
        if actions.len() != self.lanes.len() {
            return Err(EnvError::BatchSize {
                expected: self.lanes.len(),
                got: actions.len(),
            });
        }
        let env = &self.env;
        let results: Vec<_> = self
            .lanes
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(lane, a)| {
                let idx = lane.lane;
                env.step_lane(lane, a)
                    .map_err(|source| EnvError::Step { lane: idx, source })
            })
            .collect();
        let mut out = BatchStep {
            obs: Vec::with_capacity(results.len()),
            rewards: Vec::with_capacity(results.len()),
            dones: Vec::with_capacity(results.len()),
            infos: Vec::with_capacity(results.len()),
        };
        for r in results {
            let (obs, rew, info) = r?;
            out.obs.push(obs);
            out.rewards.push(rew);
            out.dones.push(info.done);
            out.infos.push(info);
        }
        Ok(out)
    }
}
