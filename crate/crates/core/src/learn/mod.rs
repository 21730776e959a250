//! Policy learning on the batched environments: a short-horizon actor-critic
//! that backpropagates through the simulator and a clipped-surrogate PPO
//! baseline, sharing networks, evaluation and checkpoints.

pub mod checkpoint;
mod eval;
mod mlp;
mod optim;
mod ppo;
mod shac;
mod td;

pub use eval::{evaluate, EvalMetrics};
pub use mlp::{Mlp, MlpCache};
pub use optim::{clip_grad_norm, l2_norm, Adam, RunningNorm};
pub use ppo::{ppo_sample_grad, PpoConfig, PpoTrainer, SampleGrad};
pub use shac::{ShacConfig, ShacTrainer};
pub use td::{gae, td_lambda_targets};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{GradError, Real};
use crate::envs::{lane_seed, EnvError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("network dims {got:?} do not match environment dims {expected:?}")]
    DimMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Shac,
    Ppo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Shac => "shac",
            Algorithm::Ppo => "ppo",
        }
    }
}

/// Networks, normalizer, optimizer moments and counters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub policy_net: Mlp,
    pub value_net: Mlp,
    pub policy: Vec<f64>,
    /// State-independent log standard deviation of the PPO Gaussian head.
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
    pub target_value: Vec<f64>,
    pub norm: RunningNorm,
    /// Moments over `policy ++ log_std`.
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub env_steps: u64,
    pub iteration: u64,
    pub faults: u64,
}

/// Salts separating the random streams drawn from one master seed.
pub(crate) const INIT_STREAM: usize = usize::MAX;
pub(crate) const SHUFFLE_STREAM: usize = usize::MAX - 1;
pub(crate) const ACTION_STREAM_SALT: u64 = 0x5eed_ac71;

impl AgentState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        policy_hidden: &[usize],
        value_hidden: &[usize],
        init_log_std: f64,
        actor_lr: f64,
        critic_lr: f64,
        seed: u64,
    ) -> Self {
        let policy_net = Mlp::new(obs_dim, policy_hidden, act_dim, true);
        let value_net = Mlp::new(obs_dim, value_hidden, 1, false);
        let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, INIT_STREAM, 0));
        let policy = policy_net.init(&mut rng, 0.1);
        let value = value_net.init(&mut rng, 1.0);
        let n_actor = policy.len() + act_dim;
        AgentState {
            actor_opt: Adam::new(n_actor, actor_lr),
            critic_opt: Adam::new(value.len(), critic_lr),
            target_value: value.clone(),
            log_std: vec![init_log_std; act_dim],
            norm: RunningNorm::new(obs_dim),
            policy_net,
            value_net,
            policy,
            value,
            env_steps: 0,
            iteration: 0,
            faults: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy_net.output_dim()
    }

    pub fn check_dims(&self, obs_dim: usize, act_dim: usize) -> Result<(), LearnError> {
        if (self.obs_dim(), self.act_dim()) != (obs_dim, act_dim) {
            return Err(LearnError::DimMismatch {
                expected: (obs_dim, act_dim),
                got: (self.obs_dim(), self.act_dim()),
            });
        }
        Ok(())
    }

    /// Deterministic action (the tanh-squashed mean) for a raw observation.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.policy_net.forward(&self.policy, &self.norm.apply(obs))
    }

    pub fn value_of(&self, obs: &[f64], target: bool) -> f64 {
        let p = if target { &self.target_value } else { &self.value };
        self.value_net.forward(p, &self.norm.apply(obs))[0]
    }

    /// `target ← (1 − α)·target + α·online`.
    pub fn blend_target(&mut self, alpha: f64) {
        for (t, &v) in self.target_value.iter_mut().zip(&self.value) {
            *t = (1.0 - alpha) * *t + alpha * v;
        }
    }

    /// One pass of mean-squared regression of the online value net onto
    /// `targets`; returns the loss before the update.
    pub(crate) fn critic_step(&mut self, obs: &[&[f64]], targets: &[f64], clip: f64) -> f64 {
        let n = obs.len() as f64;
        let mut grad = vec![0.0; self.value.len()];
        let mut loss = 0.0;
        for (o, &y) in obs.iter().zip(targets) {
            let x = self.norm.apply(o);
            let cache = self.value_net.forward_cached(&self.value, &x);
            let err = cache.output()[0] - y;
            loss += err * err / n;
            self.value_net
                .backward(&self.value, &cache, &[2.0 * err / n], Some(&mut grad), None);
        }
        clip_grad_norm(&mut grad, clip);
        self.critic_opt.step(&mut self.value, &grad);
        loss
    }

    /// Applies a gradient over `policy ++ log_std` with the actor optimizer.
    pub(crate) fn actor_step(&mut self, grad: &[f64]) {
        let np = self.policy.len();
        let mut flat: Vec<f64> = self.policy.iter().chain(&self.log_std).copied().collect();
        self.actor_opt.step(&mut flat, grad);
        self.policy.copy_from_slice(&flat[..np]);
        self.log_std.copy_from_slice(&flat[np..]);
    }
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterMetrics {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean undiscounted return of episodes that ended during the iteration
    /// (NaN when none did).
    pub mean_return: f64,
    pub mean_reward: f64,
    pub episodes: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub grad_norm: f64,
    /// Cumulative faulted iterations.
    pub faults: u64,
    pub faulted: bool,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn is_finite_all<S: Real>(xs: &[S]) -> bool {
    xs.iter().all(|x| x.value().is_finite())
}
