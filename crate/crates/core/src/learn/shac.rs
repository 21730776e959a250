use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    clip_grad_norm, is_finite_all, mean, td_lambda_targets, AgentState, IterMetrics, LearnError,
    SHUFFLE_STREAM,
};
use crate::diffcore::{lift, values, Tape, Var};
use crate::dynamics::GeneralizedState;
use crate::envs::{lane_seed, Env, EnvError, LaneState, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShacConfig {
    /// Window length H in control steps.
    pub horizon: usize,
    pub gamma: f64,
    /// TD(λ) parameter of the critic targets.
    pub lambda: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub critic_minibatches: usize,
    /// Target blend α: `target ← (1 − α)·target + α·online`.
    pub target_alpha: f64,
    /// Maximum actor gradient norm.
    pub grad_clip: f64,
    pub lanes: usize,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Learning rates decay linearly to zero over this many iterations; 0 keeps them constant.
    pub lr_decay_iterations: u64,
}

impl Default for ShacConfig {
    fn default() -> Self {
        ShacConfig {
            horizon: 24,
            gamma: 0.99,
            lambda: 0.95,
            actor_lr: 2e-3,
            critic_lr: 2e-3,
            critic_epochs: 8,
            critic_minibatches: 4,
            target_alpha: 0.2,
            grad_clip: 1.0,
            lanes: 64,
            policy_hidden: vec![128, 64],
            value_hidden: vec![128, 64],
            lr_decay_iterations: 0,
        }
    }
}

impl ShacConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=64).contains(&self.horizon) {
            return Err("shac.horizon must lie in [1, 64]".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err("shac.gamma and shac.lambda must lie in [0, 1]".into());
        }
        if !(self.target_alpha > 0.0 && self.target_alpha <= 1.0) {
            return Err("shac.target_alpha must lie in (0, 1]".into());
        }
        if self.lanes == 0 || self.critic_minibatches == 0 {
            return Err("shac.lanes and shac.critic_minibatches must be positive".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.grad_clip > 0.0) {
            return Err("shac learning rates and grad_clip must be positive".into());
        }
        Ok(())
    }
}

/// One lane's differentiable window.
#[derive(Debug, Clone)]
pub struct LaneWindow {
    pub loss: f64,
    /// ∂loss/∂policy-parameters.
    pub grad: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub ends: Vec<bool>,
    /// Observation to bootstrap from after each step; `None` after a fall.
    pub boot: Vec<Option<Vec<f64>>>,
    pub lane: LaneState,
    pub episode_return: f64,
    pub completed: Vec<f64>,
}

pub struct ShacTrainer {
    pub cfg: ShacConfig,
    pub env: Env,
    pub agent: AgentState,
    pub lanes: Vec<LaneState>,
    episode_returns: Vec<f64>,
    seed: u64,
}

impl ShacTrainer {
    pub fn new(env: Env, cfg: ShacConfig, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        let agent = AgentState::new(
            env.obs_dim(),
            env.act_dim(),
            &cfg.policy_hidden,
            &cfg.value_hidden,
            0.0,
            cfg.actor_lr,
            cfg.critic_lr,
            seed,
        );
        Ok(Self::with_agent(env, cfg, agent, seed))
    }

    pub fn with_agent(env: Env, cfg: ShacConfig, agent: AgentState, seed: u64) -> Self {
        let lanes = (0..cfg.lanes).map(|i| env.reset_lane(seed, i, 0)).collect();
        ShacTrainer {
            episode_returns: vec![0.0; cfg.lanes],
            cfg,
            env,
            agent,
            lanes,
            seed,
        }
    }

    /// Differentiable windows of every lane, without updating anything.
    pub fn rollout(&self) -> Result<Vec<LaneWindow>, LearnError> {
        let policy = Arc::new(self.agent.policy.clone());
        let target = Arc::new(self.agent.target_value.clone());
        let n = self.lanes.len();
        let results: Vec<Result<LaneWindow, LearnError>> = self
            .lanes
            .par_iter()
            .zip(self.episode_returns.par_iter())
            .map(|(lane, &ret)| {
                lane_window(&self.env, &self.agent, &self.cfg, &policy, &target, lane, ret, n)
            })
            .collect();
        results.into_iter().collect()
    }

    /// Summed actor loss and gradient over lanes, reduced in lane order.
    pub fn actor_gradient(&self) -> Result<(f64, Vec<f64>), LearnError> {
        let windows = self.rollout()?;
        Ok(reduce(&windows, self.agent.policy.len()))
    }

    fn fault(&mut self) -> IterMetrics {
        for (i, l) in self.lanes.iter_mut().enumerate() {
            *l = self.env.reset_lane(l.master_seed, l.lane, l.episode + 1);
            self.episode_returns[i] = 0.0;
        }
        let a = &mut self.agent;
        a.faults += 1;
        a.iteration += 1;
        a.env_steps += (self.cfg.lanes * self.cfg.horizon) as u64;
        IterMetrics {
            iteration: a.iteration,
            env_steps: a.env_steps,
            mean_return: f64::NAN,
            mean_reward: f64::NAN,
            episodes: 0,
            actor_loss: f64::NAN,
            critic_loss: f64::NAN,
            grad_norm: f64::NAN,
            faults: a.faults,
            faulted: true,
        }
    }

    /// Rollout, actor update, critic regression and target blend. Simulation
    /// and gradient faults abort the iteration and reset every lane.
    pub fn iterate(&mut self) -> IterMetrics {
        let windows = match self.rollout() {
            Ok(w) => w,
            Err(_) => return self.fault(),
        };
        let np = self.agent.policy.len();
        let (loss, mut grad) = reduce(&windows, np);
        if !loss.is_finite() || !is_finite_all(&grad) {
            return self.fault();
        }
        if self.cfg.lr_decay_iterations > 0 {
            let frac = 1.0 - self.agent.iteration as f64 / self.cfg.lr_decay_iterations as f64;
            self.agent.actor_opt.lr = self.cfg.actor_lr * frac.max(0.0);
            self.agent.critic_opt.lr = self.cfg.critic_lr * frac.max(0.0);
        }
        let grad_norm = clip_grad_norm(&mut grad, self.cfg.grad_clip);
        grad.extend(std::iter::repeat_n(0.0, self.agent.act_dim()));
        self.agent.actor_step(&grad);

        // critic on the detached window
        let mut obs: Vec<&[f64]> = vec![];
        let mut targets = vec![];
        for w in &windows {
            let next: Vec<f64> = w
                .boot
                .iter()
                .map(|b| b.as_ref().map_or(0.0, |o| self.agent.value_of(o, true)))
                .collect();
            targets.extend(td_lambda_targets(
                &w.rewards,
                &next,
                &w.ends,
                self.cfg.gamma,
                self.cfg.lambda,
            ));
            obs.extend(w.obs.iter().map(|o| o.as_slice()));
        }
        let critic_loss = self.fit_critic(&obs, &targets);
        self.agent.blend_target(self.cfg.target_alpha);

        let all_obs: Vec<Vec<f64>> = windows.iter().flat_map(|w| w.obs.clone()).collect();
        self.agent.norm.update(&all_obs);

        let mut completed = vec![];
        let mut rewards = vec![];
        for (i, w) in windows.into_iter().enumerate() {
            completed.extend_from_slice(&w.completed);
            rewards.extend_from_slice(&w.rewards);
            self.episode_returns[i] = w.episode_return;
            self.lanes[i] = w.lane;
        }
        let a = &mut self.agent;
        a.iteration += 1;
        a.env_steps += (self.cfg.lanes * self.cfg.horizon) as u64;
        IterMetrics {
            iteration: a.iteration,
            env_steps: a.env_steps,
            mean_return: mean(&completed),
            mean_reward: mean(&rewards),
            episodes: completed.len() as u64,
            actor_loss: loss,
            critic_loss,
            grad_norm,
            faults: a.faults,
            faulted: false,
        }
    }

    fn fit_critic(&mut self, obs: &[&[f64]], targets: &[f64]) -> f64 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(lane_seed(self.seed, SHUFFLE_STREAM, self.agent.iteration));
        let mut idx: Vec<usize> = (0..obs.len()).collect();
        let mb = self.cfg.critic_minibatches.min(obs.len()).max(1);
        let mut losses = vec![];
        for _ in 0..self.cfg.critic_epochs {
            idx.shuffle(&mut rng);
            for chunk in idx.chunks(obs.len().div_ceil(mb)) {
                let o: Vec<&[f64]> = chunk.iter().map(|&i| obs[i]).collect();
                let t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                losses.push(self.agent.critic_step(&o, &t, self.cfg.grad_clip.max(1.0)));
            }
        }
        mean(&losses)
    }
}

fn reduce(windows: &[LaneWindow], np: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; np];
    let mut loss = 0.0;
    for w in windows {
        loss += w.loss;
        for (g, x) in grad.iter_mut().zip(&w.grad) {
            *g += x;
        }
    }
    (loss, grad)
}

#[allow(clippy::too_many_arguments)]
fn lane_window(
    env: &Env,
    agent: &AgentState,
    cfg: &ShacConfig,
    policy: &Arc<Vec<f64>>,
    target: &Arc<Vec<f64>>,
    start: &LaneState,
    mut episode_return: f64,
    n_lanes: usize,
) -> Result<LaneWindow, LearnError> {
    let h = cfg.horizon;
    let tape = Tape::with_external(policy.len());
    let mut lane = start.clone();
    let mut state: GeneralizedState<Var> = lane.state.lift();
    let mut prev: Vec<Var> = lift(&lane.prev_action);
    let mut obs = env.observe(&lane.params, &state, &prev);
    let mut total = Var::constant(0.0);
    let mut disc = 1.0;
    let mut w = LaneWindow {
        loss: 0.0,
        grad: vec![],
        obs: Vec::with_capacity(h),
        rewards: Vec::with_capacity(h),
        ends: Vec::with_capacity(h),
        boot: Vec::with_capacity(h),
        lane: start.clone(),
        episode_return: 0.0,
        completed: vec![],
    };
    for _ in 0..h {
        w.obs.push(values(&obs));
        let x = agent.norm.apply(&obs);
        let action = agent.policy_net.record(&tape, policy, Some(0), &x)?;
        let tr = env
            .transition(&lane.params, &state, &prev, &action)
            .map_err(|source| EnvError::Step {
                lane: lane.lane,
                source,
            })?;
        total += tr.reward * disc;
        disc *= cfg.gamma;
        let r = tr.reward.value();
        episode_return += r;
        w.rewards.push(r);
        let info = env.commit(
            &mut lane,
            tr.state.values(),
            values(&tr.action),
            tr.fallen,
            tr.clamped,
        );
        w.ends.push(info.done);
        if info.done {
            if info.termination == Termination::Timeout {
                let v = agent
                    .value_net
                    .record(&tape, target, None, &agent.norm.apply(&tr.obs))?[0];
                total += v * disc;
                w.boot.push(Some(values(&tr.obs)));
            } else {
                w.boot.push(None);
            }
            w.completed.push(episode_return);
            episode_return = 0.0;
            state = lane.state.lift();
            prev = lift(&lane.prev_action);
            obs = env.observe(&lane.params, &state, &prev);
            disc = 1.0;
        } else {
            w.boot.push(Some(values(&tr.obs)));
            state = tr.state;
            prev = tr.action;
            obs = tr.obs;
        }
    }
    if w.ends.last() == Some(&false) {
        let v = agent
            .value_net
            .record(&tape, target, None, &agent.norm.apply(&obs))?[0];
        total += v * disc;
    }
    let loss = -total / (n_lanes * h) as f64;
    let grad = tape.backward(loss)?.into_external();
    w.loss = loss.value();
    w.grad = grad;
    w.lane = lane;
    w.episode_return = episode_return;
    Ok(w)
}
