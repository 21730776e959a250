use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    clip_grad_norm, gae, is_finite_all, mean, AgentState, IterMetrics, ACTION_STREAM_SALT,
    SHUFFLE_STREAM,
};
use crate::envs::{lane_seed, Env, LaneState, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Control steps per lane per iteration.
    pub rollout_length: usize,
    pub lanes: usize,
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub grad_clip: f64,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            rollout_length: 32,
            lanes: 64,
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            lr: 3e-4,
            grad_clip: 1.0,
            init_log_std: -0.5,
            normalize_advantages: true,
            policy_hidden: vec![128, 64],
            value_hidden: vec![128, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip_ratio > 0.0) {
            return Err("ppo.clip_ratio must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err("ppo.gamma and ppo.gae_lambda must lie in [0, 1]".into());
        }
        if self.rollout_length == 0 || self.lanes == 0 || self.minibatches == 0 {
            return Err("ppo.rollout_length, ppo.lanes and ppo.minibatches must be positive".into());
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0) {
            return Err("ppo.lr and ppo.grad_clip must be positive".into());
        }
        Ok(())
    }
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Clipped-surrogate loss of one sample and its gradient with respect to
/// the Gaussian mean (pre-squash) and log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrad {
    pub loss: f64,
    pub ratio: f64,
    pub clipped: bool,
    pub d_mean: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

pub fn gaussian_log_prob(z: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    z.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&z, &m), &ls)| {
            let u = (z - m) / ls.exp();
            -0.5 * u * u - ls - 0.5 * LOG_2PI
        })
        .sum()
}

/// `−min(ρA, clip(ρ, 1 ± c)A) − c_e·H`, where `ρ = π(z)/π_old(z)` and `H`
/// is the Gaussian entropy.
pub fn ppo_sample_grad(
    z: &[f64],
    mean: &[f64],
    log_std: &[f64],
    logp_old: f64,
    advantage: f64,
    clip: f64,
    entropy_coef: f64,
) -> SampleGrad {
    let logp = gaussian_log_prob(z, mean, log_std);
    let ratio = (logp - logp_old).exp();
    let unclipped = ratio * advantage;
    let clipped_val = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let clipped = clipped_val < unclipped;
    let surrogate = unclipped.min(clipped_val);
    let entropy: f64 = log_std.iter().map(|ls| ls + 0.5 + 0.5 * LOG_2PI).sum();
    let loss = -surrogate - entropy_coef * entropy;
    let k = mean.len();
    let (mut d_mean, mut d_log_std) = (vec![0.0; k], vec![-entropy_coef; k]);
    if !clipped {
        // d(ρA)/dθ = ρA·dlogπ/dθ
        let c = -ratio * advantage;
        for i in 0..k {
            let var = (2.0 * log_std[i]).exp();
            let diff = z[i] - mean[i];
            d_mean[i] += c * diff / var;
            d_log_std[i] += c * (diff * diff / var - 1.0);
        }
    }
    SampleGrad {
        loss,
        ratio,
        clipped,
        d_mean,
        d_log_std,
    }
}

struct LaneRollout {
    obs: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    logp: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    ends: Vec<bool>,
    next_values: Vec<f64>,
    lane: LaneState,
    episode_return: f64,
    completed: Vec<f64>,
}

pub struct PpoTrainer {
    pub cfg: PpoConfig,
    pub env: Env,
    pub agent: AgentState,
    pub lanes: Vec<LaneState>,
    episode_returns: Vec<f64>,
    seed: u64,
}

impl PpoTrainer {
    pub fn new(env: Env, cfg: PpoConfig, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        let agent = AgentState::new(
            env.obs_dim(),
            env.act_dim(),
            &cfg.policy_hidden,
            &cfg.value_hidden,
            cfg.init_log_std,
            cfg.lr,
            cfg.lr,
            seed,
        );
        Ok(Self::with_agent(env, cfg, agent, seed))
    }

    pub fn with_agent(env: Env, cfg: PpoConfig, agent: AgentState, seed: u64) -> Self {
        let lanes = (0..cfg.lanes).map(|i| env.reset_lane(seed, i, 0)).collect();
        PpoTrainer {
            episode_returns: vec![0.0; cfg.lanes],
            cfg,
            env,
            agent,
            lanes,
            seed,
        }
    }

    fn fault(&mut self) -> IterMetrics {
        for (i, l) in self.lanes.iter_mut().enumerate() {
            *l = self.env.reset_lane(l.master_seed, l.lane, l.episode + 1);
            self.episode_returns[i] = 0.0;
        }
        let a = &mut self.agent;
        a.faults += 1;
        a.iteration += 1;
        a.env_steps += (self.cfg.lanes * self.cfg.rollout_length) as u64;
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

    fn rollout_lane(&self, lane: &LaneState, mut episode_return: f64) -> Option<LaneRollout> {
        let t_len = self.cfg.rollout_length;
        let a = &self.agent;
        let raw_net = a.policy_net.with_out_tanh(false);
        let std: Vec<f64> = a.log_std.iter().map(|l| l.exp()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(
            self.seed ^ ACTION_STREAM_SALT,
            lane.lane,
            a.iteration,
        ));
        let mut lane = lane.clone();
        let mut r = LaneRollout {
            obs: Vec::with_capacity(t_len),
            z: Vec::with_capacity(t_len),
            logp: Vec::with_capacity(t_len),
            values: Vec::with_capacity(t_len),
            rewards: Vec::with_capacity(t_len),
            ends: Vec::with_capacity(t_len),
            next_values: Vec::with_capacity(t_len),
            lane: lane.clone(),
            episode_return: 0.0,
            completed: vec![],
        };
        let mut obs = self.env.observe_lane(&lane);
        for _ in 0..t_len {
            let x = a.norm.apply(&obs);
            let mu = raw_net.forward(&a.policy, &x);
            let z: Vec<f64> = mu
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + s * e
                })
                .collect();
            let action: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let (next_obs, rew, info) = self.env.step_lane(&mut lane, &action).ok()?;
            r.logp.push(gaussian_log_prob(&z, &mu, &a.log_std));
            r.values.push(a.value_net.forward(&a.value, &x)[0]);
            r.obs.push(obs);
            r.z.push(z);
            r.rewards.push(rew);
            r.ends.push(info.done);
            episode_return += rew;
            let nv = if info.done {
                r.completed.push(episode_return);
                episode_return = 0.0;
                match (info.termination, &info.terminal_obs) {
                    (Termination::Timeout, Some(o)) => a.value_of(o, false),
                    _ => 0.0,
                }
            } else {
                a.value_of(&next_obs, false)
            };
            r.next_values.push(nv);
            obs = next_obs;
        }
        r.lane = lane;
        r.episode_return = episode_return;
        Some(r)
    }

    pub fn iterate(&mut self) -> IterMetrics {
        let results: Vec<Option<LaneRollout>> = self
            .lanes
            .par_iter()
            .zip(self.episode_returns.par_iter())
            .map(|(lane, &ret)| self.rollout_lane(lane, ret))
            .collect();
        let Some(rollouts) = results.into_iter().collect::<Option<Vec<_>>>() else {
            return self.fault();
        };

        let mut obs: Vec<&[f64]> = vec![];
        let mut zs: Vec<&[f64]> = vec![];
        let mut logp = vec![];
        let mut adv = vec![];
        let mut ret = vec![];
        for r in &rollouts {
            let (a, g) = gae(
                &r.rewards,
                &r.values,
                &r.next_values,
                &r.ends,
                self.cfg.gamma,
                self.cfg.gae_lambda,
            );
            adv.extend(a);
            ret.extend(g);
            obs.extend(r.obs.iter().map(|o| o.as_slice()));
            zs.extend(r.z.iter().map(|z| z.as_slice()));
            logp.extend_from_slice(&r.logp);
        }
        if self.cfg.normalize_advantages && adv.len() > 1 {
            let m = mean(&adv);
            let sd = (adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - m) / (sd + 1e-8));
        }

        let n = obs.len();
        let mut rng =
            ChaCha8Rng::seed_from_u64(lane_seed(self.seed, SHUFFLE_STREAM, self.agent.iteration));
        let mut idx: Vec<usize> = (0..n).collect();
        let chunk = n.div_ceil(self.cfg.minibatches.min(n).max(1));
        let mut actor_losses = vec![];
        let mut critic_losses = vec![];
        let mut norms = vec![];
        let mut faulted = false;
        'outer: for _ in 0..self.cfg.epochs {
            idx.shuffle(&mut rng);
            for mb in idx.chunks(chunk) {
                let (al, norm) = self.policy_update(mb, &obs, &zs, &logp, &adv);
                if !al.is_finite() {
                    faulted = true;
                    break 'outer;
                }
                actor_losses.push(al);
                norms.push(norm);
                let o: Vec<&[f64]> = mb.iter().map(|&i| obs[i]).collect();
                let t: Vec<f64> = mb.iter().map(|&i| ret[i]).collect();
                critic_losses.push(self.agent.critic_step(&o, &t, self.cfg.grad_clip));
            }
        }
        if faulted || !is_finite_all(&self.agent.value) {
            return self.fault();
        }
        let raw: Vec<Vec<f64>> = obs.iter().map(|o| o.to_vec()).collect();
        self.agent.norm.update(&raw);

        let mut completed = vec![];
        let mut rewards = vec![];
        for (i, r) in rollouts.into_iter().enumerate() {
            completed.extend_from_slice(&r.completed);
            rewards.extend_from_slice(&r.rewards);
            self.episode_returns[i] = r.episode_return;
            self.lanes[i] = r.lane;
        }
        let a = &mut self.agent;
        a.iteration += 1;
        a.env_steps += (self.cfg.lanes * self.cfg.rollout_length) as u64;
        IterMetrics {
            iteration: a.iteration,
            env_steps: a.env_steps,
            mean_return: mean(&completed),
            mean_reward: mean(&rewards),
            episodes: completed.len() as u64,
            actor_loss: mean(&actor_losses),
            critic_loss: self.cfg.value_coef * mean(&critic_losses),
            grad_norm: mean(&norms),
            faults: a.faults,
            faulted: false,
        }
    }

    /// One clipped-surrogate step on a minibatch; returns (loss, grad norm).
    fn policy_update(
        &mut self,
        mb: &[usize],
        obs: &[&[f64]],
        zs: &[&[f64]],
        logp: &[f64],
        adv: &[f64],
    ) -> (f64, f64) {
        let a = &self.agent;
        let raw_net = a.policy_net.with_out_tanh(false);
        let np = a.policy.len();
        let k = a.act_dim();
        let mut grad = vec![0.0; np + k];
        let mut loss = 0.0;
        let inv = 1.0 / mb.len() as f64;
        for &i in mb {
            let x = a.norm.apply(obs[i]);
            let cache = raw_net.forward_cached(&a.policy, &x);
            let g = ppo_sample_grad(
                zs[i],
                cache.output(),
                &a.log_std,
                logp[i],
                adv[i],
                self.cfg.clip_ratio,
                self.cfg.entropy_coef,
            );
            loss += g.loss * inv;
            let dm: Vec<f64> = g.d_mean.iter().map(|d| d * inv).collect();
            raw_net.backward(&a.policy, &cache, &dm, Some(&mut grad[..np]), None);
            for j in 0..k {
                grad[np + j] += g.d_log_std[j] * inv;
            }
        }
        if !is_finite_all(&grad) {
            return (f64::NAN, f64::NAN);
        }
        let norm = clip_grad_norm(&mut grad, self.cfg.grad_clip);
        self.agent.actor_step(&grad);
        (loss, norm)
    }
}
