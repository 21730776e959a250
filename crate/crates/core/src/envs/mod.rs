//! Batched locomotion environments on top of the planar simulator.
//!
//! Observation layout (dimension `6 + 2·n_joints + n_actuated + 1`):
//!
//! | slot | content |
//! |------|---------|
//! | 0 | base height (m) |
//! | 1, 2 | sin / cos of base pitch |
//! | 3, 4 | base linear velocity x, z (m/s) |
//! | 5 | base angular velocity (rad/s) |
//! | next `n_joints` | joint positions relative to the nominal pose |
//! | next `n_joints` | joint velocities |
//! | next `n_actuated` | previous action |
//! | last | commanded forward velocity |
//!
//! Locked base coordinates read as their fixed values (zero velocity).
//! `bouncer1d` has no joints and is driven by a vertical force `a·force_limit`
//! instead of PD control.

mod batch;
mod reward;

pub use batch::{BatchStep, EnvBatch};
pub use reward::{reward, RewardInputs, RewardWeights};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{pd_torque, saturate_all, ActuatorConfig};
use crate::contact::ContactModelConfig;
use crate::diffcore::Real;
use crate::dynamics::kinematics::kinematics;
use crate::dynamics::{moreau_step, GeneralizedState, StepConfig, StepError, SystemId, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    /// Scales every range linearly toward nominal; 0 disables randomization.
    pub level: f64,
    pub friction_range: [f64; 2],
    pub mass_scale_range: [f64; 2],
    /// Half-width of the uniform noise on actuated coordinates and all velocities.
    pub init_noise: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            level: 0.0,
            friction_range: [0.5, 1.25],
            mass_scale_range: [0.8, 1.2],
            init_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    /// Minimum base height (m).
    pub min_height: f64,
    /// Maximum |pitch| (rad).
    pub max_pitch: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            min_height: 0.2,
            max_pitch: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub system: SystemId,
    /// Simulation time step (s).
    pub dt: f64,
    /// Simulation sub-steps per control step.
    pub decimation: usize,
    /// Control steps per episode.
    pub episode_length: usize,
    /// Target forward velocity interval (m/s).
    pub command_range: [f64; 2],
    /// Base height target `h*`; the nominal height when absent.
    pub target_height: Option<f64>,
    /// Joint target offset per unit action (rad).
    pub action_scale: f64,
    /// Actuator force per unit action for `bouncer1d` (N).
    pub force_limit: f64,
    pub reward: RewardWeights,
    pub randomization: RandomizationConfig,
    pub termination: TerminationConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::for_system(SystemId::Hopper2d)
    }
}

impl EnvConfig {
    pub fn for_system(system: SystemId) -> Self {
        let termination = match system {
            SystemId::Hopper2d | SystemId::Quadruped2d => TerminationConfig::default(),
            SystemId::Bouncer1d | SystemId::Pendulum => TerminationConfig {
                min_height: -1.0,
                max_pitch: 10.0,
            },
        };
        EnvConfig {
            system,
            dt: 2.5e-3,
            decimation: 8,
            episode_length: 250,
            command_range: [0.5, 0.5],
            target_height: None,
            action_scale: 0.5,
            force_limit: 20.0,
            reward: RewardWeights::default(),
            randomization: RandomizationConfig::default(),
            termination,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.episode_length < 1 {
            return Err("episode_length must be at least 1".into());
        }
        if self.decimation < 1 {
            return Err("decimation must be at least 1".into());
        }
        if !(self.command_range.iter().all(|c| c.is_finite())
            && self.command_range[0] <= self.command_range[1])
        {
            return Err("command_range must be a finite interval [lo, hi]".into());
        }
        let r = &self.randomization;
        if !(0.0..=1.0).contains(&r.level) {
            return Err("randomization.level must lie in [0, 1]".into());
        }
        for (name, range) in [("friction_range", r.friction_range), ("mass_scale_range", r.mass_scale_range)] {
            if !(range[0] >= 0.0 && range[0] <= range[1] && range[1].is_finite()) {
                return Err(format!("randomization.{name} must be a non-negative interval"));
            }
        }
        if !(r.init_noise >= 0.0) {
            return Err("randomization.init_noise must be non-negative".into());
        }
        if !(self.action_scale >= 0.0 && self.force_limit >= 0.0) {
            return Err("action_scale and force_limit must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("lane {lane}: {source}")]
    Step {
        lane: usize,
        #[source]
        source: StepError,
    },
    #[error("expected {expected} action lanes, got {got}")]
    BatchSize { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    None,
    Fall,
    Timeout,
}

/// Per-episode parameters of one lane.
#[derive(Debug, Clone)]
pub struct LaneParams {
    pub model: SystemModel,
    pub step: StepConfig,
    pub command: f64,
}

/// Bookkeeping for one lane: its physical state and where it sits in its
/// random stream.
#[derive(Debug, Clone)]
pub struct LaneState {
    pub lane: usize,
    pub master_seed: u64,
    /// Episodes started so far on this lane; indexes the lane's random stream.
    pub episode: u64,
    pub t: usize,
    pub state: GeneralizedState,
    pub prev_action: Vec<f64>,
    pub params: LaneParams,
}

/// Result of one control step, generic over the scalar.
#[derive(Debug, Clone)]
pub struct Transition<S> {
    pub state: GeneralizedState<S>,
    pub obs: Vec<S>,
    pub reward: S,
    pub action: Vec<S>,
    pub clamped: usize,
    pub fallen: bool,
    /// Sub-steps during which at least one contact was active.
    pub contact_substeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub done: bool,
    pub termination: Termination,
    pub clamped: usize,
    /// Observation before the automatic reset, set when `done`.
    pub terminal_obs: Option<Vec<f64>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based stream seed for `(master, lane, episode)`.
pub fn lane_seed(master: u64, lane: usize, episode: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ lane as u64) ^ episode)
}

#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    pub model: SystemModel,
    pub step: StepConfig,
    pub actuator: ActuatorConfig,
    joint_start: usize,
    target_height: f64,
}

impl Env {
    pub fn new(
        cfg: EnvConfig,
        contact: ContactModelConfig,
        actuator: ActuatorConfig,
    ) -> Result<Env, EnvError> {
        cfg.validate().map_err(EnvError::Config)?;
        actuator.validate().map_err(EnvError::Config)?;
        let step = StepConfig { dt: cfg.dt, contact };
        step.validate().map_err(EnvError::Config)?;
        let model = cfg.system.model();
        model.validate().map_err(EnvError::Config)?;
        let joint_start = model.base.count();
        let nominal_height = match model.z_index() {
            Some(i) => model.nominal_q[i],
            None => model.base_origin[1],
        };
        Ok(Env {
            target_height: cfg.target_height.unwrap_or(nominal_height),
            cfg,
            model,
            step,
            actuator,
            joint_start,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.model.ndof() - self.joint_start
    }

    pub fn act_dim(&self) -> usize {
        self.model.n_actuated()
    }

    pub fn obs_dim(&self) -> usize {
        6 + 2 * self.n_joints() + self.act_dim() + 1
    }

    pub fn target_height(&self) -> f64 {
        self.target_height
    }

    /// Control-step duration (s).
    pub fn control_dt(&self) -> f64 {
        self.cfg.dt * self.cfg.decimation as f64
    }

    fn force_actuated(&self) -> bool {
        self.cfg.system == SystemId::Bouncer1d
    }

    /// Starts episode `episode` of lane `lane` from its own random stream.
    pub fn reset_lane(&self, master_seed: u64, lane: usize, episode: u64) -> LaneState {
        let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(master_seed, lane, episode));
        let r = &self.cfg.randomization;
        let level = r.level;
        let [c_lo, c_hi] = self.cfg.command_range;
        let command = if c_hi > c_lo {
            rng.random_range(c_lo..c_hi)
        } else {
            c_lo
        };
        let sample = |range: [f64; 2], nominal: f64, rng: &mut ChaCha8Rng| {
            let x = if range[1] > range[0] {
                rng.random_range(range[0]..range[1])
            } else {
                range[0]
            };
            nominal + level * (x - nominal)
        };
        let mut step = self.step.clone();
        step.contact.friction = sample(r.friction_range, self.step.contact.friction, &mut rng);
        let scales: Vec<f64> = (0..self.model.n_bodies())
            .map(|_| sample(r.mass_scale_range, 1.0, &mut rng))
            .collect();
        let model = self.model.with_mass_scales(&scales);

        let n = model.ndof();
        let mut q = model.nominal_q.clone();
        let mut u = vec![0.0; n];
        let amp = level * r.init_noise;
        for &i in &model.actuated {
            q[i] += amp * rng.random_range(-1.0..=1.0);
        }
        for v in u.iter_mut() {
            *v += amp * rng.random_range(-1.0..=1.0);
        }
        if let Some((lo, hi)) = self.joint_limits_of(&model) {
            for (k, &i) in model.actuated.iter().enumerate() {
                q[i] = q[i].clamp(lo[k], hi[k]);
            }
        }
        if amp > 0.0 && !model.legs.is_empty() {
            if let Some(z) = model.z_index() {
                // put the lowest contact point back on the ground
                let kin = kinematics(&model, &q, &u);
                let lowest = kin
                    .points
                    .iter()
                    .map(|p| p.pos[1])
                    .fold(f64::INFINITY, f64::min);
                if lowest.is_finite() {
                    q[z] -= lowest;
                }
            }
        }
        LaneState {
            lane,
            master_seed,
            episode,
            t: 0,
            state: GeneralizedState { q, u },
            prev_action: vec![0.0; model.n_actuated()],
            params: LaneParams {
                model,
                step,
                command,
            },
        }
    }

    fn joint_limits_of(&self, model: &SystemModel) -> Option<(Vec<f64>, Vec<f64>)> {
        if model.limits.len() != model.actuated.len() {
            return None;
        }
        Some(model.limits.iter().map(|&(lo, hi)| (lo, hi)).unzip())
    }

    pub fn base_height<S: Real>(&self, q: &[S]) -> S {
        match self.model.z_index() {
            Some(i) => q[i],
            None => S::cst(self.model.base_origin[1]),
        }
    }

    pub fn pitch<S: Real>(&self, q: &[S]) -> S {
        match self.model.pitch_index() {
            Some(i) => q[i],
            None => S::zero(),
        }
    }

    pub fn forward_velocity<S: Real>(&self, u: &[S]) -> S {
        match self.model.x_index() {
            Some(i) => u[i],
            None => S::zero(),
        }
    }

    pub fn observe<S: Real>(
        &self,
        params: &LaneParams,
        state: &GeneralizedState<S>,
        prev_action: &[S],
    ) -> Vec<S> {
        let m = &self.model;
        let (q, u) = (&state.q, &state.u);
        let pick = |v: &[S], idx: Option<usize>| idx.map_or(S::zero(), |i| v[i]);
        let pitch = self.pitch(q);
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.push(self.base_height(q));
        obs.push(pitch.sin());
        obs.push(pitch.cos());
        obs.push(pick(u, m.x_index()));
        obs.push(pick(u, m.z_index()));
        obs.push(pick(u, m.pitch_index()));
        for i in self.joint_start..m.ndof() {
            obs.push(q[i] - m.nominal_q[i]);
        }
        obs.extend_from_slice(&u[self.joint_start..]);
        obs.extend_from_slice(prev_action);
        obs.push(S::cst(params.command));
        obs
    }

    pub fn observe_lane(&self, lane: &LaneState) -> Vec<f64> {
        self.observe(&lane.params, &lane.state, &lane.prev_action)
    }

    pub fn is_fallen(&self, q: &[f64]) -> bool {
        let t = &self.cfg.termination;
        self.base_height(q) < t.min_height || self.pitch(q).abs() > t.max_pitch
    }

    /// Joint position targets for an already clamped action.
    pub fn position_targets<S: Real>(&self, m: &SystemModel, a: &[S]) -> Vec<S> {
        let limits = self.joint_limits_of(m);
        m.actuated
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let target = a[k] * self.cfg.action_scale + m.nominal_q[i];
                match &limits {
                    Some((lo, hi)) => target.clamp(S::cst(lo[k]), S::cst(hi[k])),
                    None => target,
                }
            })
            .collect()
    }

    /// Generalized force applied over one physics sub-step.
    pub fn substep_force<S: Real>(
        &self,
        m: &SystemModel,
        a: &[S],
        q_des: &[S],
        s: &GeneralizedState<S>,
    ) -> Vec<S> {
        let mut tau = vec![S::zero(); m.ndof()];
        if self.force_actuated() {
            for (k, &i) in m.actuated.iter().enumerate() {
                tau[i] = a[k] * self.cfg.force_limit;
            }
        } else {
            let qa: Vec<S> = m.actuated.iter().map(|&i| s.q[i]).collect();
            let ua: Vec<S> = m.actuated.iter().map(|&i| s.u[i]).collect();
            let raw = pd_torque(q_des, &qa, &ua, &self.actuator);
            let sat = saturate_all(&raw, &ua, &self.actuator);
            for (k, &i) in m.actuated.iter().enumerate() {
                tau[i] = sat[k];
            }
        }
        tau
    }

    /// Advances one control step: clamps the action, runs `decimation`
    /// actuated simulation sub-steps and scores the result. Done flags are
    /// plain booleans; no gradient flows through termination.
    pub fn transition<S: Real>(
        &self,
        params: &LaneParams,
        state: &GeneralizedState<S>,
        prev_action: &[S],
        action: &[S],
    ) -> Result<Transition<S>, StepError> {
        let m = &params.model;
        let na = m.n_actuated();
        debug_assert_eq!(action.len(), na);
        let clamped = action.iter().filter(|a| a.value().abs() > 1.0).count();
        let one = S::cst(1.0);
        let a: Vec<S> = action.iter().map(|&x| x.clamp(-one, one)).collect();

        let model_s: SystemModel<S> = m.cast();
        let q_des = self.position_targets(m, &a);

        let mut s = state.clone();
        let mut torque_sq = S::zero();
        let mut contact_substeps = 0;
        for _ in 0..self.cfg.decimation {
            let tau = self.substep_force(m, &a, &q_des, &s);
            for &i in &m.actuated {
                torque_sq += tau[i].square();
            }
            let out = moreau_step(&model_s, &s, &tau, &params.step)?;
            if !out.contacts.is_empty() {
                contact_substeps += 1;
            }
            s = out.state;
        }
        torque_sq = torque_sq / self.cfg.decimation as f64;

        let joint_u = &s.u[self.joint_start..];
        let r = reward(
            &RewardInputs {
                forward_velocity: self.forward_velocity(&s.u),
                pitch: self.pitch(&s.q),
                height: self.base_height(&s.q),
                target_height: self.target_height,
                command: params.command,
                action: &a,
                prev_action,
                joint_velocity: joint_u,
                torque_sq,
            },
            &self.cfg.reward,
        );
        let fallen = self.is_fallen(&crate::diffcore::values(&s.q));
        let obs = self.observe(params, &s, &a);
        Ok(Transition {
            state: s,
            obs,
            reward: r,
            action: a,
            clamped,
            fallen,
            contact_substeps,
        })
    }

    /// Commits a transition's values to the lane and resets it when the
    /// episode ends.
    pub fn commit(
        &self,
        lane: &mut LaneState,
        state: GeneralizedState,
        action: Vec<f64>,
        fallen: bool,
        clamped: usize,
    ) -> StepInfo {
        lane.state = state;
        lane.prev_action = action;
        lane.t += 1;
        let termination = if fallen {
            Termination::Fall
        } else if lane.t >= self.cfg.episode_length {
            Termination::Timeout
        } else {
            Termination::None
        };
        let done = termination != Termination::None;
        let terminal_obs = if done {
            let obs = self.observe_lane(lane);
            *lane = self.reset_lane(lane.master_seed, lane.lane, lane.episode + 1);
            Some(obs)
        } else {
            None
        };
        StepInfo {
            done,
            termination,
            clamped,
            terminal_obs,
        }
    }

    /// Plain-float control step on one lane, with automatic reset.
    pub fn step_lane(
        &self,
        lane: &mut LaneState,
        action: &[f64],
    ) -> Result<(Vec<f64>, f64, StepInfo), StepError> {
        let tr = self.transition(&lane.params, &lane.state, &lane.prev_action, action)?;
        let info = self.commit(lane, tr.state, tr.action, tr.fallen, tr.clamped);
        let obs = if info.done {
            self.observe_lane(lane)
        } else {
            tr.obs
        };
        Ok((obs, tr.reward, info))
    }
}
