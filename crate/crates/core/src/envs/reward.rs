use serde::{Deserialize, Serialize};

use crate::diffcore::Real;

/// Weights of the smooth reward terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Forward-velocity tracking, `exp(−(v_x − v*)² / σ_v²)`.
    pub tracking: f64,
    /// Upright posture, `exp(−pitch² / σ_p²)`.
    pub upright: f64,
    /// Base height, `−(h − h*)²`.
    pub height: f64,
    /// Action rate, `−‖a_t − a_{t−1}‖²`.
    pub action_rate: f64,
    /// Joint velocity, `−‖u_joints‖²`.
    pub joint_velocity: f64,
    /// Torque, `−‖τ‖²`.
    pub torque: f64,
    pub sigma_velocity: f64,
    pub sigma_pitch: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            tracking: 1.0,
            upright: 0.3,
            height: 0.2,
            action_rate: 0.05,
            joint_velocity: 1e-3,
            torque: 2e-5,
            sigma_velocity: 0.25,
            sigma_pitch: 0.25,
        }
    }
}

impl RewardWeights {
    pub fn zero() -> Self {
        RewardWeights {
            tracking: 0.0,
            upright: 0.0,
            height: 0.0,
            action_rate: 0.0,
            joint_velocity: 0.0,
            torque: 0.0,
            ..Default::default()
        }
    }

    /// Upper bound of the per-step reward.
    pub fn max_reward(&self) -> f64 {
        self.tracking + self.upright
    }
}

/// Quantities a reward is computed from, all taken at the end of a control step.
#[derive(Debug, Clone)]
pub struct RewardInputs<'a, S> {
    pub forward_velocity: S,
    pub pitch: S,
    pub height: S,
    pub target_height: f64,
    pub command: f64,
    pub action: &'a [S],
    pub prev_action: &'a [S],
    pub joint_velocity: &'a [S],
    /// Sum of squared joint torques (averaged over the control step's sub-steps).
    pub torque_sq: S,
}

pub fn reward<S: Real>(x: &RewardInputs<'_, S>, w: &RewardWeights) -> S {
    let tracking = (-(x.forward_velocity - x.command).square()
        / (w.sigma_velocity * w.sigma_velocity))
        .exp();
    let upright = (-x.pitch.square() / (w.sigma_pitch * w.sigma_pitch)).exp();
    let height = -(x.height - x.target_height).square();
    let mut rate = S::zero();
    for (&a, &b) in x.action.iter().zip(x.prev_action) {
        rate += (a - b).square();
    }
    let mut jv = S::zero();
    for &v in x.joint_velocity {
        jv += v.square();
    }
    tracking * w.tracking + upright * w.upright + height * w.height
        - rate * w.action_rate
        - jv * w.joint_velocity
        - x.torque_sq * w.torque
}
