//! Joint-level PD control with a torque-speed saturation envelope.
//!
//! The envelope follows a linear motor torque-speed curve: the torque available
//! in the direction of motion shrinks from the stall torque `τ_s` at rest to
//! zero at the no-load speed `τ_s / k_v`.

use serde::{Deserialize, Serialize};

use crate::diffcore::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaturationMode {
    HardClamp,
    SmoothTanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    /// Position gain (N·m/rad).
    pub kp: f64,
    /// Damping gain (N·m·s/rad).
    pub kd: f64,
    /// Stall torque τ_s (N·m).
    pub stall_torque: f64,
    /// Torque-speed slope k_v (N·m·s/rad).
    pub speed_slope: f64,
    pub saturation: SaturationMode,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        ActuatorConfig {
            kp: 50.0,
            kd: 2.0,
            stall_torque: 80.0,
            speed_slope: 8.0,
            saturation: SaturationMode::SmoothTanh,
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if [self.kp, self.kd, self.stall_torque, self.speed_slope]
            .iter()
            .any(|&x| !(x >= 0.0))
        {
            return Err("actuator gains and limits must be non-negative".into());
        }
        Ok(())
    }
}

/// `Kp·(q_des − q) − Kd·u`, elementwise.
pub fn pd_torque<S: Real>(q_des: &[S], q: &[S], u: &[S], cfg: &ActuatorConfig) -> Vec<S> {
    debug_assert!(q_des.len() == q.len() && q.len() == u.len());
    q_des
        .iter()
        .zip(q)
        .zip(u)
        .map(|((&qd, &q), &u)| (qd - q) * cfg.kp - u * cfg.kd)
        .collect()
}

/// Admissible torque interval `(τ_lo, τ_hi)` at joint speed `u`.
pub fn torque_bounds<S: Real>(u: S, cfg: &ActuatorConfig) -> (S, S) {
    let ts = S::cst(cfg.stall_torque);
    let zero = S::zero();
    let hi = (ts - zero.max(u) * cfg.speed_slope).clamp(zero, ts);
    let lo = -(ts - zero.max(-u) * cfg.speed_slope).clamp(zero, ts);
    (lo, hi)
}

pub fn saturate<S: Real>(tau_raw: S, u: S, cfg: &ActuatorConfig) -> S {
    let (lo, hi) = torque_bounds(u, cfg);
    match cfg.saturation {
        SaturationMode::HardClamp => tau_raw.clamp(lo, hi),
        SaturationMode::SmoothTanh => {
            let mid = (hi + lo) * 0.5;
            let half = (hi - lo) * 0.5;
            if half.value() <= 0.0 {
                mid
            } else {
                mid + half * ((tau_raw - mid) / half).tanh()
            }
        }
    }
}

pub fn saturate_all<S: Real>(tau_raw: &[S], u: &[S], cfg: &ActuatorConfig) -> Vec<S> {
    tau_raw
        .iter()
        .zip(u)
        .map(|(&t, &v)| saturate(t, v, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Tape, Var};
    use proptest::prelude::*;

    fn hard() -> ActuatorConfig {
        ActuatorConfig {
            saturation: SaturationMode::HardClamp,
            ..Default::default()
        }
    }

    #[test]
    fn pd_examples() {
        let c = ActuatorConfig::default();
        assert_eq!(pd_torque(&[0.3], &[0.3], &[0.0], &c), vec![0.0]);
        let c = ActuatorConfig {
            kp: 50.0,
            kd: 1.0,
            ..Default::default()
        };
        assert!((pd_torque(&[0.1], &[0.0], &[0.0], &c)[0] - 5.0).abs() < 1e-12);
        let c = ActuatorConfig {
            kp: 0.0,
            kd: 2.0,
            ..Default::default()
        };
        assert_eq!(pd_torque(&[1.0], &[0.0], &[1.5], &c), vec![-3.0]);
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturate(5.0, 0.0, &hard()), 5.0);
        assert_eq!(saturate(100.0, 0.0, &hard()), 80.0);
        let c = hard();
        let no_load = c.stall_torque / c.speed_slope;
        assert_eq!(saturate(10.0, no_load, &c), 0.0);
        let smooth = ActuatorConfig::default();
        let t = saturate(5.0, 0.0, &smooth);
        assert!((t - 5.0).abs() < 0.01);
        assert!(saturate(10.0, no_load, &ActuatorConfig::default()) <= 0.0);
    }

    #[test]
    fn smooth_gradient_is_positive() {
        let c = ActuatorConfig::default();
        for raw in [-200.0, -80.0, -3.0, 0.0, 20.0, 79.0, 150.0] {
            for u in [-12.0, -3.0, 0.0, 4.0, 9.0] {
                let t = Tape::new();
                let x = t.input(raw);
                let g = t.gradient(saturate(x, cst(u), &c), &[x]).unwrap()[0];
                assert!(g > 0.0, "raw {raw} u {u}");
            }
        }
    }

    fn cst(u: f64) -> Var<'static> {
        Var::constant(u)
    }

    #[test]
    fn hard_gradient_zero_outside() {
        let t = Tape::new();
        let x = t.input(120.0);
        let g = t.gradient(saturate(x, cst(0.0), &hard()), &[x]).unwrap()[0];
        assert_eq!(g, 0.0);
    }

    proptest! {
        #[test]
        fn torque_never_exceeds_stall(raw in -500.0f64..500.0, u in -30.0f64..30.0) {
            for c in [hard(), ActuatorConfig::default()] {
                prop_assert!(saturate(raw, u, &c).abs() <= c.stall_torque + 1e-9);
            }
        }

        #[test]
        fn envelope_is_passive(u in -30.0f64..30.0, du in 0.0f64..5.0) {
            let c = ActuatorConfig::default();
            let (_, hi0) = torque_bounds(u, &c);
            let (_, hi1) = torque_bounds(u + du, &c);
            prop_assert!(hi1 <= hi0);
            // the braking side mirrors the driving side: τ_lo(u) = −τ_hi(−u)
            let (lo0, _) = torque_bounds(-u, &c);
            let (lo1, _) = torque_bounds(-(u + du), &c);
            prop_assert!(lo0 == -hi0 && lo1 == -hi1);
            prop_assert!(lo1 >= lo0);
        }

        #[test]
        fn smooth_tracks_hard_near_centre(frac in -0.5f64..0.5, u in -9.0f64..9.0) {
            let c = ActuatorConfig::default();
            let (lo, hi) = torque_bounds(u, &c);
            let (mid, half) = ((hi + lo) / 2.0, (hi - lo) / 2.0);
            let raw = mid + frac * half;
            let diff = (saturate(raw, u, &c) - saturate(raw, u, &hard())).abs();
            prop_assert!(diff <= 0.05 * half + 1e-12);
        }
    }
}
