//! Normal force versus penetration for the canonical single-contact scenario.
//!
//! A unit point mass rests (zero velocity) on the plane at gap `d`. The hard
//! and smooth models run the impulse solver for one step and report the
//! average force `P_n / dt`; the soft model reports its penalty force. All
//! gradients are taken by reverse accumulation and reported with respect to
//! the penetration depth `−d`.

use crate::diffcore::{Real, Tape};
use crate::dynamics::linalg::Cholesky;

use super::{sigmoid_weight, soft_force, solve_contacts, ContactError, ContactKind, ContactModelConfig, ContactPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalScenario {
    pub mass: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for CanonicalScenario {
    fn default() -> Self {
        CanonicalScenario {
            mass: 1.0,
            gravity: 9.81,
            dt: 1e-3,
        }
    }
}

impl CanonicalScenario {
    /// Force needed to hold the mass at rest, `m g`.
    pub fn support_force(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Steady normal force the selected model produces at gap `d`.
pub fn canonical_force<S: Real>(
    kind: ContactKind,
    d: S,
    cfg: &ContactModelConfig,
    sc: &CanonicalScenario,
) -> Result<S, ContactError> {
    let cfg = ContactModelConfig {
        kind,
        ..cfg.clone()
    };
    if kind == ContactKind::Soft {
        return Ok(soft_force(d, S::zero(), &cfg));
    }
    if !cfg.is_active(d.value()) {
        return Ok(S::zero());
    }
    let weight = match kind {
        ContactKind::Smooth => sigmoid_weight(d, cfg.sharpness),
        _ => S::cst(1.0),
    };
    let contact = ContactPoint {
        point: 0,
        gap: d,
        normal: [0.0, 1.0],
        jn: vec![S::cst(1.0)],
        jt: vec![S::zero()],
        weight,
    };
    let mass = Cholesky::factor(&[S::cst(sc.mass)], 1).expect("positive mass");
    let bias = [S::cst(-sc.mass * sc.gravity)];
    let sol = solve_contacts(&mass, &bias, &[S::zero()], &[S::zero()], &[contact], &cfg, sc.dt)?;
    Ok(sol.normal[0] / sc.dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub force: f64,
    /// dF / d(penetration depth).
    pub grad: f64,
}

pub fn force_curve(
    kind: ContactKind,
    d: f64,
    cfg: &ContactModelConfig,
    sc: &CanonicalScenario,
) -> Result<CurveSample, ContactError> {
    let tape = Tape::new();
    let x = tape.input(d);
    let f = canonical_force(kind, x, cfg, sc)?;
    let grad = tape
        .gradient(f, &[x])
        .map(|g| -g[0])
        .expect("finite canonical force");
    Ok(CurveSample {
        force: f.value(),
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticSample {
    /// Monte-Carlo mean of the hard force under gap noise.
    pub mean_force: f64,
    /// Mean of the per-sample first-order gradients (w.r.t. penetration depth).
    pub mean_fog: f64,
}

/// Hard contact averaged over `d + η` for the given noise draws `η`.
pub fn stochastic_reference(
    d: f64,
    noise: &[f64],
    cfg: &ContactModelConfig,
    sc: &CanonicalScenario,
) -> Result<StochasticSample, ContactError> {
    let mut force = 0.0;
    let mut fog = 0.0;
    let mut tape = Tape::new();
    for &eta in noise {
        let (f, g) = {
            let x = tape.input(d + eta);
            let f = canonical_force(ContactKind::Hard, x, cfg, sc)?;
            let g = tape.gradient(f, &[x]).expect("finite hard force")[0];
            (f.value(), -g)
        };
        force += f;
        fog += g;
        tape.clear();
    }
    let n = noise.len().max(1) as f64;
    Ok(StochasticSample {
        mean_force: force / n,
        mean_fog: fog / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_separated_is_zero() {
        let sc = CanonicalScenario::default();
        let cfg = ContactModelConfig::default();
        let s = force_curve(ContactKind::Hard, 0.005, &cfg, &sc).unwrap();
        assert_eq!((s.force, s.grad), (0.0, 0.0));
        let s = force_curve(ContactKind::Hard, -0.005, &cfg, &sc).unwrap();
        assert!((s.force - sc.support_force()).abs() < 1e-9);
        assert_eq!(s.grad, 0.0);
    }

    #[test]
    fn smooth_midpoint_and_gradient() {
        let sc = CanonicalScenario::default();
        let cfg = ContactModelConfig::default();
        let s = force_curve(ContactKind::Smooth, 0.0, &cfg, &sc).unwrap();
        assert!((s.force - 0.5 * sc.support_force()).abs() < 1e-9);
        // dF/dpen = F_support · w(1 − w) / s
        let expected = sc.support_force() * 0.25 / cfg.sharpness;
        assert!((s.grad - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn soft_ramp() {
        let sc = CanonicalScenario::default();
        let cfg = ContactModelConfig::default();
        let s = force_curve(ContactKind::Soft, -0.01, &cfg, &sc).unwrap();
        assert!((s.force - cfg.stiffness * 0.01).abs() < 1e-9);
        assert!((s.grad - cfg.stiffness).abs() < 1e-9);
    }

    #[test]
    fn stochastic_fog_vanishes() {
        let sc = CanonicalScenario::default();
        let cfg = ContactModelConfig::default();
        let noise: Vec<f64> = (0..2001).map(|i| (i as f64 - 1000.0) * 1e-5).collect();
        let s = stochastic_reference(0.0, &noise, &cfg, &sc).unwrap();
        assert_eq!(s.mean_fog, 0.0);
        assert!((s.mean_force - 0.5 * sc.support_force()).abs() < 0.01 * sc.support_force());
    }
}
