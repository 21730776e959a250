//! Ground contact: gap evaluation and impulse resolution.
//!
//! Three models share one interface:
//! - `hard`: projected Gauss-Seidel on the velocity-level Signorini/Coulomb
//!   conditions with Newton restitution;
//! - `smooth`: the same sweep, but every per-contact update is multiplied by
//!   the logistic weight `w(d) = 1 / (1 + exp(d / s))` of the gap;
//! - `soft`: penalty spring-damper forces, no impulse solve.
//!
//! The contact-free ground is the plane `z = 0` with normal `(0, 1)`.

mod curve;
mod solver;

pub use curve::{
    canonical_force, force_curve, stochastic_reference, CanonicalScenario, CurveSample,
    StochasticSample,
};
pub use solver::{soft_force, solve_contacts, ImpulseSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::Real;
use crate::dynamics::kinematics::{kinematics, Kinematics};
use crate::dynamics::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactKind {
    Hard,
    Soft,
    Smooth,
}

impl ContactKind {
    pub fn name(&self) -> &'static str {
        match self {
            ContactKind::Hard => "hard",
            ContactKind::Soft => "soft",
            ContactKind::Smooth => "smooth",
        }
    }
}

impl std::str::FromStr for ContactKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(ContactKind::Hard),
            "soft" => Ok(ContactKind::Soft),
            "smooth" => Ok(ContactKind::Smooth),
            _ => Err(format!("unknown contact model `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactModelConfig {
    pub kind: ContactKind,
    /// Logistic sharpness length `s` (m), smooth model only.
    pub sharpness: f64,
    /// Penalty stiffness `k_n` (N/m), soft model only.
    pub stiffness: f64,
    /// Penalty damping `c_n` (N·s/m), soft model only.
    pub damping: f64,
    /// Coulomb coefficient μ.
    pub friction: f64,
    /// Newton restitution ε.
    pub restitution: f64,
    pub gs_iters: usize,
    /// Convergence threshold on the max impulse change of a sweep (N·s).
    pub gs_tol: f64,
    /// Smooth contacts with `d < margin_factor · s` take part in the solve.
    pub margin_factor: f64,
    /// Regularization speed of the soft model's tangential force (m/s).
    pub soft_slip_velocity: f64,
    /// Return the last iterate instead of failing when `gs_iters` runs out.
    pub accept_unconverged: bool,
}

impl Default for ContactModelConfig {
    fn default() -> Self {
        ContactModelConfig {
            kind: ContactKind::Smooth,
            sharpness: 0.005,
            stiffness: 2.0e4,
            damping: 200.0,
            friction: 0.8,
            restitution: 0.0,
            gs_iters: 30,
            gs_tol: 1e-9,
            margin_factor: 5.0,
            soft_slip_velocity: 0.01,
            accept_unconverged: false,
        }
    }
}

impl ContactModelConfig {
    pub fn with_kind(kind: ContactKind) -> Self {
        ContactModelConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.sharpness > 0.0, "sharpness must be > 0"),
            (self.stiffness > 0.0, "stiffness must be > 0"),
            (self.damping >= 0.0, "damping must be >= 0"),
            (self.friction >= 0.0, "friction must be >= 0"),
            (
                (0.0..=1.0).contains(&self.restitution),
                "restitution must lie in [0, 1]",
            ),
            (self.gs_iters >= 1, "gs_iters must be >= 1"),
            (self.gs_tol > 0.0, "gs_tol must be > 0"),
            (self.margin_factor >= 3.0, "margin_factor must be >= 3"),
            (self.soft_slip_velocity > 0.0, "soft_slip_velocity must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }

    /// Whether a point at gap `d` takes part in contact resolution.
    pub fn is_active(&self, d: f64) -> bool {
        match self.kind {
            ContactKind::Smooth => d < self.margin_factor * self.sharpness,
            ContactKind::Hard | ContactKind::Soft => d <= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("Gauss-Seidel did not converge: residual {residual:e} after {sweeps} sweeps")]
    NonConvergence { residual: f64, sweeps: usize },
}

/// Logistic contact weight `1 / (1 + exp(d / s))`; the exponent is clamped
/// to ±50.
pub fn sigmoid_weight<S: Real>(d: S, s: f64) -> S {
    let x = (d / s).clamp(S::cst(-50.0), S::cst(50.0));
    S::cst(1.0) / (x.exp() + 1.0)
}

#[derive(Debug, Clone)]
pub struct ContactPoint<S> {
    /// Index of the body-fixed contact point in the model.
    pub point: usize,
    /// Signed gap (m); negative is penetration.
    pub gap: S,
    pub normal: [f64; 2],
    pub jn: Vec<S>,
    pub jt: Vec<S>,
    pub weight: S,
}

/// Active contact points for configuration `q_mid`.
pub fn compute_gaps<S: Real>(
    model: &SystemModel<S>,
    q_mid: &[S],
    cfg: &ContactModelConfig,
) -> Vec<ContactPoint<S>> {
    let zeros = vec![S::zero(); q_mid.len()];
    let kin = kinematics(model, q_mid, &zeros);
    gaps_from_kinematics(&kin, cfg)
}

pub fn gaps_from_kinematics<S: Real>(
    kin: &Kinematics<S>,
    cfg: &ContactModelConfig,
) -> Vec<ContactPoint<S>> {
    kin.points
        .iter()
        .enumerate()
        .filter(|(_, p)| cfg.is_active(p.pos[1].value()))
        .map(|(i, p)| {
            let row = |k: usize| -> Vec<S> {
                p.jv.iter()
                    .map(|c| c.map_or(S::zero(), |c| c[k]))
                    .collect()
            };
            let weight = match cfg.kind {
                ContactKind::Smooth => sigmoid_weight(p.pos[1], cfg.sharpness),
                _ => S::cst(1.0),
            };
            ContactPoint {
                point: i,
                gap: p.pos[1],
                normal: [0.0, 1.0],
                jn: row(1),
                jt: row(0),
                weight,
            }
        })
        .collect()
}
