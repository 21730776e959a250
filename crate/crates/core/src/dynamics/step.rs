use serde::{Deserialize, Serialize};

use crate::contact::{
    gaps_from_kinematics, soft_force, solve_contacts, ContactKind, ContactModelConfig,
    ContactPoint, ImpulseSolution,
};
use crate::diffcore::{dot, Real};

use super::kinematics::{bias_from, kinematics, mass_matrix_from};
use super::linalg::Cholesky;
use super::{GeneralizedState, StepError, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// Time step (s).
    pub dt: f64,
    pub contact: ContactModelConfig,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 2.5e-3,
            contact: ContactModelConfig::default(),
        }
    }
}

impl StepConfig {
    pub const MAX_DT: f64 = 0.02;

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt <= Self::MAX_DT) {
            return Err(format!("dt must lie in (0, {}], got {}", Self::MAX_DT, self.dt));
        }
        self.contact.validate()
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput<S> {
    pub state: GeneralizedState<S>,
    /// Contacts active at the midpoint configuration.
    pub contacts: Vec<ContactPoint<S>>,
    /// Normal/tangential impulses over the step (N·s); for the soft model
    /// these are the penalty forces times `dt`.
    pub impulses: ImpulseSolution<S>,
}

/// One Moreau midpoint step.
///
/// `q_mid = q + dt/2·u`; mass matrix, bias forces and contact gaps are
/// evaluated at `q_mid`; `u⁺ = u + M⁻¹(b·dt + τ·dt + Jᵀ P)`;
/// `q⁺ = q_mid + dt/2·u⁺`. `tau` is a full generalized-force vector.
pub fn moreau_step<S: Real>(
    model: &SystemModel<S>,
    state: &GeneralizedState<S>,
    tau: &[S],
    cfg: &StepConfig,
) -> Result<StepOutput<S>, StepError> {
    let n = model.ndof();
    let dt = cfg.dt;
    let half = 0.5 * dt;
    let q_mid: Vec<S> = state
        .q
        .iter()
        .zip(&state.u)
        .map(|(&q, &u)| q + u * half)
        .collect();

    let kin = kinematics(model, &q_mid, &state.u);
    let m = mass_matrix_from(&kin, n);
    let b = bias_from(&kin, n, model.gravity);
    let chol = Cholesky::factor(&m, n).ok_or(StepError::NotPositiveDefinite)?;
    let contacts = gaps_from_kinematics(&kin, &cfg.contact);

    let mut gen_force: Vec<S> = (0..n).map(|i| (b[i] + tau[i]) * dt).collect();
    let impulses = match cfg.contact.kind {
        ContactKind::Soft => {
            let mut sol = ImpulseSolution::empty();
            for c in &contacts {
                let vn = dot(&c.jn, &state.u);
                let vt = dot(&c.jt, &state.u);
                let fn_ = soft_force(c.gap, vn, &cfg.contact);
                let ft = -(fn_ * cfg.contact.friction)
                    * (vt / cfg.contact.soft_slip_velocity).tanh();
                let (pn, pt) = (fn_ * dt, ft * dt);
                for i in 0..n {
                    gen_force[i] += c.jn[i] * pn + c.jt[i] * pt;
                }
                sol.normal.push(pn);
                sol.tangent.push(pt);
            }
            sol
        }
        ContactKind::Hard | ContactKind::Smooth => {
            let sol = solve_contacts(&chol, &b, &state.u, tau, &contacts, &cfg.contact, dt)?;
            for (c, (&pn, &pt)) in contacts.iter().zip(sol.normal.iter().zip(&sol.tangent)) {
                for i in 0..n {
                    gen_force[i] += c.jn[i] * pn + c.jt[i] * pt;
                }
            }
            sol
        }
    };

    let du = chol.solve(&gen_force);
    let u_next: Vec<S> = state.u.iter().zip(&du).map(|(&u, &d)| u + d).collect();
    let q_next: Vec<S> = q_mid
        .iter()
        .zip(&u_next)
        .map(|(&q, &u)| q + u * half)
        .collect();
    let next = GeneralizedState {
        q: q_next,
        u: u_next,
    };
    if !next.is_finite() {
        return Err(StepError::NonFinite);
    }
    Ok(StepOutput {
        state: next,
        contacts,
        impulses,
    })
}
