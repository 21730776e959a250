//! Planar articulated rigid-body dynamics in minimal coordinates, advanced
//! with Moreau's midpoint time-stepping scheme.

pub mod kinematics;
pub mod linalg;
mod model;
mod step;

pub use model::{BaseDofs, Leg, Link, SystemId, SystemModel, GRAVITY};
pub use step::{moreau_step, StepConfig, StepOutput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactError;
use crate::diffcore::Real;
use kinematics::{bias_from, kinematics, mass_matrix_from, potential_energy};

/// Generalized coordinates `q` and velocities `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedState<S = f64> {
    pub q: Vec<S>,
    pub u: Vec<S>,
}

impl GeneralizedState<f64> {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let u = vec![0.0; q.len()];
        GeneralizedState { q, u }
    }

    pub fn lift<S: Real>(&self) -> GeneralizedState<S> {
        GeneralizedState {
            q: crate::diffcore::lift(&self.q),
            u: crate::diffcore::lift(&self.u),
        }
    }
}

impl<S: Real> GeneralizedState<S> {
    pub fn values(&self) -> GeneralizedState<f64> {
        GeneralizedState {
            q: crate::diffcore::values(&self.q),
            u: crate::diffcore::values(&self.u),
        }
    }

    pub fn detach(&self) -> Self {
        GeneralizedState {
            q: self.q.iter().map(Real::detach).collect(),
            u: self.u.iter().map(Real::detach).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.u)
            .all(|x| x.value().is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("mass matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite state after step")]
    NonFinite,
}

/// Joint-space inertia `M(q)`, dense row-major.
pub fn mass_matrix<S: Real>(model: &SystemModel<S>, q: &[S]) -> Vec<S> {
    let zeros = vec![S::zero(); q.len()];
    let kin = kinematics(model, q, &zeros);
    mass_matrix_from(&kin, model.ndof())
}

/// Generalized gravity and velocity-product forces; `M u̇ = b + τ + Jᵀλ`.
pub fn bias_forces<S: Real>(model: &SystemModel<S>, q: &[S], u: &[S]) -> Vec<S> {
    let kin = kinematics(model, q, u);
    bias_from(&kin, model.ndof(), model.gravity)
}

/// Kinetic plus gravitational potential energy.
pub fn total_energy<S: Real>(model: &SystemModel<S>, state: &GeneralizedState<S>) -> S {
    let kin = kinematics(model, &state.q, &state.u);
    let n = model.ndof();
    let m = mass_matrix_from(&kin, n);
    let mu = linalg::mat_vec(&m, n, &state.u);
    crate::diffcore::dot(&state.u, &mu) * 0.5 + potential_energy(&kin, model.gravity)
}
