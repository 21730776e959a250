//! Reverse-mode gradient engine.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s; [`Tape::gradient`]
//! sweeps the record backwards in exact reverse recording order, so two runs of
//! the same program give bit-identical gradients. `min`, `max` and `clamp`
//! route the derivative to their first argument on ties, and `clamp` keeps the
//! derivative on the input when it sits exactly on a bound. Branch conditions
//! are plain booleans and therefore stop gradients.
//!
//! [`finite_difference`] is the independent central-difference oracle used by
//! the test-suite and the `grad-check` command.

mod fd;
mod real;
mod tape;

pub use fd::finite_difference;
pub use real::{dot, lift, values, Real};
pub use tape::{CustomBackward, Gradient, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("non-finite adjoint at node {node}")]
    Fault { node: usize },
    #[error("non-finite external gradient in slot {slot}")]
    ExternalFault { slot: usize },
    #[error("value belongs to a different computation record")]
    ForeignRecord,
    #[error("finite-difference probe at coordinate {coord} returned a non-finite value")]
    OracleFault { coord: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

/// Relative error used by every gradient comparison in the crate.
pub fn relative_error(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / reference.abs().max(1.0)
}
