//! Batched, deterministic, differentiable planar rigid-body simulation.
//!
//! The crate is organised bottom-up:
//! - [`diffcore`]: reverse-mode gradient engine and finite-difference oracle;
//! - [`dynamics`]: articulated planar systems and Moreau midpoint stepping;
//! - [`contact`]: hard, soft and sigmoid-smoothed ground contact;
//! - [`actuation`]: PD control with torque-speed saturation;
//! - [`envs`]: batched locomotion environments;
//! - [`learn`]: short-horizon actor-critic through the simulator and a PPO baseline.

pub mod actuation;
pub mod contact;
pub mod diffcore;
pub mod dynamics;
pub mod envs;
pub mod learn;
