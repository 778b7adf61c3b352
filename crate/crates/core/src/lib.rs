//! Simulation and estimation toolkit for the multiclass serve-the-shortest-queue
//! queue in heavy traffic.
//!
//! The crate is split into the model geometry ([`model`]), an event-exact
//! chain simulator ([`ctmc`]), reference numerics for the limiting reflected
//! and Walsh Brownian motions ([`diffusion`]), Monte Carlo estimators
//! ([`estimators`]) and the experiment harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctmc;
pub mod diffusion;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod rng;
pub mod stats;

pub use ctmc::{first_entrance, simulate, Entrance, PathRecord, SimError, StopCondition};
pub use model::{
    diffusion_coefficients, validate, ModelError, ModelSpec, RateMode, ScaledModel, StateVector, TieBreakRule,
    WbmParams,
};
pub use rng::RandomStream;
